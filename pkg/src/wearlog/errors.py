"""Exception types and process exit codes shared across the package."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_IO = 4


class WearlogError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(WearlogError):
    """Invalid configuration; the message names the offending key."""


class InputParseError(WearlogError):
    """Base class for errors raised while reading input files."""


class MalformedXml(InputParseError):
    """The health export is not well-formed XML or has the wrong root."""


class MalformedRecord(InputParseError):
    """One health record could not be converted to a domain object."""


class MissingColumn(InputParseError):
    """A required column is absent from the calendar CSV header."""


class MalformedRow(InputParseError):
    """One calendar CSV row could not be converted to an event."""


class MalformedIcs(InputParseError):
    """An ICS component could not be converted to an event."""


class UnsortedInput(WearlogError):
    """A sequence that must be sorted ascending is out of order."""


class UnknownAttribute(WearlogError):
    """A predicate or view references an attribute missing from the schema."""


class SinkWrite(WearlogError):
    """Writing an export to its sink failed."""
