"""Exception types shared across the package."""


class NetprintError(Exception):
    """Base class for errors raised by this package."""


class FormatError(NetprintError):
    """A file does not conform to its expected format (pcap, CSV, model)."""
