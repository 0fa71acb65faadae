class UnsupportedConfiguration(ValueError):
    """The requested operation does not apply to this network shape or bias setting."""


class ResourceLimitError(RuntimeError):
    """An enumeration exceeded its configured size cap."""
