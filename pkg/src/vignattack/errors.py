"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration, manifest,
image and generic value errors exit with 2, oracle and transport
failures exit with 3.
"""


class ConfigError(ValueError):
    """Bad or unknown configuration key, or an unparseable value."""


class ManifestError(ValueError):
    """Malformed dataset manifest (bad header, label, or path)."""


class ImageIOError(OSError):
    """Unreadable, unsupported, or unwritable image file."""


class OracleError(RuntimeError):
    """The classifier oracle returned unusable data (non-finite, wrong shape)."""


class ProtocolError(OracleError):
    """Malformed or out-of-contract message on the oracle wire protocol."""


class OracleTransportError(OracleError):
    """Could not reach the oracle, or the connection dropped mid-exchange."""
