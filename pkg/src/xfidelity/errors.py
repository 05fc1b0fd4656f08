"""Exception taxonomy shared by every module in the package."""


class XFidelityError(Exception):
    """Base class for all package errors."""


class ParameterError(XFidelityError):
    """A caller-supplied value violates a documented precondition."""


class ValidationError(XFidelityError):
    """Structured data (tensor, map, manifest) fails an integrity check."""


class DecodeError(XFidelityError):
    """A byte payload is malformed and cannot be parsed."""


class UnsupportedFormatError(DecodeError):
    """The payload parses but uses a variant this package does not accept."""


class RemoteTransportError(XFidelityError):
    """The remote predictor could not be reached or the connection dropped."""


class RemoteProtocolError(XFidelityError):
    """The remote predictor replied with something outside the wire contract."""


class SurrogateFitError(XFidelityError):
    """A least-squares system stayed singular after all retries."""
