"""Exception hierarchy shared across the package."""


class QDSError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(QDSError, ValueError):
    """A parameter or configuration value is outside its allowed domain."""


class NoSecurityGap(ValidationError):
    """Eve's error probability does not exceed the QBER, so no thresholds exist."""

    def __init__(self, e: float, p_e: float):
        super().__init__(f"no security gap: P_e={p_e!r} <= e={e!r}")
        self.e = e
        self.p_e = p_e


class ProtocolError(QDSError):
    """A protocol step could not be carried out."""


class DistributionAborted(ProtocolError):
    pass


class MaterialConsumed(ProtocolError):
    pass


class MalformedDeclaration(ProtocolError):
    pass
