from typing import Optional

import numpy as np


class PhdynError(Exception):
    """Base class of every error raised on purpose by phdyn."""


class ConfigError(PhdynError, ValueError):
    pass


class ConstructionError(PhdynError, ValueError):
    """A system constructor rejected its parameters."""


class GridError(PhdynError, ValueError):
    pass


class NewtonInverseError(PhdynError, RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (final residual = {residual:.3e})")
        self.residual = residual


class UnreliableFrameError(PhdynError, RuntimeError):
    def __init__(self, message: str, residual: float, point: Optional[np.ndarray] = None):
        super().__init__(f"{message} (residual = {residual:.3e})")
        self.residual = residual
        self.point = None if point is None else np.asarray(point).tolist()


class CertificateError(PhdynError, RuntimeError):
    def __init__(self, message: str, point: np.ndarray, rates: dict):
        super().__init__(f"{message} at {np.asarray(point).tolist()}")
        self.point = np.asarray(point).tolist()
        self.rates = rates


class DistortionError(PhdynError, RuntimeError):
    def __init__(self, ratio: float, bound: float):
        super().__init__(f"density distortion {ratio:.3f} exceeds the bound {bound:.3f}")
        self.ratio = ratio
        self.bound = bound


def error_payload(error: Exception) -> dict:
    """Structured description of an error, for the CLI's JSON error channel."""
    payload = {'error': type(error).__name__, 'message': str(error)}
    for attribute in ('residual', 'point', 'rates', 'ratio', 'bound'):
        if hasattr(error, attribute):
            payload[attribute] = getattr(error, attribute)
    return payload
