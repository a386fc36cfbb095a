"""Fixed-step Runge-Kutta integration."""
from typing import Callable

import numpy as np

DerivativeField = Callable[[float, np.ndarray], np.ndarray]


class IntegrationError(ArithmeticError):
    """Raised when a derivative evaluation is not finite."""

    def __init__(self, t, x, message="non-finite derivative"):
        self.t = float(t)
        self.x = np.array(x, dtype=float, copy=True)
        super().__init__(f"{message} at t={self.t!r}, x={self.x.tolist()!r}")


def _eval(f, t, x):
    dx = np.asarray(f(t, x), dtype=float)
    if dx.shape != x.shape:
        raise ValueError(f"derivative shape {dx.shape} does not match state shape {x.shape}")
    if not np.all(np.isfinite(dx)):
        raise IntegrationError(t, x)
    return dx


def rk4_step(f: DerivativeField, t: float, x, h: float) -> np.ndarray:
    """One classical fourth-order Runge-Kutta step from ``t`` to ``t + h``."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h!r}")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise IntegrationError(t, x, "non-finite state")
    half = 0.5 * h
    k1 = _eval(f, t, x)
    k2 = _eval(f, t + half, x + half * k1)
    k3 = _eval(f, t + half, x + half * k2)
    k4 = _eval(f, t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_sample(f: DerivativeField, t0: float, x0, dt: float, substeps: int = 10) -> np.ndarray:
    """Advance over one sampling interval ``dt`` using ``substeps`` RK4 steps.

    Any control input must already be bound into ``f``; it stays fixed for the
    whole interval.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    if int(substeps) != substeps or substeps < 1:
        raise ValueError(f"substeps must be a positive integer, got {substeps!r}")
    h = dt / substeps
    x = np.asarray(x0, dtype=float)
    for i in range(int(substeps)):
        x = rk4_step(f, t0 + i * h, x, h)
    return x
