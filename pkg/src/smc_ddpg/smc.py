"""Sliding-mode control laws.

The nominal law is designed on the simplified model only. The learned term
``u1`` is added on top of it for the original system, and the ideal
compensation (which needs the true mismatch) exists for verification.
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .plant import NominalModel, ReferenceSignal, UncertaintyOracle, tracking_state

DEFAULT_EPS_G = 1e-9


class SingularGainError(ZeroDivisionError):
    """The control law would divide by a (near) zero input gain."""


@dataclass(frozen=True)
class SurfaceSpec:
    """Sliding surface ``sigma = sum(a_i e_i)`` and the nominal switching gain."""

    a: Tuple[float, ...] = (1.0, 1.0)
    mu_hat: float = 1.0
    eps_g: float = field(default=DEFAULT_EPS_G, compare=False)

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        object.__setattr__(self, "a", a)
        if len(a) < 1:
            raise ValueError("surface needs at least one coefficient")
        if not all(np.isfinite(v) and v > 0 for v in a):
            raise ValueError(f"surface coefficients must be strictly positive, got {a}")
        if not (np.isfinite(self.mu_hat) and self.mu_hat > 0):
            raise ValueError(f"mu_hat must be positive, got {self.mu_hat!r}")
        if not self.eps_g >= 0:
            raise ValueError("eps_g must be non-negative")

    @property
    def n(self):
        return len(self.a)

    @property
    def coefficients(self):
        return np.asarray(self.a)


def sign(x):
    """Signum with ``sign(0) == 0``."""
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


def sliding_value(spec: SurfaceSpec, e) -> float:
    e = np.asarray(e, dtype=float)
    if e.shape != (spec.n,):
        raise ValueError(f"expected error of shape ({spec.n},), got {e.shape}")
    return float(spec.coefficients @ e)


def _checked_gain(value, eps, what):
    if not abs(value) >= eps:
        raise SingularGainError(f"|{what}| = {abs(value):.3g} is below the singularity guard {eps:g}")
    return value


def _error_and_ref_top(spec, model, ref, t, x):
    if ref is None:
        return x, 0.0
    return tracking_state(x, ref, t), ref.derivative(t, model.n)


def nominal_control(spec: SurfaceSpec, model: NominalModel, ref: Optional[ReferenceSignal], t, x) -> float:
    """Equivalent plus switching control for the simplified model.

    ``x`` is the raw state the law is evaluated at. With a reference the
    surface is built on the tracking error; with ``ref=None`` the law
    regulates ``x`` to the origin.
    """
    x = np.asarray(x, dtype=float)
    a = spec.coefficients
    a_n = a[-1]
    e, y_top = _error_and_ref_top(spec, model, ref, t, x)
    g = _checked_gain(model.g(t, x), spec.eps_g, "g")
    sigma = float(a @ e)
    chain = float(a[:-1] @ e[1:])
    u_eq = -(chain + a_n * (model.f(t, x) - y_top)) / (a_n * g)
    u_c = -spec.mu_hat * sign(sigma) / (a_n * g)
    return u_eq + u_c


def msd_tracking_control(params, t, x_hat, mu_hat=1.0):
    """Closed-form nominal law for the mass-spring-damper tracking ``sin(t) - 1``
    with ``a = (1, 1)``.

    Equivalent to :func:`nominal_control` for that configuration and kept as an
    independent check on it.
    """
    m, c, k = params.m_hat, params.c_hat, params.k_hat
    x1, x2 = float(x_hat[0]), float(x_hat[1])
    sigma = x1 + x2 + 1.0 - np.sin(t) - np.cos(t)
    return m * (-x2 + np.cos(t) - np.sin(t) + k / m * x1 + c / m * x2) - mu_hat * m * sign(sigma)


def combined_control(u_hat, u1):
    return u_hat + u1


def compensation_from_head(r, mu, sigma):
    """Custom output layer: ``u1 = -r - mu * sign(sigma)``."""
    return -r - mu * sign(sigma)


def ideal_compensation(spec: SurfaceSpec, oracle: UncertaintyOracle, ref: Optional[ReferenceSignal], t, x, x_hat):
    """The ``(r, mu)`` pair that makes ``sigma' = -sign(sigma)`` exactly.

    ``sigma`` is the surface of the error ``x - x_hat``. Requires the true
    mismatch, hence the oracle argument.

    ``mu`` is returned as a magnitude, ``1 / (a_n (g + Δg))``; the head
    multiplies it by ``sign(sigma)``.
    """
    x = np.asarray(x, dtype=float)
    x_hat = np.asarray(x_hat, dtype=float)
    model = oracle.nominal
    a = spec.coefficients
    a_n = a[-1]
    d_f, d_g = oracle(t, x)
    g = _checked_gain(model.g(t, x), spec.eps_g, "g")
    denom = _checked_gain(a_n * (g + d_g), spec.eps_g, "a_n (g + dg)")

    e_x, y_top = _error_and_ref_top(spec, model, ref, t, x)
    e_s, _ = _error_and_ref_top(spec, model, ref, t, x_hat)
    sig_x = sign(float(a @ e_x))
    sig_s = sign(float(a @ e_s))

    bracket = a_n * (model.f(t, x) - y_top) + float(a[:-1] @ e_x[1:]) + spec.mu_hat * sig_x
    r = (-(d_g / g) * bracket + a_n * d_f + spec.mu_hat * (sig_s - sig_x)) / denom
    mu = 1.0 / denom
    return r, mu
