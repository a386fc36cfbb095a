"""Plants in normal form, reference signals and tracking errors.

Controllers only ever see a :class:`NominalModel` (the simplified system).
The true dynamics live on :class:`UncertainPlant`, which the simulator uses to
integrate the original system; the mismatch is exposed only through
:class:`UncertaintyOracle`, which test and oracle code construct explicitly.
"""
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

Evaluator = Callable[[float, np.ndarray], float]


# ---------------------------------------------------------------- references


class ReferenceSignal:
    """Desired output ``y(t)`` together with its time derivatives.

    ``funcs[k]`` evaluates the k-th derivative. A tracking problem of
    dimension ``n`` needs derivatives up to order ``n``.
    """

    def __init__(self, funcs: Sequence[Callable[[float], float]]):
        if len(funcs) < 1:
            raise ValueError("reference needs at least y(t)")
        self.funcs = tuple(funcs)

    @property
    def max_order(self):
        return len(self.funcs) - 1

    def derivative(self, t, order):
        if order > self.max_order:
            raise ValueError(f"reference provides derivatives up to order {self.max_order}, asked for {order}")
        return float(self.funcs[order](t))

    def derivatives(self, t, count):
        """``[y(t), y'(t), ..., y^(count-1)(t)]``."""
        return np.array([self.derivative(t, k) for k in range(count)])

    def __call__(self, t):
        return self.derivative(t, 0)


class SinusoidReference(ReferenceSignal):
    """``y(t) = amplitude * sin(omega * t + phase) + offset``.

    Derivatives of every order are available in closed form.
    """

    def __init__(self, amplitude=1.0, omega=1.0, phase=0.0, offset=-1.0):
        self.amplitude = float(amplitude)
        self.omega = float(omega)
        self.phase = float(phase)
        self.offset = float(offset)
        self.funcs = ()

    def derivative(self, t, order):
        # closed form, so any order works
        scale = self.amplitude * self.omega ** order
        arg = self.omega * t + self.phase
        value = scale * _sin_shifted(arg, order)
        return value + (self.offset if order == 0 else 0.0)

    @property
    def max_order(self):
        return 10**9

    def as_dict(self):
        return {"amplitude": self.amplitude, "omega": self.omega, "phase": self.phase, "offset": self.offset}


def _sin_shifted(arg, k):
    # sin(arg + k*pi/2) without accumulating the pi/2 rounding error
    k %= 4
    if k == 0:
        return np.sin(arg)
    if k == 1:
        return np.cos(arg)
    if k == 2:
        return -np.sin(arg)
    return -np.cos(arg)


def tracking_state(x, ref: ReferenceSignal, t):
    """Tracking error ``e_i = x_i - y^(i-1)(t)``."""
    x = np.asarray(x, dtype=float)
    return x - ref.derivatives(t, x.shape[0])


# -------------------------------------------------------------------- plants


@dataclass(frozen=True)
class NominalModel:
    """The simplified (available) model: ``x_n' = f(t, x) + g(t, x) u``."""

    n: int
    f: Evaluator
    g: Evaluator

    def derivative(self, t, x, u):
        x = np.asarray(x, dtype=float)
        dx = np.empty_like(x)
        dx[:-1] = x[1:]
        dx[-1] = self.f(t, x) + self.g(t, x) * u
        return dx


class UncertainPlant:
    """Original system plus its simplified model.

    ``true_f`` and ``true_g`` are the complete drift and input gain, i.e.
    ``f + Δf`` and ``g + Δg``. They are deliberately not public attributes.
    """

    def __init__(self, nominal: NominalModel, true_f: Evaluator, true_g: Evaluator, name="plant"):
        self.nominal = nominal
        self._true_f = true_f
        self._true_g = true_g
        self.name = name

    @classmethod
    def exact(cls, nominal: NominalModel, name="exact"):
        """A plant with no mismatch: the original system is the nominal one."""
        return cls(nominal, nominal.f, nominal.g, name=name)

    @property
    def n(self):
        return self.nominal.n

    def original_derivative(self, t, x, u):
        x = np.asarray(x, dtype=float)
        dx = np.empty_like(x)
        dx[:-1] = x[1:]
        dx[-1] = self._true_f(t, x) + self._true_g(t, x) * u
        return dx

    def simplified_derivative(self, t, x_hat, u_hat):
        return self.nominal.derivative(t, x_hat, u_hat)


class UncertaintyOracle:
    """Privileged access to ``(Δf, Δg)``.

    Only oracle controllers and tests build one of these; nothing in the
    learning path receives an :class:`UncertainPlant`.
    """

    def __init__(self, plant: UncertainPlant):
        self._plant = plant

    @property
    def nominal(self):
        return self._plant.nominal

    def true_terms(self, t, x):
        x = np.asarray(x, dtype=float)
        return self._plant._true_f(t, x), self._plant._true_g(t, x)

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        f_true, g_true = self.true_terms(t, x)
        nom = self._plant.nominal
        return f_true - nom.f(t, x), g_true - nom.g(t, x)


def original_derivative(plant: UncertainPlant, t, x, u):
    return plant.original_derivative(t, x, u)


def simplified_derivative(plant: UncertainPlant, t, x_hat, u_hat):
    return plant.simplified_derivative(t, x_hat, u_hat)


def uncertainty_oracle(oracle: UncertaintyOracle, t, x):
    return oracle(t, x)


# ------------------------------------------------------- mass-spring-damper


@dataclass(frozen=True)
class MassSpringDamperParams:
    """True nonlinear MSD (quadratic damper, cubic spring) and its linear model."""

    m: float = 0.8
    c: float = 2.2
    k: float = 5.5
    b: float = 1.5
    m_hat: float = 1.0
    c_hat: float = 2.0
    k_hat: float = 5.0

    def __post_init__(self):
        for name in ("m", "c", "k", "b", "m_hat", "c_hat", "k_hat"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.m <= 0 or self.m_hat <= 0:
            raise ValueError("masses must be strictly positive")

    def as_array(self):
        return np.array([self.m, self.c, self.k, self.b, self.m_hat, self.c_hat, self.k_hat])


class MassSpringDamper(UncertainPlant):
    def __init__(self, params: MassSpringDamperParams = MassSpringDamperParams()):
        p = params
        inv_m_hat = 1.0 / p.m_hat
        inv_m = 1.0 / p.m

        def f(t, x):
            return (-p.c_hat * x[1] - p.k_hat * x[0]) * inv_m_hat

        def g(t, x):
            return inv_m_hat

        def true_f(t, x):
            return (-p.c * x[1] * abs(x[1]) - p.k * x[0] - p.b * x[0] ** 3) * inv_m

        def true_g(t, x):
            return inv_m

        super().__init__(NominalModel(2, f, g), true_f, true_g, name="mass-spring-damper")
        self.params = params
