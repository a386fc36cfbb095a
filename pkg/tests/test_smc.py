import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smc_ddpg.plant import MassSpringDamper, MassSpringDamperParams, NominalModel, SinusoidReference, UncertainPlant, UncertaintyOracle
from smc_ddpg.smc import (
    SingularGainError,
    SurfaceSpec,
    combined_control,
    compensation_from_head,
    ideal_compensation,
    msd_tracking_control,
    nominal_control,
    sign,
    sliding_value,
)

spec = SurfaceSpec()
msd = MassSpringDamper()
ref = SinusoidReference()


def test_sliding_value_examples():
    assert sliding_value(spec, [1.0, -1.0]) == 0.0
    assert sliding_value(spec, [2.0, -1.0]) == 1.0
    assert sliding_value(spec, [0.0, 0.0]) == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-50, 50))
def test_sliding_value_homogeneous(e1, e2, lam):
    s = SurfaceSpec(a=(0.7, 1.3))
    lhs = sliding_value(s, [lam * e1, lam * e2])
    rhs = lam * sliding_value(s, [e1, e2])
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-9)


def test_sign_tie_rule():
    assert sign(-2) == -1 and sign(0.0) == 0 and sign(3.7) == 1


def test_surface_validation():
    with pytest.raises(ValueError):
        SurfaceSpec(a=(1.0, 0.0))
    with pytest.raises(ValueError):
        SurfaceSpec(mu_hat=0.0)


def test_nominal_control_examples():
    assert nominal_control(spec, msd.nominal, ref, 0.0, [0.0, 0.0]) == pytest.approx(1.0, abs=1e-15)
    # cos(pi/2) rounds to 6e-17; put x2 on that value so sigma is exactly 0
    t = math.pi / 2
    assert nominal_control(spec, msd.nominal, ref, t, [0.0, math.cos(t)]) == pytest.approx(-1.0, abs=1e-12)


def test_reduction_to_closed_form():
    rng = np.random.default_rng(11)
    for params in (MassSpringDamperParams(), MassSpringDamperParams(m_hat=1.7, c_hat=0.4, k_hat=3.0)):
        model = MassSpringDamper(params).nominal
        s = SurfaceSpec(mu_hat=1.0)
        for _ in range(1000):
            t = rng.uniform(0, 20)
            x = rng.uniform(-5, 5, size=2)
            generic = nominal_control(s, model, ref, t, x)
            closed = msd_tracking_control(params, t, x, mu_hat=1.0)
            assert abs(generic - closed) <= 1e-12 * max(1.0, abs(closed))


def test_combined_and_head():
    assert combined_control(1.0, -0.2) == pytest.approx(0.8)
    assert combined_control(0.37, 0.0) == 0.37
    assert combined_control(0.0, 0.0) == 0.0
    assert compensation_from_head(0.5, 0.3, -2.0) == pytest.approx(-0.2)
    assert compensation_from_head(0.0, 0.0, 5.0) == 0.0
    assert compensation_from_head(1.0, -0.5, 0.0) == -1.0


def test_singular_gain_guard():
    model = NominalModel(2, lambda t, x: 0.0, lambda t, x: 1e-12)
    with pytest.raises(SingularGainError):
        nominal_control(spec, model, None, 0.0, [1.0, 0.0])


def test_regulation_form():
    # no reference: sigma built on x itself
    model = NominalModel(2, lambda t, x: -x[0], lambda t, x: 2.0)
    u = nominal_control(spec, model, None, 0.0, [1.0, 0.5])
    # u = -(x2 + (f)) / g - mu sign(sigma) / g with f = -1, sigma = 1.5
    assert u == pytest.approx(-(0.5 - 1.0) / 2.0 - 0.5)


def test_ideal_compensation_examples():
    exact = UncertaintyOracle(UncertainPlant.exact(msd.nominal))
    x = np.array([0.3, -0.2])
    r, _ = ideal_compensation(spec, exact, ref, 1.0, x, x)
    assert r == 0.0

    unit = NominalModel(2, lambda t, x: 0.0, lambda t, x: 1.0)
    shifted = UncertaintyOracle(UncertainPlant(unit, lambda t, x: 2.0, lambda t, x: 1.0))
    r, mu = ideal_compensation(spec, shifted, None, 0.0, x, x)
    assert r == pytest.approx(2.0)
    assert mu == pytest.approx(1.0)


def test_ideal_compensation_gives_unit_reaching_rate():
    # sigma' = -sign(sigma) for the error x - x_hat under u = u_hat(x) + u1
    oracle = UncertaintyOracle(msd)
    rng = np.random.default_rng(5)
    a = spec.coefficients
    for _ in range(200):
        t = rng.uniform(0, 7)
        x = rng.uniform(-2, 2, size=2)
        x_hat = rng.uniform(-2, 2, size=2)
        r, mu = ideal_compensation(spec, oracle, ref, t, x, x_hat)
        sig = float(a @ (x - x_hat))
        u1 = compensation_from_head(r, mu, sig)
        u = nominal_control(spec, msd.nominal, ref, t, x) + u1
        u_hat = nominal_control(spec, msd.nominal, ref, t, x_hat)
        de = msd.original_derivative(t, x, u) - msd.simplified_derivative(t, x_hat, u_hat)
        assert float(a @ de) == pytest.approx(-sign(sig), abs=1e-9)
