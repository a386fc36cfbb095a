import math

import numpy as np
import pytest

from smc_ddpg.numerics import IntegrationError, integrate_sample, rk4_step


def decay(t, x):
    return -x


def test_rk4_exponential_step():
    x = rk4_step(decay, 0.0, np.array([1.0]), 0.1)
    assert abs(x[0] - math.exp(-0.1)) < 1e-7


def test_rk4_zero_field_keeps_state():
    x0 = np.array([0.3, -2.0, 5.0])
    assert np.array_equal(rk4_step(lambda t, x: np.zeros_like(x), 1.0, x0, 0.1), x0)


def test_rk4_constant_field_is_exact():
    x = rk4_step(lambda t, x: np.ones_like(x), 0.0, np.array([0.0]), 0.1)
    assert x[0] == 0.1


def test_integrate_sample_substeps():
    x = integrate_sample(decay, 0.0, np.array([1.0]), 0.1, substeps=10)
    assert abs(x[0] - math.exp(-0.1)) < 1e-10


def test_single_substep_equals_rk4_step():
    f = lambda t, x: np.array([x[1], -np.sin(t) * x[0]])
    x0 = np.array([0.4, -1.2])
    assert np.array_equal(integrate_sample(f, 0.3, x0, 0.1, substeps=1), rk4_step(f, 0.3, x0, 0.1))


def test_order_four_convergence():
    errors = []
    for h in (0.1, 0.05, 0.025, 0.0125):
        n = round(0.1 / h)
        x = integrate_sample(decay, 0.0, np.array([1.0]), 0.1, substeps=n)
        errors.append(abs(x[0] - math.exp(-0.1)))
    ratios = [errors[i] / errors[i + 1] for i in range(3)]
    assert all(12 <= r <= 20 for r in ratios), ratios


def test_time_dependent_field_uses_stage_times():
    # x' = cos t integrates to sin t
    x = integrate_sample(lambda t, x: np.array([math.cos(t)]), 0.0, np.array([0.0]), 1.0, substeps=100)
    assert abs(x[0] - math.sin(1.0)) < 1e-10


def test_deterministic():
    f = lambda t, x: np.array([x[1], -x[0] - 0.3 * x[1] * abs(x[1])])
    a = integrate_sample(f, 0.0, np.array([1.0, 0.0]), 0.1)
    b = integrate_sample(f, 0.0, np.array([1.0, 0.0]), 0.1)
    assert a.tobytes() == b.tobytes()


def test_nonfinite_derivative_raises():
    with pytest.raises(IntegrationError):
        rk4_step(lambda t, x: x * np.nan, 0.0, np.array([1.0]), 0.1)


def test_invalid_step_rejected():
    with pytest.raises(ValueError):
        rk4_step(decay, 0.0, np.array([1.0]), 0.0)
    with pytest.raises(ValueError):
        integrate_sample(decay, 0.0, np.array([1.0]), 0.1, substeps=0)
