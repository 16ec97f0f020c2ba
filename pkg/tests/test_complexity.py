import math

import numpy as np
import pytest

from vbmcts.complexity import (
    ComplexityInputs,
    beta_from_lipschitz,
    covering_bound,
    repeated_point_variance,
    sigma_tol,
    step_bound,
    zeta_bound,
)
from vbmcts.gp import GPHyperParams, TrainingSet, fit, predict


def inputs(**kw):
    base = dict(
        v_max=1.0, epsilon=0.5, delta=0.1, epsilon1=0.1, delta1=0.1,
        gamma=0.5, noise_variance=0.01, dims=2,
    )
    base.update(kw)
    return ComplexityInputs(**base)


def test_sigma_tol_reference_value():
    got = sigma_tol(inputs())
    assert got == pytest.approx(2e-4 / math.log(20.0), rel=1e-12)
    assert got == pytest.approx(6.676e-5, rel=1e-3)


def test_sigma_tol_tightens_with_accuracy():
    loose = sigma_tol(inputs(epsilon1=0.2))
    tight = sigma_tol(inputs(epsilon1=0.05))
    assert tight < sigma_tol(inputs()) < loose


def test_covering_square():
    assert covering_bound((1.0, 1.0), 0.5, 2) == pytest.approx(16.0)


def test_covering_interval():
    assert covering_bound((2.0,), 2.0, 1) == pytest.approx(2.0)


def test_covering_validation():
    with pytest.raises(ValueError):
        covering_bound((1.0, 1.0), 0.0, 2)
    with pytest.raises(ValueError):
        covering_bound((1.0,), 0.5, 2)  # wrong number of sides
    with pytest.raises(ValueError):
        covering_bound((1.0, -1.0), 0.5, 2)


def test_zeta_reference_value():
    z = zeta_bound(inputs(), 16.0)
    assert z == pytest.approx(64.0 * math.log(320.0) * 16.0, rel=1e-12)
    assert z == pytest.approx(5.907e3, rel=1e-3)


def test_zeta_grows_with_covering_number():
    assert zeta_bound(inputs(), 32.0) > zeta_bound(inputs(), 16.0)


def test_step_bound_composition():
    inp = inputs()
    z = zeta_bound(inp, 16.0)
    expected = (
        inp.v_max * z / (inp.epsilon * (1 - inp.gamma))
        * math.log(1.0 / inp.delta)
        * math.log(1.0 / (inp.epsilon * (1 - inp.gamma)))
    )
    assert step_bound(inp, 16.0) == pytest.approx(expected, rel=1e-12)


def test_step_bound_explodes_as_discount_approaches_one():
    assert step_bound(inputs(gamma=0.9), 16.0) > step_bound(inputs(gamma=0.5), 16.0)
    with pytest.raises(ValueError, match="gamma"):
        inputs(gamma=1.0)


def test_beta_from_lipschitz_values():
    b1, b2 = beta_from_lipschitz(inputs(lipschitz_r=1.0, lipschitz_p=1.0, noise_variance=0.5))
    assert (b1, b2) == (1.0, 1.0)
    b1, b2 = beta_from_lipschitz(inputs(lipschitz_r=7.0, lipschitz_p=3.0, noise_variance=1.0))
    assert (b1, b2) == (3.5, 1.5)


def test_beta_requires_lipschitz_constants():
    with pytest.raises(ValueError):
        beta_from_lipschitz(inputs())
    with pytest.raises(ValueError):
        beta_from_lipschitz(inputs(lipschitz_r=1.0, lipschitz_p=1.0, noise_variance=0.0))


def test_repeated_point_variance_values():
    assert repeated_point_variance(3, 1.0, 0.5) == pytest.approx(1 / 7)
    assert repeated_point_variance(0, 0.3, 0.5) == 1.0
    assert repeated_point_variance(4, 0.5, 1.0) == pytest.approx(0.8)


def test_repeated_point_variance_validation():
    with pytest.raises(ValueError):
        repeated_point_variance(-1, 0.5, 0.5)
    with pytest.raises(ValueError):
        repeated_point_variance(2, 1.5, 0.5)


def test_repeated_point_variance_matches_exact_gp():
    # n copies of one training input; query at kernel correlation rho:
    # the closed form must equal what the GP machinery actually computes
    n, rho, noise = 4, 0.5, 1.0
    ell = 1.0
    d = ell * math.sqrt(-2.0 * math.log(rho))
    X = np.zeros((n, 1))
    hp = GPHyperParams(1.0, np.array([ell]), noise)
    f = fit(TrainingSet(X, np.zeros(n)), hp)
    got = predict(f, np.array([d])).variance
    assert got == pytest.approx(repeated_point_variance(n, rho, noise), abs=1e-10)


def test_repeated_point_variance_decreases_in_n():
    vals = [repeated_point_variance(n, 0.8, 0.25) for n in range(6)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_input_validation():
    for bad in (dict(epsilon=0.0), dict(delta=0.0), dict(delta=1.0),
                dict(dims=0), dict(noise_variance=-0.1), dict(v_max=0.0)):
        with pytest.raises(ValueError):
            inputs(**bad)
    with pytest.raises(ValueError):
        inputs(side_lengths=(1.0,), dims=2)
