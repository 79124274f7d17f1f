"""Tagged-tip sojourn time: both mean routes, initial vectors, and the CDF."""

import math

import numpy as np
import pytest

from tipdyn import (
    GridError,
    InitialVector,
    ModelParams,
    fixed_initial,
    mean_sojourn_linear,
    mean_sojourn_rg,
    pasta_initial,
    sojourn_cdf,
    sojourn_rg_factorize,
    stationary,
)
from tipdyn.sojourn import assemble_sojourn_generator


def _birth_chain_mean() -> float:
    """Mean absorption time of the M=2, lambda=mu=1 boundary-start chain.

    Started as (tagged boundary, one other boundary tip), the chain only
    moves up in the untagged internal count i (rate lambda) or absorbs
    (rate i*mu), giving h_i = (1 + lambda*h_{i+1}) / (i*mu + lambda).
    """
    h = 0.0
    for i in range(400, -1, -1):
        h = (1.0 + h) / (i + 1.0)
    return h


def test_boundary_start_mean_matches_birth_chain():
    p = ModelParams(1.0, 1.0, 0.5, 2)
    theta = fixed_initial(p, 0, n=1)
    got = mean_sojourn_linear(p, theta).mean
    want = _birth_chain_mean()
    assert want == pytest.approx(math.e - 1.0, rel=1e-12)  # closed form
    assert got == pytest.approx(want, rel=1e-7)


def test_boundary_start_mean_rg_route():
    p = ModelParams(1.0, 1.0, 0.5, 2)
    theta = fixed_initial(p, 0, n=1)
    lin = mean_sojourn_linear(p, theta)
    rg = mean_sojourn_rg(p, theta, truncation=lin.truncation)
    assert rg.mean == pytest.approx(lin.mean, rel=1e-10)


def test_two_routes_agree_on_random_parameters():
    rng = np.random.default_rng(13)
    for _ in range(5):
        p = ModelParams(
            float(rng.uniform(0.5, 4)),
            float(rng.uniform(0.5, 3)),
            float(rng.uniform(0.1, 1)),
            int(rng.integers(2, 8)),
        )
        st = stationary(p)
        theta = pasta_initial(st, p)
        lin = mean_sojourn_linear(p, theta)
        rg = mean_sojourn_rg(p, theta, truncation=lin.truncation)
        assert abs(lin.mean - rg.mean) / lin.mean < 1e-9


def test_inverse_blocks_match_dense_inverse():
    p = ModelParams(1.2, 0.9, 0.4, 3)
    n = 4
    factors = sojourn_rg_factorize(p, n)
    t = assemble_sojourn_generator(p, n).toarray()
    v = np.linalg.inv(t)
    width = 2 * p.capacity
    for m in range(n + 1):
        for j in range(n + 1):
            got = factors.v_block(m, j)
            want = v[m * width : (m + 1) * width, j * width : (j + 1) * width]
            assert np.abs(got - want).max() < 1e-12


def test_pasta_initial_properties():
    p = ModelParams(2.0, 1.0, 0.5, 5)
    st = stationary(p)
    theta = pasta_initial(st, p)
    assert theta.mode == "pasta"
    assert theta.weights.sum() == pytest.approx(1.0)
    # an arriving tip is internal: no mass on tagged-boundary slots
    assert np.all(theta.weights[:, 1::2] == 0.0)
    np.testing.assert_allclose(
        theta.weights[:, 0::2] * (1.0 + st.tail_mass),
        st.pi,
        atol=1e-9,
    )


def test_fixed_initial_positions():
    p = ModelParams(1.0, 1.0, 0.5, 4)
    theta = fixed_initial(p, 2, j=3)
    flat = theta.flatten(5)
    assert flat[2 * 8 + 4] == 1.0
    assert flat.sum() == pytest.approx(1.0)
    thetb = fixed_initial(p, 1, n=0)
    flatb = thetb.flatten(5)
    assert flatb[1 * 8 + 1] == 1.0


def test_flatten_folds_excess_mass_into_top_level():
    weights = np.zeros((6, 4))
    weights[1, 0] = 0.5
    weights[2, 2] = 0.25
    weights[5, 0] = 0.25  # above the truncation below
    theta = InitialVector(weights=weights, mode="fixed")
    assert theta.max_level == 5
    flat = theta.flatten(2)
    assert flat.sum() == pytest.approx(1.0)
    # the excess lands on level 2, proportional to that level's own mass
    assert flat.reshape(3, 4)[2, 2] == pytest.approx(0.5)
    assert flat.reshape(3, 4)[1, 0] == pytest.approx(0.5)


def test_cdf_shape_and_mean_consistency():
    p = ModelParams(2.0, 1.0, 0.5, 5)
    st = stationary(p)
    theta = pasta_initial(st, p)
    lin = mean_sojourn_linear(p, theta)
    grid = np.linspace(0.0, 40.0, 400)
    ph = sojourn_cdf(p, theta, grid)
    f = np.array([v for _, v in ph.cdf])
    assert f[0] == 0.0
    assert np.all(np.diff(f) >= -1e-12)
    assert np.all((0.0 <= f) & (f <= 1.0))
    assert f[-1] > 1.0 - 1e-6
    # integral of the survival function reproduces the mean
    mean_from_cdf = np.trapezoid(1.0 - f, grid)
    assert mean_from_cdf == pytest.approx(lin.mean, rel=1e-3)


def test_cdf_rejects_bad_grids():
    p = ModelParams(2.0, 1.0, 0.5, 3)
    theta = fixed_initial(p, 0, j=1)
    with pytest.raises(GridError):
        sojourn_cdf(p, theta, [1.0, 0.5])
    with pytest.raises(GridError):
        sojourn_cdf(p, theta, [-1.0, 0.5])
    with pytest.raises(GridError):
        sojourn_cdf(p, theta, [])
    with pytest.raises(GridError):
        sojourn_cdf(p, theta, [[0.0, 1.0]])


def test_little_law_links_sojourn_and_counts():
    p = ModelParams(2.0, 1.0, 0.5, 5)
    st = stationary(p)
    theta = pasta_initial(st, p)
    lin = mean_sojourn_linear(p, theta)
    lhs = p.arrival_rate * lin.mean
    rhs = float(np.arange(st.pi.shape[0]) @ st.level_mass) + float(
        st.pi.sum(axis=0) @ np.arange(1, p.capacity + 1)
    )
    assert lhs == pytest.approx(rhs, rel=1e-6)
