"""Drift diagnostics, U/R/G factorization, and the stationary distribution."""

import numpy as np
import pytest

from tipdyn import (
    ModelParams,
    NoConvergence,
    direct_solve_oracle,
    drift_diagnostics,
    rg_factorize,
    stationary,
)
from tipdyn.model import build_level_blocks
from tipdyn.qbd import phase_generator, truncated_generator


def test_phase_vector_closed_form_m2():
    # alpha = mu: beta proportional to (1, 1) -> (1/2, 1/2)
    dd = drift_diagnostics(ModelParams(1.0, 1.0, 1.0, 2))
    np.testing.assert_allclose(dd.beta, [0.5, 0.5])


def test_phase_vector_closed_form_m3():
    # alpha = mu: weights (1, 1, 1/3) -> (3/7, 3/7, 1/7)
    dd = drift_diagnostics(ModelParams(2.0, 1.0, 1.0, 3))
    np.testing.assert_allclose(dd.beta, [3 / 7, 3 / 7, 1 / 7])


def test_phase_vector_solves_balance_equation():
    for m_cap in (2, 4, 9):
        p = ModelParams(1.7, 0.8, 0.3, m_cap)
        dd = drift_diagnostics(p)
        assert np.abs(dd.beta @ phase_generator(p)).max() < 1e-13
        assert dd.beta.sum() == pytest.approx(1.0)
        # level independence: the residual also vanishes against the k=4 blocks
        assert np.abs(dd.beta @ phase_generator(p, k=4)).max() < 1e-12


def test_drift_gap_example():
    # lambda = mu = alpha = 1, M = 2: beta = (1/2, 1/2), slope = 1,
    # gap(k) = k - 1, so level 2 is the first with positive drift.
    dd = drift_diagnostics(ModelParams(1.0, 1.0, 1.0, 2))
    assert dd.down_rate_slope == pytest.approx(1.0)
    assert dd.drift_gap(1) == pytest.approx(0.0)
    assert dd.drift_gap(3) == pytest.approx(2.0)
    assert dd.minimal_stable_level == 2


def test_minimal_stable_level_has_positive_drift():
    rng = np.random.default_rng(11)
    for _ in range(10):
        p = ModelParams(
            float(rng.uniform(0.5, 30)),
            float(rng.uniform(0.5, 6)),
            float(rng.uniform(0.05, 1)),
            int(rng.integers(2, 30)),
        )
        dd = drift_diagnostics(p)
        assert dd.drift_gap(dd.minimal_stable_level) > 0.0
        assert dd.drift_gap(dd.minimal_stable_level - 1) <= 0.0


def test_rg_recursion_fixed_points():
    # R and G satisfy their quadratic fixed-point equations away from the
    # truncation boundary.
    p = ModelParams(2.0, 1.0, 0.5, 5)
    n = 60
    f = rg_factorize(p, n)
    blocks = [build_level_blocks(p, k) for k in range(n + 1)]
    for k in range(1, 40):
        # A_{k,k+1} + R_k A_{k+1,k+1} + R_k R_{k+1} A_{k+2,k+1} = 0
        res_r = (
            blocks[k].up
            + f.r_blocks[k] @ blocks[k + 1].diag
            + f.r_blocks[k] @ f.r_blocks[k + 1] @ blocks[k + 2].down
        )
        assert np.abs(res_r).max() < 1e-8
        # A_{k,k+1} G_{k+1} G_k + A_{k,k} G_k + A_{k,k-1} = 0
        res_g = (
            blocks[k].up @ f.g_blocks[k] @ f.g_blocks[k - 1]
            + blocks[k].diag @ f.g_blocks[k - 1]
            + blocks[k].down
        )
        assert np.abs(res_g).max() < 1e-8


def test_rg_factor_signs_and_stochasticity():
    p = ModelParams(2.0, 1.0, 0.5, 5)
    f = rg_factorize(p, 40)
    for r in f.r_blocks:
        assert np.all(r >= -1e-14)
    for g in f.g_blocks:
        assert np.all(g >= -1e-14)
        assert np.all(g.sum(axis=1) <= 1.0 + 1e-10)
    for u in f.u_blocks:
        assert np.all(np.diag(u) < 0.0)


def test_ul_factorization_reconstructs_truncated_generator():
    # (I - R_U) U_D (I - G_L) assembled over levels 0..N equals the truncated
    # generator blockwise, once the seed-level factors U_N and G_N are added.
    p = ModelParams(1.5, 1.0, 0.8, 4)
    n = 25
    f = rg_factorize(p, n)
    blocks = [build_level_blocks(p, k) for k in range(n + 1)]
    u = list(f.u_blocks) + [blocks[n].diag]  # U_N seed
    g = list(f.g_blocks) + [-np.linalg.solve(u[n], blocks[n].down)]  # G_N
    r = f.r_blocks

    for k in range(n + 1):
        diag = u[k].copy()
        if k < n:
            diag += r[k] @ u[k + 1] @ g[k]  # g[k] is G_{k+1}
        assert np.abs(diag - blocks[k].diag).max() < 1e-8
        if k < n:
            up = -r[k] @ u[k + 1]
            assert np.abs(up - blocks[k].up).max() < 1e-8
        if k > 0:
            down = -u[k] @ g[k - 1]
            assert np.abs(down - blocks[k].down).max() < 1e-8


def test_truncated_generator_rows_conserve():
    p = ModelParams(2.0, 1.0, 0.5, 4)
    q = truncated_generator(p, 30)
    assert np.abs(np.asarray(q.sum(axis=1)).ravel()).max() < 1e-12


def test_stationary_matches_direct_solve():
    p = ModelParams(2.0, 1.0, 0.5, 5)
    st = stationary(p, tol=1e-12)
    oracle = direct_solve_oracle(p, 300)
    n = min(st.truncation, oracle.truncation)
    assert np.abs(st.pi[: n + 1] - oracle.pi[: n + 1]).max() < 1e-10
    assert st.pi.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(st.pi >= 0.0)


def test_stationary_tail_is_eventually_decreasing():
    p = ModelParams(2.0, 1.0, 0.5, 5)
    st = stationary(p)
    dd = drift_diagnostics(p)
    mass = st.level_mass
    k0 = dd.minimal_stable_level
    assert np.all(np.diff(mass[k0:]) < 0.0)
    assert 0.0 <= st.tail_mass < 1e-8


def test_stationary_raises_without_convergence_room():
    p = ModelParams(2.0, 1.0, 0.5, 5)
    with pytest.raises(NoConvergence):
        stationary(p, tol=1e-12, max_level=4)


def test_direct_oracle_rejects_huge_systems():
    with pytest.raises(ValueError):
        direct_solve_oracle(ModelParams(1, 1, 1, 100), 50_000)


def test_rg_factorize_rejects_bad_truncation():
    with pytest.raises(ValueError):
        rg_factorize(ModelParams(1, 1, 1, 3), 0)
