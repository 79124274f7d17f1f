"""Stationary analysis of the main level-dependent QBD chain.

The backward U/R/G recursion is seeded at a finite truncation level and the
truncation is doubled adaptively until the tail mass and the mean internal
count stabilize.  A brute-force direct linear solve of the truncated
generator serves as an independent oracle.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoConvergence, SingularBlock, SingularSystem
from .model import ModelParams, _pairs, build_level_blocks, validate

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class DriftDiagnostics:
    """Phase equilibrium vector and level drift of the main chain.

    ``beta`` solves beta @ A_k = 0 for the within-level phase process; it is
    level-independent because every entry of A_k scales linearly with k.
    ``down_rate_slope`` is the per-level downward drift coefficient, so the
    net downward drift at level k is k * down_rate_slope - arrival_rate.
    """

    beta: np.ndarray
    down_rate_slope: float
    arrival_rate: float
    minimal_stable_level: int

    def drift_gap(self, k: int) -> float:
        """Downward minus upward drift at level k."""
        return k * self.down_rate_slope - self.arrival_rate


def phase_generator(params: ModelParams, k: int = 1) -> np.ndarray:
    """Sum of the three level-k blocks: the within-level phase generator."""
    blocks = build_level_blocks(params, k)
    return blocks.down + blocks.diag + blocks.up


def drift_diagnostics(params: ModelParams) -> DriftDiagnostics:
    """Closed-form phase equilibrium and the level where drift turns negative."""
    validate(params)
    m_cap = params.capacity
    ratio = params.impatience_rate / params.connect_rate

    # beta_s proportional to ratio^(s-1) / prod_{i=2..s} pairs(i)
    weights = np.empty(m_cap)
    weights[0] = 1.0
    for s in range(2, m_cap + 1):
        weights[s - 1] = weights[s - 2] * ratio / _pairs(s)
    beta = weights / weights.sum()

    # Cross-check against a direct null-space solve of the phase generator.
    a1 = phase_generator(params, 1)
    sys = np.vstack([a1.T, np.ones(m_cap)])
    rhs = np.zeros(m_cap + 1)
    rhs[-1] = 1.0
    beta_direct, *_ = np.linalg.lstsq(sys, rhs, rcond=None)
    if np.max(np.abs(beta - beta_direct)) > 1e-10:
        raise SingularSystem("closed-form phase vector disagrees with direct solve")

    slope = params.impatience_rate * (1.0 - beta[-1]) + params.connect_rate * sum(
        _pairs(j) * beta[j - 1] for j in range(2, m_cap + 1)
    )
    minimal = int(np.floor(params.arrival_rate / slope)) + 1
    while minimal * slope - params.arrival_rate <= 0.0:
        minimal += 1
    return DriftDiagnostics(
        beta=beta,
        down_rate_slope=slope,
        arrival_rate=params.arrival_rate,
        minimal_stable_level=minimal,
    )


@dataclass(frozen=True)
class RgFactors:
    """U/R/G measures of the truncated main chain.

    ``u_blocks`` holds U_0..U_{N-1}, ``r_blocks`` R_0..R_{N-1} and
    ``g_blocks`` G_1..G_{N-1}; the recursion is seeded with U_N = A_{N,N}
    (equivalently R_N = 0).
    """

    truncation: int
    u_blocks: list[np.ndarray]
    r_blocks: list[np.ndarray]
    g_blocks: list[np.ndarray]


def _neg_inverse(u: np.ndarray, level: int) -> np.ndarray:
    """-(u^-1), raising SingularBlock on numerical singularity."""
    try:
        inv = np.linalg.inv(u)
    except np.linalg.LinAlgError as exc:
        raise SingularBlock(f"U block at level {level} is singular") from exc
    cond = np.linalg.norm(u, 1) * np.linalg.norm(inv, 1)
    if not np.isfinite(cond) or cond > 1.0 / _EPS:
        raise SingularBlock(f"U block at level {level} has condition estimate {cond:.3e}")
    return -inv


def rg_factorize(params: ModelParams, truncation: int) -> RgFactors:
    """Backward U/R/G recursion down from the truncation boundary.

    U_k = A_{k,k} + A_{k,k+1} (-U_{k+1}^-1) A_{k+1,k}
    R_k = A_{k,k+1} (-U_{k+1}^-1)
    G_k = (-U_k^-1) A_{k,k-1}
    """
    validate(params)
    if truncation < 1:
        raise ValueError("truncation must be >= 1")
    n = truncation
    blocks = [build_level_blocks(params, k) for k in range(n + 1)]

    u_blocks: list[np.ndarray | None] = [None] * n
    r_blocks: list[np.ndarray | None] = [None] * n
    u_next = blocks[n].diag  # seed: discard the up-flow at the boundary
    for k in range(n - 1, -1, -1):
        neg_inv = _neg_inverse(u_next, k + 1)
        r_blocks[k] = blocks[k].up @ neg_inv
        u_blocks[k] = blocks[k].diag + blocks[k].up @ neg_inv @ blocks[k + 1].down
        u_next = u_blocks[k]

    g_blocks = [
        -np.linalg.solve(u_blocks[k], blocks[k].down) for k in range(1, n)
    ]
    return RgFactors(truncation=n, u_blocks=u_blocks, r_blocks=r_blocks, g_blocks=g_blocks)


@dataclass(frozen=True)
class StationaryResult:
    """Stationary distribution of the main chain, truncated at some level.

    ``pi`` has shape (truncation + 1, M); ``norm_const`` is the constant
    scaling the unnormalized vectors (1 / sum of their masses); ``tail_mass``
    is a geometric-extrapolation estimate of the mass above the truncation.
    """

    truncation: int
    pi: np.ndarray
    norm_const: float
    tail_mass: float

    @property
    def level_mass(self) -> np.ndarray:
        return self.pi.sum(axis=1)


def _stationary_at(params: ModelParams, n: int) -> StationaryResult:
    factors = rg_factorize(params, n)
    m_cap = params.capacity
    blocks1 = build_level_blocks(params, 1)
    a00 = build_level_blocks(params, 0).diag

    # pi0_tilde (A_00 + R_0 A_10) = 0, pi0_tilde e = 1: replace one equation
    # of the singular system by the normalization.
    core = a00 + factors.r_blocks[0] @ blocks1.down
    sys = core.T.copy()
    sys[-1, :] = 1.0
    rhs = np.zeros(m_cap)
    rhs[-1] = 1.0
    try:
        pi0 = np.linalg.solve(sys, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("boundary system for pi_0 is singular") from exc

    tilde = np.empty((n + 1, m_cap))
    tilde[0] = pi0
    for k in range(1, n + 1):
        tilde[k] = tilde[k - 1] @ factors.r_blocks[k - 1]
    total = tilde.sum()
    c = 1.0 / total
    pi = np.clip(c * tilde, 0.0, None)

    mass = pi.sum(axis=1)
    ratio = mass[n] / mass[n - 1] if mass[n - 1] > 0 else 0.0
    if 0.0 < ratio < 1.0:
        tail = mass[n] * ratio / (1.0 - ratio)
    else:
        tail = mass[n]
    return StationaryResult(truncation=n, pi=pi, norm_const=c, tail_mass=tail)


def stationary(
    params: ModelParams,
    tol: float = 1e-10,
    max_level: int = 2**14,
) -> StationaryResult:
    """Stationary distribution under adaptive truncation.

    Starting from max(2 * minimal stable level, 20), the truncation is
    doubled until the top-level mass falls below ``tol`` and the mean
    internal count changes by less than ``tol`` relatively.
    """
    validate(params)
    if not 0.0 < tol < 1.0:
        raise ValueError("tol must be in (0, 1)")
    dd = drift_diagnostics(params)
    n = max(2 * dd.minimal_stable_level, 20)
    prev_mean = None
    while n <= max_level:
        result = _stationary_at(params, n)
        mass = result.level_mass
        mean_internal = float(np.arange(n + 1) @ mass)
        tail_ok = mass[n] < tol
        if prev_mean is not None and tail_ok:
            if abs(mean_internal - prev_mean) <= tol * max(abs(mean_internal), 1e-300):
                return result
        prev_mean = mean_internal
        n *= 2
    raise NoConvergence(f"stationary solve did not stabilize below level {max_level}")


def truncated_generator(params: ModelParams, level_cap: int) -> sp.csr_matrix:
    """Sparse generator over levels 0..level_cap, up-flow folded into the diagonal."""
    validate(params)
    m_cap = params.capacity
    rows = []
    for k in range(level_cap + 1):
        blk = build_level_blocks(params, k)
        row = [None] * (level_cap + 1)
        diag = blk.diag
        if k == level_cap:
            diag = diag + params.arrival_rate * np.eye(m_cap)
        else:
            row[k + 1] = sp.csr_matrix(blk.up)
        row[k] = sp.csr_matrix(diag)
        if k > 0:
            row[k - 1] = sp.csr_matrix(blk.down)
        rows.append(row)
    return sp.bmat(rows, format="csr")


def direct_solve_oracle(params: ModelParams, level_cap: int) -> StationaryResult:
    """Brute-force stationary solve of the truncated generator.

    Independent of the U/R/G machinery: assembles the full truncated
    generator and solves x Q = 0, x e = 1 directly.
    """
    validate(params)
    m_cap = params.capacity
    size = (level_cap + 1) * m_cap
    if size > 200_000:
        raise ValueError("truncated system too large for a direct solve")
    q = truncated_generator(params, level_cap)

    sys = q.T.tolil()
    sys[0, :] = 1.0
    rhs = np.zeros(size)
    rhs[0] = 1.0
    try:
        x = spla.spsolve(sys.tocsr(), rhs)
    except RuntimeError as exc:
        raise SingularSystem("truncated generator is reducible") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystem("truncated generator is reducible")
    x = np.clip(x, 0.0, None)
    scale = x.sum()
    x /= scale
    pi = x.reshape(level_cap + 1, m_cap)
    mass = pi.sum(axis=1)
    ratio = mass[-1] / mass[-2] if mass[-2] > 0 else 0.0
    tail = mass[-1] * ratio / (1.0 - ratio) if 0.0 < ratio < 1.0 else mass[-1]
    return StationaryResult(truncation=level_cap, pi=pi, norm_const=1.0 / scale, tail_mass=tail)
