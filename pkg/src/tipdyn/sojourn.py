"""Tagged-tip sojourn time: phase-type mean and distribution.

The mean time to confirmation is computed by two independent routes: a plain
sparse linear solve of the truncated absorbing generator, and the product
form built from its U/R/G measures.  The full distribution is evaluated by
uniformization.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
import scipy.stats

from .errors import DivergentMean, GridError, NoConvergence, SingularBlock
from .model import ModelParams, build_sojourn_blocks, state_index, validate
from .qbd import StationaryResult, _neg_inverse, drift_diagnostics

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class InitialVector:
    """Starting distribution of the tagged-tip chain.

    ``weights`` has shape (levels, 2M) in the interleaved within-level order;
    even columns (0-based) are tagged-internal states, odd columns
    tagged-boundary states.  ``mode`` is "pasta" or "fixed".
    """

    weights: np.ndarray
    mode: str

    @property
    def max_level(self) -> int:
        mass = self.weights.sum(axis=1)
        nz = np.nonzero(mass > 0)[0]
        return int(nz[-1]) if nz.size else 0

    def flatten(self, truncation: int) -> np.ndarray:
        """Flat vector over levels 0..truncation.

        Mass above the truncation is folded into the top level,
        proportionally to that level's own distribution, then the whole
        vector is renormalized.
        """
        width = self.weights.shape[1]
        out = np.zeros((truncation + 1, width))
        upto = min(truncation, self.weights.shape[0] - 1)
        out[: upto + 1] = self.weights[: upto + 1]
        excess = self.weights[upto + 1 :].sum()
        if excess > 0:
            top = out[truncation]
            if top.sum() > 0:
                out[truncation] = top + excess * top / top.sum()
            else:
                out[truncation, 0] = excess
        flat = out.ravel()
        return flat / flat.sum()


def pasta_initial(st: StationaryResult, params: ModelParams) -> InitialVector:
    """Stationary-weighted start: an arriving tip sees the stationary state.

    Seeing (k internal, m boundary) on arrival puts the tagged tip in the
    tagged-internal state at level k, boundary count m.
    """
    levels, m_cap = st.pi.shape
    weights = np.zeros((levels, 2 * m_cap))
    weights[:, 0::2] = st.pi
    total = weights.sum()
    if st.tail_mass > 0:
        # fold the main-chain tail onto the top level before renormalizing
        top = weights[-1]
        if top.sum() > 0:
            weights[-1] = top + st.tail_mass * top / top.sum()
    return InitialVector(weights=weights / weights.sum(), mode="pasta")


def fixed_initial(
    params: ModelParams,
    level: int,
    j: int | None = None,
    n: int | None = None,
) -> InitialVector:
    """Unit mass on one state: tagged-internal (pass j) or tagged-boundary (pass n)."""
    validate(params)
    m_cap = params.capacity
    idx1 = state_index(level, m_cap, j=j, n=n)  # validates bounds, 1-based
    weights = np.zeros((level + 1, 2 * m_cap))
    weights[level, (idx1 - 1) % (2 * m_cap)] = 1.0
    return InitialVector(weights=weights, mode="fixed")


@dataclass(frozen=True)
class PhResult:
    """Sojourn-time result: mean and (optionally) sampled CDF points."""

    mean: float
    cdf: list[tuple[float, float]] | None
    truncation: int
    method: str


def assemble_sojourn_generator(params: ModelParams, truncation: int) -> sp.csr_matrix:
    """Sparse transient generator over levels 0..truncation (up-flow dropped at the cap)."""
    n = truncation
    rows = []
    for i in range(n + 1):
        blk = build_sojourn_blocks(params, i)
        row = [None] * (n + 1)
        row[i] = sp.csr_matrix(blk.diag)
        if i > 0:
            row[i - 1] = sp.csr_matrix(blk.down)
        if i < n:
            row[i + 1] = sp.csr_matrix(blk.up)
        rows.append(row)
    return sp.bmat(rows, format="csr")


def _mean_at(params: ModelParams, theta: InitialVector, n: int) -> float:
    t = assemble_sojourn_generator(params, n)
    rhs = -np.ones(t.shape[0])
    y = spla.spsolve(t.tocsc(), rhs)
    if not np.all(np.isfinite(y)) or np.any(y < -1e-9):
        raise DivergentMean("expected absorption times are not finite and nonnegative")
    return float(theta.flatten(n) @ y)


def _adaptive_truncation_seed(params: ModelParams, theta: InitialVector) -> int:
    dd = drift_diagnostics(params)
    return max(2 * dd.minimal_stable_level, 2 * theta.max_level, 20)


def mean_sojourn_linear(
    params: ModelParams,
    theta: InitialVector,
    truncation: int | None = None,
    rel_tol: float = 1e-8,
    max_level: int = 2**14,
) -> PhResult:
    """Mean time to confirmation via a direct solve of T y = -1."""
    validate(params)
    if truncation is not None:
        return PhResult(
            mean=_mean_at(params, theta, truncation),
            cdf=None,
            truncation=truncation,
            method="linear-solve",
        )
    n = _adaptive_truncation_seed(params, theta)
    prev = None
    while n <= max_level:
        mean = _mean_at(params, theta, n)
        if prev is not None and abs(mean - prev) <= rel_tol * abs(mean):
            return PhResult(mean=mean, cdf=None, truncation=n, method="linear-solve")
        prev = mean
        n *= 2
    raise NoConvergence(f"sojourn mean did not stabilize below level {max_level}")


@dataclass
class SojournRgFactors:
    """U/R/G measures of the truncated tagged-tip chain, with lazy products."""

    truncation: int
    u_blocks: list[np.ndarray]
    r_blocks: list[np.ndarray]
    g_blocks: list[np.ndarray]  # g_blocks[i] is G_{i+1}, i.e. level i+1 -> i

    def __post_init__(self):
        self._u_inv: dict[int, np.ndarray] = {}
        self._x: dict[tuple[int, int], np.ndarray] = {}
        self._y: dict[tuple[int, int], np.ndarray] = {}

    def u_inverse(self, m: int) -> np.ndarray:
        if m not in self._u_inv:
            self._u_inv[m] = np.linalg.inv(self.u_blocks[m])
        return self._u_inv[m]

    def g(self, i: int) -> np.ndarray:
        """G_i, mapping level i to level i-1 (1 <= i <= truncation)."""
        return self.g_blocks[i - 1]

    def x_product(self, l: int, k: int) -> np.ndarray:
        """R_l R_{l+1} ... R_{l+k-1}; identity for k = 0."""
        dim = self.u_blocks[0].shape[0]
        if k == 0:
            return np.eye(dim)
        key = (l, k)
        if key not in self._x:
            self._x[key] = self.x_product(l, k - 1) @ self.r_blocks[l + k - 1]
        return self._x[key]

    def y_product(self, l: int, k: int) -> np.ndarray:
        """G_l G_{l-1} ... G_{l-k+1}; identity for k = 0."""
        dim = self.u_blocks[0].shape[0]
        if k == 0:
            return np.eye(dim)
        key = (l, k)
        if key not in self._y:
            self._y[key] = self.y_product(l, k - 1) @ self.g(l - k + 1)
        return self._y[key]

    def v_block(self, m: int, n: int) -> np.ndarray:
        """Block (m, n) of the maximal nonpositive inverse of the truncated chain.

        V_{m,n} = sum_{s=0}^{min(m,n)} Y_{m-s}^(m) U_s^-1 X_{n-s}^(s),
        the (lower)(diagonal)(upper) expansion of the UL factorization.
        """
        dim = self.u_blocks[0].shape[0]
        out = np.zeros((dim, dim))
        for s in range(min(m, n) + 1):
            out += self.y_product(m, m - s) @ self.u_inverse(s) @ self.x_product(s, n - s)
        return out


def sojourn_rg_factorize(params: ModelParams, truncation: int) -> SojournRgFactors:
    """Backward U/R/G recursion for the tagged-tip chain."""
    validate(params)
    n = truncation
    blocks = [build_sojourn_blocks(params, i) for i in range(n + 1)]
    u_blocks: list[np.ndarray | None] = [None] * (n + 1)
    r_blocks: list[np.ndarray | None] = [None] * n
    u_blocks[n] = blocks[n].diag
    for i in range(n - 1, -1, -1):
        neg_inv = _neg_inverse(u_blocks[i + 1], i + 1)
        r_blocks[i] = blocks[i].up @ neg_inv
        u_blocks[i] = blocks[i].diag + blocks[i].up @ neg_inv @ blocks[i + 1].down
    g_blocks = [-np.linalg.solve(u_blocks[i], blocks[i].down) for i in range(1, n + 1)]
    return SojournRgFactors(
        truncation=n, u_blocks=u_blocks, r_blocks=r_blocks, g_blocks=g_blocks
    )


def mean_sojourn_rg(
    params: ModelParams,
    theta: InitialVector,
    truncation: int | None = None,
) -> PhResult:
    """Mean time to confirmation via the U/R/G product form.

    Evaluates -theta T^-1 e with T^-1 expanded blockwise as
    V_{m,n} = sum_s Y_{m-s}^(m) U_s^-1 X_{n-s}^(s); the row sums
    sum_n V_{m,n} e are accumulated by the equivalent recursions
    z_s = e + R_s z_{s+1}, r_m = U_m^-1 z_m + G_m r_{m-1}.
    """
    validate(params)
    if truncation is None:
        truncation = mean_sojourn_linear(params, theta).truncation
    factors = sojourn_rg_factorize(params, truncation)
    n = factors.truncation
    dim = factors.u_blocks[0].shape[0]
    ones = np.ones(dim)

    # z_s = sum_{k>=0} X_k^(s) e  (backward in s)
    z = np.empty((n + 1, dim))
    z[n] = ones
    for s in range(n - 1, -1, -1):
        z[s] = ones + factors.r_blocks[s] @ z[s + 1]

    # r_m = sum_{s<=m} Y_{m-s}^(m) U_s^-1 z_s  (forward in m)
    flat_theta = theta.flatten(n).reshape(n + 1, dim)
    total = 0.0
    r_prev = None
    for m in range(n + 1):
        w = np.linalg.solve(factors.u_blocks[m], z[m])
        r_m = w if r_prev is None else w + factors.g(m) @ r_prev
        total += flat_theta[m] @ r_m
        r_prev = r_m
    return PhResult(mean=float(-total), cdf=None, truncation=n, method="rg-products")


def sojourn_cdf(
    params: ModelParams,
    theta: InitialVector,
    t_grid,
    truncation: int | None = None,
    series_tol: float = 1e-12,
) -> PhResult:
    """CDF of the sojourn time on a grid, by uniformization.

    F(t) = 1 - theta exp(T t) e, with the matrix exponential evaluated as a
    Poisson mixture of powers of the uniformized transition matrix; the
    Poisson series is truncated so the neglected mass is below ``series_tol``
    per grid point.
    """
    validate(params)
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise GridError("time grid must be a nonempty 1-D sequence")
    if np.any(t_grid < 0) or np.any(np.diff(t_grid) < 0):
        raise GridError("time grid must be nonnegative and nondecreasing")

    base = mean_sojourn_linear(params, theta, truncation=truncation)
    n = base.truncation
    t_mat = assemble_sojourn_generator(params, n)
    rate = float(-t_mat.diagonal().min())
    size = t_mat.shape[0]
    p_mat = (sp.eye(size, format="csr") + t_mat / rate).T.tocsr()

    t_max = float(t_grid[-1])
    if t_max == 0.0:
        n_terms = 0
    else:
        mean_jumps = rate * t_max
        n_terms = int(scipy.stats.poisson.isf(series_tol / 10.0, mean_jumps)) + 10

    # survival weights s_k = theta P^k e
    flat = theta.flatten(n)
    s = np.empty(n_terms + 1)
    v = flat.copy()
    s[0] = v.sum()
    for k in range(1, n_terms + 1):
        v = p_mat @ v
        s[k] = v.sum()

    cdf = []
    for t in t_grid:
        if t == 0.0:
            cdf.append((0.0, 0.0))
            continue
        mean_jumps = rate * t
        # the Poisson mass outside +-8 sigma of the mean is below ~1e-15
        half_width = 8.0 * math.sqrt(mean_jumps) + 30.0
        lo = max(0, int(mean_jumps - half_width))
        hi = min(n_terms, int(math.ceil(mean_jumps + half_width)))
        ks = np.arange(lo, hi + 1)
        pmf = scipy.stats.poisson.pmf(ks, mean_jumps)
        survival = float(pmf @ s[lo : hi + 1])
        if lo > 0:
            # mass below the window multiplies survival weights <= s[lo]
            survival += float(scipy.stats.poisson.cdf(lo - 1, mean_jumps)) * float(s[lo])
        cdf.append((float(t), min(max(1.0 - survival, 0.0), 1.0)))
    return PhResult(mean=base.mean, cdf=cdf, truncation=n, method="linear-solve")
