"""Model parameters and generator blocks for the tip-dynamics chains.

Two continuous-time Markov chains are built here:

* the main chain, tracking (internal tip count, boundary tip count), which is
  block-tridiagonal in the internal count (the "level") with M phases
  (boundary count m = 1..M);

* the tagged-tip absorbing chain, tracking a single tagged transaction
  through its internal and boundary phases until it is confirmed.  Its level
  is the number of *untagged* internal tips; each level holds 2M interleaved
  states: (tagged internal, j boundary tips) and (tagged boundary, n other
  boundary tips), paired as (..., j), (..., j-1) for j = 1..M.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CapacityTooSmall, IndexOutOfRange, NonPositiveRate


def _pairs(m: int) -> int:
    """Number of unordered pairs among m boundary tips, m*(m-1)/2."""
    return m * (m - 1) // 2


@dataclass(frozen=True)
class ModelParams:
    """System parameters: arrival, connection and impatience rates, capacity.

    arrival_rate (lambda): new transactions per unit time.
    connect_rate (mu): rate per (internal tip, boundary-tip pair).
    impatience_rate (alpha): rate per internal tip.
    capacity (M): maximum number of boundary tips, >= 2.
    """

    arrival_rate: float
    connect_rate: float
    impatience_rate: float
    capacity: int


def validate(params: ModelParams) -> ModelParams:
    """Check parameter constraints; return params unchanged if valid."""
    for name, value in (
        ("arrival_rate", params.arrival_rate),
        ("connect_rate", params.connect_rate),
        ("impatience_rate", params.impatience_rate),
    ):
        v = float(value)
        if not np.isfinite(v) or v <= 0.0:
            raise NonPositiveRate(f"{name} must be a positive finite number, got {value}")
    if int(params.capacity) != params.capacity or params.capacity < 2:
        # With capacity 1 no boundary-tip pair ever exists and impatience is
        # disabled in the top boundary state, so internal tips never depart.
        raise CapacityTooSmall(f"capacity must be an integer >= 2, got {params.capacity}")
    return params


@dataclass(frozen=True)
class LevelBlocks:
    """Per-level generator blocks of the main chain (M x M each).

    ``down`` is None for level 0.  Row/column index is the boundary-tip
    count m in 1..M (0-based m-1 in the arrays).
    """

    level: int
    down: np.ndarray | None
    diag: np.ndarray
    up: np.ndarray


def build_level_blocks(params: ModelParams, k: int) -> LevelBlocks:
    """Generator blocks of the main chain at level k (internal tip count)."""
    validate(params)
    if k < 0:
        raise IndexOutOfRange(f"level must be >= 0, got {k}")
    lam = params.arrival_rate
    mu = params.connect_rate
    alpha = params.impatience_rate
    m_cap = params.capacity

    up = lam * np.eye(m_cap)
    if k == 0:
        return LevelBlocks(level=0, down=None, diag=-lam * np.eye(m_cap), up=up)

    down = np.zeros((m_cap, m_cap))
    diag = np.zeros((m_cap, m_cap))
    for m in range(1, m_cap + 1):
        conn = k * _pairs(m) * mu
        imp = k * alpha if m < m_cap else 0.0  # impatience disabled at m = M
        if m < m_cap:
            down[m - 1, m] = imp
        if m > 1:
            down[m - 1, m - 2] = conn
        diag[m - 1, m - 1] = -(conn + imp + lam)
    return LevelBlocks(level=k, down=down, diag=diag, up=up)


@dataclass(frozen=True)
class SojournLevelBlocks:
    """Per-level blocks of the tagged-tip absorbing chain (2M x 2M each).

    Within a level the states are interleaved by boundary count: position
    2l-2 (0-based) is (tagged internal, l boundary tips) and position 2l-1
    is (tagged boundary, l-1 other boundary tips), for l = 1..M.  ``absorb``
    holds the rates into the absorbing (confirmed) state; it is nonzero only
    in tagged-boundary slots and only for levels i >= 1.
    """

    level: int
    down: np.ndarray | None
    diag: np.ndarray
    up: np.ndarray
    absorb: np.ndarray


def build_sojourn_blocks(params: ModelParams, i: int) -> SojournLevelBlocks:
    """Blocks of the tagged-tip chain at level i (untagged internal tips)."""
    validate(params)
    if i < 0:
        raise IndexOutOfRange(f"level must be >= 0, got {i}")
    lam = params.arrival_rate
    mu = params.connect_rate
    alpha = params.impatience_rate
    m_cap = params.capacity
    n = 2 * m_cap

    up = lam * np.eye(n)
    diag = np.zeros((n, n))
    absorb = np.zeros(n)
    down = np.zeros((n, n)) if i >= 1 else None

    for l in range(1, m_cap + 1):
        ri = 2 * l - 2  # tagged internal, l boundary tips
        rb = 2 * l - 1  # tagged boundary, l-1 other boundary tips

        tag_conn = _pairs(l) * mu  # tagged tip approves one of the l-choose-2 pairs
        tag_imp = alpha if l < m_cap else 0.0
        unt_conn_i = i * _pairs(l) * mu  # an untagged tip connects, tag internal
        unt_conn_b = i * _pairs(l - 1) * mu  # pair avoids the tagged boundary tip
        unt_hit = i * (l - 1) * mu  # pair contains the tagged boundary tip
        unt_imp_i = i * alpha if l < m_cap else 0.0
        unt_imp_b = i * alpha if l < m_cap else 0.0

        # Tagged-internal row: intra-level moves for the tagged tip itself.
        if l < m_cap:
            diag[ri, 2 * (l + 1) - 1] = tag_imp  # becomes tagged boundary, n = l
        if l >= 2:
            diag[ri, 2 * (l - 1) - 1] = tag_conn  # approves a pair, n = l - 2
        diag[ri, ri] = -(tag_conn + tag_imp + unt_conn_i + unt_imp_i + lam)

        # Tagged-boundary row: only untagged events move it (or absorb it).
        diag[rb, rb] = -(unt_conn_b + unt_imp_b + lam + unt_hit)
        absorb[rb] = unt_hit

        if down is not None:
            if l < m_cap:
                down[ri, 2 * (l + 1) - 2] = unt_imp_i
                down[rb, 2 * (l + 1) - 1] = unt_imp_b
            if l >= 2:
                down[ri, 2 * (l - 1) - 2] = unt_conn_i
                down[rb, 2 * (l - 1) - 1] = unt_conn_b

    return SojournLevelBlocks(level=i, down=down, diag=diag, up=up, absorb=absorb)


def state_index(i: int, capacity: int, j: int | None = None, n: int | None = None) -> int:
    """1-based flat index of a tagged-tip chain state.

    Pass ``j`` (1..M) for a tagged-internal state at level i, or ``n``
    (0..M-1) for a tagged-boundary state.  The flat ordering interleaves the
    two families: (1,i;j) -> 2Mi + 2j - 1 and (i;1,n) -> 2Mi + 2n + 2.
    """
    if i < 0:
        raise IndexOutOfRange(f"level must be >= 0, got {i}")
    if (j is None) == (n is None):
        raise IndexOutOfRange("exactly one of j (tagged internal) or n (tagged boundary) required")
    if j is not None:
        if not 1 <= j <= capacity:
            raise IndexOutOfRange(f"j must be in 1..{capacity}, got {j}")
        return 2 * capacity * i + 2 * j - 1
    if not 0 <= n <= capacity - 1:
        raise IndexOutOfRange(f"n must be in 0..{capacity - 1}, got {n}")
    return 2 * capacity * i + 2 * n + 2
