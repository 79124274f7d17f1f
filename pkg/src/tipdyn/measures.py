"""Steady-state performance measures of the main chain."""

from dataclasses import dataclass

import numpy as np

from .model import ModelParams, _pairs
from .qbd import StationaryResult


@dataclass(frozen=True)
class Measures:
    """Mean internal/boundary counts and throughput at one parameter point."""

    mean_internal: float
    mean_boundary: float
    throughput: float
    trunc_level: int
    tail_mass: float


def boundary_weight(capacity: int) -> np.ndarray:
    """(1, 2, ..., M): boundary count per phase."""
    return np.arange(1, capacity + 1, dtype=float)


def pair_weight(capacity: int) -> np.ndarray:
    """(0, 1, C(3,2), ..., C(M,2)): boundary-pair count per phase."""
    return np.array([_pairs(m) for m in range(1, capacity + 1)], dtype=float)


def expected_internal(st: StationaryResult) -> float:
    """Mean number of internal tips, sum_k k * (level-k mass)."""
    return float(np.arange(st.pi.shape[0]) @ st.level_mass)


def expected_boundary(st: StationaryResult) -> float:
    """Mean number of boundary tips, sum_k pi_k . (1, 2, ..., M)."""
    return float(st.pi.sum(axis=0) @ boundary_weight(st.pi.shape[1]))


def throughput(st: StationaryResult, params: ModelParams) -> float:
    """New network nodes per unit time: 2 mu sum_k k * pi_k . pair_weight.

    Each connection event confirms two boundary tips at once, hence the
    factor 2 on the aggregate connection rate.
    """
    f = pair_weight(params.capacity)
    levels = np.arange(st.pi.shape[0])
    return float(2.0 * params.connect_rate * (levels @ (st.pi @ f)))


def compute_measures(st: StationaryResult, params: ModelParams) -> Measures:
    return Measures(
        mean_internal=expected_internal(st),
        mean_boundary=expected_boundary(st),
        throughput=throughput(st, params),
        trunc_level=st.truncation,
        tail_mass=st.tail_mass,
    )


@dataclass(frozen=True)
class ConservationReport:
    """Cross-checks derivable from stationarity of the counts.

    In steady state the boundary count is balanced (impatience rate equals
    connection rate) and the internal count is balanced (arrivals equal
    impatience plus connections), which forces throughput == arrival rate.
    """

    throughput: float
    arrival_rate: float
    relative_gap: float
    impatience_rate: float
    connection_rate: float
    little_lhs: float | None = None
    little_rhs: float | None = None
    little_gap: float | None = None


def conservation_report(
    st: StationaryResult,
    params: ModelParams,
    mean_sojourn: float | None = None,
) -> ConservationReport:
    """Flow-conservation gaps, plus the Little's-law leg when a sojourn mean is given."""
    m_cap = params.capacity
    levels = np.arange(st.pi.shape[0])
    th = throughput(st, params)
    # Impatience fires per internal tip except in the full-boundary phase.
    imp_mask = np.ones(m_cap)
    imp_mask[-1] = 0.0
    imp_rate = float(params.impatience_rate * (levels @ (st.pi @ imp_mask)))
    conn_rate = float(params.connect_rate * (levels @ (st.pi @ pair_weight(m_cap))))

    little_lhs = little_rhs = little_gap = None
    if mean_sojourn is not None:
        little_lhs = params.arrival_rate * mean_sojourn
        little_rhs = expected_internal(st) + expected_boundary(st)
        little_gap = abs(little_lhs - little_rhs) / little_rhs

    return ConservationReport(
        throughput=th,
        arrival_rate=params.arrival_rate,
        relative_gap=abs(th - params.arrival_rate) / params.arrival_rate,
        impatience_rate=imp_rate,
        connection_rate=conn_rate,
        little_lhs=little_lhs,
        little_rhs=little_rhs,
        little_gap=little_gap,
    )
