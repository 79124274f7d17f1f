"""Event-driven simulation of the tip dynamics.

The simulator tracks only the counts (internal tips, boundary tips); tips
within a class are exchangeable, so a tagged tip is attributed each event
with the exact conditional probability (1/k for being the connector or the
impatient tip, 2/m for being in the chosen boundary pair).
"""

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .model import ModelParams, validate


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    horizon: float
    warmup: float = 0.0
    replications: int = 1
    master_seed: int = 0
    tagged_count: int = 0

    def validate(self) -> "SimConfig":
        validate(self.params)
        if not self.horizon > self.warmup >= 0.0:
            raise ValueError("need horizon > warmup >= 0")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        return self


@dataclass
class SimResult:
    """Replication-aggregated estimates; standard errors are across replications."""

    mean_internal: float
    se_internal: float
    mean_boundary: float
    se_boundary: float
    th_estimate: float
    se_th: float
    sojourn_samples: list[float]
    event_counts: dict[str, int]
    rep_internal: list[float] = field(default_factory=list)
    rep_boundary: list[float] = field(default_factory=list)
    rep_th: list[float] = field(default_factory=list)


def _rep_seed(master_seed: int, rep: int) -> int:
    """Deterministic per-replication seed stream."""
    ss = np.random.SeedSequence([int(master_seed), int(rep)])
    return int(ss.generate_state(2, dtype=np.uint64)[0])


def _run_replication(
    params: ModelParams,
    horizon: float,
    warmup: float,
    seed: int,
    tagged_count: int,
    trace: list | None = None,
):
    lam = params.arrival_rate
    mu = params.connect_rate
    alpha = params.impatience_rate
    m_cap = params.capacity
    rng = random.Random(seed)

    t = 0.0
    k, m = 0, 1  # genesis boundary tip only
    area_k = 0.0
    area_m = 0.0
    connections = 0
    counts = {"arrival": 0, "connection": 0, "impatience": 0}

    # Tagged arrivals are tracked jointly: exchangeability makes attribution
    # exact with counts-only state (connector/impatient tip is tagged with
    # probability #tagged/k; the chosen pair's tagged membership is
    # hypergeometric in the boundary set).  Tagging every stride-th arrival
    # spreads the samples over the horizon so they are nearly independent;
    # index-based selection keeps every tagged arrival a typical arrival.
    internal_tags: list[float] = []  # arrival times of tagged internal tips
    boundary_tags: list[float] = []
    tags_started = 0
    arrivals_seen = 0
    tag_stride = 1
    if tagged_count > 0:
        tag_stride = max(1, int(lam * (horizon - warmup) / tagged_count))
    sojourns: list[float] = []

    exp = rng.expovariate
    uni = rng.random
    span = horizon - warmup
    while True:
        conn = k * m * (m - 1) * 0.5 * mu
        imp = k * alpha if m < m_cap else 0.0
        total = lam + conn + imp
        dt = exp(total)
        t_next = t + dt
        if t_next >= horizon:
            t_next = horizon
        lo = max(t, warmup)
        if t_next > lo:
            area_k += (t_next - lo) * k
            area_m += (t_next - lo) * m
        if t_next >= horizon:
            break
        t = t_next

        u = uni() * total
        if u < lam:
            counts["arrival"] += 1
            if t >= warmup and tagged_count > 0:
                if tags_started < tagged_count and arrivals_seen % tag_stride == 0:
                    internal_tags.append(t)
                    tags_started += 1
                arrivals_seen += 1
            k += 1
            ev = "A"
        elif u < lam + conn:
            counts["connection"] += 1
            if t >= warmup:
                connections += 1
            moved = None
            ni = len(internal_tags)
            if ni and uni() < ni / k:
                moved = internal_tags.pop(rng.randrange(ni))
            b = len(boundary_tags)
            if b:
                # tagged members of the uniform boundary pair
                both = b * (b - 1) * 0.5
                one = b * (m - b)
                v = uni() * (m * (m - 1) * 0.5)
                hits = 2 if v < both else (1 if v < both + one else 0)
                for _ in range(hits):
                    start = boundary_tags.pop(rng.randrange(len(boundary_tags)))
                    sojourns.append(t - start)
            if moved is not None:
                boundary_tags.append(moved)
            k -= 1
            m -= 1
            ev = "C"
        else:
            counts["impatience"] += 1
            ni = len(internal_tags)
            if ni and uni() < ni / k:
                boundary_tags.append(internal_tags.pop(rng.randrange(ni)))
            k -= 1
            m += 1
            ev = "I"
        if trace is not None:
            trace.append((t, ev, k, m))

    th = 2.0 * connections / span
    return area_k / span, area_m / span, th, sojourns, counts


def simulate(config: SimConfig, trace: list | None = None) -> SimResult:
    """Run all replications and aggregate time averages and throughput."""
    config.validate()
    reps = config.replications
    means_k, means_m, ths = [], [], []
    all_sojourns: list[float] = []
    counts = {"arrival": 0, "connection": 0, "impatience": 0}
    for r in range(reps):
        rep_trace = trace if (trace is not None and r == 0) else None
        mk, mm, th, sj, ct = _run_replication(
            config.params,
            config.horizon,
            config.warmup,
            _rep_seed(config.master_seed, r),
            config.tagged_count,
            rep_trace,
        )
        means_k.append(mk)
        means_m.append(mm)
        ths.append(th)
        all_sojourns.extend(sj)
        for key in counts:
            counts[key] += ct[key]

    def se(xs):
        if len(xs) < 2:
            return float("nan")
        return float(np.std(xs, ddof=1) / math.sqrt(len(xs)))

    return SimResult(
        mean_internal=float(np.mean(means_k)),
        se_internal=se(means_k),
        mean_boundary=float(np.mean(means_m)),
        se_boundary=se(means_m),
        th_estimate=float(np.mean(ths)),
        se_th=se(ths),
        sojourn_samples=all_sojourns,
        event_counts=counts,
        rep_internal=means_k,
        rep_boundary=means_m,
        rep_th=ths,
    )


def simulate_tagged(config: SimConfig, trace: list | None = None) -> SimResult:
    """As simulate(), requiring tagged-arrival tracking to be enabled."""
    if config.tagged_count < 1:
        raise ValueError("tagged_count must be >= 1 for tagged simulation")
    if config.warmup <= 0.0:
        raise ValueError("tagged simulation requires warmup > 0")
    return simulate(config, trace=trace)
