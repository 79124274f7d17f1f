"""Command-line front end: solves, sweeps, simulation and self-checks."""

import argparse
import csv
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import measures as meas
from . import qbd, sim, sojourn
from .errors import NoConvergence, TipdynError
from .model import ModelParams, build_level_blocks, build_sojourn_blocks, validate

SWEEP_HEADER = [
    "lambda", "mu", "alpha", "M",
    "E_NA", "E_NB", "TH", "E_WA", "trunc_level", "tail_mass", "error",
]


def _params_from(args) -> ModelParams:
    return validate(
        ModelParams(
            arrival_rate=args.lam,
            connect_rate=args.mu,
            impatience_rate=args.alpha,
            capacity=args.capacity,
        )
    )


def _add_param_flags(p: argparse.ArgumentParser, required: bool = True):
    p.add_argument("--lambda", dest="lam", type=float, required=required, help="arrival rate")
    p.add_argument("--mu", type=float, required=required, help="connection rate")
    p.add_argument("--alpha", type=float, required=required, help="impatience rate")
    p.add_argument("--capacity", type=int, required=required, help="boundary-tip capacity M")


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _thread_count() -> int:
    return max(1, int(os.environ.get("TIPDYN_THREADS", "1")))


# ---------------------------------------------------------------- solve

def cmd_solve(args) -> int:
    params = _params_from(args)
    st = qbd.stationary(params, tol=args.tol, max_level=args.max_level)
    m = meas.compute_measures(st, params)
    report = meas.conservation_report(st, params)
    print(f"E[N_A]      = {m.mean_internal:.10g}")
    print(f"E[N_B]      = {m.mean_boundary:.10g}")
    print(f"TH          = {m.throughput:.10g}")
    print(f"trunc level = {m.trunc_level}")
    print(f"tail mass   = {m.tail_mass:.3e}")
    print(f"|TH-lambda|/lambda = {report.relative_gap:.3e}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_HEADER)
            w.writerow([
                _fmt(params.arrival_rate), _fmt(params.connect_rate),
                _fmt(params.impatience_rate), params.capacity,
                _fmt(m.mean_internal), _fmt(m.mean_boundary), _fmt(m.throughput),
                "", m.trunc_level, _fmt(m.tail_mass), "",
            ])
    return 0


# ---------------------------------------------------------------- sojourn

def _initial_vector(params: ModelParams, spec: str, st=None):
    if spec == "pasta":
        if st is None:
            st = qbd.stationary(params)
        return sojourn.pasta_initial(st, params), st
    if spec.startswith("fixedb:"):
        level, n = (int(v) for v in spec.split(":", 1)[1].split(","))
        return sojourn.fixed_initial(params, level, n=n), st
    if spec.startswith("fixed:"):
        level, j = (int(v) for v in spec.split(":", 1)[1].split(","))
        return sojourn.fixed_initial(params, level, j=j), st
    raise ValueError(f"unknown initial spec {spec!r}")


def cmd_sojourn(args) -> int:
    params = _params_from(args)
    theta, _ = _initial_vector(params, args.initial)

    linear = rg = None
    if args.method in ("linear", "both"):
        linear = sojourn.mean_sojourn_linear(params, theta)
    if args.method in ("rg", "both"):
        trunc = linear.truncation if linear is not None else None
        rg = sojourn.mean_sojourn_rg(params, theta, truncation=trunc)
    shown = linear or rg
    if linear is not None:
        print(f"E[W_A] (linear) = {linear.mean:.10g}  (trunc level {linear.truncation})")
    if rg is not None:
        print(f"E[W_A] (rg)     = {rg.mean:.10g}  (trunc level {rg.truncation})")
    if linear is not None and rg is not None:
        gap = abs(linear.mean - rg.mean) / abs(linear.mean)
        print(f"relative gap    = {gap:.3e}")

    if args.cdf_grid:
        t_max_s, points_s = args.cdf_grid.split(":")
        grid = np.linspace(0.0, float(t_max_s), max(int(points_s), 2))
        ph = sojourn.sojourn_cdf(params, theta, grid, truncation=shown.truncation)
        if args.csv:
            with open(args.csv, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["t", "F"])
                for t, f in ph.cdf:
                    w.writerow([_fmt(t), _fmt(f)])
        else:
            for t, f in ph.cdf:
                print(f"{t!r},{f!r}")
    return 0


# ---------------------------------------------------------------- sweep

@dataclass(frozen=True)
class SweepSpec:
    """Grid of parameter points: one varying axis per series, fixed rest."""

    points: list[ModelParams]
    with_sojourn: bool
    output: str | None


def _preset_spec(name: str, output: str | None) -> SweepSpec:
    lam_grid = [20.0 + 2.0 * i for i in range(11)]
    if name in ("fig4", "fig5"):
        pts = [ModelParams(l, mu, 0.45, 100) for mu in (3.5, 4.0, 5.0) for l in lam_grid]
        return SweepSpec(points=pts, with_sojourn=False, output=output)
    if name == "fig6":
        pts = [ModelParams(l, mu, 0.45, 100) for mu in (2.0, 2.5, 3.0) for l in lam_grid]
        return SweepSpec(points=pts, with_sojourn=False, output=output)
    if name == "fig7":
        mu_grid = [2.0 + 0.5 * i for i in range(15)]
        pts = [ModelParams(30.0, mu, a, 50) for a in (0.3, 0.4, 0.5) for mu in mu_grid]
        return SweepSpec(points=pts, with_sojourn=True, output=output)
    if name == "fig8":
        pts = [ModelParams(l, 5.0, a, 50) for a in (0.3, 0.35, 0.4) for l in lam_grid]
        return SweepSpec(points=pts, with_sojourn=True, output=output)
    if name == "fig9":
        pts = [ModelParams(l, mu, 0.3, 50) for mu in (3.5, 4.0, 5.0) for l in lam_grid]
        return SweepSpec(points=pts, with_sojourn=True, output=output)
    raise ValueError(f"unknown preset {name!r}")


def _generic_spec(args) -> SweepSpec:
    fixed = {
        "lambda": args.lam,
        "mu": args.mu,
        "alpha": args.alpha,
        "capacity": args.capacity,
    }
    if args.vary not in fixed:
        raise ValueError(f"unknown parameter {args.vary!r}")
    if fixed[args.vary] is not None:
        raise ValueError(f"{args.vary} is both varied and fixed")
    missing = [k for k, v in fixed.items() if v is None and k != args.vary]
    if missing:
        raise ValueError(f"missing fixed values for {missing}")
    if args.step <= 0:
        raise ValueError("step must be > 0")
    values = []
    v = args.start
    while v <= args.stop + 1e-12:
        values.append(v)
        v += args.step
    if not values:
        raise ValueError("empty sweep range")
    pts = []
    for v in values:
        d = dict(fixed)
        d[args.vary] = v
        pts.append(
            ModelParams(d["lambda"], d["mu"], d["alpha"], int(d["capacity"]))
        )
    return SweepSpec(points=pts, with_sojourn=args.sojourn, output=args.out)


def _sweep_point(params: ModelParams, with_sojourn: bool) -> list:
    try:
        st = qbd.stationary(params)
        m = meas.compute_measures(st, params)
        ewa = ""
        if with_sojourn:
            theta = sojourn.pasta_initial(st, params)
            ewa = _fmt(sojourn.mean_sojourn_linear(params, theta).mean)
        return [
            _fmt(params.arrival_rate), _fmt(params.connect_rate),
            _fmt(params.impatience_rate), params.capacity,
            _fmt(m.mean_internal), _fmt(m.mean_boundary), _fmt(m.throughput),
            ewa, m.trunc_level, _fmt(m.tail_mass), "",
        ]
    except TipdynError as exc:
        return [
            _fmt(params.arrival_rate), _fmt(params.connect_rate),
            _fmt(params.impatience_rate), params.capacity,
            "", "", "", "", "", "", f"{type(exc).__name__}: {exc}",
        ]


def run_sweep(spec: SweepSpec) -> list[list]:
    workers = _thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(lambda p: _sweep_point(p, spec.with_sojourn), spec.points))
    else:
        rows = [_sweep_point(p, spec.with_sojourn) for p in spec.points]
    return rows


def cmd_sweep(args) -> int:
    if args.preset:
        spec = _preset_spec(args.preset, args.out)
    else:
        spec = _generic_spec(args)
    rows = run_sweep(spec)
    out = open(spec.output, "w", newline="") if spec.output else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(SWEEP_HEADER)
        w.writerows(rows)
    finally:
        if spec.output:
            out.close()
    return 0


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    params = _params_from(args)
    config = sim.SimConfig(
        params=params,
        horizon=args.horizon,
        warmup=args.warmup,
        replications=args.reps,
        master_seed=args.seed,
        tagged_count=args.tagged,
    )
    trace: list | None = [] if args.trace else None
    result = sim.simulate(config, trace=trace)
    print(f"mean internal = {result.mean_internal:.6g} +- {result.se_internal:.3g}")
    print(f"mean boundary = {result.mean_boundary:.6g} +- {result.se_boundary:.3g}")
    print(f"throughput    = {result.th_estimate:.6g} +- {result.se_th:.3g}")
    print(f"events        = {result.event_counts}")
    if result.sojourn_samples:
        samples = np.asarray(result.sojourn_samples)
        se = samples.std(ddof=1) / math.sqrt(samples.size)
        print(f"tagged sojourn mean = {samples.mean():.6g} +- {se:.3g} (n={samples.size})")

    if args.compare:
        st = qbd.stationary(params)
        m = meas.compute_measures(st, params)
        for name, analytic, est, sev in [
            ("E[N_A]", m.mean_internal, result.mean_internal, result.se_internal),
            ("E[N_B]", m.mean_boundary, result.mean_boundary, result.se_boundary),
            ("TH", m.throughput, result.th_estimate, result.se_th),
        ]:
            z = (est - analytic) / sev if sev > 0 else float("inf")
            print(f"z({name}) = {z:+.3f}")
        if result.sojourn_samples:
            theta = sojourn.pasta_initial(st, params)
            ewa = sojourn.mean_sojourn_linear(params, theta).mean
            samples = np.asarray(result.sojourn_samples)
            se = samples.std(ddof=1) / math.sqrt(samples.size)
            z = (samples.mean() - ewa) / se
            print(f"z(E[W_A]) = {z:+.3f}")

    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "event", "k", "m"])
            for t, ev, k, m_ in trace:
                w.writerow([_fmt(t), ev, k, m_])
    return 0


# ---------------------------------------------------------------- check

def _check_lines(tol_scale: float):
    """Yield (name, measured, tolerance, passed) for the cross-validation suite."""
    rng = np.random.default_rng(20240817)

    # generator row sums, both chains
    worst = 0.0
    for _ in range(20):
        p = ModelParams(
            float(rng.uniform(0.2, 5.0)),
            float(rng.uniform(0.2, 5.0)),
            float(rng.uniform(0.05, 2.0)),
            int(rng.integers(2, 12)),
        )
        for k in (1, 3, 7):
            blk = build_level_blocks(p, k)
            worst = max(worst, float(np.abs((blk.down + blk.diag + blk.up).sum(axis=1)).max()))
            sb = build_sojourn_blocks(p, k)
            rows = sb.down + sb.diag + sb.up
            worst = max(worst, float(np.abs(rows.sum(axis=1) + sb.absorb).max()))
    yield "generator row sums", worst, 1e-12, worst <= 1e-12

    # phase equation residual
    worst = 0.0
    for m_cap in (2, 5, 10, 50):
        p = ModelParams(2.0, 1.0, 0.5, m_cap)
        dd = qbd.drift_diagnostics(p)
        res = float(np.abs(dd.beta @ qbd.phase_generator(p)).max())
        worst = max(worst, res)
    yield "phase equilibrium residual", worst, 1e-12, worst <= 1e-12

    # RG stationary vs brute force
    p = ModelParams(2.0, 1.0, 0.5, 5)
    st = qbd.stationary(p, tol=1e-12)
    oracle = qbd.direct_solve_oracle(p, 300)
    n = min(st.truncation, oracle.truncation)
    gap = float(np.abs(st.pi[: n + 1] - oracle.pi[: n + 1]).max())
    yield "stationary vs brute force", gap, 1e-8 * tol_scale, gap <= 1e-8 * tol_scale

    # flow conservation (documents the throughput == arrival identity)
    report = meas.conservation_report(st, p)
    yield (
        f"TH - lambda gap (TH={report.throughput:.8g}, lambda={p.arrival_rate})",
        report.relative_gap,
        1e-4 * tol_scale,
        report.relative_gap <= 1e-4 * tol_scale,
    )
    imp_gap = abs(report.impatience_rate - report.connection_rate) / report.connection_rate
    yield "impatience vs connection rate", imp_gap, 1e-6 * tol_scale, imp_gap <= 1e-6 * tol_scale

    # two-route sojourn mean + Little's law
    p2 = ModelParams(3.0, 1.0, 0.5, 10)
    st2 = qbd.stationary(p2)
    theta = sojourn.pasta_initial(st2, p2)
    lin = sojourn.mean_sojourn_linear(p2, theta)
    rg = sojourn.mean_sojourn_rg(p2, theta, truncation=lin.truncation)
    route_gap = abs(lin.mean - rg.mean) / abs(lin.mean)
    yield "sojourn linear vs rg", route_gap, 1e-8 * tol_scale, route_gap <= 1e-8 * tol_scale
    report2 = meas.conservation_report(st2, p2, mean_sojourn=lin.mean)
    yield "Little's law", report2.little_gap, 1e-3 * tol_scale, report2.little_gap <= 1e-3 * tol_scale

    # expected-fail validation probe
    try:
        validate(ModelParams(1.0, 1.0, 0.5, 1))
        ok = False
    except TipdynError:
        ok = True
    yield "capacity=1 rejected", 0.0 if ok else 1.0, 0.5, ok


def cmd_check(args) -> int:
    failed = 0
    for name, measured, tol, passed in _check_lines(args.tol_scale):
        status = "PASS" if passed else "FAIL"
        print(f"{status} {name}: measured={measured:.3e} tol={tol:.3e}")
        if not passed:
            failed += 1
    return 0 if failed == 0 else 1


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tipdyn",
        description="Tip dynamics of a DAG ledger: stationary solves, sojourn times, simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="stationary measures at one parameter point")
    _add_param_flags(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-level", type=int, default=2**14)
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sojourn", help="tagged-tip sojourn time")
    _add_param_flags(p)
    p.add_argument("--initial", default="pasta", help="pasta | fixed:I,J | fixedb:I,N")
    p.add_argument("--method", choices=("linear", "rg", "both"), default="linear")
    p.add_argument("--cdf-grid", default=None, help="T_MAX:POINTS")
    p.add_argument("--csv", default=None)
    p.set_defaults(func=cmd_sojourn)

    p = sub.add_parser("sweep", help="parameter sweeps as CSV")
    _add_param_flags(p, required=False)
    p.add_argument("--preset", choices=("fig4", "fig5", "fig6", "fig7", "fig8", "fig9"))
    p.add_argument("--vary", choices=("lambda", "mu", "alpha", "capacity"))
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--step", type=float, default=1.0)
    p.add_argument("--sojourn", action="store_true", help="also compute E[W_A] per point")
    p.add_argument("--out", default=None, help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="event-driven simulation oracle")
    _add_param_flags(p)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--warmup", type=float, default=0.0)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tagged", type=int, default=0)
    p.add_argument("--trace", default=None, help="trajectory CSV path (first replication)")
    p.add_argument("--compare", action="store_true", help="z-scores against analytic values")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="run the cross-validation suite")
    p.add_argument("--tol-scale", type=float, default=1.0, help="scale all tolerances")
    p.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NoConvergence as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (TipdynError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
