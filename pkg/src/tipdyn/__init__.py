"""Analytic and simulation engine for tip dynamics of a DAG-based ledger."""

from .errors import (
    CapacityTooSmall,
    DivergentMean,
    GridError,
    IndexOutOfRange,
    NoConvergence,
    NonPositiveRate,
    SingularBlock,
    SingularSystem,
    TipdynError,
)
from .measures import (
    ConservationReport,
    Measures,
    compute_measures,
    conservation_report,
    expected_boundary,
    expected_internal,
    throughput,
)
from .model import (
    LevelBlocks,
    ModelParams,
    SojournLevelBlocks,
    build_level_blocks,
    build_sojourn_blocks,
    state_index,
    validate,
)
from .qbd import (
    DriftDiagnostics,
    RgFactors,
    StationaryResult,
    direct_solve_oracle,
    drift_diagnostics,
    rg_factorize,
    stationary,
)
from .sim import SimConfig, SimResult, simulate, simulate_tagged
from .sojourn import (
    InitialVector,
    PhResult,
    SojournRgFactors,
    fixed_initial,
    mean_sojourn_linear,
    mean_sojourn_rg,
    pasta_initial,
    sojourn_cdf,
    sojourn_rg_factorize,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
