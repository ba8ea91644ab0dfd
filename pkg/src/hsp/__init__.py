"""Hierarchical sensitivity parity: driver selection, sensitivity
embeddings from small neural nets, hierarchical risk allocation,
baselines, backtesting, and a Monte-Carlo correlation-ordering verifier.
"""

from .allocator import (
    Dendrogram,
    WeightVector,
    apply_cap,
    hsp_weights,
    linkage,
    quasi_diagonalize,
    recursive_bisection,
)
from .backtest import (
    BacktestConfig,
    BacktestReport,
    Metrics,
    Schedule,
    build_schedule,
    metrics,
    run,
    run_many,
)
from .baselines import MvObjective, equal_weight, hrp_correlation, mean_variance
from .ccpverify import CcpExperiment, CcpResult, run_ccp
from .data import (
    PricePanel,
    ReturnPanel,
    SyntheticSpec,
    SyntheticTruth,
    align,
    cumulate,
    generate_synthetic,
    generate_synthetic_with_truth,
    load_csv,
    to_returns,
)
from .drivers import (
    CommonDriverSelection,
    SpecificDriverMap,
    Thresholds,
    common_drivers,
    lagged_correlation,
    specific_drivers,
)
from .errors import (
    BacktestError,
    DegenerateEmbeddingError,
    DegenerateSeriesError,
    DegenerateVarianceError,
    DivergenceError,
    FormatError,
    HspError,
    InconsistentUniverseError,
    InfeasibleError,
    InsufficientDataError,
    NoCommonDriversError,
    NoOverlapError,
    NoViableArchitectureError,
    ValidationError,
)
from .nnet import (
    DEFAULT_GRID,
    ArchitectureConfig,
    FitResult,
    LinearFit,
    Mlp,
    build_design,
    fit_linear,
    grid_search,
    train,
)
from .sensmat import (
    SensitivityEmbedding,
    SensitivityMatrix,
    distance_matrix,
    embed,
    psd_gram,
    sensitivity_matrix,
)

__version__ = "0.1.0"

__all__ = [
    "ArchitectureConfig",
    "BacktestConfig",
    "BacktestError",
    "BacktestReport",
    "CcpExperiment",
    "CcpResult",
    "CommonDriverSelection",
    "DEFAULT_GRID",
    "Dendrogram",
    "DegenerateEmbeddingError",
    "DegenerateSeriesError",
    "DegenerateVarianceError",
    "DivergenceError",
    "FitResult",
    "FormatError",
    "HspError",
    "InconsistentUniverseError",
    "InfeasibleError",
    "InsufficientDataError",
    "LinearFit",
    "Metrics",
    "Mlp",
    "MvObjective",
    "NoCommonDriversError",
    "NoOverlapError",
    "NoViableArchitectureError",
    "PricePanel",
    "ReturnPanel",
    "Schedule",
    "SensitivityEmbedding",
    "SensitivityMatrix",
    "SpecificDriverMap",
    "SyntheticSpec",
    "SyntheticTruth",
    "Thresholds",
    "ValidationError",
    "WeightVector",
    "align",
    "apply_cap",
    "build_design",
    "build_schedule",
    "common_drivers",
    "cumulate",
    "distance_matrix",
    "embed",
    "equal_weight",
    "fit_linear",
    "generate_synthetic",
    "generate_synthetic_with_truth",
    "grid_search",
    "hrp_correlation",
    "hsp_weights",
    "lagged_correlation",
    "linkage",
    "load_csv",
    "mean_variance",
    "metrics",
    "psd_gram",
    "quasi_diagonalize",
    "recursive_bisection",
    "run",
    "run_ccp",
    "run_many",
    "sensitivity_matrix",
    "specific_drivers",
    "to_returns",
    "train",
]
