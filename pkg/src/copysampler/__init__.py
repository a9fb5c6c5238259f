"""Sampling strategies for copying black-box hard-label classifiers.

Generate oracle-labelled synthetic datasets with four strategies (uniform,
boundary exploration, GP-uncertainty driven, gradient-sign augmentation),
train copy models on them, and score how faithfully each copy replicates
the oracle's decision function.
"""

from .copies import ARCHITECTURES, CopyModel, TrainConfig, TrainingError, predict, train
from .core import (
    CopySamplerError,
    DegenerateColumnError,
    LabeledSample,
    NormalizationTransform,
    RandomSource,
    SampleSpace,
    StratificationError,
    SyntheticDataset,
    fit_normalization,
    prefix,
    stratified_split,
    uniform_sample,
)
from .gp import (
    AcquisitionParams,
    FastBayesParams,
    GPPosterior,
    PosteriorFitError,
    ScaleGuardError,
    SEKernel,
    acquisition,
    acquisition_value,
    fast_bayesian_sampler,
    kernel_eval,
    maximize_acquisition,
    posterior_fit,
    posterior_mean_var,
    reference_bayesian_sampler,
    round_to_class,
)
from .harness import (
    ExperimentConfig,
    OracleSpec,
    RunSummary,
    TimingProfile,
    load_config,
    run_experiment,
    timing_profile,
)
from .metrics import (
    FidelityReport,
    ReferenceSet,
    RunRecord,
    balanced_empirical_fidelity_error,
    build_reference_set,
    compare_methods,
    empirical_fidelity_error,
    quality_checks,
)
from .oracles import (
    AnalyticOracle,
    CheckerboardOracle,
    ConcentricCirclesOracle,
    ExternalOracle,
    HalfspaceOracle,
    Oracle,
    ProtocolError,
    QueryTransportError,
    Spiral2DOracle,
    TableOracle,
    UnsupportedOracleError,
    boundary_distance,
    external_handshake,
    parse_handshake,
    serve_oracle,
    serve_stdio,
)
from .samplers import (
    BoundaryParams,
    JacobianParams,
    Thread,
    binary_search_boundary,
    boundary_sampler,
    jacobian_sampler,
    random_sampler,
    thread_step,
)
from .svgplot import plot_2d

__version__ = "0.1.0"

__all__ = [
    "ARCHITECTURES",
    "AcquisitionParams",
    "AnalyticOracle",
    "BoundaryParams",
    "CheckerboardOracle",
    "ConcentricCirclesOracle",
    "CopyModel",
    "CopySamplerError",
    "DegenerateColumnError",
    "ExperimentConfig",
    "ExternalOracle",
    "FastBayesParams",
    "FidelityReport",
    "GPPosterior",
    "HalfspaceOracle",
    "JacobianParams",
    "LabeledSample",
    "NormalizationTransform",
    "Oracle",
    "OracleSpec",
    "PosteriorFitError",
    "ProtocolError",
    "QueryTransportError",
    "RandomSource",
    "ReferenceSet",
    "RunRecord",
    "RunSummary",
    "SEKernel",
    "SampleSpace",
    "ScaleGuardError",
    "Spiral2DOracle",
    "StratificationError",
    "SyntheticDataset",
    "TableOracle",
    "Thread",
    "TimingProfile",
    "TrainConfig",
    "TrainingError",
    "UnsupportedOracleError",
    "acquisition",
    "acquisition_value",
    "balanced_empirical_fidelity_error",
    "binary_search_boundary",
    "boundary_distance",
    "boundary_sampler",
    "build_reference_set",
    "compare_methods",
    "empirical_fidelity_error",
    "external_handshake",
    "fast_bayesian_sampler",
    "fit_normalization",
    "jacobian_sampler",
    "kernel_eval",
    "load_config",
    "maximize_acquisition",
    "parse_handshake",
    "plot_2d",
    "posterior_fit",
    "posterior_mean_var",
    "predict",
    "prefix",
    "quality_checks",
    "random_sampler",
    "reference_bayesian_sampler",
    "round_to_class",
    "run_experiment",
    "serve_oracle",
    "serve_stdio",
    "stratified_split",
    "thread_step",
    "timing_profile",
    "train",
    "uniform_sample",
]
