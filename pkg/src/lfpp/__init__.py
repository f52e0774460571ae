"""Weighted first-passage metrics on sampled log-correlated fields."""

from .errors import (
    DataError,
    DomainError,
    GeometryError,
    LfppError,
    RangeError,
    ResolutionError,
    StateError,
)
from .estimate import (
    ExponentFit,
    QuantileEstimate,
    SampleSet,
    d_gamma_upper,
    estimate_a_eps,
    estimate_alpha,
    estimate_beta,
    fit_scaling_exponent,
    ks_statistic,
    q_subcritical,
    quantile_estimate,
    xi_bounds_of_gamma,
    xi_of_gamma,
)
from .experiments import (
    ExperimentSpec,
    Report,
    run_annulus_scaling,
    run_continuity,
    run_euclidean_limit,
    run_experiment,
    run_exponent_scan,
    run_invariance_check,
    run_weyl_check,
    run_xi_infty,
)
from .field import (
    Field,
    GridSpec,
    Kernel,
    add_function,
    circle_average,
    constant_field,
    field_from_values,
    make_kernel,
    mollify,
    sample_field,
)
from .metric import (
    AnnulusSpec,
    DistanceResult,
    WeightedGrid,
    across_annulus,
    around_annulus,
    build_weighted_grid,
    crossing_length,
    distance,
    distance_sets,
)
from .store import (
    RunConfig,
    cached_field,
    derive_seed,
    load_field,
    read_config,
    read_report,
    save_field,
    write_report,
)

__version__ = "0.1.0"
