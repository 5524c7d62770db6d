"""Transfer of trained surrogate regressors across tasks.

A source surrogate is adapted to a new task by learning a composed
domain transformation (per-coordinate beta-CDF warp, then rotation and
translation) from a small sample of target evaluations.
"""

from .benchmarks import BENCH_IDS, BenchFn, eval_bench, make_target, sample_dataset, sample_instance
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    in_domain_filter,
    read_dataset_csv,
    run_experiment,
    smape,
    write_results_csv,
)
from .optimizer import CmaConfig, GdSchedule, cma_minimize, lr_at
from .rotation import (
    geodesic_step,
    matrix_exp_skew,
    project_to_tangent,
    random_rotation,
    reorthonormalize,
    skew_from_vector,
    vector_from_skew,
)
from .specfun import (
    QuadratureSpec,
    digamma,
    log_beta,
    log_weighted_inc_beta,
    reg_inc_beta,
)
from .surrogate import (
    Dataset,
    ForestRegressor,
    GprRegressor,
    ValueTransform,
    fit_value_transform,
    load_model,
    save_model,
)
from .transfer import (
    TransferParams,
    TransferReport,
    TransferredSurrogate,
    apply_transform,
    fit_transfer_cmaes,
    fit_transfer_gd,
    transfer_gradients,
    transfer_loss,
    transferred_predict,
)
from .warp import (
    Box,
    WarpParams,
    WarpPrior,
    sample_warp_params,
    warp_forward,
    warp_prior_preset,
    warp_shape_gradients,
)

__version__ = "0.1.0"
