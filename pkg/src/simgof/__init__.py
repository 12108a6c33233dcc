"""Likelihood-free goodness-of-fit tests for simulator-based Bayesian models.

Two complementary tests over a table of simulated (parameter, summary) pairs:

* the prior test checks an observation against the model's prior predictive
  by ranking its outlier score among calibration draws;
* the holdout test checks whether any parameter value fits, by localizing the
  table around one data split, re-simulating the retained particles, and
  ranking a held-out split against the re-simulated draws.

Scores are nearest-neighbor based: mean kNN distance and the local outlier
factor (plus its maximum over a range of neighborhood sizes).
"""

from .data import (
    Particle,
    ReferenceTable,
    SplitSpec,
    child_seeds,
    load_reference_table,
    rng_from,
    save_reference_table,
    split_calibration,
)
from .errors import (
    EmptyTableError,
    SchemaError,
    SimulationError,
    SizeError,
    SpecError,
    TransformError,
    ValidationError,
)
from .harness import (
    ExperimentSpec,
    ToyModelSpec,
    ToyResimulator,
    calibration_check,
    estimate_power_holdout,
    estimate_power_prior,
    sample_lmoments,
    simulate_toy,
    toy_pod_pairs,
)
from .holdout import HoldoutInput, holdout_pvalue
from .neighbors import NeighborIndex, build_index, k_dist, knn_query
from .posterior import (
    Adjustment,
    LocalizedTable,
    PosteriorSpec,
    TransformSpec,
    export_params,
    import_summaries,
    loclin_adjust,
    localize,
    resimulate,
    ridge_adjust,
    transform_forward,
    transform_inverse,
)
from .prior_gof import (
    BootstrapResult,
    ConfidenceInterval,
    GofReport,
    asymptotic_ci,
    bh_adjust,
    bootstrap_pvalues,
    hdi,
    localized_prior_pvalue,
    prior_pvalue,
)
from .scores import (
    ReferenceScorer,
    ScoreSpec,
    knn_score,
    lof,
    lrd,
    max_lof,
    score_batch,
)

__version__ = "0.1.0"
