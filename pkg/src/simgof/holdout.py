"""Post-inference holdout goodness-of-fit.

The holdout test asks whether some parameter value of the model could have
generated the data. One data split (y_obs) drives an ABC approximation of the
posterior: localize the reference table around y_obs, optionally adjust the
retained particles by local regression, and re-simulate each particle from
its parameters. The re-simulated table is split in half; the p-value counts
re-simulated calibration scores strictly above the held-out split's (y_new)
score, both scored against the re-simulated reference half.

Producing the two independent splits y_obs and y_new from one empirical
dataset is the caller's responsibility.

Scoring standardizes summary columns by the re-simulated reference half's
mean and standard deviation by default (see prior_gof for why); localization
always operates on raw coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ReferenceTable, SplitSpec, child_seeds, split_calibration
from .errors import SpecError
from .posterior import PosteriorSpec, adjust_particles, localize, resimulate
from .prior_gof import (
    ASYMPTOTIC,
    BOOTSTRAP_HDI,
    BootstrapResult,
    ConfidenceInterval,
    GofReport,
    asymptotic_ci,
    bootstrap_pvalues,
    exceedance_pvalue,
)
from .scores import ReferenceScorer, ScoreSpec


@dataclass(frozen=True)
class HoldoutInput:
    """Everything one holdout evaluation needs.

    ``y_obs`` and ``y_new`` must come from independent data splits; ``resim``
    is a callable (theta, rng) -> summary vector regenerating data from
    stored parameters.
    """

    y_obs: np.ndarray
    y_new: np.ndarray
    ref: ReferenceTable
    posterior_spec: PosteriorSpec
    score_spec: ScoreSpec
    seed: int
    resim: object


def holdout_pvalue(inp: HoldoutInput, standardize=True, workers=1,
                   ci=None, ci_level=0.95, n_boot=500,
                   scenario=None) -> GofReport:
    """Holdout GoF p-value for one (y_obs, y_new) pair.

    Pipeline: localize around y_obs, adjust particles per the posterior spec,
    re-simulate, split the re-simulated table into calibration and reference
    halves, and count calibration scores strictly above the held-out score.
    ``ci`` may be "asymptotic" or "bootstrap"; the bootstrap re-splits the
    re-simulated table, i.e. it quantifies uncertainty after localization.
    """
    spec = inp.posterior_spec
    n_post = spec.n_post
    warnings = []
    if n_post % 2:
        warnings.append("odd n_post; calibration half rounded down")
    if ci not in (None, "asymptotic", "bootstrap"):
        raise SpecError(f"unknown ci method {ci!r}")

    loc = localize(inp.ref, inp.y_obs, n_post, workers=workers)
    adjustment = adjust_particles(loc, inp.y_obs, spec)
    warnings.extend(adjustment.warnings)

    resim_seed, split_seed, boot_seed = child_seeds(inp.seed, 3)
    resim_table = resimulate(
        adjustment.params, inp.resim, resim_seed,
        param_names=inp.ref.param_names, stat_names=inp.ref.stat_names,
        expect_m=inp.ref.n_stats,
    )
    n_calib = n_post // 2
    ref_half, calib_half = split_calibration(
        resim_table, SplitSpec(n_calib=n_calib, seed=split_seed)
    )

    scorer = ReferenceScorer(ref_half, inp.score_spec.k_max,
                             standardize=standardize, workers=workers)
    y_new = np.asarray(inp.y_new, dtype=np.float64).ravel()
    t_new = float(scorer.scores(y_new[None, :], inp.score_spec)[0])
    t_cal = scorer.scores(calib_half.summaries, inp.score_spec)
    p_hat = exceedance_pvalue(t_cal, t_new)

    interval = None
    p_boot_median = None
    if ci == "asymptotic":
        low, high = asymptotic_ci(p_hat, n_calib, ci_level)
        interval = ConfidenceInterval(low, high, ASYMPTOTIC, ci_level)
        if p_hat in (0.0, 1.0):
            warnings.append("degenerate asymptotic CI; prefer the bootstrap")
    elif ci == "bootstrap":
        boot = bootstrap_pvalues(y_new, resim_table, n_calib, inp.score_spec,
                                 n_boot, boot_seed, level=ci_level,
                                 standardize=standardize, workers=workers)
        interval = ConfidenceInterval(boot.hdi_low, boot.hdi_high,
                                      BOOTSTRAP_HDI, ci_level)
        p_boot_median = boot.median

    return GofReport(
        p_hat=p_hat,
        n_calib=n_calib,
        score_spec=inp.score_spec,
        n_ref=len(ref_half),
        ci=interval,
        seed=inp.seed if not isinstance(inp.seed, np.random.SeedSequence) else None,
        scenario=scenario,
        warnings=tuple(warnings),
        method=spec.method,
        n_post=n_post,
        epsilon_implied=loc.epsilon,
        n_ref_total=len(inp.ref),
        p_boot_median=p_boot_median,
    )
