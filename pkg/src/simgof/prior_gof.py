"""Pre-inference goodness-of-fit: exceedance p-values with uncertainty.

The prior test asks whether an observed summary vector is consistent with
draws from the model's prior predictive. The p-value is estimated by scoring
calibration draws and the observation against a disjoint reference table and
counting calibration scores that strictly exceed the observed score. Counting
is strict, so score ties count as non-exceedance and the estimate lives on the
lattice {0, 1/n_calib, ..., 1}.

Uncertainty comes in two flavors: a closed-form normal interval from the
binomial variance p(1-p)/n_calib, and a bootstrap over repeated
reference/calibration re-splits of the simulation pool, summarized by its
median and a highest density interval.

Unlike the raw score primitives, the test procedures standardize summary
columns by the reference table's mean and standard deviation by default:
summaries routinely mix scales several orders of magnitude apart, and the
tests have essentially no power when a few wide columns swamp the Euclidean
metric. Pass ``standardize=False`` to score raw coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.stats import norm

from .data import ReferenceTable, SplitSpec, child_seeds, split_calibration
from .errors import SpecError
from .posterior import localize, resimulate
from .scores import ReferenceScorer, ScoreSpec

ASYMPTOTIC = "asymptotic"
BOOTSTRAP_HDI = "bootstrap-HDI"


@dataclass(frozen=True)
class ConfidenceInterval:
    low: float
    high: float
    method: str
    level: float


@dataclass(frozen=True)
class GofReport:
    """Estimated p-value with counts, provenance, and an optional interval."""

    p_hat: float
    n_calib: int
    score_spec: ScoreSpec
    n_ref: int = None
    ci: ConfidenceInterval = None
    seed: int = None
    scenario: str = None
    warnings: tuple[str, ...] = ()
    # holdout / localized provenance
    method: str = None
    n_post: int = None
    epsilon_implied: float = None
    n_ref_total: int = None
    p_boot_median: float = None

    def to_record(self) -> dict:
        rec = {
            "scenario": self.scenario,
            "score_spec": self.score_spec.label,
            "n_ref": self.n_ref,
            "n_calib": self.n_calib,
            "p_hat": self.p_hat,
            "ci_low": self.ci.low if self.ci else None,
            "ci_high": self.ci.high if self.ci else None,
            "ci_method": self.ci.method if self.ci else None,
            "ci_level": self.ci.level if self.ci else None,
            "seed": self.seed,
            "warnings": ";".join(self.warnings),
        }
        if self.method is not None:
            rec.update(
                method=self.method,
                n_post=self.n_post,
                epsilon_implied=self.epsilon_implied,
                n_ref_total=self.n_ref_total,
            )
        if self.p_boot_median is not None:
            rec["p_boot_median"] = self.p_boot_median
        return rec


def exceedance_pvalue(calib_scores, observed_score) -> float:
    """Fraction of calibration scores strictly above the observed score."""
    calib_scores = np.asarray(calib_scores, dtype=np.float64)
    count = int((calib_scores > observed_score).sum())
    return count / calib_scores.size


def prior_pvalue(y_obs, ref: ReferenceTable, calib: ReferenceTable,
                 spec: ScoreSpec, standardize=True, workers=1,
                 scenario=None, seed=None) -> GofReport:
    """Prior-predictive GoF p-value of one observation.

    ``ref`` and ``calib`` must be disjoint draws from the same model; the
    p-value counts calibration points whose score against ``ref`` strictly
    exceeds the observation's score.
    """
    scorer = ReferenceScorer(ref, spec.k_max, standardize=standardize,
                             workers=workers)
    y = np.asarray(y_obs, dtype=np.float64).ravel()
    t_obs = float(scorer.scores(y[None, :], spec)[0])
    t_cal = scorer.scores(calib.summaries, spec)
    return GofReport(
        p_hat=exceedance_pvalue(t_cal, t_obs),
        n_calib=len(calib),
        score_spec=spec,
        n_ref=len(ref),
        scenario=scenario,
        seed=seed,
    )


def localized_prior_pvalue(y_obs, ref: ReferenceTable, resim, n_post: int,
                           spec: ScoreSpec, seed, standardize=True,
                           workers=1, scenario=None) -> GofReport:
    """Localized variant of the prior test.

    The reference rows nearest to the observation are re-simulated from their
    stored parameters, the resulting table is split in half, and the p-value
    counts re-simulated calibration scores exceeding the observation's score
    against the re-simulated reference half. Same null hypothesis as
    ``prior_pvalue``, at roughly the computational cost of the holdout test.
    """
    loc = localize(ref, y_obs, n_post, workers=workers)
    resim_seed, split_seed = child_seeds(seed, 2)
    resim_table = resimulate(
        loc.table.params, resim, resim_seed,
        param_names=loc.table.param_names, stat_names=loc.table.stat_names,
    )
    n_calib = n_post // 2
    ref_half, calib_half = split_calibration(
        resim_table, SplitSpec(n_calib=n_calib, seed=split_seed)
    )
    report = prior_pvalue(y_obs, ref_half, calib_half, spec,
                          standardize=standardize, workers=workers,
                          scenario=scenario)
    return GofReport(
        p_hat=report.p_hat,
        n_calib=report.n_calib,
        score_spec=spec,
        n_ref=report.n_ref,
        scenario=scenario,
        seed=_seed_entropy(seed),
        method="localized-prior",
        n_post=n_post,
        epsilon_implied=loc.epsilon,
        n_ref_total=len(ref),
        warnings=(("odd n_post; calibration half rounded down",)
                  if n_post % 2 else ()),
    )


def _seed_entropy(seed):
    if isinstance(seed, np.random.SeedSequence):
        return None
    return seed


def asymptotic_ci(p_hat: float, n_calib: int, level: float = 0.95):
    """Normal-approximation interval from the binomial variance.

    Degenerate (zero width) at p_hat in {0, 1}, where the plug-in variance
    vanishes; callers should prefer the bootstrap there.
    """
    if not 0 < level < 1:
        raise SpecError(f"confidence level must lie in (0, 1), got {level}")
    if not 0 <= p_hat <= 1:
        raise SpecError(f"p_hat must lie in [0, 1], got {p_hat}")
    if n_calib < 1:
        raise SpecError("n_calib must be a positive integer")
    se = math.sqrt(p_hat * (1.0 - p_hat) / n_calib)
    z = norm.ppf(0.5 * (1.0 + level))
    return (max(0.0, p_hat - z * se), min(1.0, p_hat + z * se))


@dataclass(frozen=True)
class BootstrapResult:
    median: float
    hdi_low: float
    hdi_high: float
    samples: np.ndarray


def bootstrap_pvalues(y_obs, pool: ReferenceTable, n_calib: int,
                      spec: ScoreSpec, n_boot: int, seed, level: float = 0.95,
                      standardize=True, workers=1) -> BootstrapResult:
    """Bootstrap the p-value over reference/calibration re-splits of a pool.

    Each replicate re-splits the pool uniformly without replacement using its
    own child stream, recomputes all scores against the new reference half,
    and re-counts. Returns the median, the HDI at ``level``, and all samples.
    """
    if n_boot < 1:
        raise SpecError("n_boot must be a positive integer")
    y = np.asarray(y_obs, dtype=np.float64).ravel()
    seeds = child_seeds(seed, n_boot)
    samples = np.empty(n_boot)
    for b, s in enumerate(seeds):
        ref, calib = split_calibration(pool, SplitSpec(n_calib=n_calib, seed=s))
        scorer = ReferenceScorer(ref, spec.k_max, standardize=standardize,
                                 workers=workers)
        t_obs = float(scorer.scores(y[None, :], spec)[0])
        t_cal = scorer.scores(calib.summaries, spec)
        samples[b] = exceedance_pvalue(t_cal, t_obs)
    low, high = hdi(samples, level)
    return BootstrapResult(
        median=float(np.median(samples)),
        hdi_low=low,
        hdi_high=high,
        samples=samples,
    )


def hdi(samples, level: float = 0.95):
    """Shortest contiguous window of the sorted samples holding ceil(level*n)
    points; ties go to the leftmost window."""
    s = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = s.size
    if n == 0:
        raise SpecError("hdi requires a nonempty sample")
    if not 0 < level <= 1:
        raise SpecError(f"level must lie in (0, 1], got {level}")
    need = int(np.ceil(level * n - 1e-9))
    need = min(max(need, 1), n)
    widths = s[need - 1:] - s[: n - need + 1]
    i = int(np.argmin(widths))
    return float(s[i]), float(s[i + need - 1])


def bh_adjust(pvalues) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, in input order."""
    p = np.asarray(pvalues, dtype=np.float64).ravel()
    if p.size == 0:
        raise SpecError("bh_adjust requires at least one p-value")
    if not np.isfinite(p).all() or (p < 0).any() or (p > 1).any():
        raise SpecError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    adjusted = np.minimum.accumulate(scaled[::-1])[::-1]
    adjusted = np.minimum(adjusted, 1.0)
    out = np.empty(m)
    out[order] = adjusted
    return out
