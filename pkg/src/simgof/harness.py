"""Toy simulators and the reproducible power/calibration harness.

The built-in toy setting draws raw samples from a location-scale Laplace or
Gaussian model with uniform priors on the mean and standard deviation, then
summarizes each sample by its first m sample L-moments (the first two
L-moments followed by the L-moment ratios l_r / l_2 for r >= 3). The Laplace
scale is sigma/sqrt(2), so both families share mean and variance and differ
only in tail shape, which makes rejecting one with data from the other a
genuinely hard test case.

Power and calibration experiments drive the prior and holdout tests over
grids of simulation budgets and score configurations, with every stochastic
step tied to child streams of one master seed. Results come back as tidy
rows, one per (setting, budget, score, method), ready to be written as CSV.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import lru_cache
from math import comb
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import kstest

from .data import ReferenceTable, SplitSpec, child_seeds, rng_from, split_calibration
from .errors import SizeError, SpecError
from .holdout import HoldoutInput, holdout_pvalue
from .posterior import PosteriorSpec, TransformSpec
from .prior_gof import exceedance_pvalue
from .scores import ReferenceScorer, ScoreSpec

LAPLACE = "laplace"
GAUSSIAN = "gaussian"


# ---------------------------------------------------------------------------
# sample L-moments


@lru_cache(maxsize=32)
def _lmoment_weight_matrix(n: int, m: int) -> np.ndarray:
    """Order-statistic weights W such that W @ sorted(z) gives l_1..l_m.

    Built from the unbiased probability-weighted-moment estimators
    b_k = n^-1 sum_i C(i-1,k)/C(n-1,k) z_(i) combined through the shifted
    Legendre coefficients; exact in float64 for the m <= 20 used here.
    """
    i = np.arange(1, n + 1, dtype=np.float64)
    ratios = np.empty((m, n))
    ratios[0] = 1.0
    for k in range(1, m):
        ratios[k] = ratios[k - 1] * (i - k) / (n - k)
    B = ratios / n
    P = np.zeros((m, m))
    for r in range(m):
        for k in range(r + 1):
            P[r, k] = (-1) ** (r - k) * comb(r, k) * comb(r + k, k)
    W = P @ B
    W.flags.writeable = False
    return W


def _lmoments_sorted(Z: np.ndarray, m: int) -> np.ndarray:
    """Raw l_1..l_m for presorted sample rows."""
    W = _lmoment_weight_matrix(Z.shape[1], m)
    return Z @ W.T


def _ratio_form(lmom: np.ndarray) -> np.ndarray:
    """(l1, l2, t3..tm) with t_r = l_r / l_2."""
    if lmom.shape[1] <= 2:
        return lmom
    out = lmom.copy()
    out[:, 2:] = lmom[:, 2:] / lmom[:, 1:2]
    return out


def sample_lmoments(z, m: int) -> np.ndarray:
    """First m sample L-moment summaries of one sample.

    Entries 1 and 2 are the unbiased sample L-moments l_1 and l_2; entries
    r >= 3 are the ratios l_r / l_2. Requires at least m observations and,
    when ratios are requested, a nonconstant sample (l_2 > 0).
    """
    z = np.asarray(z, dtype=np.float64).ravel()
    if m < 1:
        raise SpecError("m must be a positive integer")
    if z.size < m:
        raise SpecError(f"sample of length {z.size} cannot yield {m} L-moments")
    lmom = _lmoments_sorted(np.sort(z)[None, :], m)
    if m >= 3 and lmom[0, 1] == 0.0:
        raise SpecError("constant sample: L-moment ratios are undefined (l2 = 0)")
    return _ratio_form(lmom)[0]


# ---------------------------------------------------------------------------
# toy models


@dataclass(frozen=True)
class ToyModelSpec:
    """Location-scale toy model with L-moment summaries."""

    family: str = LAPLACE
    d: int = 350
    m: int = 20
    mu_range: tuple[float, float] = (-5.0, 5.0)
    sigma_range: tuple[float, float] = (1.0, 4.0)

    def __post_init__(self):
        if self.family not in (LAPLACE, GAUSSIAN):
            raise SpecError(f"unknown toy family {self.family!r}")
        if self.m > self.d:
            raise SpecError("m summaries require a raw sample of at least m draws")
        if self.sigma_range[0] <= 0:
            raise SpecError("sigma bounds must be positive")

    @property
    def param_names(self) -> tuple[str, str]:
        return ("mu", "sigma")

    @property
    def stat_names(self) -> tuple[str, ...]:
        return ("l1", "l2") + tuple(f"t{r}" for r in range(3, self.m + 1))

    def transform_spec(self) -> TransformSpec:
        """Bounds of the prior, for regression adjustment in holdout tests."""
        return TransformSpec(
            lower=(self.mu_range[0], self.sigma_range[0]),
            upper=(self.mu_range[1], self.sigma_range[1]),
            integer=(False, False),
        )


def _draw_raw(model: ToyModelSpec, mu, sigma, rng, size) -> np.ndarray:
    if model.family == GAUSSIAN:
        return rng.normal(loc=mu[:, None], scale=sigma[:, None],
                          size=(size, model.d))
    # Laplace via inverse CDF of uniform draws; scale sigma/sqrt(2) matches
    # the Gaussian variance
    b = (sigma / np.sqrt(2.0))[:, None]
    u = rng.random((size, model.d)) - 0.5
    return mu[:, None] - b * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def _summarize_raw(Z: np.ndarray, m: int) -> np.ndarray:
    Z = np.sort(Z, axis=1)
    lmom = _lmoments_sorted(Z, m)
    if m >= 3 and (lmom[:, 1] == 0.0).any():
        raise SpecError("constant raw sample: L-moment ratios are undefined")
    return _ratio_form(lmom)


def simulate_toy(model: ToyModelSpec, n: int, seed) -> ReferenceTable:
    """n particles from the toy model: prior draws, raw sample, summaries."""
    if n < 1:
        raise SpecError("n must be a positive integer")
    rng = rng_from(seed)
    mu = rng.uniform(*model.mu_range, size=n)
    sigma = rng.uniform(*model.sigma_range, size=n)
    Z = _draw_raw(model, mu, sigma, rng, n)
    summaries = _summarize_raw(Z, model.m)
    return ReferenceTable(
        params=np.column_stack([mu, sigma]),
        summaries=summaries,
        param_names=model.param_names,
        stat_names=model.stat_names,
    )


def toy_pod_pairs(model: ToyModelSpec, n: int, seed):
    """n pseudo-observed datasets plus same-parameter replicates.

    Returns (thetas, y_obs, y_new); each replicate row uses the same
    parameter vector as its observation row but fresh raw draws.
    """
    rng = rng_from(seed)
    mu = rng.uniform(*model.mu_range, size=n)
    sigma = rng.uniform(*model.sigma_range, size=n)
    y_obs = _summarize_raw(_draw_raw(model, mu, sigma, rng, n), model.m)
    y_new = _summarize_raw(_draw_raw(model, mu, sigma, rng, n), model.m)
    return np.column_stack([mu, sigma]), y_obs, y_new


@dataclass(frozen=True)
class ToyResimulator:
    """Regenerates toy summaries from a (mu, sigma) parameter vector."""

    model: ToyModelSpec

    def __call__(self, theta, rng) -> np.ndarray:
        mu, sigma = float(theta[0]), float(theta[1])
        Z = _draw_raw(self.model, np.array([mu]), np.array([sigma]), rng, 1)
        return _summarize_raw(Z, self.model.m)[0]


def toy_model(family: str, d: int = 350, m: int = 20) -> ToyModelSpec:
    return ToyModelSpec(family=family, d=d, m=m)


# ---------------------------------------------------------------------------
# experiment configuration and table sources


@dataclass(frozen=True)
class ExperimentSpec:
    """Budgets, test size, level, score configurations, and the master seed."""

    budgets: tuple[int, ...]
    n_test: int = 1000
    alpha: float = 0.05
    score_specs: tuple[ScoreSpec, ...] = (ScoreSpec.maxlof(), ScoreSpec.knn(1))
    seed: int = 0

    def __post_init__(self):
        if not self.budgets:
            raise SpecError("at least one budget is required")
        if any(b < 2 for b in self.budgets):
            raise SpecError("budgets must be at least 2")
        if not 0 < self.alpha < 1:
            raise SpecError("alpha must lie in (0, 1)")
        if self.n_test < 1:
            raise SpecError("n_test must be a positive integer")
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        object.__setattr__(self, "score_specs", tuple(self.score_specs))


class TableSource:
    """Uniform draw interface over a toy model or a precomputed table."""

    def __init__(self, source):
        if isinstance(source, (ToyModelSpec, ReferenceTable)):
            self._source = source
        else:
            raise SpecError("source must be a ToyModelSpec or a ReferenceTable")

    @property
    def is_model(self) -> bool:
        return isinstance(self._source, ToyModelSpec)

    def draw(self, n: int, seed) -> ReferenceTable:
        if self.is_model:
            return simulate_toy(self._source, n, seed)
        pool = self._source
        if n > len(pool):
            raise SizeError(
                f"requested {n} rows from an ingested table of {len(pool)}"
            )
        if n == len(pool):
            return pool
        idx = np.sort(rng_from(seed).choice(len(pool), size=n, replace=False))
        return pool.subset(idx)


def alpha_count_threshold(alpha: float, n: int) -> int:
    """Largest strict-exceedance count still giving a p-value <= alpha."""
    return int(np.floor(alpha * n + 1e-9))


def score_quantile_threshold(calib_scores, alpha: float) -> float:
    """(1 - alpha) calibration-score quantile as an order statistic.

    Uses the ceil((1-alpha) n)-th ascending order statistic, which makes
    "score >= threshold" exactly equivalent to "strict-count p-value <=
    alpha" on the p-value lattice.
    """
    s = np.sort(np.asarray(calib_scores, dtype=np.float64))
    n = s.size
    idx = n - alpha_count_threshold(alpha, n)
    if idx < 1:
        raise SpecError("alpha too large: every score would pass the threshold")
    return float(s[idx - 1])


def exceedance_counts(calib_scores, test_scores) -> np.ndarray:
    """Per test score, how many calibration scores strictly exceed it."""
    s = np.sort(np.asarray(calib_scores, dtype=np.float64))
    t = np.asarray(test_scores, dtype=np.float64)
    return s.size - np.searchsorted(s, t, side="right")


def pvalues_against(calib_scores, test_scores) -> np.ndarray:
    """Strict-exceedance p-values of many test scores at once."""
    n = np.asarray(calib_scores).size
    return exceedance_counts(calib_scores, test_scores) / n


# ---------------------------------------------------------------------------
# power and calibration for the prior test


@dataclass(frozen=True)
class PowerRow:
    setting: str
    test: str
    budget: int
    score: str
    method: str
    power: float
    power_pvalue_form: float
    n_test: int
    alpha: float
    n_ref: int
    n_calib: int
    seed: int

    def to_record(self) -> dict:
        return {
            "setting": self.setting,
            "test": self.test,
            "budget": self.budget,
            "score": self.score,
            "method": self.method,
            "power": self.power,
            "power_pvalue_form": self.power_pvalue_form,
            "n_test": self.n_test,
            "alpha": self.alpha,
            "n_ref": self.n_ref,
            "n_calib": self.n_calib,
            "seed": self.seed,
        }


def _setting_label(null_source, alt_source):
    def one(src):
        if isinstance(src, ToyModelSpec):
            return src.family
        return "table"

    return f"{one(null_source)}-vs-{one(alt_source)}"


def estimate_power_prior(null_model, alt_model, exp: ExperimentSpec,
                         standardize=True, workers=1) -> list[PowerRow]:
    """Prior-test power per (budget, score spec).

    Each budget is split evenly into reference and calibration halves. Power
    uses the calibration-score quantile formulation; the per-POD p-value
    formulation is reported alongside (the two agree exactly on fixed data).
    """
    null_src = TableSource(null_model)
    alt_src = TableSource(alt_model)
    setting = _setting_label(null_model, alt_model)
    rows = []
    budget_seeds = child_seeds(exp.seed, len(exp.budgets))
    for budget, bseed in zip(exp.budgets, budget_seeds):
        if budget % 2:
            raise SpecError(f"budget {budget} cannot split into equal halves")
        table_seed, split_seed, pod_seed = bseed.spawn(3)
        pool = null_src.draw(budget, table_seed)
        ref, calib = split_calibration(
            pool, SplitSpec(n_calib=budget // 2, seed=split_seed)
        )
        pods = alt_src.draw(exp.n_test, pod_seed).summaries
        k_max = max(s.k_max for s in exp.score_specs)
        scorer = ReferenceScorer(ref, k_max, standardize=standardize,
                                 workers=workers)
        for spec in exp.score_specs:
            t_cal = scorer.scores(calib.summaries, spec)
            t_pod = scorer.scores(pods, spec)
            threshold = score_quantile_threshold(t_cal, exp.alpha)
            power_q = float((t_pod >= threshold).mean())
            counts = exceedance_counts(t_cal, t_pod)
            max_count = alpha_count_threshold(exp.alpha, t_cal.size)
            power_p = float((counts <= max_count).mean())
            rows.append(PowerRow(
                setting=setting, test="prior", budget=budget,
                score=spec.label, method="none",
                power=power_q, power_pvalue_form=power_p,
                n_test=exp.n_test, alpha=exp.alpha,
                n_ref=len(ref), n_calib=len(calib), seed=exp.seed,
            ))
    return rows


# ---------------------------------------------------------------------------
# power and calibration for the holdout test


def _holdout_pvalue_task(ref, y_obs, y_new, posterior_spec, score_spec, seed,
                         resim, standardize):
    inp = HoldoutInput(y_obs=y_obs, y_new=y_new, ref=ref,
                       posterior_spec=posterior_spec, score_spec=score_spec,
                       seed=seed, resim=resim)
    return holdout_pvalue(inp, standardize=standardize).p_hat


def _holdout_pvalues(ref, pods_obs, pods_new, posterior_spec, score_spec,
                     seeds, resim, standardize, workers) -> np.ndarray:
    tasks = (
        delayed(_holdout_pvalue_task)(
            ref, pods_obs[i], pods_new[i], posterior_spec, score_spec,
            seeds[i], resim, standardize
        )
        for i in range(len(pods_obs))
    )
    out = Parallel(n_jobs=workers)(tasks)
    return np.asarray(out, dtype=np.float64)


def _pod_pairs_from(source, n, seed):
    if isinstance(source, ToyModelSpec):
        return toy_pod_pairs(source, n, seed)
    if isinstance(source, tuple):
        obs_table, new_table = source
        if len(obs_table) != len(new_table):
            raise SpecError("POD and replicate tables must be row-aligned")
        if n > len(obs_table):
            raise SizeError(
                f"requested {n} PODs from tables of {len(obs_table)} rows"
            )
        idx = np.sort(rng_from(seed).choice(len(obs_table), size=n,
                                            replace=False))
        return (obs_table.params[idx], obs_table.summaries[idx],
                new_table.summaries[idx])
    raise SpecError("alternative source must be a ToyModelSpec or a "
                    "(pods, replicates) table pair")


def estimate_power_holdout(null_model, alt_model, posterior_spec: PosteriorSpec,
                           exp: ExperimentSpec, resim=None, standardize=True,
                           workers=1) -> list[PowerRow]:
    """Holdout-test power per (budget, score spec).

    Budgets are reference-table sizes. Each POD comes with a same-parameter
    replicate (``alt_model`` is a toy spec, or a row-aligned pair of POD and
    replicate tables); power is the fraction of PODs whose holdout p-value
    does not exceed alpha.
    """
    null_src = TableSource(null_model)
    if resim is None:
        if not isinstance(null_model, ToyModelSpec):
            raise SpecError("a resimulator is required for ingested null tables")
        resim = ToyResimulator(null_model)
    alt_label = alt_model[0] if isinstance(alt_model, tuple) else alt_model
    setting = _setting_label(null_model, alt_label)
    rows = []
    budget_seeds = child_seeds(exp.seed, len(exp.budgets))
    for budget, bseed in zip(exp.budgets, budget_seeds):
        table_seed, pod_seed, run_seed = bseed.spawn(3)
        ref = null_src.draw(budget, table_seed)
        _, pods_obs, pods_new = _pod_pairs_from(alt_model, exp.n_test, pod_seed)
        pod_seeds = run_seed.spawn(exp.n_test)
        n_calib = posterior_spec.n_post // 2
        max_count = alpha_count_threshold(exp.alpha, n_calib)
        for spec in exp.score_specs:
            pvals = _holdout_pvalues(ref, pods_obs, pods_new, posterior_spec,
                                     spec, pod_seeds, resim, standardize,
                                     workers)
            counts = np.round(pvals * n_calib)
            power = float((counts <= max_count).mean())
            rows.append(PowerRow(
                setting=setting, test="holdout", budget=budget,
                score=spec.label, method=posterior_spec.method,
                power=power, power_pvalue_form=power,
                n_test=exp.n_test, alpha=exp.alpha,
                n_ref=budget, n_calib=n_calib, seed=exp.seed,
            ))
    return rows


# ---------------------------------------------------------------------------
# calibration checks


@dataclass(frozen=True)
class CalibrationRow:
    setting: str
    test: str
    budget: int
    score: str
    method: str
    ks_distance: float
    max_quantile_dev: float
    n_test: int
    lattice_step: float
    seed: int
    pvalues: np.ndarray

    def to_record(self) -> dict:
        return {
            "setting": self.setting,
            "test": self.test,
            "budget": self.budget,
            "score": self.score,
            "method": self.method,
            "ks_distance": self.ks_distance,
            "max_quantile_dev": self.max_quantile_dev,
            "n_test": self.n_test,
            "lattice_step": self.lattice_step,
            "seed": self.seed,
        }


def _uniformity(pvalues: np.ndarray):
    ks = float(kstest(pvalues, "uniform").statistic)
    s = np.sort(pvalues)
    n = s.size
    expected = np.arange(1, n + 1) / (n + 1)
    max_dev = float(np.abs(s - expected).max())
    return ks, max_dev


def calibration_check(model, exp: ExperimentSpec, test: str = "prior",
                      posterior_spec: PosteriorSpec = None, resim=None,
                      pods=None, standardize=True, workers=1) -> list[CalibrationRow]:
    """Null p-value uniformity per (budget, score spec).

    PODs come from the same model as the reference table: simulated on the
    fly for toy models, or passed in via ``pods`` for ingested-table settings
    (a ReferenceTable for the prior test, a row-aligned (pods, replicates)
    pair for the holdout test). Reports the Kolmogorov-Smirnov distance of
    the p-values to Uniform(0, 1) and the largest absolute deviation of their
    order statistics from the uniform quantiles i/(n+1).
    """
    if test not in ("prior", "holdout"):
        raise SpecError(f"unknown test {test!r}")
    src = TableSource(model)
    if not src.is_model and pods is None:
        raise SpecError("ingested-table calibration needs separate POD draws")
    setting = model.family if isinstance(model, ToyModelSpec) else "table"
    rows = []
    budget_seeds = child_seeds(exp.seed, len(exp.budgets))
    for budget, bseed in zip(exp.budgets, budget_seeds):
        if test == "prior":
            if budget % 2:
                raise SpecError(f"budget {budget} cannot split into equal halves")
            table_seed, split_seed, pod_seed = bseed.spawn(3)
            pool = src.draw(budget, table_seed)
            ref, calib = split_calibration(
                pool, SplitSpec(n_calib=budget // 2, seed=split_seed)
            )
            pod_src = src if pods is None else TableSource(pods)
            pod_points = pod_src.draw(exp.n_test, pod_seed).summaries
            k_max = max(s.k_max for s in exp.score_specs)
            scorer = ReferenceScorer(ref, k_max, standardize=standardize,
                                     workers=workers)
            for spec in exp.score_specs:
                pvals = pvalues_against(scorer.scores(calib.summaries, spec),
                                        scorer.scores(pod_points, spec))
                ks, max_dev = _uniformity(pvals)
                rows.append(CalibrationRow(
                    setting=setting, test=test, budget=budget,
                    score=spec.label, method="none",
                    ks_distance=ks, max_quantile_dev=max_dev,
                    n_test=exp.n_test, lattice_step=1.0 / len(calib),
                    seed=exp.seed, pvalues=pvals,
                ))
        else:
            if posterior_spec is None:
                raise SpecError("holdout calibration requires a posterior spec")
            if resim is None:
                if not isinstance(model, ToyModelSpec):
                    raise SpecError("a resimulator is required for ingested tables")
                local_resim = ToyResimulator(model)
            else:
                local_resim = resim
            table_seed, pod_seed, run_seed = bseed.spawn(3)
            ref = src.draw(budget, table_seed)
            pod_source = model if pods is None else pods
            _, pods_obs, pods_new = _pod_pairs_from(pod_source, exp.n_test,
                                                    pod_seed)
            pod_seeds = run_seed.spawn(exp.n_test)
            for spec in exp.score_specs:
                pvals = _holdout_pvalues(ref, pods_obs, pods_new,
                                         posterior_spec, spec, pod_seeds,
                                         local_resim, standardize, workers)
                ks, max_dev = _uniformity(pvals)
                rows.append(CalibrationRow(
                    setting=setting, test=test, budget=budget,
                    score=spec.label, method=posterior_spec.method,
                    ks_distance=ks, max_quantile_dev=max_dev,
                    n_test=exp.n_test,
                    lattice_step=1.0 / (posterior_spec.n_post // 2),
                    seed=exp.seed, pvalues=pvals,
                ))
    return rows


def write_rows_csv(rows, path):
    """Write tidy result rows (anything with to_record) as CSV."""
    records = [r.to_record() for r in rows]
    if not records:
        raise SpecError("no rows to write")
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(records[0].keys()))
        writer.writeheader()
        writer.writerows(records)


# ---------------------------------------------------------------------------
# synthetic high-dimensional table in a foreign (unprefixed) export schema


GENETICS_PARAM_NAMES = ("N1", "N2", "N3", "N4", "t2", "t3", "t4")


def synthetic_genetics_table(n: int, seed, n_stats: int = 130) -> ReferenceTable:
    """Synthetic stand-in for an externally simulated SNP reference table.

    Seven demographic-style parameters drive a low-rank nonlinear map into
    n_stats correlated summary coordinates plus noise. Purely a format and
    plumbing fixture: the values are not genetically meaningful.
    """
    rng = rng_from(seed)
    sizes = rng.uniform(1e3, 1e4, size=(n, 4))
    t4 = rng.uniform(1, 60, size=n)
    t3 = rng.uniform(61, 120, size=n)
    t2 = rng.uniform(121, 180, size=n)
    params = np.column_stack([sizes, t2, t3, t4])
    latent = np.column_stack([
        np.log(sizes),
        t2[:, None] / 180.0,
        t3[:, None] / 120.0,
        t4[:, None] / 60.0,
        (t2 - t3)[:, None] / 100.0,
    ])
    mix = rng_from(child_seeds(seed, 2)[1]).normal(size=(latent.shape[1], n_stats))
    summaries = np.tanh(latent @ mix) + 0.05 * rng.normal(size=(n, n_stats))
    return ReferenceTable(
        params=params,
        summaries=summaries,
        param_names=GENETICS_PARAM_NAMES,
        stat_names=tuple(f"SS{j + 1}" for j in range(n_stats)),
    )


def write_foreign_table(table: ReferenceTable, path, schema_path=None):
    """Write a table with bare headers plus a JSON column-role schema."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(table.param_names) + list(table.stat_names))
        for i in range(len(table)):
            writer.writerow(
                [repr(float(v)) for v in table.params[i]]
                + [repr(float(v)) for v in table.summaries[i]]
            )
    if schema_path is not None:
        schema = {"params": list(table.param_names),
                  "stats": list(table.stat_names)}
        with open(schema_path, "w", encoding="utf-8") as fh:
            json.dump(schema, fh, indent=2, sort_keys=True)
            fh.write("\n")
