import numpy as np
import pytest

from simgof.data import ReferenceTable, SplitSpec, child_seeds, split_calibration
from simgof.errors import SimulationError, SpecError
from simgof.holdout import HoldoutInput, holdout_pvalue
from simgof.posterior import PosteriorSpec, localize, resimulate
from simgof.prior_gof import exceedance_pvalue
from simgof.scores import ReferenceScorer, ScoreSpec


def table_from(summaries, params=None):
    summaries = np.asarray(summaries, dtype=float)
    if summaries.ndim == 1:
        summaries = summaries[:, None]
    if params is None:
        params = summaries.copy()
    return ReferenceTable(
        params=params,
        summaries=summaries,
        param_names=tuple(f"p{i}" for i in range(np.asarray(params).shape[1])),
        stat_names=tuple(f"s{i}" for i in range(summaries.shape[1])),
    )


def identity_resim(theta, rng):
    return theta


def jitter_resim(theta, rng):
    return theta + 0.05 * rng.normal(size=theta.shape)


def make_input(ref, y_obs, y_new, n_post, seed=0, method="rejection",
               score=None, resim=identity_resim):
    return HoldoutInput(
        y_obs=np.asarray(y_obs, float),
        y_new=np.asarray(y_new, float),
        ref=ref,
        posterior_spec=PosteriorSpec(n_post=n_post, method=method),
        score_spec=score or ScoreSpec.knn(1),
        seed=seed,
        resim=resim,
    )


def test_counting_matches_manual_pipeline():
    # replicate the pipeline by hand with the same child seeds and check the
    # final exceedance count
    rng = np.random.default_rng(0)
    ref = table_from(rng.normal(size=(40, 2)))
    y_obs = rng.normal(size=2)
    y_new = rng.normal(size=2)
    seed = 77
    inp = make_input(ref, y_obs, y_new, n_post=20, seed=seed)
    report = holdout_pvalue(inp)

    loc = localize(ref, y_obs, 20)
    resim_seed, split_seed, _ = child_seeds(seed, 3)
    resim_table = resimulate(loc.table.params, identity_resim, resim_seed,
                             param_names=ref.param_names,
                             stat_names=ref.stat_names)
    ref_half, calib_half = split_calibration(
        resim_table, SplitSpec(n_calib=10, seed=split_seed))
    scorer = ReferenceScorer(ref_half, 1)
    t_new = float(scorer.scores(np.asarray(y_new)[None, :], ScoreSpec.knn(1))[0])
    t_cal = scorer.scores(calib_half.summaries, ScoreSpec.knn(1))
    assert report.p_hat == exceedance_pvalue(t_cal, t_new)
    assert report.n_calib == 10
    assert report.n_ref == 10
    assert report.epsilon_implied == loc.epsilon
    assert report.method == "rejection"
    assert report.n_ref_total == 40


def test_direct_count_on_known_scores():
    assert exceedance_pvalue([1.0, 2.0, 3.0, 4.0], 3.5) == 0.25


def test_held_out_point_inside_dense_cluster_has_high_pvalue():
    # y_new sits exactly on a dense clump of the re-simulated table: its
    # nearest-neighbor score is 0 while almost every calibration point is out
    # in the sparse spread with a strictly positive score
    rng = np.random.default_rng(1)
    clump = np.zeros((100, 2))
    spread = rng.normal(scale=3.0, size=(900, 2))
    ref = table_from(np.vstack([clump, spread]))
    y_obs = np.zeros(2)
    y_new = np.zeros(2)
    inp = make_input(ref, y_obs, y_new, n_post=1000, resim=identity_resim,
                     score=ScoreSpec.knn(1))
    report = holdout_pvalue(inp)
    assert report.p_hat > 0.8


def test_far_held_out_point_has_low_pvalue():
    rng = np.random.default_rng(2)
    cluster = rng.normal(scale=0.05, size=(200, 2))
    ref = table_from(cluster)
    report = holdout_pvalue(make_input(ref, np.zeros(2), np.array([5.0, 5.0]),
                                       n_post=100, resim=jitter_resim))
    assert report.p_hat == 0.0


def test_determinism_given_seed():
    rng = np.random.default_rng(3)
    ref = table_from(rng.normal(size=(60, 2)))
    inp = make_input(ref, rng.normal(size=2), rng.normal(size=2), n_post=30,
                     seed=11, resim=jitter_resim)
    a = holdout_pvalue(inp)
    b = holdout_pvalue(inp)
    assert a.p_hat == b.p_hat
    assert a.epsilon_implied == b.epsilon_implied


def test_odd_n_post_rounds_down_with_warning():
    rng = np.random.default_rng(4)
    ref = table_from(rng.normal(size=(50, 2)))
    inp = make_input(ref, rng.normal(size=2), rng.normal(size=2), n_post=21)
    report = holdout_pvalue(inp)
    assert report.n_calib == 10
    assert report.n_ref == 11
    assert any("odd n_post" in w for w in report.warnings)


def test_adjustment_warnings_propagate():
    y = np.zeros(2)
    ref = table_from(np.tile(y, (30, 1)), np.random.default_rng(5).normal(size=(30, 2)))
    inp = make_input(ref, y, y, n_post=20, method="loclin", resim=jitter_resim)
    report = holdout_pvalue(inp)
    assert any("fallback" in w for w in report.warnings)
    assert report.method == "loclin"


def test_asymptotic_ci_attached():
    rng = np.random.default_rng(6)
    ref = table_from(rng.normal(size=(80, 2)))
    inp = make_input(ref, rng.normal(size=2), rng.normal(size=2), n_post=40,
                     resim=jitter_resim)
    report = holdout_pvalue(inp, ci="asymptotic")
    assert report.ci is not None
    assert report.ci.method == "asymptotic"
    assert report.ci.low <= report.p_hat <= report.ci.high


def test_bootstrap_ci_attached_and_brackets_median():
    rng = np.random.default_rng(7)
    ref = table_from(rng.normal(size=(80, 2)))
    inp = make_input(ref, rng.normal(size=2), rng.normal(size=2), n_post=40,
                     seed=3, resim=jitter_resim)
    report = holdout_pvalue(inp, ci="bootstrap", n_boot=25)
    assert report.ci.method == "bootstrap-HDI"
    assert report.ci.low <= report.p_boot_median <= report.ci.high


def test_unknown_ci_method_rejected():
    rng = np.random.default_rng(8)
    ref = table_from(rng.normal(size=(40, 2)))
    inp = make_input(ref, rng.normal(size=2), rng.normal(size=2), n_post=10)
    with pytest.raises(SpecError):
        holdout_pvalue(inp, ci="magic")


def test_simulator_failure_propagates():
    def broken(theta, rng):
        raise RuntimeError("no simulator")

    rng = np.random.default_rng(9)
    ref = table_from(rng.normal(size=(40, 2)))
    inp = make_input(ref, rng.normal(size=2), rng.normal(size=2), n_post=10,
                     resim=broken)
    with pytest.raises(SimulationError):
        holdout_pvalue(inp)


def test_report_record_has_holdout_fields():
    rng = np.random.default_rng(10)
    ref = table_from(rng.normal(size=(40, 2)))
    inp = make_input(ref, rng.normal(size=2), rng.normal(size=2), n_post=10)
    rec = holdout_pvalue(inp).to_record()
    for key in ("method", "n_post", "epsilon_implied", "n_ref_total",
                "p_hat", "n_calib", "score_spec", "seed"):
        assert key in rec
