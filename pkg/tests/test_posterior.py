import itertools

import numpy as np
import pytest

from simgof.data import ReferenceTable
from simgof.errors import (
    SchemaError,
    SimulationError,
    SizeError,
    SpecError,
    TransformError,
)
from simgof.posterior import (
    DEFAULT_LAMBDA_GRID,
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

from .oracles import gaussian_posterior_mean, oracle_ols_adjust


def table_from(summaries, params=None):
    summaries = np.asarray(summaries, dtype=float)
    if summaries.ndim == 1:
        summaries = summaries[:, None]
    if params is None:
        params = np.zeros((len(summaries), 1))
    params = np.asarray(params, dtype=float)
    if params.ndim == 1:
        params = params[:, None]
    return ReferenceTable(
        params=params,
        summaries=summaries,
        param_names=tuple(f"p{i}" for i in range(params.shape[1])),
        stat_names=tuple(f"s{i}" for i in range(summaries.shape[1])),
    )


# -- localization -------------------------------------------------------------


def test_localize_full_table_identity():
    rng = np.random.default_rng(0)
    ref = table_from(rng.normal(size=(20, 2)))
    loc = localize(ref, rng.normal(size=2), n_post=20)
    np.testing.assert_array_equal(loc.table.summaries, ref.summaries)
    np.testing.assert_array_equal(loc.table.row_ids, np.arange(20))


def test_localize_keeps_nearest_rows():
    ref = table_from([0.0, 1.0, 2.0, 9.0])
    loc = localize(ref, [0.0], n_post=2)
    np.testing.assert_array_equal(loc.table.row_ids, [0, 1])
    assert loc.epsilon == 1.0


def test_localize_excluded_rows_are_farther():
    rng = np.random.default_rng(1)
    ref = table_from(rng.normal(size=(300, 3)))
    y = rng.normal(size=3)
    loc = localize(ref, y, n_post=40)
    d_all = np.sqrt(((ref.summaries - y) ** 2).sum(axis=1))
    inside = set(loc.table.row_ids.tolist())
    d_in = max(d_all[i] for i in inside)
    d_out = min(d_all[i] for i in range(300) if i not in inside)
    assert d_in <= d_out
    assert loc.epsilon == pytest.approx(d_in)
    assert len(loc.table) == 40


def test_localize_epsilon_quantile_budget():
    rng = np.random.default_rng(2)
    ref = table_from(rng.normal(size=(5000, 2)))
    y = np.zeros(2)
    loc = localize(ref, y, n_post=100)  # 2% of the table
    d_all = np.sort(np.sqrt(((ref.summaries - y) ** 2).sum(axis=1)))
    assert loc.epsilon == pytest.approx(d_all[99])


def test_localize_size_error():
    ref = table_from(np.zeros((5, 1)))
    with pytest.raises(SizeError):
        localize(ref, [0.0], n_post=6)


# -- transforms ----------------------------------------------------------------


def spec_free():
    return TransformSpec(lower=(-5.0, 1.0), upper=(5.0, 4.0),
                         integer=(False, False))


def spec_ordered():
    return TransformSpec(
        lower=(100.0, 101.0, 102.0),
        upper=(998.0, 999.0, 1000.0),
        integer=(True, True, True),
        ordered_groups=((0, 1, 2),),
    )


def test_forward_midpoint_maps_to_zero():
    spec = spec_free()
    mid = np.array([0.0, 2.5])
    np.testing.assert_allclose(transform_forward(mid, spec), [0.0, 0.0],
                               atol=1e-12)


def test_inverse_zero_gives_midpoint():
    spec = spec_free()
    np.testing.assert_allclose(transform_inverse(np.zeros(2), spec),
                               [0.0, 2.5], atol=1e-12)


def test_tight_ordering_hits_difference_floor():
    spec = spec_ordered()
    theta = np.array([100.0, 101.0, 103.0])
    v = transform_forward(theta, spec)
    # u for the middle parameter is floored at 0.25 of its span start
    from scipy.special import expit
    u3 = expit(v[1]) * (999.0 - 1.0 - 100.0 + 0.49)
    assert u3 == pytest.approx(0.25, abs=1e-9)
    back = transform_inverse(v, spec)
    np.testing.assert_array_equal(back, theta)


def test_round_trip_exhaustive_integer_grid():
    spec = TransformSpec(
        lower=(100.0, 101.0, 102.0),
        upper=(110.0, 111.0, 112.0),
        integer=(True, True, True),
        ordered_groups=((0, 1, 2),),
    )
    count = 0
    for t2, t3, t4 in itertools.product(range(100, 111), range(101, 112),
                                        range(102, 113)):
        if not (t2 < t3 < t4):
            continue
        theta = np.array([t2, t3, t4], dtype=float)
        back = transform_inverse(transform_forward(theta, spec), spec)
        np.testing.assert_array_equal(back, theta)
        count += 1
    assert count > 100


def test_forward_of_inverse_identity_on_image():
    spec = spec_ordered()
    rng = np.random.default_rng(3)
    for _ in range(200):
        v = rng.normal(scale=2.0, size=3)
        theta = transform_inverse(v, spec)
        again = transform_inverse(transform_forward(theta, spec), spec)
        np.testing.assert_array_equal(again, theta)


def test_inverse_always_satisfies_constraints():
    spec = spec_ordered()
    rng = np.random.default_rng(4)
    v = rng.normal(scale=5.0, size=(500, 3))
    theta = transform_inverse(v, spec)
    assert (theta[:, 0] >= 100).all() and (theta[:, 0] <= 998).all()
    assert (theta[:, 1] >= 101).all() and (theta[:, 1] <= 999).all()
    assert (theta[:, 2] >= 102).all() and (theta[:, 2] <= 1000).all()
    assert (theta[:, 0] < theta[:, 1]).all()
    assert (theta[:, 1] < theta[:, 2]).all()
    assert (theta == np.round(theta)).all()


def test_continuous_inverse_respects_bounds():
    spec = spec_free()
    rng = np.random.default_rng(5)
    theta = transform_inverse(rng.normal(scale=30.0, size=(500, 2)), spec)
    assert (theta[:, 0] >= -5).all() and (theta[:, 0] <= 5).all()
    assert (theta[:, 1] >= 1).all() and (theta[:, 1] <= 4).all()


def test_continuous_round_trip_at_bounds():
    spec = spec_free()
    for theta in ([-5.0, 1.0], [5.0, 4.0], [0.25, 3.7]):
        back = transform_inverse(transform_forward(np.array(theta), spec), spec)
        np.testing.assert_allclose(back, theta, atol=1e-9)


def test_forward_out_of_bounds_names_parameter():
    spec = spec_free()
    with pytest.raises(TransformError) as err:
        transform_forward(np.array([0.0, 9.0]), spec)
    assert "parameter 1" in str(err.value)


def test_forward_rejects_order_violations():
    spec = spec_ordered()
    with pytest.raises(TransformError):
        transform_forward(np.array([105.0, 103.0, 110.0]), spec)


def test_spec_rejects_inconsistent_group_bounds():
    with pytest.raises(SpecError):
        TransformSpec(lower=(100.0, 103.0), upper=(998.0, 1000.0),
                      integer=(True, True), ordered_groups=((0, 1),))


# -- regression adjustments ------------------------------------------------------


def test_loclin_no_information_returns_particles():
    y = np.array([0.5, 0.5])
    summaries = np.tile(y, (10, 1))
    params = np.random.default_rng(6).normal(size=(10, 2))
    loc = localize(table_from(summaries, params), y, 10)
    adj = loclin_adjust(loc, y)
    np.testing.assert_array_equal(adj.params, params)
    assert any("fallback" in w for w in adj.warnings)


def test_loclin_exact_linear_relation_collapses():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(40, 3))
    B = rng.normal(size=(3, 2))
    a = np.array([1.0, -2.0])
    params = a + X @ B
    y_obs = rng.normal(size=3)
    loc = localize(table_from(X, params), y_obs, 40)
    adj = loclin_adjust(loc, y_obs)
    expected = a + y_obs @ B
    np.testing.assert_allclose(adj.params, np.tile(expected, (40, 1)),
                               atol=1e-8)


def test_loclin_uniform_weights_match_normal_equations():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(50, 3))
    params = rng.normal(size=(50, 2))
    y_obs = rng.normal(size=3)
    loc = localize(table_from(X, params), y_obs, 50)
    adj = loclin_adjust(loc, y_obs, weights=np.ones(50))
    expected = oracle_ols_adjust(loc.table.summaries, loc.table.params, y_obs)
    np.testing.assert_allclose(adj.params, expected, rtol=1e-8)


def test_loclin_moves_mean_toward_analytic_posterior():
    # coarse localization leaves the rejection mean visibly biased toward the
    # prior; the regression adjustment should recover most of the gap
    rng = np.random.default_rng(9)
    n = 3000
    prior_var, noise_var = 1.0, 0.25
    theta = rng.normal(0, np.sqrt(prior_var), size=n)
    y = theta + rng.normal(0, np.sqrt(noise_var), size=n)
    ref = table_from(y, theta)
    y_obs = 1.5
    target = gaussian_posterior_mean(y_obs, prior_var, noise_var)
    loc = localize(ref, [y_obs], n_post=1500)
    rejection_err = abs(loc.table.params.mean() - target)
    adj = loclin_adjust(loc, [y_obs])
    adjusted_err = abs(adj.params.mean() - target)
    assert rejection_err > 0.1
    assert adjusted_err < rejection_err / 3


def test_loclin_underdetermined_falls_back():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(4, 10))  # fewer rows than summary dims
    params = rng.normal(size=(4, 1))
    y_obs = rng.normal(size=10)
    loc = localize(table_from(X, params), y_obs, 4)
    adj = loclin_adjust(loc, y_obs)
    np.testing.assert_array_equal(adj.params, loc.table.params)
    assert any("rank" in w for w in adj.warnings)


def test_ridge_small_lambda_approaches_loclin():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(60, 3))
    params = rng.normal(size=(60, 2))
    y_obs = rng.normal(size=3)
    loc = localize(table_from(X, params), y_obs, 60)
    ll = loclin_adjust(loc, y_obs)
    rd = ridge_adjust(loc, y_obs, lambda_grid=(1e-10,))
    np.testing.assert_allclose(rd.params, ll.params, atol=1e-6)


def test_ridge_equal_lambdas_collapse_to_single():
    rng = np.random.default_rng(12)
    X = rng.normal(size=(30, 2))
    params = rng.normal(size=(30, 1))
    y_obs = rng.normal(size=2)
    loc = localize(table_from(X, params), y_obs, 30)
    one = ridge_adjust(loc, y_obs, lambda_grid=(1e-3,))
    three = ridge_adjust(loc, y_obs, lambda_grid=(1e-3, 1e-3, 1e-3))
    np.testing.assert_array_equal(one.params, three.params)


def test_ridge_default_grid():
    assert PosteriorSpec(n_post=10, method="ridge").lambda_grid == (1e-4, 1e-3, 1e-2)
    assert DEFAULT_LAMBDA_GRID == (1e-4, 1e-3, 1e-2)


def test_adjusted_parameters_satisfy_constraints():
    spec = TransformSpec(
        lower=(-5.0, 1.0, 100.0, 101.0, 102.0),
        upper=(5.0, 4.0, 200.0, 201.0, 202.0),
        integer=(False, False, True, True, True),
        ordered_groups=((2, 3, 4),),
    )
    rng = np.random.default_rng(13)
    for trial in range(60):
        n = int(rng.integers(12, 30))
        mu = rng.uniform(-5, 5, n)
        sig = rng.uniform(1, 4, n)
        t2 = rng.integers(100, 180, n)
        t3 = t2 + 1 + rng.integers(0, 10, n)
        t4 = t3 + 1 + rng.integers(0, 10, n)
        params = np.column_stack([mu, sig, t2, t3, t4]).astype(float)
        summaries = rng.normal(size=(n, 3))
        y_obs = rng.normal(size=3)
        loc = localize(table_from(summaries, params), y_obs, n)
        for adj in (
            loclin_adjust(loc, y_obs, transform=spec),
            ridge_adjust(loc, y_obs, transform=spec),
        ):
            p = adj.params
            assert (p[:, 0] >= -5).all() and (p[:, 0] <= 5).all()
            assert (p[:, 1] >= 1).all() and (p[:, 1] <= 4).all()
            assert (p[:, 2] < p[:, 3]).all() and (p[:, 3] < p[:, 4]).all()
            assert (p[:, 2] >= 100).all() and (p[:, 4] <= 202).all()
            assert (p[:, 2:] == np.round(p[:, 2:])).all()


def test_raw_space_adjustment_warns_without_transform():
    rng = np.random.default_rng(14)
    loc = localize(table_from(rng.normal(size=(20, 2)),
                              rng.normal(size=(20, 1))),
                   rng.normal(size=2), 20)
    adj = loclin_adjust(loc, np.zeros(2))
    assert any("raw parameter space" in w for w in adj.warnings)


# -- resimulation ------------------------------------------------------------------


def test_resimulate_identity_simulator():
    params = np.arange(12.0).reshape(4, 3)
    table = resimulate(params, lambda th, rng: th, seed=0)
    np.testing.assert_array_equal(table.summaries, params)
    np.testing.assert_array_equal(table.params, params)


def test_resimulate_deterministic_and_order_independent():
    def sim(theta, rng):
        return theta + rng.normal(size=theta.shape)

    params = np.random.default_rng(15).normal(size=(10, 2))
    a = resimulate(params, sim, seed=42)
    b = resimulate(params, sim, seed=42)
    np.testing.assert_array_equal(a.summaries, b.summaries)
    # each particle owns its stream: a permuted input permutes the output
    perm = np.array([3, 1, 2, 0, 4, 5, 6, 7, 8, 9])
    np.testing.assert_array_equal(
        resimulate(params[perm][: 4], sim, seed=42).summaries[0],
        a.summaries[perm[0]] * 0 + resimulate(params[[3]], sim, seed=42).summaries[0],
    )


def test_resimulate_failure_names_particle():
    def sim(theta, rng):
        if theta[0] > 2.5:
            raise RuntimeError("boom")
        return theta

    params = np.arange(8.0).reshape(4, 2)
    with pytest.raises(SimulationError) as err:
        resimulate(params, sim, seed=0)
    assert err.value.particle == 2


def test_resimulate_rejects_wrong_dimension():
    def sim(theta, rng):
        return np.zeros(3 if theta[0] < 1 else 2)

    with pytest.raises(SimulationError) as err:
        resimulate(np.array([[0.0], [5.0]]), sim, seed=0)
    assert err.value.particle == 1


# -- parameter-export round-trip ------------------------------------------------------


def test_export_import_round_trip(tmp_path):
    rng = np.random.default_rng(16)
    params = rng.normal(size=(6, 2))
    ids = np.array([4, 8, 15, 16, 23, 42])
    pfile = tmp_path / "params.csv"
    export_params(pfile, params, ("a", "b"), ids=ids)
    text = pfile.read_text().splitlines()
    assert text[0] == "id,param:a,param:b"
    # externally produced summaries, row-aligned by id
    sfile = tmp_path / "summ.csv"
    with open(sfile, "w") as fh:
        fh.write("id,stat:x,stat:y\n")
        for i, pid in enumerate(ids):
            fh.write(f"{pid},{i * 1.0},{i * 2.0}\n")
    summ = import_summaries(sfile, expected_ids=ids)
    np.testing.assert_array_equal(summ[:, 1], np.arange(6) * 2.0)


def test_import_id_mismatch_is_fatal(tmp_path):
    sfile = tmp_path / "summ.csv"
    sfile.write_text("id,stat:x\n1,0.5\n3,0.6\n")
    with pytest.raises(SchemaError):
        import_summaries(sfile, expected_ids=np.array([1, 2]))
    with pytest.raises(SchemaError):
        import_summaries(sfile, expected_ids=np.array([3, 1]))  # order matters
