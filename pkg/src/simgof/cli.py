"""Command-line front door.

Subcommands::

    prior        p-values of observed summaries against one or more
                 scenario reference tables, with optional CIs and a
                 Benjamini-Hochberg column across scenarios
    prior-local  localized variant of the prior test (built-in resimulators)
    holdout      post-inference holdout test over a (method, n_post) grid,
                 with an export-params / import-summaries two-phase mode for
                 external simulators
    power        power tables for the prior or holdout test on the built-in
                 toy setting or ingested tables
    calibration  null p-value uniformity checks, ECDF sample included
    bh           Benjamini-Hochberg adjustment over existing report files

Configuration: every flag can also be supplied via ``--config file.json``;
explicit flags beat the file, which beats built-in defaults. Each run writes
its fully resolved configuration next to its outputs, so re-running with
``--config <out>/config.json`` reproduces the outputs byte for byte.

Exit codes: 0 success, 1 statistical/simulation failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

from dataclasses import replace

from .data import (
    ReferenceTable,
    SplitSpec,
    child_seeds,
    load_reference_table,
    split_calibration,
)
from .errors import SimulationError, SpecError
from .harness import (
    ExperimentSpec,
    ToyModelSpec,
    ToyResimulator,
    calibration_check,
    estimate_power_holdout,
    estimate_power_prior,
    write_rows_csv,
)
from .holdout import HoldoutInput, holdout_pvalue
from .posterior import (
    PosteriorSpec,
    TransformSpec,
    adjust_particles,
    export_params,
    import_summaries,
    localize,
    resimulate,
)
from .prior_gof import (
    ASYMPTOTIC,
    BOOTSTRAP_HDI,
    ConfidenceInterval,
    GofReport,
    asymptotic_ci,
    bh_adjust,
    bootstrap_pvalues,
    exceedance_pvalue,
    prior_pvalue,
    localized_prior_pvalue,
)
from .scores import ReferenceScorer, ScoreSpec

REPORT_FIELDS = [
    "scenario", "score_spec", "n_ref", "n_calib", "p_hat", "ci_low",
    "ci_high", "ci_method", "ci_level", "seed", "warnings", "method",
    "n_post", "epsilon_implied", "n_ref_total", "p_boot_median", "bh_upper",
]


# ---------------------------------------------------------------------------
# configuration plumbing


COMMON_DEFAULTS = {
    "seed": 0,
    "score": "maxlof",
    "k": 1,
    "k_min": 5,
    "k_max": 20,
    "standardize": True,
    "workers": 0,  # 0: use available parallelism
    "out": ".",
    "schema": None,
    "ci": "none",
    "n_boot": 500,
    "ci_level": 0.95,
}

DEFAULTS = {
    "prior": {**COMMON_DEFAULTS, "ref": [], "obs": None, "n_calib": None,
              "bh": False},
    "prior-local": {**COMMON_DEFAULTS, "ref": None, "obs": None,
                    "n_post": [1000], "resim": "laplace", "resim_d": 350},
    "holdout": {**COMMON_DEFAULTS, "ref": None, "obs": None, "new": None,
                "n_post": [1000], "method": ["rejection"],
                "lam": [1e-4, 1e-3, 1e-2], "transform": None,
                "resim": "laplace", "resim_d": 350,
                "export_params": None, "import_summaries": None},
    "power": {**COMMON_DEFAULTS, "test": "prior", "null": "laplace",
              "alt": "gaussian", "null_table": None, "alt_table": None,
              "replicate_table": None, "budgets": [500, 1000, 2000, 5000],
              "n_test": 1000, "alpha": 0.05, "d": 350, "m": 20,
              "n_post": [1000], "method": ["rejection"],
              "lam": [1e-4, 1e-3, 1e-2], "scores": ["maxlof", "knn"]},
    "calibration": {**COMMON_DEFAULTS, "test": "prior", "model": "laplace",
                    "model_table": None, "pod_table": None,
                    "replicate_table": None, "budgets": [2000],
                    "n_test": 1000, "d": 350, "m": 20, "n_post": [1000],
                    "method": ["rejection"], "lam": [1e-4, 1e-3, 1e-2],
                    "scores": ["maxlof", "knn"]},
    "bh": {"reports": [], "out": ".", "seed": 0},
}


def _add_common(sub):
    sub.add_argument("--config", help="JSON file of flag defaults")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--score", choices=["knn", "lof", "maxlof"])
    sub.add_argument("--k", type=int)
    sub.add_argument("--k-min", dest="k_min", type=int)
    sub.add_argument("--k-max", dest="k_max", type=int)
    sub.add_argument("--standardize", dest="standardize",
                     action="store_true")
    sub.add_argument("--no-standardize", dest="standardize",
                     action="store_false")
    sub.add_argument("--workers", type=int)
    sub.add_argument("--out")
    sub.add_argument("--ci", choices=["none", "asymptotic", "bootstrap"])
    sub.add_argument("--n-boot", dest="n_boot", type=int)
    sub.add_argument("--ci-level", dest="ci_level", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simgof",
        description="Likelihood-free goodness-of-fit tests for "
                    "simulator-based models",
    )
    parser.set_defaults(command=None)
    subs = parser.add_subparsers(dest="command")

    p = subs.add_parser("prior", argument_default=argparse.SUPPRESS,
                        help="prior-predictive GoF test")
    _add_common(p)
    p.add_argument("--ref", action="append",
                   help="scenario reference table (repeatable)")
    p.add_argument("--obs", help="observed-summary file (rows = observations)")
    p.add_argument("--schema", help="JSON column-role schema for foreign files")
    p.add_argument("--n-calib", dest="n_calib", type=int,
                   help="calibration rows split from each table")
    p.add_argument("--bh", action="store_true",
                   help="BH-adjusted upper bounds across scenarios")

    p = subs.add_parser("prior-local", argument_default=argparse.SUPPRESS,
                        help="localized prior GoF test")
    _add_common(p)
    p.add_argument("--ref")
    p.add_argument("--obs")
    p.add_argument("--schema")
    p.add_argument("--n-post", dest="n_post", action="append", type=int)
    p.add_argument("--resim", choices=["laplace", "gaussian", "identity"])
    p.add_argument("--resim-d", dest="resim_d", type=int)

    p = subs.add_parser("holdout", argument_default=argparse.SUPPRESS,
                        help="post-inference holdout GoF test")
    _add_common(p)
    p.add_argument("--ref")
    p.add_argument("--obs", help="y_obs summary file")
    p.add_argument("--new", help="y_new summary file")
    p.add_argument("--schema")
    p.add_argument("--n-post", dest="n_post", action="append", type=int)
    p.add_argument("--method", action="append",
                   choices=["rejection", "loclin", "ridge"])
    p.add_argument("--lambda", dest="lam", action="append", type=float)
    p.add_argument("--transform", help="JSON transform spec file")
    p.add_argument("--resim", choices=["laplace", "gaussian", "identity"])
    p.add_argument("--resim-d", dest="resim_d", type=int)
    p.add_argument("--export-params", dest="export_params",
                   help="phase 1: write retained params here and halt")
    p.add_argument("--import-summaries", dest="import_summaries",
                   help="phase 2: resume from externally simulated summaries")

    p = subs.add_parser("power", argument_default=argparse.SUPPRESS,
                        help="power tables")
    _add_common(p)
    p.add_argument("--test", choices=["prior", "holdout"])
    p.add_argument("--null", choices=["laplace", "gaussian"])
    p.add_argument("--alt", choices=["laplace", "gaussian"])
    p.add_argument("--null-table", dest="null_table")
    p.add_argument("--alt-table", dest="alt_table")
    p.add_argument("--replicate-table", dest="replicate_table")
    p.add_argument("--schema")
    p.add_argument("--budgets", action="append", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--d", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--n-post", dest="n_post", action="append", type=int)
    p.add_argument("--method", action="append",
                   choices=["rejection", "loclin", "ridge"])
    p.add_argument("--lambda", dest="lam", action="append", type=float)
    p.add_argument("--scores", action="append",
                   help="score spec: knn[:k] | lof:k | maxlof[:kmin-kmax]")

    p = subs.add_parser("calibration", argument_default=argparse.SUPPRESS,
                        help="null-uniformity checks")
    _add_common(p)
    p.add_argument("--test", choices=["prior", "holdout"])
    p.add_argument("--model", choices=["laplace", "gaussian"])
    p.add_argument("--model-table", dest="model_table")
    p.add_argument("--pod-table", dest="pod_table")
    p.add_argument("--replicate-table", dest="replicate_table")
    p.add_argument("--schema")
    p.add_argument("--budgets", action="append", type=int)
    p.add_argument("--n-test", dest="n_test", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--n-post", dest="n_post", action="append", type=int)
    p.add_argument("--method", action="append",
                   choices=["rejection", "loclin", "ridge"])
    p.add_argument("--lambda", dest="lam", action="append", type=float)
    p.add_argument("--scores", action="append")

    p = subs.add_parser("bh", argument_default=argparse.SUPPRESS,
                        help="BH adjustment over report files")
    p.add_argument("--config")
    p.add_argument("--reports", action="append",
                   help="reports.json file (repeatable)")
    p.add_argument("--out")

    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    command = args.command
    provided = {k: v for k, v in vars(args).items()
                if k not in ("command",)}
    config = dict(DEFAULTS[command])
    path = provided.pop("config", None)
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            from_file = json.load(fh)
        from_file.pop("command", None)
        unknown = set(from_file) - set(config)
        if unknown:
            raise SpecError(f"unknown config keys {sorted(unknown)}")
        config.update(from_file)
    config.update(provided)
    config["command"] = command
    return config


def _write_config(config: dict, out_dir: Path):
    serializable = dict(config)
    with open(out_dir / "config.json", "w", encoding="utf-8") as fh:
        json.dump(serializable, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _score_spec(config) -> ScoreSpec:
    return _parse_score(config["score"], config)


def _parse_score(name: str, config) -> ScoreSpec:
    name = name.strip()
    if ":" in name:
        head, _, tail = name.partition(":")
        if head == "knn":
            return ScoreSpec.knn(int(tail))
        if head == "lof":
            return ScoreSpec.lof(int(tail))
        if head == "maxlof":
            lo, _, hi = tail.partition("-")
            return ScoreSpec.maxlof(int(lo), int(hi))
        raise SpecError(f"unknown score {name!r}")
    if name == "knn":
        return ScoreSpec.knn(config.get("k", 1))
    if name == "lof":
        return ScoreSpec.lof(config.get("k", 1))
    if name == "maxlof":
        return ScoreSpec.maxlof(config.get("k_min", 5), config.get("k_max", 20))
    raise SpecError(f"unknown score {name!r}")


def _workers(config) -> int:
    w = config.get("workers", 0)
    return os.cpu_count() if w in (0, None) else w


def _out_dir(config) -> Path:
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_observations(path, schema):
    if schema is not None:
        import json as _json

        if isinstance(schema, str):
            with open(schema, "r", encoding="utf-8") as fh:
                schema = _json.load(fh)
        schema = {"params": [], "stats": schema["stats"]}
    table = load_reference_table(path, schema=schema)
    return table.summaries


def write_reports(reports: list[GofReport], out_dir: Path,
                  bh_upper=None):
    """JSON records plus a tidy CSV mirror, one row per report."""
    records = []
    for i, report in enumerate(reports):
        rec = report.to_record()
        if bh_upper is not None:
            rec["bh_upper"] = bh_upper[i]
        records.append(rec)
    with open(out_dir / "reports.json", "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "reports.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for rec in records:
            writer.writerow({k: rec.get(k) for k in REPORT_FIELDS})
    return records


def _attach_ci(report: GofReport, pool, y_obs, n_calib, spec, config,
               seed) -> GofReport:
    ci_kind = config["ci"]
    if ci_kind == "none":
        return report
    warnings = list(report.warnings)
    if ci_kind == "asymptotic":
        low, high = asymptotic_ci(report.p_hat, report.n_calib,
                                  config["ci_level"])
        ci = ConfidenceInterval(low, high, ASYMPTOTIC, config["ci_level"])
        if report.p_hat in (0.0, 1.0):
            warnings.append("degenerate asymptotic CI; prefer the bootstrap")
        return replace(report, ci=ci, warnings=tuple(warnings))
    boot = bootstrap_pvalues(y_obs, pool, n_calib, spec, config["n_boot"],
                             seed, level=config["ci_level"],
                             standardize=config["standardize"],
                             workers=_workers(config))
    ci = ConfidenceInterval(boot.hdi_low, boot.hdi_high, BOOTSTRAP_HDI,
                            config["ci_level"])
    return replace(report, ci=ci, p_boot_median=boot.median,
                   warnings=tuple(warnings))


# ---------------------------------------------------------------------------
# commands


def cmd_prior(config) -> int:
    if not config["ref"]:
        raise SpecError("prior requires at least one --ref table")
    if not config["obs"]:
        raise SpecError("prior requires an --obs file")
    if not config["n_calib"]:
        raise SpecError("prior requires --n-calib")
    out_dir = _out_dir(config)
    spec = _score_spec(config)
    observations = _load_observations(config["obs"], config["schema"])
    reports = []
    master = child_seeds(config["seed"], len(config["ref"]))
    for ref_path, ref_seed in zip(config["ref"], master):
        pool = load_reference_table(ref_path, schema=config["schema"])
        scenario = Path(ref_path).stem
        split_seed, ci_seed = ref_seed.spawn(2)
        ref, calib = split_calibration(
            pool, SplitSpec(n_calib=config["n_calib"], seed=split_seed))
        for row, y in enumerate(observations):
            report = prior_pvalue(y, ref, calib, spec,
                                  standardize=config["standardize"],
                                  workers=_workers(config),
                                  scenario=f"{scenario}#obs{row}",
                                  seed=config["seed"])
            report = _attach_ci(report, pool, y, config["n_calib"], spec,
                                config, ci_seed)
            reports.append(report)
    bh_upper = None
    if config["bh"]:
        uppers = [r.ci.high if r.ci else r.p_hat for r in reports]
        bh_upper = bh_adjust(uppers).tolist()
    write_reports(reports, out_dir, bh_upper=bh_upper)
    _write_config(config, out_dir)
    return 0


def _builtin_resim(config, n_stats):
    kind = config["resim"]
    if kind == "identity":
        return lambda theta, rng: theta
    model = ToyModelSpec(family=kind, d=config["resim_d"], m=n_stats)
    return ToyResimulator(model)


def cmd_prior_local(config) -> int:
    if not config["ref"] or not config["obs"]:
        raise SpecError("prior-local requires --ref and --obs")
    out_dir = _out_dir(config)
    spec = _score_spec(config)
    ref = load_reference_table(config["ref"], schema=config["schema"])
    observations = _load_observations(config["obs"], config["schema"])
    resim = _builtin_resim(config, ref.n_stats)
    reports = []
    seeds = child_seeds(config["seed"], len(observations) * len(config["n_post"]))
    i = 0
    for row, y in enumerate(observations):
        for n_post in config["n_post"]:
            report = localized_prior_pvalue(
                y, ref, resim, n_post, spec, seeds[i],
                standardize=config["standardize"],
                workers=_workers(config),
                scenario=f"{Path(config['ref']).stem}#obs{row}")
            reports.append(report)
            i += 1
    write_reports(reports, out_dir)
    _write_config(config, out_dir)
    return 0


def _single_observation(path, schema, what):
    rows = _load_observations(path, schema)
    if rows.shape[0] != 1:
        raise SpecError(f"{what} file must contain exactly one observation row")
    return rows[0]


def _transform_from(config):
    if not config["transform"]:
        return None
    with open(config["transform"], "r", encoding="utf-8") as fh:
        return TransformSpec.from_dict(json.load(fh))


def cmd_holdout(config) -> int:
    for key in ("ref", "obs", "new"):
        if not config[key]:
            raise SpecError(f"holdout requires --{key}")
    out_dir = _out_dir(config)
    spec = _score_spec(config)
    ref = load_reference_table(config["ref"], schema=config["schema"])
    y_obs = _single_observation(config["obs"], config["schema"], "--obs")
    y_new = _single_observation(config["new"], config["schema"], "--new")
    transform = _transform_from(config)
    grid = [(m, n) for m in config["method"] for n in config["n_post"]]

    two_phase = config["export_params"] or config["import_summaries"]
    if two_phase:
        if len(grid) != 1:
            raise SpecError("two-phase mode handles a single (method, n_post) "
                            "cell per run")
        method, n_post = grid[0]
        pspec = PosteriorSpec(n_post=n_post, method=method,
                              lambda_grid=tuple(config["lam"]),
                              transform=transform)
        loc = localize(ref, y_obs, n_post, workers=_workers(config))
        adjustment = adjust_particles(loc, y_obs, pspec)
        if config["export_params"]:
            export_params(config["export_params"], adjustment.params,
                          ref.param_names, ids=loc.table.row_ids)
            _write_config(config, out_dir)
            print(f"phase 1 complete: parameters for {n_post} particles "
                  f"written to {config['export_params']}")
            return 0
        summaries = import_summaries(config["import_summaries"],
                                     expected_ids=loc.table.row_ids)
        if summaries.shape[1] != ref.n_stats:
            raise SpecError("imported summaries have the wrong width")
        resim_table = ReferenceTable(adjustment.params, summaries,
                                     ref.param_names, ref.stat_names)
        split_seed, ci_seed = child_seeds(config["seed"], 2)
        n_calib = n_post // 2
        ref_half, calib_half = split_calibration(
            resim_table, SplitSpec(n_calib=n_calib, seed=split_seed))
        scorer = ReferenceScorer(ref_half, spec.k_max,
                                 standardize=config["standardize"],
                                 workers=_workers(config))
        t_new = float(scorer.scores(y_new[None, :], spec)[0])
        t_cal = scorer.scores(calib_half.summaries, spec)
        report = GofReport(
            p_hat=exceedance_pvalue(t_cal, t_new),
            n_calib=n_calib, score_spec=spec, n_ref=len(ref_half),
            seed=config["seed"], scenario=Path(config["ref"]).stem,
            warnings=tuple(adjustment.warnings), method=method,
            n_post=n_post, epsilon_implied=loc.epsilon,
            n_ref_total=len(ref),
        )
        report = _attach_ci(report, resim_table, y_new, n_calib, spec,
                            config, ci_seed)
        write_reports([report], out_dir)
        _write_config(config, out_dir)
        return 0

    resim = _builtin_resim(config, ref.n_stats)
    reports = []
    seeds = child_seeds(config["seed"], len(grid))
    ci = config["ci"] if config["ci"] != "none" else None
    for (method, n_post), cell_seed in zip(grid, seeds):
        pspec = PosteriorSpec(n_post=n_post, method=method,
                              lambda_grid=tuple(config["lam"]),
                              transform=transform)
        inp = HoldoutInput(y_obs=y_obs, y_new=y_new, ref=ref,
                           posterior_spec=pspec, score_spec=spec,
                           seed=cell_seed, resim=resim)
        report = holdout_pvalue(inp, standardize=config["standardize"],
                                workers=_workers(config), ci=ci,
                                ci_level=config["ci_level"],
                                n_boot=config["n_boot"],
                                scenario=Path(config["ref"]).stem)
        reports.append(replace(report, seed=config["seed"]))
    write_reports(reports, out_dir)
    _write_config(config, out_dir)
    return 0


def _score_specs_from(config) -> tuple:
    return tuple(_parse_score(s, config) for s in config["scores"])


def _experiment(config) -> ExperimentSpec:
    return ExperimentSpec(
        budgets=tuple(config["budgets"]),
        n_test=config["n_test"],
        alpha=config.get("alpha", 0.05),
        score_specs=_score_specs_from(config),
        seed=config["seed"],
    )


def cmd_power(config) -> int:
    out_dir = _out_dir(config)
    exp = _experiment(config)
    workers = _workers(config)
    if config["null_table"]:
        null = load_reference_table(config["null_table"], schema=config["schema"])
    else:
        null = ToyModelSpec(family=config["null"], d=config["d"], m=config["m"])
    rows = []
    if config["test"] == "prior":
        if config["alt_table"]:
            alt = load_reference_table(config["alt_table"], schema=config["schema"])
        else:
            alt = ToyModelSpec(family=config["alt"], d=config["d"], m=config["m"])
        rows = estimate_power_prior(null, alt, exp,
                                    standardize=config["standardize"],
                                    workers=workers)
    else:
        if config["alt_table"]:
            if not config["replicate_table"]:
                raise SpecError("holdout power with tables needs "
                                "--replicate-table")
            alt = (load_reference_table(config["alt_table"], schema=config["schema"]),
                   load_reference_table(config["replicate_table"],
                                        schema=config["schema"]))
        else:
            alt = ToyModelSpec(family=config["alt"], d=config["d"], m=config["m"])
        for method in config["method"]:
            for n_post in config["n_post"]:
                pspec = PosteriorSpec(n_post=n_post, method=method,
                                      lambda_grid=tuple(config["lam"]))
                rows.extend(estimate_power_holdout(
                    null, alt, pspec, exp, standardize=config["standardize"],
                    workers=workers))
    write_rows_csv(rows, out_dir / "power.csv")
    _write_config(config, out_dir)
    return 0


def cmd_calibration(config) -> int:
    out_dir = _out_dir(config)
    exp = _experiment(config)
    if config["model_table"]:
        model = load_reference_table(config["model_table"], schema=config["schema"])
    else:
        model = ToyModelSpec(family=config["model"], d=config["d"],
                             m=config["m"])
    pods = None
    if config["pod_table"]:
        pod_table = load_reference_table(config["pod_table"],
                                         schema=config["schema"])
        if config["test"] == "holdout":
            if not config["replicate_table"]:
                raise SpecError("holdout calibration with tables needs "
                                "--replicate-table")
            pods = (pod_table, load_reference_table(config["replicate_table"],
                                                    schema=config["schema"]))
        else:
            pods = pod_table
    rows = []
    if config["test"] == "prior":
        rows = calibration_check(model, exp, test="prior", pods=pods,
                                 standardize=config["standardize"],
                                 workers=_workers(config))
    else:
        for method in config["method"]:
            for n_post in config["n_post"]:
                pspec = PosteriorSpec(n_post=n_post, method=method,
                                      lambda_grid=tuple(config["lam"]))
                rows.extend(calibration_check(
                    model, exp, test="holdout", posterior_spec=pspec,
                    pods=pods, standardize=config["standardize"],
                    workers=_workers(config)))
    write_rows_csv(rows, out_dir / "calibration.csv")
    with open(out_dir / "pvalues.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", "test", "budget", "score", "method",
                         "pvalue"])
        for row in rows:
            for p in row.pvalues:
                writer.writerow([row.setting, row.test, row.budget,
                                 row.score, row.method, repr(float(p))])
    _write_config(config, out_dir)
    return 0


def cmd_bh(config) -> int:
    if not config["reports"]:
        raise SpecError("bh requires at least one --reports file")
    out_dir = _out_dir(config)
    records = []
    for path in config["reports"]:
        with open(path, "r", encoding="utf-8") as fh:
            records.extend(json.load(fh))
    uppers = [r["ci_high"] if r.get("ci_high") is not None else r["p_hat"]
              for r in records]
    adjusted = bh_adjust(uppers)
    for rec, adj in zip(records, adjusted):
        rec["bh_upper"] = float(adj)
    with open(out_dir / "bh.json", "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out_dir / "bh.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_FIELDS,
                                extrasaction="ignore")
        writer.writeheader()
        for rec in records:
            writer.writerow({k: rec.get(k) for k in REPORT_FIELDS})
    _write_config(config, out_dir)
    return 0


COMMANDS = {
    "prior": cmd_prior,
    "prior-local": cmd_prior_local,
    "holdout": cmd_holdout,
    "power": cmd_power,
    "calibration": cmd_calibration,
    "bh": cmd_bh,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    if args.command is None:
        parser.print_help()
        return 2
    try:
        config = resolve_config(args)
        return COMMANDS[args.command](config)
    except (SpecError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimulationError as exc:
        print(f"simulation failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
