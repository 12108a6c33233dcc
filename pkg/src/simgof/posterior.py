"""ABC posterior approximation for the holdout test.

Localization keeps the reference rows nearest to the observation (the
rejection posterior). The retained particles can optionally be moved by a
local regression of parameters on centered summaries: a weighted linear fit
with Epanechnikov weights, or its ridge-penalized variant evaluated on a
small penalty grid with a coordinatewise median across penalties. Regression
runs in an unconstrained space when a parameter transform is supplied, so
adjusted particles always respect bounds and ordering constraints.

Re-simulation turns adjusted parameters back into fresh summary vectors,
either through an in-process simulator callable or through a file round-trip
with an external simulation program.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, logit

from .data import ReferenceTable, child_seeds, rng_from
from .errors import SchemaError, SimulationError, SizeError, SpecError, TransformError
from .neighbors import NeighborIndex

REJECTION = "rejection"
LOCLIN = "loclin"
RIDGE = "ridge"

DEFAULT_LAMBDA_GRID = (1e-4, 1e-3, 1e-2)

BOUND_INFLATION = 0.49
ORDER_FLOOR = 0.25


@dataclass(frozen=True)
class TransformSpec:
    """Bounds, integrality flags, and ordered groups for the parameters.

    Free parameters map through an inflated-bound logit. Each ordered group
    (a tuple of parameter indices that must be strictly increasing) maps
    through a chain of logits of successive differences, floored away from
    zero so the transform stays finite at the tightest admissible spacing.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    integer: tuple[bool, ...]
    ordered_groups: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        upper = tuple(float(v) for v in self.upper)
        integer = tuple(bool(v) for v in self.integer)
        if not (len(lower) == len(upper) == len(integer)):
            raise SpecError("lower, upper and integer must have equal lengths")
        if not all(np.isfinite(lower)) or not all(np.isfinite(upper)):
            raise SpecError("transform bounds must be finite")
        if any(lo > hi for lo, hi in zip(lower, upper)):
            raise SpecError("every lower bound must not exceed its upper bound")
        groups = tuple(tuple(int(i) for i in g) for g in self.ordered_groups)
        seen = set()
        for g in groups:
            if len(g) < 2:
                raise SpecError("ordered groups need at least two parameters")
            for i in g:
                if not 0 <= i < len(lower):
                    raise SpecError(f"ordered-group index {i} out of range")
                if i in seen:
                    raise SpecError(f"parameter {i} appears in two ordered groups")
                seen.add(i)
            for a, b in zip(g, g[1:]):
                if lower[b] > lower[a] + 1 or upper[b] < upper[a] + 1:
                    raise SpecError(
                        "ordered-group bounds are inconsistent with the "
                        f"strict inequalities between parameters {a} and {b}"
                    )
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "integer", integer)
        object.__setattr__(self, "ordered_groups", groups)

    @property
    def n_params(self) -> int:
        return len(self.lower)

    def free_indices(self) -> tuple[int, ...]:
        grouped = {i for g in self.ordered_groups for i in g}
        return tuple(i for i in range(self.n_params) if i not in grouped)

    @classmethod
    def from_dict(cls, d: dict) -> "TransformSpec":
        return cls(
            lower=tuple(d["lower"]),
            upper=tuple(d["upper"]),
            integer=tuple(d.get("integer", [False] * len(d["lower"]))),
            ordered_groups=tuple(tuple(g) for g in d.get("ordered_groups", [])),
        )


def _logit_in(x, lo, hi):
    return logit((x - lo) / (hi - lo))


def _expit_in(v, lo, hi):
    return lo + (hi - lo) * expit(v)


def transform_forward(theta, spec: TransformSpec) -> np.ndarray:
    """Map constrained parameters to unconstrained coordinates.

    Accepts a vector or a matrix of row vectors. Raises TransformError when a
    value violates its bounds or an ordered group is not strictly increasing.
    """
    th = np.asarray(theta, dtype=np.float64)
    single = th.ndim == 1
    th = np.atleast_2d(th)
    if th.shape[1] != spec.n_params:
        raise SpecError("theta width does not match the transform spec")
    lo = np.asarray(spec.lower)
    hi = np.asarray(spec.upper)
    below = th < lo
    above = th > hi
    if below.any() or above.any():
        j = int(np.argmax(below.any(axis=0) | above.any(axis=0)))
        raise TransformError(f"parameter {j} outside bounds [{lo[j]}, {hi[j]}]")
    out = np.empty_like(th)
    for j in spec.free_indices():
        out[:, j] = _logit_in(th[:, j], lo[j] - BOUND_INFLATION,
                              hi[j] + BOUND_INFLATION)
    for g in spec.ordered_groups:
        diffs = np.diff(th[:, list(g)], axis=1)
        if (diffs <= 0).any():
            raise TransformError(
                f"ordered group {g} is not strictly increasing"
            )
        first = g[0]
        out[:, first] = _logit_in(th[:, first], lo[first] - BOUND_INFLATION,
                                  hi[first] + BOUND_INFLATION)
        for prev, cur in zip(g, g[1:]):
            u = np.maximum(th[:, cur] - th[:, prev] - 1.0, ORDER_FLOOR)
            upper_u = hi[cur] - 1.0 - th[:, prev] + BOUND_INFLATION
            out[:, cur] = _logit_in(u, 0.0, upper_u)
    return out[0] if single else out


def transform_inverse(v, spec: TransformSpec) -> np.ndarray:
    """Map unconstrained coordinates back to valid parameters.

    Total on finite inputs: integer-flagged parameters are rounded onto their
    lattice, continuous ones clipped to their bounds, and ordered groups are
    reconstructed sequentially so strict ordering always holds.
    """
    vv = np.asarray(v, dtype=np.float64)
    single = vv.ndim == 1
    vv = np.atleast_2d(vv)
    if vv.shape[1] != spec.n_params:
        raise SpecError("v width does not match the transform spec")
    if not np.isfinite(vv).all():
        raise SpecError("transform_inverse requires finite inputs")
    lo = np.asarray(spec.lower)
    hi = np.asarray(spec.upper)
    out = np.empty_like(vv)

    def settle(j, values):
        if spec.integer[j]:
            return np.round(values)
        return np.clip(values, lo[j], hi[j])

    for j in spec.free_indices():
        x = _expit_in(vv[:, j], lo[j] - BOUND_INFLATION, hi[j] + BOUND_INFLATION)
        out[:, j] = settle(j, x)
    for g in spec.ordered_groups:
        first = g[0]
        x = _expit_in(vv[:, first], lo[first] - BOUND_INFLATION,
                      hi[first] + BOUND_INFLATION)
        out[:, first] = settle(first, x)
        for prev, cur in zip(g, g[1:]):
            upper_u = hi[cur] - 1.0 - out[:, prev] + BOUND_INFLATION
            u = _expit_in(vv[:, cur], 0.0, upper_u)
            x = u + out[:, prev] + 1.0
            if spec.integer[cur]:
                out[:, cur] = np.round(x)
            else:
                out[:, cur] = np.minimum(x, hi[cur])
    return out[0] if single else out


@dataclass(frozen=True)
class PosteriorSpec:
    """Localization size, adjustment method, and optional transform."""

    n_post: int
    method: str = REJECTION
    lambda_grid: tuple[float, ...] = DEFAULT_LAMBDA_GRID
    transform: TransformSpec = None

    def __post_init__(self):
        if self.n_post < 1:
            raise SpecError("n_post must be a positive integer")
        if self.method not in (REJECTION, LOCLIN, RIDGE):
            raise SpecError(f"unknown posterior method {self.method!r}")
        grid = tuple(float(l) for l in self.lambda_grid)
        if self.method == RIDGE and not grid:
            raise SpecError("ridge requires a nonempty lambda grid")
        object.__setattr__(self, "lambda_grid", grid)


@dataclass(frozen=True)
class LocalizedTable:
    """Rows of a reference table nearest to an observation.

    ``distances`` aligns with the rows of ``table``; ``epsilon`` is the
    distance of the farthest retained row (the implied rejection threshold).
    """

    table: ReferenceTable
    distances: np.ndarray
    epsilon: float


def localize(ref: ReferenceTable, y_obs, n_post: int, workers=1) -> LocalizedTable:
    """Keep the n_post rows nearest to y_obs in summary space.

    Ties at the threshold break by ascending row position; the subset keeps
    the original row order and original row ids.
    """
    if n_post > len(ref):
        raise SizeError(
            f"n_post={n_post} exceeds the reference table size {len(ref)}"
        )
    y = np.asarray(y_obs, dtype=np.float64).ravel()
    index = NeighborIndex(ref.summaries, workers=workers)
    ids, dists = index.query_batch(y[None, :], n_post)
    order = np.argsort(ids[0], kind="stable")
    sel = ids[0][order]
    return LocalizedTable(
        table=ref.subset(sel),
        distances=dists[0][order],
        epsilon=float(dists[0].max()),
    )


@dataclass(frozen=True)
class Adjustment:
    """Adjusted particle parameters plus any warnings raised on the way."""

    params: np.ndarray
    warnings: tuple[str, ...] = ()


def _epanechnikov_weights(distances, epsilon):
    if epsilon == 0.0:
        return np.ones_like(distances)
    return 1.0 - (distances / epsilon) ** 2


def _regression_inputs(localized, y_obs, transform, weights):
    y = np.asarray(y_obs, dtype=np.float64).ravel()
    X = localized.table.summaries - y
    if weights is None:
        w = _epanechnikov_weights(localized.distances, localized.epsilon)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(localized.table),):
            raise SpecError("weights must align with the localized rows")
        if (w < 0).any():
            raise SpecError("weights must be nonnegative")
    warns = []
    if transform is not None:
        theta = transform_forward(localized.table.params, transform)
    else:
        theta = np.array(localized.table.params, copy=True)
        warns.append("no-transform: adjustment performed in raw parameter space")
    return X, theta, w, warns


def _finalize(theta_star, transform):
    if transform is not None:
        return transform_inverse(theta_star, transform)
    return theta_star


def loclin_adjust(localized: LocalizedTable, y_obs, transform=None,
                  weights=None) -> Adjustment:
    """Local-linear regression adjustment of the localized particles.

    Fits (transformed) parameters on summaries centered at the observation
    with Epanechnikov weights whose bandwidth is the largest localized
    distance, then removes the fitted trend from every particle. Falls back
    to the unadjusted (rejection) particles, with a warning, when the
    weighted design is rank deficient.
    """
    X, theta, w, warns = _regression_inputs(localized, y_obs, transform, weights)
    if w.sum() == 0.0:
        return Adjustment(
            np.array(localized.table.params, copy=True),
            tuple(warns + ["loclin-fallback-rejection: all regression weights vanish"]),
        )
    design = np.column_stack([np.ones(len(X)), X])
    sw = np.sqrt(w)
    A = design * sw[:, None]
    if np.linalg.matrix_rank(A) < design.shape[1]:
        return Adjustment(
            np.array(localized.table.params, copy=True),
            tuple(warns + ["loclin-fallback-rejection: rank-deficient local design"]),
        )
    coef, *_ = np.linalg.lstsq(A, theta * sw[:, None], rcond=None)
    theta_star = theta - X @ coef[1:]
    return Adjustment(_finalize(theta_star, transform), tuple(warns))


def ridge_adjust(localized: LocalizedTable, y_obs,
                 lambda_grid=DEFAULT_LAMBDA_GRID, transform=None,
                 weights=None) -> Adjustment:
    """Ridge-penalized variant of the local-linear adjustment.

    One adjusted particle set per penalty value, combined by a coordinatewise
    median across the grid. The penalized system is always solvable, so there
    is no rank-deficiency fallback.
    """
    grid = tuple(float(l) for l in lambda_grid)
    if not grid:
        raise SpecError("ridge requires a nonempty lambda grid")
    if any(l <= 0 for l in grid):
        raise SpecError("ridge penalties must be positive")
    X, theta, w, warns = _regression_inputs(localized, y_obs, transform, weights)
    wsum = w.sum()
    if wsum == 0.0:
        w = np.ones_like(w)
        wsum = w.sum()
        warns.append("ridge-uniform-weights: all Epanechnikov weights vanish")
    xbar = w @ X / wsum
    tbar = w @ theta / wsum
    sw = np.sqrt(w)
    Xc = (X - xbar) * sw[:, None]
    Tc = (theta - tbar) * sw[:, None]
    gram = Xc.T @ Xc
    rhs = Xc.T @ Tc
    eye = np.eye(X.shape[1])
    per_lambda = []
    for lam in grid:
        beta = np.linalg.solve(gram + lam * eye, rhs)
        per_lambda.append(_finalize(theta - X @ beta, transform))
    combined = np.median(np.stack(per_lambda), axis=0)
    return Adjustment(combined, tuple(warns))


def adjust_particles(localized: LocalizedTable, y_obs,
                     spec: PosteriorSpec) -> Adjustment:
    """Dispatch on the posterior spec's adjustment method."""
    if spec.method == REJECTION:
        return Adjustment(np.array(localized.table.params, copy=True))
    if spec.method == LOCLIN:
        return loclin_adjust(localized, y_obs, transform=spec.transform)
    return ridge_adjust(localized, y_obs, lambda_grid=spec.lambda_grid,
                        transform=spec.transform)


def resimulate(params, resim, seed, param_names=None, stat_names=None,
               expect_m=None) -> ReferenceTable:
    """Simulate one fresh summary vector per parameter vector.

    ``resim`` is a callable (theta, rng) -> summary vector. Each particle gets
    its own child stream of the master seed, so results do not depend on
    evaluation order. Any simulator failure or malformed output aborts the
    whole call with the particle index; partial tables are never returned.
    """
    params = np.atleast_2d(np.asarray(params, dtype=np.float64))
    n = params.shape[0]
    seeds = child_seeds(seed, n)
    rows = []
    m = expect_m
    for i in range(n):
        try:
            y = np.asarray(resim(params[i], rng_from(seeds[i])), dtype=np.float64)
        except Exception as exc:
            raise SimulationError(
                f"resimulation failed for particle {i}: {exc}", particle=i
            ) from exc
        y = y.ravel()
        if m is None:
            m = y.size
        if y.size != m or not np.isfinite(y).all():
            raise SimulationError(
                f"resimulation returned an invalid summary vector for particle {i}",
                particle=i,
            )
        rows.append(y)
    summaries = np.vstack(rows)
    if param_names is None:
        param_names = tuple(f"p{j + 1}" for j in range(params.shape[1]))
    if stat_names is None:
        stat_names = tuple(f"s{j + 1}" for j in range(summaries.shape[1]))
    return ReferenceTable(params, summaries, param_names, stat_names)


def export_params(path, params, param_names, ids=None):
    """Write particle parameters for an external simulator (id + param: cols)."""
    params = np.atleast_2d(np.asarray(params, dtype=np.float64))
    if ids is None:
        ids = np.arange(params.shape[0])
    ids = np.asarray(ids, dtype=np.int64)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"param:{n}" for n in param_names])
        for i in range(params.shape[0]):
            writer.writerow([int(ids[i])] + [repr(float(v)) for v in params[i]])


def import_summaries(path, expected_ids) -> np.ndarray:
    """Read externally simulated summaries; ids must match exactly, in order."""
    expected_ids = np.asarray(expected_ids, dtype=np.int64)
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if "id" not in header:
            raise SchemaError(f"{path} lacks an 'id' column")
        id_col = header.index("id")
        stat_cols = [i for i, h in enumerate(header) if h.startswith("stat:")]
        if not stat_cols:
            raise SchemaError(f"{path} lacks stat: columns")
        ids = []
        rows = []
        for record in reader:
            if not record:
                continue
            ids.append(int(record[id_col]))
            rows.append([float(record[i]) for i in stat_cols])
    ids = np.asarray(ids, dtype=np.int64)
    if ids.shape != expected_ids.shape or (ids != expected_ids).any():
        raise SchemaError(
            f"{path} particle ids do not match the exported ids exactly"
        )
    summaries = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(summaries).all():
        raise SchemaError(f"{path} contains non-finite summaries")
    return summaries
