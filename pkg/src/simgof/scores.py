"""Outlier scores of a point against a reference table.

Four scores are provided, all built on exact Euclidean k-nearest-neighbor
queries with neighborhoods of exactly k points (distance ties broken by row
id):

* ``knn_score``  - mean distance to the k nearest reference points;
* ``lrd``        - local reachable density: inverse mean reachability
  distance over the k-neighborhood, where the reachability distance to a
  neighbor is the larger of the actual distance and that neighbor's own
  k-th-nearest distance within the table;
* ``lof``        - local outlier factor: mean lrd of the k neighbors divided
  by the point's own lrd (close to 1 deep inside homogeneous regions, well
  above 1 for local outliers);
* ``max_lof``    - maximum of lof over an integer range of k values.

A point that is itself a reference row is excluded from its own neighborhood.
Scores are computed on raw summaries by default; ``standardize=True`` rescales
every coordinate by the reference table's mean and standard deviation first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ReferenceTable
from .errors import SizeError, SpecError
from .neighbors import NeighborIndex

KNN = "knn"
LOF = "lof"
MAXLOF = "maxlof"

DEFAULT_K_RANGE = (5, 20)


@dataclass(frozen=True)
class ScoreSpec:
    """Which outlier score to compute and with what neighborhood size(s)."""

    kind: str
    k: int = 1
    k_range: tuple[int, int] = DEFAULT_K_RANGE

    def __post_init__(self):
        if self.kind not in (KNN, LOF, MAXLOF):
            raise SpecError(f"unknown score kind {self.kind!r}")
        if self.kind in (KNN, LOF) and self.k < 1:
            raise SpecError("k must be a positive integer")
        if self.kind == MAXLOF:
            lo, hi = self.k_range
            if lo < 1 or hi < lo:
                raise SpecError(f"empty or invalid k range {self.k_range}")

    @classmethod
    def knn(cls, k: int = 1) -> "ScoreSpec":
        return cls(KNN, k=k)

    @classmethod
    def lof(cls, k: int) -> "ScoreSpec":
        return cls(LOF, k=k)

    @classmethod
    def maxlof(cls, k_min: int = 5, k_max: int = 20) -> "ScoreSpec":
        return cls(MAXLOF, k_range=(k_min, k_max))

    @property
    def ks(self) -> tuple[int, ...]:
        if self.kind == MAXLOF:
            return tuple(range(self.k_range[0], self.k_range[1] + 1))
        return (self.k,)

    @property
    def k_max(self) -> int:
        return max(self.ks)

    @property
    def label(self) -> str:
        if self.kind == KNN:
            return f"knn-{self.k}"
        if self.kind == LOF:
            return f"lof-{self.k}"
        return f"maxlof-{self.k_range[0]}-{self.k_range[1]}"


def _summaries_of(ref) -> np.ndarray:
    if isinstance(ref, ReferenceTable):
        return ref.summaries
    x = np.ascontiguousarray(ref, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


class ReferenceScorer:
    """Scores batches of query points against one fixed reference table.

    Neighbor statistics of the reference points themselves (k-distances and
    local reachable densities) are computed once, lazily, and reused across
    every query batch and every k, which is what makes max-LOF over a k range
    affordable on large calibration sets.
    """

    def __init__(self, ref, k_max: int, standardize=False, workers=1, backend=None):
        X = _summaries_of(ref)
        self.n = X.shape[0]
        if k_max >= self.n:
            raise SizeError(
                f"k up to {k_max} requested but the reference table has only "
                f"{self.n} rows (self-exclusion leaves {self.n - 1} neighbors)"
            )
        self.k_max = k_max
        if standardize:
            mean = X.mean(axis=0)
            sd = X.std(axis=0)
            sd[sd == 0] = 1.0
            self._shift, self._scale = mean, sd
            X = (X - mean) / sd
        else:
            self._shift = self._scale = None
        self._X = np.ascontiguousarray(X)
        self.index = NeighborIndex(self._X, backend=backend, workers=workers)
        self._ref_ids = None
        self._ref_d = None
        self._lrd_cache: dict[int, np.ndarray] = {}

    def _transform(self, Q: np.ndarray) -> np.ndarray:
        if self._shift is None:
            return Q
        return (Q - self._shift) / self._scale

    def _ref_neighbors(self):
        if self._ref_ids is None:
            ids, d = self.index.query_batch(
                self._X, self.k_max, exclude_ids=np.arange(self.n)
            )
            self._ref_ids, self._ref_d = ids, d
        return self._ref_ids, self._ref_d

    def ref_kdist(self, k: int) -> np.ndarray:
        _, d = self._ref_neighbors()
        return d[:, k - 1]

    def ref_lrd(self, k: int) -> np.ndarray:
        lrd = self._lrd_cache.get(k)
        if lrd is None:
            ids, d = self._ref_neighbors()
            reach = np.maximum(d[:, :k], self.ref_kdist(k)[ids[:, :k]])
            mean_reach = reach.mean(axis=1)
            with np.errstate(divide="ignore"):
                lrd = 1.0 / mean_reach
            self._lrd_cache[k] = lrd
        return lrd

    def _query_neighbors(self, Q, exclude_ids=None):
        Q = np.ascontiguousarray(np.atleast_2d(np.asarray(Q, dtype=np.float64)))
        return self.index.query_batch(self._transform(Q), self.k_max, exclude_ids)

    # -- score kernels, all operating on precomputed neighbor arrays --------

    def _knn_from(self, d, k):
        return d[:, :k].mean(axis=1)

    def _lrd_from(self, ids, d, k, use_reach_dist=True):
        if use_reach_dist:
            reach = np.maximum(d[:, :k], self.ref_kdist(k)[ids[:, :k]])
        else:
            reach = d[:, :k]
        mean_reach = reach.mean(axis=1)
        with np.errstate(divide="ignore"):
            return 1.0 / mean_reach

    def _lof_from(self, ids, d, k):
        neighbor_lrd = self.ref_lrd(k)[ids[:, :k]]
        num = neighbor_lrd.mean(axis=1)
        den = self._lrd_from(ids, d, k)
        out = np.empty(len(num))
        inf_den = np.isinf(den)
        with np.errstate(invalid="ignore", over="ignore"):
            out[~inf_den] = num[~inf_den] / den[~inf_den]
        # a point denser than measurable (duplicate-heavy neighborhood) is an
        # outlier only relative to equally degenerate neighbors
        out[inf_den] = np.where(np.isinf(num[inf_den]), 1.0, 0.0)
        return out

    # -- public batch scoring ------------------------------------------------

    def knn_scores(self, Q, k, exclude_ids=None):
        self._check_k(k)
        _, d = self._query_neighbors(Q, exclude_ids)
        return self._knn_from(d, k)

    def lrd_scores(self, Q, k, exclude_ids=None, use_reach_dist=True):
        self._check_k(k)
        ids, d = self._query_neighbors(Q, exclude_ids)
        return self._lrd_from(ids, d, k, use_reach_dist)

    def lof_scores(self, Q, k, exclude_ids=None):
        self._check_k(k)
        ids, d = self._query_neighbors(Q, exclude_ids)
        return self._lof_from(ids, d, k)

    def max_lof_scores(self, Q, k_range, exclude_ids=None):
        lo, hi = k_range
        if lo < 1 or hi < lo:
            raise SpecError(f"empty or invalid k range {k_range}")
        self._check_k(hi)
        ids, d = self._query_neighbors(Q, exclude_ids)
        best = self._lof_from(ids, d, lo)
        for k in range(lo + 1, hi + 1):
            best = np.maximum(best, self._lof_from(ids, d, k))
        return best

    def scores(self, Q, spec: ScoreSpec, exclude_ids=None):
        if spec.kind == KNN:
            return self.knn_scores(Q, spec.k, exclude_ids)
        if spec.kind == LOF:
            return self.lof_scores(Q, spec.k, exclude_ids)
        return self.max_lof_scores(Q, spec.k_range, exclude_ids)

    def _check_k(self, k):
        if k > self.k_max:
            raise SpecError(
                f"k={k} exceeds the k_max={self.k_max} this scorer was built for"
            )


def _self_exclusion(y, ref) -> np.ndarray:
    """Exclude the first reference row bitwise-equal to y, if any."""
    X = _summaries_of(ref)
    y = np.asarray(y, dtype=np.float64).ravel()
    hits = np.nonzero((X == y).all(axis=1))[0]
    return np.asarray([hits[0] if hits.size else -1], dtype=np.int64)


def _scalar(fn, y, ref, k_max, standardize, **kw):
    scorer = ReferenceScorer(ref, k_max, standardize=standardize)
    excl = _self_exclusion(y, ref)
    y = np.asarray(y, dtype=np.float64).ravel()
    return float(fn(scorer, y[None, :], excl, **kw))


def knn_score(y, ref, k: int = 1, standardize=False) -> float:
    """Mean distance from y to its k nearest reference points."""
    return _scalar(
        lambda s, q, e: s.knn_scores(q, k, e)[0], y, ref, k, standardize
    )


def lrd(y, ref, k: int, standardize=False, use_reach_dist=True) -> float:
    """Local reachable density of y; +inf over an all-duplicate neighborhood.

    ``use_reach_dist=False`` replaces reachability distances by plain
    distances, in which case the result is exactly 1/knn_score (a test hook,
    not part of the score definition).
    """
    return _scalar(
        lambda s, q, e: s.lrd_scores(q, k, e, use_reach_dist=use_reach_dist)[0],
        y,
        ref,
        k,
        standardize,
    )


def lof(y, ref, k: int, standardize=False) -> float:
    """Local outlier factor of y with a k-point neighborhood."""
    return _scalar(
        lambda s, q, e: s.lof_scores(q, k, e)[0], y, ref, k, standardize
    )


def max_lof(y, ref, k_range=DEFAULT_K_RANGE, standardize=False) -> float:
    """Maximum local outlier factor over an inclusive integer k range."""
    lo, hi = k_range
    if lo < 1 or hi < lo:
        raise SpecError(f"empty or invalid k range {k_range}")
    return _scalar(
        lambda s, q, e: s.max_lof_scores(q, k_range, e)[0],
        y,
        ref,
        hi,
        standardize,
    )


def score_batch(points, ref, spec: ScoreSpec, standardize=False, workers=1,
                exclude_ids=None) -> np.ndarray:
    """Score many points against one reference table.

    Elementwise equal to the scalar operations, but reference-point neighbor
    statistics are computed once and shared. ``exclude_ids`` marks, per query
    row, a reference row id to exclude (-1 for none); external points need no
    exclusion.
    """
    scorer = ReferenceScorer(ref, spec.k_max, standardize=standardize,
                             workers=workers)
    return scorer.scores(points, spec, exclude_ids)
