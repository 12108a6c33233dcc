"""Exact Euclidean k-nearest-neighbor queries over summary vectors.

Queries always return exactly ``min(k, n_available)`` neighbors ordered by
nondecreasing distance, with ties broken by ascending point id. Two backends
share that contract: a k-d tree (scipy) in low dimension and a blocked
exhaustive scan above ``KDTREE_MAX_DIM`` dimensions, where k-d trees degrade.
Both are exact; the fallback changes nothing observable.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .errors import SizeError, SpecError

KDTREE_MAX_DIM = 20
_TIE_PAD = 4
# target elements per brute-force distance block, keeps temporaries ~200 MB
_BRUTE_BLOCK_ELEMS = 3_000_000


def _distances_to(points: np.ndarray, y: np.ndarray) -> np.ndarray:
    diff = points - y
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


class NeighborIndex:
    """Exact kNN index over a fixed set of m-dimensional points."""

    def __init__(self, points, backend=None, workers=1):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise SpecError("points must form a 2-d array of uniform dimension")
        if pts.shape[0] == 0:
            raise SpecError("cannot build an index over zero points")
        if not np.isfinite(pts).all():
            raise SpecError("points contain NaN or infinite coordinates")
        pts.flags.writeable = False
        self.points = pts
        self.n, self.dim = pts.shape
        if backend is None:
            backend = "kdtree" if self.dim <= KDTREE_MAX_DIM else "brute"
        if backend not in ("kdtree", "brute"):
            raise SpecError(f"unknown backend {backend!r}")
        self.backend = backend
        self.workers = workers
        self._tree = cKDTree(pts) if backend == "kdtree" else None

    # -- internals ---------------------------------------------------------

    def _kdtree_batch(self, Q: np.ndarray, need: int):
        kq = min(need + _TIE_PAD, self.n)
        dists, ids = self._tree.query(Q, k=kq, workers=self.workers)
        if kq == 1:
            dists = dists[:, None]
            ids = ids[:, None]
        # Rows whose retrieved set may miss tied points beyond position kq,
        # or whose internal ties need the id ordering restored.
        boundary = np.zeros(len(Q), dtype=bool)
        if kq < self.n:
            boundary = dists[:, need - 1] >= dists[:, kq - 1]
        internal = (np.diff(dists, axis=1) == 0).any(axis=1)
        out_ids = ids[:, :need].copy()
        out_d = dists[:, :need].copy()
        for r in np.nonzero(boundary | internal)[0]:
            if boundary[r]:
                # fattened radius: the ball query rounds differently from the
                # kNN query, so exact-tie points can sit a few ulps outside;
                # candidates are re-sorted by exact distances below
                radius = dists[r, kq - 1] * (1.0 + 1e-9) + 1e-300
                cand = self._tree.query_ball_point(Q[r], radius)
                cand = np.asarray(sorted(cand), dtype=np.int64)
                if cand.size < need:
                    cand = np.arange(self.n, dtype=np.int64)
                d = _distances_to(self.points[cand], Q[r])
                order = np.lexsort((cand, d))[:need]
                out_ids[r] = cand[order]
                out_d[r] = d[order]
            else:
                order = np.lexsort((ids[r], dists[r]))[:need]
                out_ids[r] = ids[r, order]
                out_d[r] = dists[r, order]
        return out_ids, out_d

    def _brute_batch(self, Q: np.ndarray, need: int):
        out_ids = np.empty((len(Q), need), dtype=np.int64)
        out_d = np.empty((len(Q), need))
        step = max(1, _BRUTE_BLOCK_ELEMS // max(1, self.n * self.dim))
        for s in range(0, len(Q), step):
            block = Q[s : s + step]
            diff = block[:, None, :] - self.points[None, :, :]
            d = np.sqrt(np.einsum("bij,bij->bi", diff, diff))
            order = np.argsort(d, axis=1, kind="stable")[:, :need]
            out_ids[s : s + step] = order
            out_d[s : s + step] = np.take_along_axis(d, order, axis=1)
        return out_ids, out_d

    # -- queries -----------------------------------------------------------

    def query_batch(self, Q, k: int, exclude_ids=None):
        """Neighbors of each row of Q; optionally exclude one id per row.

        Returns ``(ids, dists)`` arrays of shape (len(Q), k). ``exclude_ids``
        is either None or an int array aligned with Q where -1 means no
        exclusion. Raises SizeError when fewer than k neighbors remain.
        """
        Q = np.ascontiguousarray(Q, dtype=np.float64)
        if Q.ndim == 1:
            Q = Q[None, :]
        if Q.shape[1] != self.dim:
            raise SpecError(
                f"query dimension {Q.shape[1]} does not match index dimension {self.dim}"
            )
        if k < 1:
            raise SpecError("k must be a positive integer")
        excluding = exclude_ids is not None
        if excluding:
            exclude_ids = np.asarray(exclude_ids, dtype=np.int64)
            need = k + 1
        else:
            need = k
        if need > self.n and not (excluding and (exclude_ids < 0).all()):
            raise SizeError(
                f"requested k={k} neighbors but only "
                f"{self.n - (1 if excluding else 0)} are available"
            )
        if k > self.n:
            raise SizeError(f"requested k={k} neighbors from an index of {self.n}")
        need = min(need, self.n)
        if self.backend == "kdtree":
            ids, dists = self._kdtree_batch(Q, need)
        else:
            ids, dists = self._brute_batch(Q, need)
        if not excluding:
            return ids, dists
        out_ids = np.empty((len(Q), k), dtype=np.int64)
        out_d = np.empty((len(Q), k))
        hit = ids == exclude_ids[:, None]
        for r in range(len(Q)):
            if hit[r].any():
                keep = np.nonzero(~hit[r])[0][:k]
            else:
                keep = np.arange(min(k, need))
            if keep.size < k:
                raise SizeError(
                    f"requested k={k} neighbors but only {keep.size} remain "
                    "after exclusion"
                )
            out_ids[r] = ids[r, keep]
            out_d[r] = dists[r, keep]
        return out_ids, out_d

    def query(self, y, k: int, exclude=None):
        """Neighbors of a single point; clamps k to the available count."""
        avail = self.n - (1 if exclude is not None else 0)
        if avail < 1:
            raise SizeError("no points remain after exclusion")
        k_eff = min(k, avail)
        excl = None if exclude is None else np.asarray([exclude], dtype=np.int64)
        ids, dists = self.query_batch(np.asarray(y, float)[None, :], k_eff, excl)
        return ids[0], dists[0]

    def find_exact(self, y) -> int:
        """Id of the first indexed point bitwise-equal to y, or -1."""
        y = np.asarray(y, dtype=np.float64).ravel()
        hits = np.nonzero((self.points == y).all(axis=1))[0]
        return int(hits[0]) if hits.size else -1


def build_index(points, backend=None, workers=1) -> NeighborIndex:
    return NeighborIndex(points, backend=backend, workers=workers)


def knn_query(index: NeighborIndex, y, k: int, exclude=None):
    """k nearest neighbors of y as a list of (id, distance) pairs."""
    ids, dists = index.query(y, k, exclude=exclude)
    return [(int(i), float(d)) for i, d in zip(ids, dists)]


def k_dist(index: NeighborIndex, y, k: int) -> float:
    """Distance to the k-th nearest indexed point, excluding y itself
    whenever y coincides with an indexed point."""
    self_id = index.find_exact(y)
    exclude = self_id if self_id >= 0 else None
    avail = index.n - (1 if exclude is not None else 0)
    if k > avail:
        raise SizeError(f"k={k} exceeds the {avail} available points")
    ids, dists = index.query(y, k, exclude=exclude)
    return float(dists[k - 1])
