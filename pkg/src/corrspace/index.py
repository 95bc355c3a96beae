"""Exact k-d tree over embedding vectors.

Median splits on a cycling dimension, ties broken by record id, so the tree
is deterministic for a fixed input order. Queries are exact branch-and-bound
(results match a brute-force scan including tie order); the only
approximation in the pipeline lives in the embedding itself.

Layout: one permutation array over the input rows, recursively sorted so
every subtree occupies a contiguous slice with its median point in the
middle. Small subtrees are distance-scanned in bulk instead of recursed.
"""

import heapq
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput

INDEX_MAGIC = b"CIX1"
INDEX_VERSION = 1

_SCAN_CUTOFF = 64  # subtrees at most this big are scanned vectorized


@dataclass(frozen=True)
class QueryResult:
    """Matches ordered by ascending distance², ties by ascending id."""

    ids: np.ndarray
    distances_sq: np.ndarray

    def __len__(self):
        return len(self.ids)


class KdTree:
    def __init__(self, points: np.ndarray, ids=None):
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2:
            raise DimensionMismatch(f"points must be (n, m), got shape {points.shape}")
        if points.shape[0] == 0:
            raise EmptyInput("cannot index zero points")
        if ids is None:
            ids = np.arange(points.shape[0])
        ids = np.asarray(ids, dtype=np.int64)
        if ids.shape[0] != points.shape[0]:
            raise DimensionMismatch("ids/points row counts differ")
        self._input_points = points
        self._input_ids = ids
        order = _build_order(points, ids)
        self._pts = np.ascontiguousarray(points[order])
        self._ids = ids[order]

    @property
    def n(self):
        return self._pts.shape[0]

    @property
    def m(self):
        return self._pts.shape[1]

    @property
    def height(self):
        """Levels in the median-split tree: ceil(log2(n + 1))."""
        size, h = self.n, 0
        while size > 0:
            h += 1
            size //= 2
        return h

    def _check_query(self, q):
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (self.m,):
            raise DimensionMismatch(f"query shape {q.shape}, index dimension {self.m}")
        return q

    def top_k(self, q, k: int) -> QueryResult:
        """Exact k nearest neighbors (k capped at n), ties by ascending id."""
        q = self._check_query(q)
        if k < 1:
            raise ValueError("k must be at least 1")
        k = min(k, self.n)
        pts, ids, m = self._pts, self._ids, self.m
        heap = []  # min-heap of (-d², -id); heap[0] is the current worst keeper

        def scan(lo, hi):
            block = pts[lo:hi] - q
            d2 = np.einsum("ij,ij->i", block, block)
            if len(heap) == k:
                keep = np.flatnonzero(d2 <= -heap[0][0])
                d2, bids = d2[keep], ids[lo:hi][keep]
            else:
                bids = ids[lo:hi]
            for d, i in zip(d2.tolist(), bids.tolist()):
                item = (-d, -i)
                if len(heap) < k:
                    heapq.heappush(heap, item)
                elif item > heap[0]:
                    heapq.heapreplace(heap, item)

        def visit(lo, hi, depth):
            if hi - lo <= _SCAN_CUTOFF:
                if hi > lo:
                    scan(lo, hi)
                return
            mid = (lo + hi) // 2
            axis = depth % m
            diff = q[axis] - pts[mid, axis]
            block = pts[mid : mid + 1] - q  # same kernel as scan() for bit-stable ties
            d2_mid = float(np.einsum("ij,ij->i", block, block)[0])
            item = (-d2_mid, -int(ids[mid]))
            if len(heap) < k:
                heapq.heappush(heap, item)
            elif item > heap[0]:
                heapq.heapreplace(heap, item)
            if diff < 0.0:
                near, far = (lo, mid), (mid + 1, hi)
            else:
                near, far = (mid + 1, hi), (lo, mid)
            visit(near[0], near[1], depth + 1)
            if len(heap) < k or diff * diff <= -heap[0][0]:
                visit(far[0], far[1], depth + 1)

        visit(0, self.n, 0)
        best = sorted((-a, -b) for a, b in heap)
        return QueryResult(
            ids=np.array([b for _, b in best], dtype=np.int64),
            distances_sq=np.array([a for a, _ in best]),
        )

    def within_radius(self, q, r_sq: float) -> QueryResult:
        """All points with distance² ≤ r_sq, ascending (distance², id)."""
        q = self._check_query(q)
        if r_sq < 0:
            raise ValueError("radius² must be nonnegative")
        pts, ids, m = self._pts, self._ids, self.m
        out_d, out_i = [], []

        def visit(lo, hi, depth):
            if hi - lo <= _SCAN_CUTOFF:
                if hi > lo:
                    block = pts[lo:hi] - q
                    d2 = np.einsum("ij,ij->i", block, block)
                    keep = np.flatnonzero(d2 <= r_sq)
                    out_d.append(d2[keep])
                    out_i.append(ids[lo:hi][keep])
                return
            mid = (lo + hi) // 2
            axis = depth % m
            diff = q[axis] - pts[mid, axis]
            block = pts[mid : mid + 1] - q
            d2_mid = float(np.einsum("ij,ij->i", block, block)[0])
            if d2_mid <= r_sq:
                out_d.append(np.array([d2_mid]))
                out_i.append(ids[mid : mid + 1])
            if diff < 0.0:
                near, far = (lo, mid), (mid + 1, hi)
            else:
                near, far = (mid + 1, hi), (lo, mid)
            visit(near[0], near[1], depth + 1)
            if diff * diff <= r_sq:
                visit(far[0], far[1], depth + 1)

        visit(0, self.n, 0)
        d2 = np.concatenate(out_d) if out_d else np.empty(0)
        rid = np.concatenate(out_i) if out_i else np.empty(0, dtype=np.int64)
        sort = np.lexsort((rid, d2))
        return QueryResult(ids=rid[sort], distances_sq=d2[sort])


def _build_order(pts: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Permutation placing each subtree's median at its slice midpoint."""
    n, m = pts.shape
    order = np.arange(n)
    stack = [(0, n, 0)]
    while stack:
        lo, hi, depth = stack.pop()
        if hi - lo <= 1:
            continue
        idx = order[lo:hi]
        sub = np.lexsort((ids[idx], pts[idx, depth % m]))
        order[lo:hi] = idx[sub]
        mid = (lo + hi) // 2
        stack.append((lo, mid, depth + 1))
        stack.append((mid + 1, hi, depth + 1))
    return order


def build(points, ids=None) -> KdTree:
    return KdTree(points, ids)


def threshold_radius_sq(eta: float, slack: float = 1.0) -> float:
    """Radius² for a correlation threshold η: 2‖Δ‖² ≤ 2−2η ⇒ r² = slack·(1−η)."""
    if not -1.0 <= eta <= 1.0:
        raise ValueError("threshold must be a correlation in [-1, 1]")
    if slack <= 0:
        raise ValueError("slack must be positive")
    return slack * (1.0 - eta)


def save_index(tree: KdTree, path, meta: dict | None = None) -> None:
    """Versioned dump of ids + points (input order); the tree rebuilds on load."""
    blob = json.dumps(meta or {}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(INDEX_MAGIC)
        fh.write(struct.pack("<III", INDEX_VERSION, tree._input_points.shape[0], tree._input_points.shape[1]))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(tree._input_ids.astype("<i8").tobytes())
        fh.write(tree._input_points.astype("<f8").tobytes())


def load_index(path):
    """Load a dump written by `save_index`; returns (KdTree, meta)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != INDEX_MAGIC:
        raise ValueError(f"{path}: not an index file")
    version, n, m, blob_len = struct.unpack_from("<IIII", data, 4)
    if version != INDEX_VERSION:
        raise ValueError(f"{path}: unsupported index version {version}")
    off = 20
    meta = json.loads(data[off : off + blob_len].decode())
    off += blob_len
    ids = np.frombuffer(data, dtype="<i8", count=n, offset=off).astype(np.int64)
    off += 8 * n
    pts = np.frombuffer(data, dtype="<f8", count=n * m, offset=off).reshape(n, m).astype(np.float64)
    return KdTree(pts, ids), meta
