"""Ground-truth oracle, metrics and method-comparison sweeps.

Metrics per query: precision rho = |Fhat ∩ F| / k against the exact top-k,
and gap delta = mean excess true squared distance of the returned set over
the optimal set (nonnegative by optimality). The approximation loss is the
mean |2*||f(s)-f(r)||^2 - (2 - 2*corr)| over seeded disjoint test pairs; the
factor 2 is applied uniformly to every method.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import train as _train
from .core import NormalizedSeries
from .datasets import Dataset, split
from .embed import (
    DftTruncationEmbedder,
    DownSampleEmbedder,
    LearnedEmbedder,
    feature_width,
    features_matrix,
    forward_batch,
)
from .errors import KTooLarge, SizeMismatch
from .index import KdTree

METHODS = ("exact", "dft", "downsample", "learned-approx", "learned-order")

_LOSS_OF = {"learned-approx": _train.APPROXIMATE, "learned-order": _train.ORDER}


def exact_top_k(ns, pool: Dataset, k: int) -> np.ndarray:
    """Brute-force ids of the k most correlated pool series (ties by id)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > pool.n:
        raise KTooLarge(f"k={k} exceeds pool size {pool.n}")
    h = pool.normalized_matrix()
    d2 = 2.0 - 2.0 * (h @ np.asarray(ns.values, dtype=np.float64))
    order = np.lexsort((pool.ids, d2))
    return pool.ids[order[:k]].copy()


def precision(fhat_ids, f_ids, k=None) -> float:
    fhat_ids, f_ids = np.asarray(fhat_ids), np.asarray(f_ids)
    if k is None:
        k = len(f_ids)
    if len(fhat_ids) != k or len(f_ids) != k:
        raise SizeMismatch(f"expected two id sets of size {k}, got {len(fhat_ids)}/{len(f_ids)}")
    return len(set(fhat_ids.tolist()) & set(f_ids.tolist())) / k


def gap(fhat_ids, f_ids, ns, pool: Dataset, k=None) -> float:
    """Mean excess true squared distance of Fhat over the optimal set F."""
    fhat_ids, f_ids = np.asarray(fhat_ids), np.asarray(f_ids)
    if k is None:
        k = len(f_ids)
    if len(fhat_ids) != k or len(f_ids) != k:
        raise SizeMismatch(f"expected two id sets of size {k}, got {len(fhat_ids)}/{len(f_ids)}")
    h = pool.normalized_matrix()
    q = np.asarray(ns.values, dtype=np.float64)
    d2 = lambda rows: 2.0 - 2.0 * (h[rows] @ q)
    return float((d2(pool.rows_for(fhat_ids)).sum() - d2(pool.rows_for(f_ids)).sum()) / k)


def make_test_pairs(ds: Dataset, ids, seed: int):
    """Disjoint (s, r) NormalizedSeries pairs from a seeded permutation of ids.

    An odd id is left unpaired and dropped.
    """
    rows_s, rows_r = _pair_rows(ds, ids, seed)
    h = ds.normalized_matrix()
    raw = ds.values
    wrap = lambda row: NormalizedSeries(
        values=h[row], mean=float(raw[row].mean()), stddev=float(raw[row].std())
    )
    return [(wrap(s), wrap(r)) for s, r in zip(rows_s, rows_r)]


def _pair_rows(ds: Dataset, ids, seed: int):
    rows = ds.rows_for(ids)
    perm = np.random.default_rng((seed, 7)).permutation(rows)
    half = len(perm) // 2
    return perm[: 2 * half : 2], perm[1 : 2 * half : 2]


def approximation_loss(embedder, pairs) -> float:
    """Mean |2*||f(s)-f(r)||^2 - (2 - 2*corr)| over (s, r) NormalizedSeries pairs."""
    h_s = np.vstack([p[0].values for p in pairs])
    h_r = np.vstack([p[1].values for p in pairs])
    return _approximation_loss_rows(embedder, h_s, h_r)


def _approximation_loss_rows(embedder, h_s, h_r) -> float:
    e_s = embedder.embed_matrix(h_s)
    e_r = embedder.embed_matrix(h_r)
    d2e = np.einsum("ij,ij->i", e_s - e_r, e_s - e_r)
    corr = np.einsum("ij,ij->i", h_s, h_r)
    return float(np.mean(np.abs(2.0 * d2e - (2.0 - 2.0 * corr))))


@dataclass(frozen=True)
class ReportRow:
    method: str
    m: int
    k: int
    rho: float
    delta: float
    approx_loss: float
    q50_us: float
    q99_us: float
    embed_us: float


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        out = ["method,m,k,rho,delta,approx_loss,q50_us,q99_us"]
        for r in self.rows:
            out.append(
                f"{r.method},{r.m},{r.k},{r.rho:.9g},{r.delta:.9g},{r.approx_loss:.9g},"
                f"{r.q50_us:.1f},{r.q99_us:.1f}"
            )
        return "\n".join(out) + "\n"

    def save_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())

    def table(self) -> str:
        header = f"{'method':<15}{'m':>4}{'k':>6}{'rho':>8}{'delta':>11}{'approx':>11}{'q50_us':>9}{'q99_us':>9}{'embed_us':>9}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r.method:<15}{r.m:>4}{r.k:>6}{r.rho:>8.3f}{r.delta:>11.4g}"
                f"{r.approx_loss:>11.4g}{r.q50_us:>9.1f}{r.q99_us:>9.1f}{r.embed_us:>9.1f}"
            )
        return "\n".join(lines)


@dataclass(frozen=True)
class SweepConfig:
    seed: int = 0
    ratios: tuple = (0.8, 0.1, 0.1)
    profile: str = "desk"  # training profile for learned methods: "desk" | "full"
    max_queries: int | None = None
    timing: bool = True


def _train_config(method, m, cfg):
    kind = _LOSS_OF[method]
    if cfg.profile == "desk":
        return _train.desk_config(m=m, loss_kind=kind, seed=cfg.seed)
    return _train.TrainConfig(m=m, loss_kind=kind, seed=cfg.seed)


def build_embedder(method: str, m: int, ds: Dataset, splits, cfg: SweepConfig):
    """Construct (training if needed) the embedder for one method/m cell."""
    if method == "dft":
        return DftTruncationEmbedder(m)
    if method == "downsample":
        return DownSampleEmbedder(m)
    if method in _LOSS_OF:
        params = _train.train(ds, splits, _train_config(method, m, cfg))
        return LearnedEmbedder(params)
    raise ValueError(f"unknown method {method!r}")


def sweep(ds: Dataset, methods, m_values, k_values, cfg: SweepConfig = SweepConfig()) -> EvalReport:
    """Index the train split per method, query every test series, aggregate.

    The candidate pool is the training partition and each test series is one
    query, so a query never matches itself. The "exact" pseudo-method feeds
    the oracle to itself (rho=1, delta=0 rows; reported with m=0).
    """
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r} (choose from {METHODS})")
    splits = split(ds, cfg.ratios, cfg.seed)
    h = ds.normalized_matrix()
    train_rows = ds.rows_for(splits.train_ids)
    test_rows = ds.rows_for(splits.test_ids)
    if cfg.max_queries is not None:
        test_rows = test_rows[: cfg.max_queries]
    pool_h, pool_ids = h[train_rows], ds.ids[train_rows]
    q_h = h[test_rows]
    n_pool, n_q = len(train_rows), len(test_rows)

    d2_true = 2.0 - 2.0 * (q_h @ pool_h.T)  # (n_q, n_pool) exact distances
    exact_order = np.vstack([np.lexsort((pool_ids, d2_true[i])) for i in range(n_q)])
    col_of = {int(r): c for c, r in enumerate(pool_ids)}

    pair_s, pair_r = _pair_rows(ds, splits.test_ids, cfg.seed)

    report = EvalReport()
    for method in methods:
        for m in m_values if method != "exact" else (0,):
            for k in k_values:
                if k > n_pool:
                    raise KTooLarge(f"k={k} exceeds pool size {n_pool}")
            if method == "exact":
                report.rows.extend(_exact_rows(d2_true, pool_ids, k_values, cfg))
                continue
            embedder = build_embedder(method, m, ds, splits, cfg)
            t0 = time.perf_counter()
            emb_q = embedder.embed_matrix(q_h)
            embed_us = (time.perf_counter() - t0) / n_q * 1e6 if cfg.timing else float("nan")
            emb_pool = embedder.embed_matrix(pool_h)
            tree = KdTree(emb_pool, pool_ids)
            approx = _approximation_loss_rows(embedder, h[pair_s], h[pair_r])
            for k in k_values:
                rho_sum, delta_sum, lat = 0.0, 0.0, []
                for i in range(n_q):
                    t0 = time.perf_counter()
                    res = tree.top_k(emb_q[i], k)
                    lat.append((time.perf_counter() - t0) * 1e6)
                    f_cols = exact_order[i, :k]
                    fhat_cols = np.array([col_of[int(r)] for r in res.ids])
                    rho_sum += len(set(fhat_cols.tolist()) & set(f_cols.tolist())) / k
                    delta_sum += (d2_true[i, fhat_cols].sum() - d2_true[i, f_cols].sum()) / k
                q50, q99 = (
                    (float(np.percentile(lat, 50)), float(np.percentile(lat, 99)))
                    if cfg.timing
                    else (float("nan"), float("nan"))
                )
                report.rows.append(
                    ReportRow(method, m, k, rho_sum / n_q, delta_sum / n_q, approx, q50, q99, embed_us)
                )
    return report


def _exact_rows(d2_true, pool_ids, k_values, cfg):
    n_q = d2_true.shape[0]
    rows = []
    for k in k_values:
        lat = []
        for i in range(n_q):
            t0 = time.perf_counter()
            order = np.lexsort((pool_ids, d2_true[i]))[:k]
            lat.append((time.perf_counter() - t0) * 1e6)
        q50, q99 = (
            (float(np.percentile(lat, 50)), float(np.percentile(lat, 99)))
            if cfg.timing
            else (float("nan"), float("nan"))
        )
        rows.append(ReportRow("exact", 0, k, 1.0, 0.0, 0.0, q50, q99, 0.0))
    return rows


def latency_benchmark(
    n: int,
    m: int,
    k: int,
    n_queries: int = 200,
    seed: int = 0,
    series_length: int = 128,
    hidden_size: int = 128,
    params=None,
) -> dict:
    """Per-query latency of embed + k-d traversal over a random pool.

    The network defaults to a fresh initialization: latency depends on the
    architecture, not on the trained weights. Times are microseconds.
    """
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((n + n_queries, series_length))
    centered = raw - raw.mean(axis=1, keepdims=True)
    h = centered / np.linalg.norm(centered, axis=1, keepdims=True)
    if params is None:
        params = _train.init_params(feature_width(series_length), hidden_size, m, seed)
    emb_pool = forward_batch(params, features_matrix(h[:n]), smooth=False)

    t0 = time.perf_counter()
    tree = KdTree(emb_pool, np.arange(n))
    build_ms = (time.perf_counter() - t0) * 1e3

    embed_us, traverse_us, total_us = [], [], []
    for i in range(n, n + n_queries):
        row = h[i : i + 1]
        t0 = time.perf_counter()
        q = forward_batch(params, features_matrix(row), smooth=False)[0]
        t1 = time.perf_counter()
        tree.top_k(q, k)
        t2 = time.perf_counter()
        embed_us.append((t1 - t0) * 1e6)
        traverse_us.append((t2 - t1) * 1e6)
        total_us.append((t2 - t0) * 1e6)

    pct = lambda xs, p: float(np.percentile(xs, p))
    return {
        "n": n,
        "m": m,
        "k": k,
        "n_queries": n_queries,
        "build_ms": build_ms,
        "embed_q50_us": pct(embed_us, 50),
        "embed_q99_us": pct(embed_us, 99),
        "traverse_q50_us": pct(traverse_us, 50),
        "traverse_q99_us": pct(traverse_us, 99),
        "q50_us": pct(total_us, 50),
        "q99_us": pct(total_us, 99),
    }
