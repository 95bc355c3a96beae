"""Command-line front end: gen/ingest/split/train/index/query/eval/bench.

Config precedence is flags > --config JSON file > built-in defaults (the
full-scale training profile). Every run writes a manifest JSON recording the
subcommand, fully resolved parameters and SHA-256 hashes of inputs/outputs;
`replay_manifest` reruns a manifest and must reproduce binary artifacts
bit-identically.
"""

import argparse
import hashlib
import json
import sys

import numpy as np

from . import __version__
from .core import normalize
from .datasets import Dataset, SplitDataset, gen_example1, gen_example2, load_csv, save_csv, split
from .embed import DftTruncationEmbedder, DownSampleEmbedder, LearnedEmbedder, load_model, save_model
from .errors import CorrSpaceError, MissingArtifact, UsageError
from .evaluation import METHODS, EvalReport, SweepConfig, latency_benchmark, sweep
from .index import KdTree, load_index, save_index, threshold_radius_sq
from .train import APPROXIMATE, ORDER, TrainConfig, train

FULL_PROFILE = {"learning_rate": 0.01, "batch_size": 256, "iterations": 10000, "hidden_size": 1024}
DESK_PROFILE = {"learning_rate": 0.01, "batch_size": 64, "iterations": 2000, "hidden_size": 128}


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _hash_files(paths: dict) -> dict:
    return {name: {"path": str(p), "sha256": _sha256(p)} for name, p in paths.items() if p}


def _write_manifest(path, subcommand, params, inputs, outputs):
    doc = {
        "tool": "corrspace",
        "version": __version__,
        "subcommand": subcommand,
        "params": params,
        "inputs": _hash_files(inputs),
        "outputs": _hash_files(outputs),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve(ns, defaults: dict) -> dict:
    """flags > config file > defaults, for every key in `defaults`."""
    from_file = {}
    if getattr(ns, "config", None):
        try:
            with open(ns.config) as fh:
                from_file = json.load(fh)
        except FileNotFoundError:
            raise MissingArtifact(f"config file not found: {ns.config}")
        unknown = set(from_file) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    params = {}
    for key, default in defaults.items():
        flag = getattr(ns, key, None)
        params[key] = flag if flag is not None else from_file.get(key, default)
    return params


def _parse_ratios(value):
    parts = [float(x) for x in value.split(",")] if isinstance(value, str) else [float(x) for x in value]
    if len(parts) != 3:
        raise UsageError("ratios must be three comma-separated numbers")
    return tuple(parts)


def _parse_int_list(value):
    items = value.split(",") if isinstance(value, str) else value
    out = [int(x) for x in items]
    if not out:
        raise UsageError("expected a non-empty comma-separated list")
    return out


def _parse_str_list(value):
    items = [s.strip() for s in value.split(",")] if isinstance(value, str) else list(value)
    items = [s for s in items if s]
    if not items:
        raise UsageError("expected a non-empty comma-separated list")
    return items


def _save_split(splits: SplitDataset, path):
    doc = {
        "seed": int(splits.seed),
        "ratios": list(splits.ratios),
        "train_ids": splits.train_ids.tolist(),
        "val_ids": splits.val_ids.tolist(),
        "test_ids": splits.test_ids.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def _load_split(path) -> SplitDataset:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise MissingArtifact(f"split file not found: {path}")
    return SplitDataset(
        train_ids=np.array(doc["train_ids"], dtype=np.int64),
        val_ids=np.array(doc["val_ids"], dtype=np.int64),
        test_ids=np.array(doc["test_ids"], dtype=np.int64),
        seed=doc["seed"],
        ratios=tuple(doc["ratios"]),
    )


def _get_split(ds, params):
    if params.get("split"):
        return _load_split(params["split"])
    return split(ds, _parse_ratios(params["ratios"]), params["seed"])


def _embedder_for(method, m, model_path):
    if method == "dft":
        return DftTruncationEmbedder(m)
    if method == "downsample":
        return DownSampleEmbedder(m)
    if method in ("learned-approx", "learned-order"):
        if not model_path:
            raise MissingArtifact(f"method {method} requires --model")
        try:
            params = load_model(model_path)
        except FileNotFoundError:
            raise MissingArtifact(f"model file not found: {model_path}")
        return LearnedEmbedder(params)
    raise UsageError(f"unknown method {method!r}")


def _manifest_path(params, *fallback_outputs):
    if params.get("manifest"):
        return params["manifest"]
    for out in fallback_outputs:
        if out:
            return str(out) + ".manifest.json"
    return None


# ---------------------------------------------------------------- subcommands

GEN_DEFAULTS = {
    "family": None, "n": 2000, "length": 128, "m": 8, "eps": 0.01, "seed": 0,
    "output": None, "manifest": None,
}


def cmd_gen(ns):
    p = _resolve(ns, GEN_DEFAULTS)
    if p["family"] not in ("example1", "example2"):
        raise UsageError("--family must be example1 or example2")
    if not p["output"]:
        raise UsageError("--output is required")
    if p["family"] == "example1":
        ds = gen_example1(p["n"], p["length"], p["seed"])
    else:
        ds = gen_example2(p["n"], p["length"], p["m"], p["eps"], p["seed"])
    save_csv(ds, p["output"])
    _write_manifest(_manifest_path(p, p["output"]), "gen", p, {}, {"data": p["output"]})
    print(f"generated {ds.n} series of length {ds.length} -> {p['output']}")
    return 0


INGEST_DEFAULTS = {"input": None, "format": "csv", "output": None, "manifest": None}


def cmd_ingest(ns):
    p = _resolve(ns, INGEST_DEFAULTS)
    if not p["input"] or not p["output"]:
        raise UsageError("--input and --output are required")
    ds = load_csv(p["input"], p["format"])
    save_csv(ds, p["output"])
    _write_manifest(_manifest_path(p, p["output"]), "ingest", p, {"raw": p["input"]}, {"data": p["output"]})
    dropped = f" ({ds.n_constant_dropped} constant rows dropped)" if ds.n_constant_dropped else ""
    print(f"ingested {ds.n} series of length {ds.length}{dropped} -> {p['output']}")
    return 0


SPLIT_DEFAULTS = {
    "data": None, "format": "csv_id", "ratios": "0.8,0.1,0.1", "seed": 0,
    "output": None, "manifest": None,
}


def cmd_split(ns):
    p = _resolve(ns, SPLIT_DEFAULTS)
    if not p["data"] or not p["output"]:
        raise UsageError("--data and --output are required")
    ds = load_csv(p["data"], p["format"])
    splits = split(ds, _parse_ratios(p["ratios"]), p["seed"])
    _save_split(splits, p["output"])
    _write_manifest(_manifest_path(p, p["output"]), "split", p, {"data": p["data"]}, {"split": p["output"]})
    print(
        f"split {ds.n} series -> {len(splits.train_ids)} train / "
        f"{len(splits.val_ids)} val / {len(splits.test_ids)} test"
    )
    return 0


TRAIN_DEFAULTS = {
    "data": None, "format": "csv_id", "split": None, "ratios": "0.8,0.1,0.1",
    "loss": APPROXIMATE, "m": None, "desk": False,
    "learning_rate": None, "batch_size": None, "iterations": None, "hidden_size": None,
    "seed": 0, "model_out": None, "log_out": None, "manifest": None,
}


def cmd_train(ns):
    p = _resolve(ns, TRAIN_DEFAULTS)
    if not p["data"] or not p["model_out"]:
        raise UsageError("--data and --model-out are required")
    if p["m"] is None:
        raise UsageError("--m is required")
    profile = DESK_PROFILE if p["desk"] else FULL_PROFILE
    for key, value in profile.items():
        if p[key] is None:
            p[key] = value
    if p["log_out"] is None:
        p["log_out"] = str(p["model_out"]) + ".log.csv"
    ds = load_csv(p["data"], p["format"])
    splits = _get_split(ds, p)
    cfg = TrainConfig(
        m=p["m"], loss_kind=p["loss"], learning_rate=p["learning_rate"],
        batch_size=p["batch_size"], iterations=p["iterations"],
        hidden_size=p["hidden_size"], seed=p["seed"],
    )
    params = train(ds, splits, cfg, log_path=p["log_out"])
    save_model(params, p["model_out"])
    inputs = {"data": p["data"], "split": p["split"]}
    outputs = {"model": p["model_out"], "log": p["log_out"]}
    _write_manifest(_manifest_path(p, p["model_out"]), "train", p, inputs, outputs)
    with open(p["log_out"]) as fh:
        lines = fh.read().strip().splitlines()
    first, last = lines[1].split(","), lines[-1].split(",")
    print(
        f"trained {p['loss']} m={p['m']}: train loss {float(first[1]):.4g} -> "
        f"{float(last[1]):.4g} over {last[0]} iterations ({float(last[3]) / 1e3:.1f} s)"
    )
    print(f"model -> {p['model_out']}")
    return 0


INDEX_DEFAULTS = {
    "data": None, "format": "csv_id", "split": None, "partition": "all",
    "method": "dft", "m": None, "model": None, "output": None, "manifest": None,
}


def cmd_index(ns):
    p = _resolve(ns, INDEX_DEFAULTS)
    if not p["data"] or not p["output"]:
        raise UsageError("--data and --output are required")
    ds = load_csv(p["data"], p["format"])
    if p["partition"] != "all":
        if not p["split"]:
            raise UsageError("--partition needs --split")
        splits = _load_split(p["split"])
        ids = getattr(splits, f"{p['partition']}_ids", None)
        if ids is None:
            raise UsageError("--partition must be train, val, test or all")
        rows = ds.rows_for(ids)
    else:
        rows = np.arange(ds.n)
    if p["method"] in ("dft", "downsample") and p["m"] is None:
        raise UsageError(f"method {p['method']} requires --m")
    embedder = _embedder_for(p["method"], p["m"], p["model"])
    h = ds.normalized_matrix()[rows]
    tree = KdTree(embedder.embed_matrix(h), ds.ids[rows])
    meta = {
        "method": p["method"],
        "m": int(embedder.m),
        "series_length": int(ds.length),
        "model": str(p["model"]) if p["model"] else None,
    }
    save_index(tree, p["output"], meta)
    inputs = {"data": p["data"], "split": p["split"], "model": p["model"]}
    _write_manifest(_manifest_path(p, p["output"]), "index", p, inputs, {"index": p["output"]})
    print(f"indexed {tree.n} series (method={p['method']}, m={embedder.m}) -> {p['output']}")
    return 0


QUERY_DEFAULTS = {
    "index": None, "model": None, "data": None, "format": "csv_id",
    "query_id": None, "query_file": None, "k": 10, "threshold": None, "slack": 1.0,
    "exact": False, "manifest": None,
}


def cmd_query(ns):
    p = _resolve(ns, QUERY_DEFAULTS)
    if (p["query_id"] is None) == (p["query_file"] is None):
        raise UsageError("exactly one of --query-id / --query-file is required")
    if p["exact"]:
        return _query_exact(p)
    return _query_index(p)


def _query_series(p, ds):
    """(label, normalized values, excluded id) per query, in input order."""
    if p["query_id"] is not None:
        if ds is None:
            raise UsageError("--query-id requires --data")
        rows = np.flatnonzero(ds.ids == p["query_id"])
        if len(rows) == 0:
            raise MissingArtifact(f"id {p['query_id']} not in {p['data']}")
        ns = normalize(ds.series(int(rows[0])))
        return [(f"id {p['query_id']}", ns.values, int(p["query_id"]))]
    qds = load_csv(p["query_file"], "csv")
    out = []
    for i in range(qds.n):
        out.append((f"{p['query_file']}[{i}]", normalize(qds.series(i)).values, None))
    return out


def _print_hits(ids, d2, corr):
    print("id dist2 corr_est")
    for i, d, c in zip(ids, d2, corr):
        print(f"{int(i)} {d:.9g} {c:.9g}")


def _query_exact(p):
    if not p["data"]:
        raise UsageError("--exact requires --data")
    ds = load_csv(p["data"], p["format"])
    h = ds.normalized_matrix()
    for label, q, self_id in _query_series(p, ds):
        corr = np.clip(h @ q, -1.0, 1.0)
        d2 = 2.0 - 2.0 * corr
        keep = np.ones(ds.n, dtype=bool)
        if self_id is not None:
            keep &= ds.ids != self_id
        order = np.lexsort((ds.ids, d2))
        order = order[keep[order]]
        if p["threshold"] is not None:
            order = order[corr[order] >= p["threshold"]]
        else:
            order = order[: p["k"]]
        print(f"# query {label} (exact)")
        _print_hits(ds.ids[order], d2[order], corr[order])
    return 0


class _AsNormalized:
    """Adapter giving already-normalized values the NormalizedSeries shape."""

    def __init__(self, values):
        self.values = values


def _query_index(p):
    if not p["index"]:
        raise UsageError("--index is required (or pass --exact)")
    try:
        tree, meta = load_index(p["index"])
    except FileNotFoundError:
        raise MissingArtifact(f"index file not found: {p['index']}")
    model_path = p["model"] or meta.get("model")
    embedder = _embedder_for(meta["method"], meta.get("m"), model_path)
    ds = load_csv(p["data"], p["format"]) if p["data"] else None
    for label, q_values, self_id in _query_series(p, ds):
        q = embedder.embed(_AsNormalized(q_values))
        if p["threshold"] is not None:
            res = tree.within_radius(q, threshold_radius_sq(p["threshold"], p["slack"]))
            ids, d2 = res.ids, res.distances_sq
        else:
            res = tree.top_k(q, min(p["k"] + (self_id is not None), tree.n))
            ids, d2 = res.ids, res.distances_sq
        if self_id is not None:
            keep = ids != self_id
            ids, d2 = ids[keep], d2[keep]
        if p["threshold"] is None:
            ids, d2 = ids[: p["k"]], d2[: p["k"]]
        print(f"# query {label} (method={meta['method']}, m={meta['m']})")
        _print_hits(ids, d2, np.clip(1.0 - d2, -1.0, 1.0))
    return 0


EVAL_DEFAULTS = {
    "data": None, "format": "csv_id", "methods": None, "m_values": "8",
    "k_values": "10,100", "seed": 0, "ratios": "0.8,0.1,0.1", "desk": False,
    "max_queries": None, "timing": True, "report_out": None, "manifest": None,
}


def cmd_eval(ns):
    p = _resolve(ns, EVAL_DEFAULTS)
    if not p["data"] or not p["report_out"]:
        raise UsageError("--data and --report-out are required")
    if not p["methods"]:
        raise UsageError("--methods is required (comma-separated)")
    methods = _parse_str_list(p["methods"])
    for method in methods:
        if method not in METHODS:
            raise UsageError(f"unknown method {method!r} (choose from {', '.join(METHODS)})")
    ds = load_csv(p["data"], p["format"])
    cfg = SweepConfig(
        seed=p["seed"], ratios=_parse_ratios(p["ratios"]),
        profile="desk" if p["desk"] else "full",
        max_queries=p["max_queries"], timing=bool(p["timing"]),
    )
    report = sweep(ds, methods, _parse_int_list(p["m_values"]), _parse_int_list(p["k_values"]), cfg)
    report.save_csv(p["report_out"])
    _write_manifest(
        _manifest_path(p, p["report_out"]), "eval", p, {"data": p["data"]}, {"report": p["report_out"]}
    )
    print(report.table())
    print(f"report -> {p['report_out']}")
    return 0


BENCH_DEFAULTS = {
    "n": 10000, "m": 16, "k": 100, "queries": 200, "length": 128,
    "hidden_size": 128, "seed": 0, "model": None, "report_out": None, "manifest": None,
}


def cmd_bench(ns):
    p = _resolve(ns, BENCH_DEFAULTS)
    params = None
    if p["model"]:
        try:
            params = load_model(p["model"])
        except FileNotFoundError:
            raise MissingArtifact(f"model file not found: {p['model']}")
    stats = latency_benchmark(
        p["n"], p["m"], p["k"], n_queries=p["queries"], seed=p["seed"],
        series_length=p["length"], hidden_size=p["hidden_size"], params=params,
    )
    for key in ("q50_us", "q99_us", "embed_q50_us", "traverse_q50_us", "build_ms"):
        print(f"{key} = {stats[key]:.1f}")
    if p["report_out"]:
        with open(p["report_out"], "w") as fh:
            json.dump(stats, fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_manifest(
            _manifest_path(p, p["report_out"]), "bench", p,
            {"model": p["model"]}, {"report": p["report_out"]},
        )
    return 0


# ------------------------------------------------------------------- plumbing

def _add_common(sp):
    sp.add_argument("--config", help="JSON file of parameter defaults")
    sp.add_argument("--manifest", help="manifest output path")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="corrspace",
        description="Correlation-preserving time-series embeddings with exact k-d tree search.",
    )
    ap.add_argument("--version", action="version", version=f"corrspace {__version__}")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("gen", help="generate a synthetic dataset")
    sp.add_argument("--family", choices=["example1", "example2"])
    sp.add_argument("--n", type=int)
    sp.add_argument("--length", type=int, help="series length M")
    sp.add_argument("--m", type=int, help="low-noise coefficient count (example2)")
    sp.add_argument("--eps", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--output")
    _add_common(sp)
    sp.set_defaults(func=cmd_gen)

    sp = sub.add_parser("ingest", help="validate and canonicalize a dataset")
    sp.add_argument("--input")
    sp.add_argument("--format", choices=["csv", "csv_id", "ucr"])
    sp.add_argument("--output")
    _add_common(sp)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("split", help="write a train/val/test id partition")
    sp.add_argument("--data")
    sp.add_argument("--format", choices=["csv", "csv_id", "ucr"])
    sp.add_argument("--ratios")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--output")
    _add_common(sp)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("train", help="train a learned embedder")
    sp.add_argument("--data")
    sp.add_argument("--format", choices=["csv", "csv_id", "ucr"])
    sp.add_argument("--split", help="split JSON from the split subcommand")
    sp.add_argument("--ratios", help="used when no --split is given")
    sp.add_argument("--loss", choices=[APPROXIMATE, ORDER])
    sp.add_argument("--m", type=int, help="embedding dimension")
    sp.add_argument("--desk", action=argparse.BooleanOptionalAction, help="small CI-scale profile")
    sp.add_argument("--learning-rate", type=float)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--hidden-size", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--model-out")
    sp.add_argument("--log-out")
    _add_common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("index", help="embed a dataset and build the k-d tree")
    sp.add_argument("--data")
    sp.add_argument("--format", choices=["csv", "csv_id", "ucr"])
    sp.add_argument("--split")
    sp.add_argument("--partition", choices=["train", "val", "test", "all"])
    sp.add_argument("--method", choices=[m for m in METHODS if m != "exact"])
    sp.add_argument("--m", type=int)
    sp.add_argument("--model", help="CHR1 model file (learned methods)")
    sp.add_argument("--output")
    _add_common(sp)
    sp.set_defaults(func=cmd_index)

    sp = sub.add_parser("query", help="top-k or threshold search against an index")
    sp.add_argument("--index")
    sp.add_argument("--model")
    sp.add_argument("--data", help="dataset (for --query-id and --exact)")
    sp.add_argument("--format", choices=["csv", "csv_id", "ucr"])
    sp.add_argument("--query-id", type=int)
    sp.add_argument("--query-file", help="CSV of query series (no id column)")
    sp.add_argument("--k", type=int)
    sp.add_argument("--threshold", type=float, help="minimum correlation eta")
    sp.add_argument("--slack", type=float, help="radius multiplier for --threshold")
    sp.add_argument("--exact", action=argparse.BooleanOptionalAction, help="brute-force oracle")
    _add_common(sp)
    sp.set_defaults(func=cmd_query)

    sp = sub.add_parser("eval", help="precision/gap/latency sweep over methods")
    sp.add_argument("--data")
    sp.add_argument("--format", choices=["csv", "csv_id", "ucr"])
    sp.add_argument("--methods", help=f"comma-separated from: {', '.join(METHODS)}")
    sp.add_argument("--m-values")
    sp.add_argument("--k-values")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--ratios")
    sp.add_argument("--desk", action=argparse.BooleanOptionalAction, help="desk-profile training")
    sp.add_argument("--max-queries", type=int)
    sp.add_argument("--timing", action=argparse.BooleanOptionalAction,
                    help="--no-timing writes nan latencies for bit-reproducible reports")
    sp.add_argument("--report-out")
    _add_common(sp)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("bench", help="query latency benchmark")
    sp.add_argument("--n", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--queries", type=int)
    sp.add_argument("--length", type=int)
    sp.add_argument("--hidden-size", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--model")
    sp.add_argument("--report-out")
    _add_common(sp)
    sp.set_defaults(func=cmd_bench)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    try:
        return ns.func(ns)
    except CorrSpaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


def _argv_from_params(subcommand, params) -> list:
    argv = [subcommand]
    for key, value in params.items():
        if value is None or key == "manifest" and not value:
            continue
        flag = "--" + key.replace("_", "-")
        if isinstance(value, bool):
            argv.append(flag if value else f"--no-{flag[2:]}")
        elif isinstance(value, (list, tuple)):
            argv.extend([flag, ",".join(str(v) for v in value)])
        else:
            argv.extend([flag, str(value)])
    return argv


def replay_manifest(manifest_path, check_inputs=True) -> int:
    """Rerun a recorded run; binary outputs must come out bit-identical."""
    with open(manifest_path) as fh:
        doc = json.load(fh)
    if check_inputs:
        for name, entry in doc["inputs"].items():
            if _sha256(entry["path"]) != entry["sha256"]:
                raise MissingArtifact(f"input {name} changed since manifest: {entry['path']}")
    return main(_argv_from_params(doc["subcommand"], doc["params"]))


if __name__ == "__main__":
    sys.exit(main())
