"""Benchmark harness: fvecs/ivecs corpora, ground truth, recall and
distance-ratio metrics, timed index builds and query sweeps.

Dataset layout: a directory holding ``*base.fvecs`` and ``*query.fvecs``,
optionally ``*groundtruth.ivecs``. Both files use the classic format of
one little-endian int32 dimension prefix per record.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .distance import reported_distance
from .engine import Database
from .errors import MalformedBytes
from .flat import FlatIndex
from .types import (
    BqParams,
    CollectionConfig,
    DistanceMetric,
    Entity,
    FlatParams,
    HnswParams,
    PqParams,
)


# ------------------------------------------------------------ file formats


def _load_vecs(path: str, kind: str) -> np.ndarray:
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % 4 != 0:
        raise MalformedBytes(
            f"{path}: trailing-garbage: {raw.size % 4} stray bytes at the end"
        )
    data = raw.view("<i4")
    if data.size == 0:
        return np.zeros((0, 0), dtype="<f4" if kind == "f" else "<i4")
    d = int(data[0])
    if d <= 0:
        raise MalformedBytes(f"{path}: inconsistent-dimension: record 0 declares {d}")
    span = d + 1
    nfull = data.size // span
    heads = data[: nfull * span : span]
    bad = np.flatnonzero(heads != d)
    if bad.size:
        raise MalformedBytes(
            f"{path}: inconsistent-dimension: record {int(bad[0])} declares "
            f"{int(heads[bad[0]])}, expected {d}"
        )
    rem = data.size - nfull * span
    if rem:
        head = int(data[nfull * span])
        if head != d:
            raise MalformedBytes(
                f"{path}: inconsistent-dimension: record {nfull} declares "
                f"{head}, expected {d}"
            )
        raise MalformedBytes(
            f"{path}: trailing-garbage: record {nfull} is truncated"
        )
    body = data.reshape(nfull, span)[:, 1:].copy()
    if kind == "f":
        return body.view("<f4")
    return body


def load_fvecs(path: str) -> np.ndarray:
    """Read an fvecs file into an (n, d) float32 matrix."""
    return _load_vecs(path, "f")


def load_ivecs(path: str) -> np.ndarray:
    """Read an ivecs file into an (n, d) int32 matrix."""
    return _load_vecs(path, "i")


def write_fvecs(path: str, mat: np.ndarray) -> None:
    mat = np.ascontiguousarray(mat, dtype="<f4")
    n, d = mat.shape
    out = np.empty((n, d + 1), dtype="<i4")
    out[:, 0] = d
    out[:, 1:] = mat.view("<i4")
    out.tofile(path)

def write_ivecs(path: str, mat: np.ndarray) -> None:
    mat = np.ascontiguousarray(mat, dtype="<i4")
    n, d = mat.shape
    out = np.empty((n, d + 1), dtype="<i4")
    out[:, 0] = d
    out[:, 1:] = mat
    out.tofile(path)


# ---------------------------------------------------------------- datasets


@dataclass
class Dataset:
    name: str
    base: np.ndarray
    queries: np.ndarray
    ground_truth: np.ndarray | None = None


def _find_one(directory: str, suffix: str) -> str | None:
    hits = sorted(
        f for f in os.listdir(directory) if f.endswith(suffix)
    )
    return os.path.join(directory, hits[0]) if hits else None


def resolve_dataset(
    spec: str,
    data_dir: str | None = None,
    subset: int | None = None,
    queries: int | None = None,
    full: bool = False,
) -> Dataset:
    """Locate and load a dataset directory.

    ``spec`` is either a directory path or a name under ``data_dir``
    (falling back to $QX_BENCH_DATA, then ./data). The well-known name
    "sift" defaults to its first-10,000 / 100-query subset unless
    ``full`` is set.
    """
    if os.path.isdir(spec):
        directory = spec
    else:
        root = data_dir or os.environ.get("QX_BENCH_DATA") or "./data"
        directory = os.path.join(root, spec)
        if not os.path.isdir(directory):
            raise FileNotFoundError(
                f"dataset {spec!r} not found (looked in {directory})"
            )
    name = os.path.basename(os.path.normpath(directory))
    base_path = _find_one(directory, "base.fvecs")
    query_path = _find_one(directory, "query.fvecs")
    if base_path is None or query_path is None:
        raise FileNotFoundError(
            f"{directory} needs *base.fvecs and *query.fvecs"
        )
    if name.lower().startswith("sift") and not full:
        subset = 10000 if subset is None else subset
        queries = 100 if queries is None else queries
    base = load_fvecs(base_path)
    qmat = load_fvecs(query_path)
    gt = None
    gt_path = _find_one(directory, "groundtruth.ivecs") or _find_one(
        directory, "gt.ivecs"
    )
    subsetted = False
    if subset is not None and subset < base.shape[0]:
        base = base[:subset]
        subsetted = True
    if queries is not None and queries < qmat.shape[0]:
        qmat = qmat[:queries]
    if gt_path is not None and not subsetted:
        gt = load_ivecs(gt_path)[: qmat.shape[0]]
    return Dataset(name=name, base=base, queries=qmat, ground_truth=gt)


def compute_ground_truth(
    base: np.ndarray,
    queries: np.ndarray,
    k: int,
    metric: DistanceMetric = DistanceMetric.EUCLIDEAN,
) -> np.ndarray:
    """Exact top-k row indices per query, ties to the lower index."""
    n = base.shape[0]
    index = FlatIndex.from_arrays(
        base.shape[1], metric, False, np.arange(n, dtype=np.uint64), base
    )
    out = np.empty((queries.shape[0], min(k, n)), dtype=np.int32)
    for qi in range(queries.shape[0]):
        res = index.search(queries[qi], k)
        out[qi] = [id for id, _ in res.hits]
    return out


def _cached_ground_truth(
    directory: str | None, ds: Dataset, k: int, metric: DistanceMetric
) -> np.ndarray:
    if ds.ground_truth is not None and ds.ground_truth.shape[1] >= k:
        return ds.ground_truth[:, :k]
    tag = (
        f".gt-{metric.value}-k{k}-n{ds.base.shape[0]}-q{ds.queries.shape[0]}.ivecs"
    )
    cache = os.path.join(directory, tag) if directory else None
    if cache and os.path.exists(cache):
        gt = load_ivecs(cache)
        if gt.shape == (ds.queries.shape[0], k):
            return gt
    gt = compute_ground_truth(ds.base, ds.queries, k, metric)
    if cache:
        try:
            write_ivecs(cache, gt)
        except OSError:
            pass
    return gt


# ----------------------------------------------------------------- metrics


def recall_at_k(found: list[list[int]], truth: np.ndarray, k: int) -> float:
    """Mean fraction of the true top-k recovered per query."""
    total = 0.0
    for row, true_row in zip(found, truth):
        total += len(set(row[:k]) & set(int(x) for x in true_row[:k])) / k
    return total / len(found) if found else 0.0


def mean_fraction_returned(found: list[list[int]], k: int) -> float:
    if not found:
        return 0.0
    return sum(len(row) / k for row in found) / len(found)


def last_distances_ratio(
    found_last: list[float | None], true_last: list[float]
) -> tuple[float, int]:
    """Mean of (returned kth distance / true kth distance) over queries.

    A query whose true kth distance is zero contributes ratio 1 when the
    returned distance is also zero and is otherwise excluded; the second
    return value counts the exclusions.
    """
    ratios = []
    excluded = 0
    for r, t in zip(found_last, true_last):
        if r is None:
            excluded += 1
            continue
        if t == 0.0:
            if r == 0.0:
                ratios.append(1.0)
            else:
                excluded += 1
            continue
        ratios.append(r / t)
    mean = sum(ratios) / len(ratios) if ratios else float("nan")
    return mean, excluded


# --------------------------------------------------------------- bench run


def run_benchmark(
    dataset: Dataset,
    metric: DistanceMetric = DistanceMetric.EUCLIDEAN,
    index: HnswParams | FlatParams | None = None,
    quantization: PqParams | BqParams | None = None,
    efs: list[int] | None = None,
    k: int = 10,
    seed: int = 0,
    parallel: int = 1,
    data_dir: str | None = None,
    progress=None,
) -> dict:
    """Build a collection over the dataset and sweep query settings.

    Returns the report as a plain dict (also json-serializable).
    """
    if index is None:
        index = HnswParams(seed=seed)
    elif isinstance(index, HnswParams):
        index = HnswParams(index.m, index.ef_construction, seed)
    efs = efs or [64]
    base, queries = dataset.base, dataset.queries
    say = progress or (lambda msg: None)

    say(f"ground truth: {queries.shape[0]} queries, k={k}")
    truth = _cached_ground_truth(data_dir, dataset, k, metric)
    true_last = [
        reported_distance(
            _true_kth_internal(base, queries[qi], truth[qi], metric), metric
        )
        for qi in range(queries.shape[0])
    ]

    with tempfile.TemporaryDirectory(prefix="vecdb-bench-") as tmp:
        db = Database(tmp)
        t0 = time.perf_counter()
        col = db.create_collection(
            CollectionConfig(
                name="bench",
                dim=base.shape[1],
                metric=metric,
                index=index,
                quantization=quantization,
            )
        )
        construction = time.perf_counter() - t0

        say(f"inserting {base.shape[0]} vectors")
        t0 = time.perf_counter()
        batch = 1000
        for start in range(0, base.shape[0], batch):
            stop = min(start + batch, base.shape[0])
            col.upsert(
                [Entity(id=i, vector=base[i]) for i in range(start, stop)]
            )
        insertion = time.perf_counter() - t0
        say(f"insertion finished in {insertion:.2f}s")

        runs = []
        for ef in efs if isinstance(index, HnswParams) else [None]:
            say(f"searching, ef={ef}")

            def one(qi: int):
                res = col.search(queries[qi], k=k, ef=ef)
                return res.hits

            t0 = time.perf_counter()
            if parallel > 1:
                with ThreadPoolExecutor(max_workers=parallel) as pool:
                    all_hits = list(pool.map(one, range(queries.shape[0])))
            else:
                all_hits = [one(qi) for qi in range(queries.shape[0])]
            elapsed = time.perf_counter() - t0

            found = [[id for id, _ in hits] for hits in all_hits]
            found_last = [hits[-1][1] if hits else None for hits in all_hits]
            ratio, excluded = last_distances_ratio(found_last, true_last)
            runs.append(
                {
                    "ef": ef,
                    "search_seconds": elapsed,
                    "qps": queries.shape[0] / elapsed if elapsed > 0 else 0.0,
                    "recall": recall_at_k(found, truth, k),
                    "last_distances_ratio": ratio,
                    "mean_fraction_returned": mean_fraction_returned(found, k),
                    "zero_distance_exclusions": excluded,
                }
            )
        db.close()

    return {
        "dataset": dataset.name,
        "n_base": int(base.shape[0]),
        "n_queries": int(queries.shape[0]),
        "dim": int(base.shape[1]),
        "metric": metric.value,
        "index": _index_doc(index),
        "quantization": _quant_doc(quantization),
        "k": k,
        "seed": seed,
        "parallel": parallel,
        "construction_seconds": construction,
        "insertion_seconds": insertion,
        "runs": runs,
    }


def _true_kth_internal(base, query, truth_row, metric) -> float:
    from .distance import batch_distances

    d = batch_distances(query, base[truth_row], metric)
    if metric is DistanceMetric.DOT:
        d = -d
    return float(d[-1])


def _index_doc(index) -> dict:
    if isinstance(index, HnswParams):
        return {
            "type": "hnsw",
            "m": index.m,
            "ef_construction": index.ef_construction,
        }
    return {"type": "flat"}


def _quant_doc(q) -> dict:
    if isinstance(q, PqParams):
        return {"type": "pq", "m": q.m, "k": q.k}
    if isinstance(q, BqParams):
        return {"type": "bq", "m": q.m}
    return {"type": "none"}


def format_report(report: dict) -> str:
    """Human-readable table, one metric per row."""
    rows = [
        ("dataset", report["dataset"]),
        ("base / queries / dim", f"{report['n_base']} / {report['n_queries']} / {report['dim']}"),
        ("metric", report["metric"]),
        ("index", json.dumps(report["index"])),
        ("quantization", json.dumps(report["quantization"])),
        ("construction time (s)", f"{report['construction_seconds']:.4f}"),
        ("insertion time (s)", f"{report['insertion_seconds']:.2f}"),
    ]
    for run in report["runs"]:
        tag = f", ef={run['ef']}" if run["ef"] is not None else ""
        rows.append((f"search time (s){tag}", f"{run['search_seconds']:.2f}"))
        rows.append((f"qps{tag}", f"{run['qps']:.2f}"))
        rows.append((f"recall@{report['k']}{tag}", f"{run['recall']:.4f}"))
        rows.append(
            (f"last distances ratio{tag}", f"{run['last_distances_ratio']:.4f}")
        )
        rows.append(
            (
                f"mean fraction returned{tag}",
                f"{run['mean_fraction_returned']:.4f}",
            )
        )
    width = max(len(name) for name, _ in rows) + 2
    return "\n".join(f"{name:<{width}}{value}" for name, value in rows)


# -------------------------------------------------------------------- cli


def _parse_quant(spec: str | None):
    if spec is None or spec == "none":
        return None
    parts = spec.split(":")
    if parts[0] == "pq" and len(parts) == 3:
        return PqParams(m=int(parts[1]), k=int(parts[2]))
    if parts[0] == "bq" and len(parts) == 2:
        return BqParams(m=int(parts[1]))
    raise ValueError(f"bad quantization spec {spec!r} (pq:M:K or bq:M)")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="vecdb-bench")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="build an index over a dataset and measure recall")
    run.add_argument("--dataset", required=True, help="directory or named dataset")
    run.add_argument("--data-dir", default=None, help="root holding named datasets")
    run.add_argument(
        "--metric",
        default="euclidean",
        choices=[m.value for m in DistanceMetric],
    )
    run.add_argument("--index", default="hnsw", choices=["hnsw", "flat"])
    run.add_argument("--m", type=int, default=16)
    run.add_argument("--ef-construction", type=int, default=200)
    run.add_argument("--ef", default="64", help="comma-separated beam widths")
    run.add_argument("--k", type=int, default=10)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--quantization", default=None, help="pq:M:K or bq:M")
    run.add_argument("--out", default=None, help="write the json report here")
    run.add_argument("--full", action="store_true", help="no subset defaults")
    run.add_argument("--subset", type=int, default=None, help="first N base vectors")
    run.add_argument("--queries", type=int, default=None, help="first N queries")
    run.add_argument("--parallel", type=int, default=1)
    run.add_argument("--assert", dest="check", action="store_true")
    run.add_argument("--min-recall", type=float, default=0.97)
    run.add_argument("--max-ratio", type=float, default=1.01)
    run.add_argument("--min-fraction", type=float, default=1.0)
    args = parser.parse_args(argv)

    dataset = resolve_dataset(
        args.dataset,
        data_dir=args.data_dir,
        subset=args.subset,
        queries=args.queries,
        full=args.full,
    )
    directory = args.dataset if os.path.isdir(args.dataset) else None
    metric = DistanceMetric(args.metric)
    index = (
        HnswParams(m=args.m, ef_construction=args.ef_construction, seed=args.seed)
        if args.index == "hnsw"
        else FlatParams()
    )
    report = run_benchmark(
        dataset,
        metric=metric,
        index=index,
        quantization=_parse_quant(args.quantization),
        efs=[int(x) for x in args.ef.split(",") if x],
        k=args.k,
        seed=args.seed,
        parallel=args.parallel,
        data_dir=directory,
        progress=lambda msg: print(f"[bench] {msg}", file=sys.stderr),
    )
    print(format_report(report))
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report, f, indent=2)
        print(f"report written to {args.out}", file=sys.stderr)
    if args.check:
        for run_doc in report["runs"]:
            if (
                run_doc["recall"] < args.min_recall
                or not run_doc["last_distances_ratio"] <= args.max_ratio
                or run_doc["mean_fraction_returned"] < args.min_fraction
            ):
                print(
                    f"threshold failure at ef={run_doc['ef']}", file=sys.stderr
                )
                return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
