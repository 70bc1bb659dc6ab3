"""
Graph index and the ef knob
===========================

A layered proximity graph answers queries by greedy descent plus a
bounded best-first sweep of the bottom layer. The beam width ef trades
recall for speed: small beams visit few nodes and miss some true
neighbors, a beam as wide as the collection degenerates to exact search.

This script builds the same 4,000-vector collection twice (flat and
graph) and sweeps ef, measuring recall against the flat answers.
"""

import tempfile
import time

import numpy as np

from vecdb.engine import Database
from vecdb.types import (
    CollectionConfig,
    DistanceMetric,
    Entity,
    FlatParams,
    HnswParams,
)

N, DIM, K = 4000, 32, 10
rng = np.random.default_rng(11)
vectors = rng.standard_normal((N, DIM)).astype(np.float32)
queries = rng.standard_normal((50, DIM)).astype(np.float32)


def build(db, name, index):
    col = db.create_collection(
        CollectionConfig(name=name, dim=DIM, metric=DistanceMetric.EUCLIDEAN, index=index)
    )
    t0 = time.perf_counter()
    for start in range(0, N, 1000):
        col.upsert([Entity(id=i, vector=vectors[i]) for i in range(start, start + 1000)])
    print(f"{name}: built in {time.perf_counter() - t0:.2f}s")
    return col


with tempfile.TemporaryDirectory() as tmp:
    db = Database(tmp)
    flat = build(db, "flat", FlatParams())
    graph = build(db, "graph", HnswParams(m=16, ef_construction=200, seed=0))

    truth = [{id for id, _ in flat.search(q, k=K).hits} for q in queries]

    print(f"\n{'ef':>6} {'recall':>8} {'evals/query':>12} {'ms/query':>10}")
    for ef in (10, 32, 64, 128, 512, N):
        hits_total, evals, t0 = 0, 0, time.perf_counter()
        for q, true_ids in zip(queries, truth):
            res = graph.search(q, k=K, ef=ef)
            hits_total += len({id for id, _ in res.hits} & true_ids)
            evals += res.stats.distance_evals
        ms = (time.perf_counter() - t0) * 1000 / len(queries)
        recall = hits_total / (K * len(queries))
        print(f"{ef:>6} {recall:>8.3f} {evals // len(queries):>12} {ms:>10.2f}")

    # the flat scan always evaluates every vector; that's the baseline
    res = flat.search(queries[0], k=K)
    print(f"\nflat scan evaluates {res.stats.distance_evals} distances per query")
    db.close()
