"""
Metadata-filtered search
========================

Filters are conjunctions of Eq / Range / In predicates over the entity
metadata. The engine picks its strategy by how many entities match:

- small subsets: gather the matching vectors, score them exactly
- large subsets: run the graph search with non-matching nodes routed
  through (usable as stepping stones, never returned), widening the
  beam by the inverse selectivity

Both return the same kind of answer; the cutover is just economics.
"""

import tempfile

import numpy as np

from vecdb.engine import Database
from vecdb.filters import Eq, Filter, In, Range
from vecdb.types import CollectionConfig, DistanceMetric, Entity, HnswParams

N = 4000
rng = np.random.default_rng(31)

with tempfile.TemporaryDirectory() as tmp:
    # threshold 500: subsets up to 500 scan, larger ones walk the graph
    db = Database(tmp, filtered_scan_threshold=500)
    col = db.create_collection(
        CollectionConfig(
            name="products",
            dim=24,
            metric=DistanceMetric.EUCLIDEAN,
            index=HnswParams(m=8, ef_construction=100, seed=0),
        )
    )
    for start in range(0, N, 1000):
        col.upsert(
            [
                Entity(
                    id=i,
                    vector=rng.standard_normal(24),
                    metadata={
                        "category": ("book", "game", "tool", "food")[i % 4],
                        "price": round(float(rng.uniform(1, 100)), 2),
                        "in_stock": bool(i % 5),
                    },
                )
                for i in range(start, start + 1000)
            ]
        )

    q = rng.standard_normal(24)

    examples = [
        ("books only", Filter((Eq("category", "book"),))),
        ("cheap tools", Filter((Eq("category", "tool"), Range("price", max=10)))),
        ("in stock, mid-price", Filter((Eq("in_stock", True), Range("price", min=40, max=60)))),
        ("books or games", Filter((In("category", ("book", "game")),))),
        ("everything", Filter(())),
    ]

    for label, filt in examples:
        res = col.search(q, k=5, filter=filt)
        print(f"{label}:")
        for id, dist in res.hits:
            md = col.metadata_of(id)
            print(f"  id={id:<5d} d={dist:.3f} {md['category']:<5} "
                  f"${md['price']:<6} stock={md['in_stock']}")

    # a filter nothing matches returns an empty result, not an error
    print("no matches:", col.search(q, k=5, filter=Filter((Eq("category", "car"),))).hits)

    # predicates check types strictly; a range over strings is an error
    try:
        col.search(q, k=5, filter=Filter((Range("category", min=1),)))
    except Exception as e:
        print(f"range over a string field -> {type(e).__name__}: {e}")

    db.close()
