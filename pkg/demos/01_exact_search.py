"""
Exact nearest-neighbor search
=============================

The smallest useful workflow: a collection with a flat (linear scan)
index, a few upserts, a query, a delete.
"""

import tempfile

import numpy as np

from vecdb.engine import Database
from vecdb.types import CollectionConfig, DistanceMetric, Entity, FlatParams

rng = np.random.default_rng(7)

with tempfile.TemporaryDirectory() as tmp:
    db = Database(tmp)

    col = db.create_collection(
        CollectionConfig(
            name="articles",
            dim=32,
            metric=DistanceMetric.COSINE,
            index=FlatParams(),
        )
    )

    # ids are unsigned 64-bit integers, vectors any sequence of floats,
    # metadata a flat map of str/int/float/bool values
    result = col.upsert(
        [
            Entity(
                id=i,
                vector=rng.standard_normal(32),
                metadata={"topic": ("sports", "politics")[i % 2], "length": 100 + i},
            )
            for i in range(500)
        ]
    )
    print(f"inserted={result.inserted} replaced={result.replaced}")

    # distances for cosine are 1 - cos, so 0 means identical direction
    query = rng.standard_normal(32)
    res = col.search(query, k=5)
    for id, dist in res.hits:
        print(f"  id={id:<4d} distance={dist:.4f} topic={col.metadata_of(id)['topic']}")

    # searching for a stored vector finds it at distance ~0
    stored = col.get(42)
    top = col.search(stored.vector, k=1).hits[0]
    print(f"query by entity 42's own vector -> id={top[0]}, distance={top[1]:.2e}")

    # upsert with an existing id replaces; delete removes
    col.upsert([Entity(id=42, vector=rng.standard_normal(32))])
    print("deleted:", col.delete([0, 1, 2]))
    print("count:", col.count)

    db.close()
