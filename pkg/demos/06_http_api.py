"""
The HTTP service
================

Every engine capability is reachable over JSON endpoints. A real
deployment runs `vecdb-server --port 6333 --data-dir ./data`; this
script mounts the same app in-process so it runs anywhere.

    PUT    /collections/{name}                create
    GET    /collections/{name}                config + count
    DELETE /collections/{name}                drop
    POST   /collections/{name}/points         upsert
    POST   /collections/{name}/points/delete  delete by id
    POST   /collections/{name}/search         query
"""

import json
import tempfile
import warnings

import numpy as np

warnings.filterwarnings("ignore", message=".*starlette.testclient.*")
from fastapi.testclient import TestClient  # noqa: E402

from vecdb.engine import Database
from vecdb.http import create_app

rng = np.random.default_rng(59)

with tempfile.TemporaryDirectory() as tmp:
    db = Database(tmp)
    client = TestClient(create_app(db))

    r = client.put(
        "/collections/docs",
        json={
            "dim": 16,
            "metric": "cosine",
            "index": {"type": "hnsw", "m": 16, "ef_construction": 200},
        },
    )
    print("create:", r.status_code, r.json())

    points = [
        {
            "id": i,
            "vector": [float(x) for x in rng.standard_normal(16)],
            "metadata": {"lang": ("en", "de", "fr")[i % 3]},
        }
        for i in range(300)
    ]
    # one bad point on purpose: per-item statuses, good ones still land
    points[7]["vector"] = points[7]["vector"][:-1]
    r = client.post("/collections/docs/points", json={"points": points})
    doc = r.json()
    print(f"upsert: inserted={doc['inserted']}, statuses[7]={doc['statuses'][7]}")

    r = client.post(
        "/collections/docs/search",
        json={
            "vector": points[0]["vector"],
            "k": 3,
            "ef": 128,
            "filter": {"must": [{"eq": {"field": "lang", "value": "en"}}]},
            "with_metadata": True,
        },
    )
    print("search:", json.dumps(r.json()["hits"], indent=2))

    r = client.post("/collections/docs/points/delete", json={"ids": [0, 1, 2]})
    print("delete:", r.json())
    print("count:", client.get("/collections/docs").json()["count"])

    # errors come back as {"code", "message"} with a matching status
    r = client.post("/collections/docs/search", json={"vector": [1.0, 2.0]})
    print("wrong dimension:", r.status_code, r.json())
    r = client.get("/collections/missing")
    print("unknown name:", r.status_code, r.json())

    db.close()
