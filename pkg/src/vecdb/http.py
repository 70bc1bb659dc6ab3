"""JSON-over-HTTP service in front of a Database.

Endpoints:

    PUT    /collections/{name}               create (201)
    GET    /collections/{name}               config + count
    DELETE /collections/{name}               drop (204)
    POST   /collections/{name}/points        upsert, per-item statuses
    POST   /collections/{name}/points/delete delete by ids
    POST   /collections/{name}/search        query, optional filter
    GET    /healthz                          liveness

Errors are {"code": ..., "message": ...} with 400 for invalid input,
404 for unknown resources, 409 for conflicts, and 500 otherwise.
"""

from __future__ import annotations

import argparse
import json
import os
import socket
import sys

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse, Response

from .engine import Database
from .errors import InvalidEntity, MalformedBytes, VecdbError
from .filters import parse_filter
from .types import CollectionConfig, Entity


async def _body_json(request: Request):
    raw = await request.body()
    try:
        text = raw.decode()
    except UnicodeDecodeError as e:
        raise MalformedBytes(f"body is not utf-8 at byte {e.start}")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        # e.pos is a character offset; report the byte offset instead
        byte_off = len(text[: e.pos].encode())
        raise MalformedBytes(f"malformed json at byte {byte_off}: {e.msg}")


def _entity_from_doc(doc) -> Entity:
    if not isinstance(doc, dict):
        raise InvalidEntity(f"point must be an object, got {type(doc).__name__}")
    if "id" not in doc or "vector" not in doc:
        raise InvalidEntity("point needs id and vector")
    id = doc["id"]
    if isinstance(id, bool) or not isinstance(id, int):
        raise InvalidEntity(f"id must be an integer, got {id!r}")
    vector = doc["vector"]
    if not isinstance(vector, list) or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in vector
    ):
        raise InvalidEntity("vector must be a list of numbers")
    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict):
        raise InvalidEntity("metadata must be an object")
    try:
        return Entity(id=id, vector=vector, metadata=metadata)
    except ValueError as e:
        raise InvalidEntity(str(e))


def create_app(db: Database) -> FastAPI:
    app = FastAPI(openapi_url=None, docs_url=None, redoc_url=None)
    app.state.db = db

    @app.exception_handler(VecdbError)
    async def _vecdb_error(request: Request, exc: VecdbError):
        return JSONResponse(
            status_code=exc.http_status,
            content={"code": exc.code, "message": str(exc)},
        )

    @app.exception_handler(Exception)
    async def _unexpected(request: Request, exc: Exception):
        return JSONResponse(
            status_code=500,
            content={"code": "internal", "message": str(exc)},
        )

    @app.get("/healthz")
    async def healthz():
        return PlainTextResponse("ok")

    @app.put("/collections/{name}")
    async def create_collection(name: str, request: Request):
        doc = await _body_json(request)
        config = CollectionConfig.from_json(doc if doc is not None else {}, name=name)
        db.create_collection(config)
        return JSONResponse(status_code=201, content={"name": name, "status": "created"})

    @app.get("/collections/{name}")
    async def get_collection(name: str):
        col = db.collection(name)
        return {"name": name, "config": col.config.to_json(), "count": col.count}

    @app.delete("/collections/{name}")
    async def drop_collection(name: str):
        db.drop_collection(name)
        return Response(status_code=204)

    @app.post("/collections/{name}/points")
    async def upsert_points(name: str, request: Request):
        col = db.collection(name)
        doc = await _body_json(request)
        if not isinstance(doc, dict) or not isinstance(doc.get("points"), list):
            raise InvalidEntity("body needs a points list")
        entities = []
        statuses = [None] * len(doc["points"])
        slots = []
        for i, pdoc in enumerate(doc["points"]):
            try:
                entities.append(_entity_from_doc(pdoc))
                slots.append(i)
            except InvalidEntity as e:
                pid = pdoc.get("id") if isinstance(pdoc, dict) else None
                statuses[i] = {"id": pid, "status": "error", "error": str(e)}
        result = col.upsert(entities)
        col.durable()  # reported items must survive a crash after the response
        for slot, st in zip(slots, result.statuses):
            doc_st = {"id": st.id, "status": st.status}
            if st.error is not None:
                doc_st["error"] = st.error
            statuses[slot] = doc_st
        return {
            "inserted": result.inserted,
            "replaced": result.replaced,
            "statuses": statuses,
        }

    @app.post("/collections/{name}/points/delete")
    async def delete_points(name: str, request: Request):
        col = db.collection(name)
        doc = await _body_json(request)
        if not isinstance(doc, dict) or not isinstance(doc.get("ids"), list):
            raise InvalidEntity("body needs an ids list")
        ids = []
        for x in doc["ids"]:
            if isinstance(x, bool) or not isinstance(x, int):
                raise InvalidEntity(f"ids must be integers, got {x!r}")
            ids.append(x)
        deleted = col.delete(ids)
        col.durable()
        return {"deleted": deleted}

    @app.post("/collections/{name}/search")
    async def search(name: str, request: Request):
        col = db.collection(name)
        doc = await _body_json(request)
        if not isinstance(doc, dict) or "vector" not in doc:
            raise InvalidEntity("body needs a vector")
        k = doc.get("k", 10)
        if isinstance(k, bool) or not isinstance(k, int):
            raise InvalidEntity(f"k must be an integer, got {k!r}")
        ef = doc.get("ef")
        if ef is not None and (isinstance(ef, bool) or not isinstance(ef, int)):
            raise InvalidEntity(f"ef must be an integer, got {ef!r}")
        filt = None
        if doc.get("filter") is not None:
            filt = parse_filter(doc["filter"])
        with_metadata = doc.get("with_metadata", False)
        if not isinstance(with_metadata, bool):
            raise InvalidEntity("with_metadata must be a boolean")
        res = col.search(doc["vector"], k=k, ef=ef, filter=filt)
        hits = []
        for id, dist in res.hits:
            hit = {"id": id, "distance": dist}
            if with_metadata:
                hit["metadata"] = col.metadata_of(id)
            hits.append(hit)
        return {
            "hits": hits,
            "stats": {
                "distance_evals": res.stats.distance_evals,
                "visited": res.stats.visited,
            },
        }

    return app


# ----------------------------------------------------------------- server


def _load_config_file(path: str) -> dict:
    with open(path) as f:
        text = f.read()
    if path.endswith((".yaml", ".yml")):
        import yaml

        doc = yaml.safe_load(text)
    else:
        doc = json.loads(text)
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a mapping")
    return doc


def _settings(argv) -> dict:
    """Defaults, then config file, then QX_* env vars, then flags."""
    parser = argparse.ArgumentParser(prog="vecdb-server")
    parser.add_argument("--config", help="yaml or json settings file")
    parser.add_argument("--host")
    parser.add_argument("--port", type=int)
    parser.add_argument("--data-dir")
    args = parser.parse_args(argv)
    settings = {"host": "127.0.0.1", "port": 6333, "data_dir": "./vecdb-data"}
    config_path = args.config or os.environ.get("QX_CONFIG")
    if config_path:
        file_doc = _load_config_file(config_path)
        unknown = set(file_doc) - set(settings)
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        settings.update(file_doc)
    if os.environ.get("QX_HOST"):
        settings["host"] = os.environ["QX_HOST"]
    if os.environ.get("QX_PORT"):
        settings["port"] = int(os.environ["QX_PORT"])
    if os.environ.get("QX_DATA_DIR"):
        settings["data_dir"] = os.environ["QX_DATA_DIR"]
    if args.host is not None:
        settings["host"] = args.host
    if args.port is not None:
        settings["port"] = args.port
    if args.data_dir is not None:
        settings["data_dir"] = args.data_dir
    if not isinstance(settings["port"], int) or not (0 < settings["port"] < 65536):
        raise ValueError(f"port out of range: {settings['port']!r}")
    return settings


def main(argv=None) -> int:
    """Run the server. Exit codes: 0 clean, 1 bad config, 2 bind failure."""
    try:
        settings = _settings(argv if argv is not None else sys.argv[1:])
    except (ValueError, OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    try:
        probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((settings["host"], settings["port"]))
        probe.close()
    except OSError as e:
        print(
            f"cannot bind {settings['host']}:{settings['port']}: {e}",
            file=sys.stderr,
        )
        return 2
    import uvicorn

    db = Database(settings["data_dir"])
    app = create_app(db)
    try:
        uvicorn.run(app, host=settings["host"], port=settings["port"], log_level="info")
    finally:
        db.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
