"""Database and collection surface: upserts, deletes, plain and filtered
queries, quantized scan with re-ranking, durability hooks."""

from __future__ import annotations

import json
import math
import shutil
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .distance import reported_distance
from .errors import (
    DimensionMismatch,
    InvalidQuery,
    MalformedBytes,
    NameConflict,
    UnknownCollection,
)
from .filters import Filter, eval_filter_strict
from .flat import FlatIndex, exact_topk
from .hnsw import DEFAULT_EF, HnswIndex
from .quantization import (
    CodeStore,
    Hyperplanes,
    PqCodebook,
    bq_encode,
    bq_encode_batch,
    bq_train,
    hamming_scan,
    pq_dot_table,
    pq_encode_batch,
    pq_lookup_table,
    pq_scan,
    pq_train,
)
from .storage import (
    LogEngine,
    collection_meta_key,
    decode_entity,
    encode_entity,
    entity_key,
    entity_prefix,
    load_index,
    snapshot_index,
    snapshot_key,
)
from .types import (
    BqParams,
    CollectionConfig,
    DistanceMetric,
    Entity,
    HnswParams,
    PqParams,
    SearchResult,
    SearchStats,
    as_vector,
    normalize,
    validate_entity,
)

RERANK_FACTOR = 4


class RwLock:
    """Many readers or one writer; readers-preference is fine here."""

    def __init__(self):
        self._mutex = threading.Lock()
        self._writer = threading.Lock()
        self._readers = 0

    @contextmanager
    def read(self):
        with self._mutex:
            self._readers += 1
            if self._readers == 1:
                self._writer.acquire()
        try:
            yield
        finally:
            with self._mutex:
                self._readers -= 1
                if self._readers == 0:
                    self._writer.release()

    @contextmanager
    def write(self):
        with self._writer:
            yield


@dataclass
class UpsertStatus:
    id: int | None
    status: str  # "inserted" | "replaced" | "error"
    error: str | None = None


@dataclass
class UpsertResult:
    inserted: int = 0
    replaced: int = 0
    statuses: list[UpsertStatus] = field(default_factory=list)


def _new_index(config: CollectionConfig):
    norm = config.metric is DistanceMetric.COSINE
    if isinstance(config.index, HnswParams):
        return HnswIndex(
            dim=config.dim,
            metric=config.metric,
            m=config.index.m,
            ef_construction=config.index.ef_construction,
            seed=config.index.seed,
            assume_normalized=norm,
        )
    return FlatIndex(config.dim, config.metric, assume_normalized=norm)


class Collection:
    """One named set of entities with an index and optional quantizer.

    Writers take the collection lock exclusively; queries share it.
    """

    def __init__(self, db: "Database", config: CollectionConfig, store: LogEngine):
        self._db = db
        self.config = config
        self.name = config.name
        self._store = store
        self._lock = RwLock()
        self._index = _new_index(config)
        self._metadata: dict[int, dict] = {}
        self._quantizer: PqCodebook | Hyperplanes | None = None
        self._codes: CodeStore | None = None
        if isinstance(config.quantization, BqParams):
            # hyperplanes are data independent, draw them up front
            self._quantizer = bq_train(config.dim, config.quantization.m, seed=0)
            self._codes = CodeStore(width=self._quantizer.code_width)

    # --------------------------------------------------------------- state

    @property
    def count(self) -> int:
        return len(self._metadata)

    @property
    def quantizer_trained(self) -> bool:
        return self._quantizer is not None

    def _index_vector(self, vector: np.ndarray) -> np.ndarray:
        if self.config.metric is DistanceMetric.COSINE:
            return normalize(vector)
        return vector

    def _encode_one(self, vector: np.ndarray) -> np.ndarray:
        if isinstance(self._quantizer, PqCodebook):
            return pq_encode_batch(vector[None, :], self._quantizer)[0]
        return bq_encode(vector, self._quantizer)

    def _remove(self, id: int) -> None:
        self._store.delete(entity_key(self.name, id))
        self._metadata.pop(id, None)
        self._index.delete(id)
        if self._codes is not None:
            self._codes.delete(id)

    # ------------------------------------------------------------ mutation

    def upsert(self, entities) -> UpsertResult:
        """Insert or replace entities; replacement is delete-then-insert.

        Invalid entities are reported per item and skip the batch slot
        without aborting the rest.
        """
        result = UpsertResult()
        with self._lock.write():
            for ent in entities:
                err = validate_entity(ent, self.config)
                if err is not None:
                    result.statuses.append(
                        UpsertStatus(id=getattr(ent, "id", None), status="error", error=err)
                    )
                    continue
                vec = self._index_vector(ent.vector)
                existed = ent.id in self._metadata
                if existed:
                    self._remove(ent.id)
                self._store.put(entity_key(self.name, ent.id), encode_entity(ent))
                self._index.insert(ent.id, vec)
                self._metadata[ent.id] = dict(ent.metadata)
                if self._codes is not None and self._quantizer is not None:
                    self._codes.put(ent.id, self._encode_one(vec))
                if existed:
                    result.replaced += 1
                    result.statuses.append(UpsertStatus(id=ent.id, status="replaced"))
                else:
                    result.inserted += 1
                    result.statuses.append(UpsertStatus(id=ent.id, status="inserted"))
            self._maybe_train()
        return result

    def delete(self, ids) -> int:
        """Remove entities by id; unknown ids are ignored. Returns count."""
        removed = 0
        with self._lock.write():
            for id in ids:
                if id in self._metadata:
                    self._remove(id)
                    removed += 1
        return removed

    def _live_index_vectors(self) -> tuple[np.ndarray, np.ndarray]:
        if isinstance(self._index, FlatIndex):
            return self._index.vectors, self._index.ids
        ids = self._index.live_ids()
        return self._index.gather(ids), np.asarray(ids, dtype=np.uint64)

    def _maybe_train(self) -> None:
        q = self.config.quantization
        if not isinstance(q, PqParams) or self._quantizer is not None:
            return
        if len(self._metadata) < self._db.pq_train_threshold:
            return
        vectors, ids = self._live_index_vectors()
        if vectors.shape[0] > self._db.pq_train_sample:
            rng = np.random.default_rng(0)
            pick = rng.choice(vectors.shape[0], self._db.pq_train_sample, replace=False)
            train = vectors[np.sort(pick)]
        else:
            train = vectors
        self._quantizer = pq_train(train, q.m, q.k, seed=0)
        self._codes = CodeStore(width=q.m)
        codes = pq_encode_batch(vectors, self._quantizer)
        for i in range(ids.shape[0]):
            self._codes.put(int(ids[i]), codes[i])
        # checkpoint right away so the codebook survives a crash
        self._flush_locked()

    # ------------------------------------------------------------- queries

    def search(
        self,
        query,
        k: int = 10,
        ef: int | None = None,
        filter: Filter | None = None,
    ) -> SearchResult:
        """Top-k by the collection metric, optionally metadata-filtered.

        Distances are reported on the metric's natural scale: euclidean
        takes the root, cosine is 1 - cos, dot product is negated.
        """
        if k < 1:
            raise InvalidQuery(f"k must be >= 1, got {k}")
        try:
            q = as_vector(query, dim=self.config.dim)
        except ValueError as e:
            if "dimension-mismatch" in str(e):
                raise DimensionMismatch(str(e))
            raise InvalidQuery(str(e))
        with self._lock.read():
            if self.config.metric is DistanceMetric.COSINE:
                q = normalize(q)
            if filter is not None:
                return self._filtered_query(q, k, ef, filter)
            return self._plain_query(q, k, ef)

    def _convert(self, res: SearchResult) -> SearchResult:
        metric = self.config.metric
        res.hits = [(id, reported_distance(d, metric)) for id, d in res.hits]
        return res

    def _plain_query(self, q: np.ndarray, k: int, ef: int | None) -> SearchResult:
        if len(self._metadata) == 0:
            return SearchResult(hits=[])
        if self._quantizer is not None and self._codes is not None and len(self._codes):
            return self._quantized_query(q, k)
        if isinstance(self._index, FlatIndex):
            return self._convert(self._index.search(q, k))
        return self._convert(self._index.search(q, k, ef))

    def _quantized_query(self, q: np.ndarray, k: int) -> SearchResult:
        """Two-stage: scan compressed codes, then exact re-rank."""
        codes = self._codes.codes
        ids = np.asarray(self._codes.ids, dtype=np.uint64)
        if isinstance(self._quantizer, PqCodebook):
            if self.config.metric is DistanceMetric.DOT:
                approx = -pq_scan(pq_dot_table(q, self._quantizer), codes)
            else:
                approx = pq_scan(pq_lookup_table(q, self._quantizer), codes)
        else:
            approx = hamming_scan(bq_encode(q, self._quantizer), codes).astype(
                np.float64
            )
        ncand = min(RERANK_FACTOR * k, ids.shape[0])
        order = np.lexsort((ids, approx))[:ncand]
        cand_ids = ids[order]
        vectors = self._index.gather([int(i) for i in cand_ids])
        top_ids, top_d = exact_topk(
            vectors,
            cand_ids,
            q,
            k,
            self.config.metric,
            self.config.metric is DistanceMetric.COSINE,
        )
        hits = [(int(i), float(d)) for i, d in zip(top_ids, top_d)]
        stats = SearchStats(
            distance_evals=ids.shape[0] + ncand, visited=ids.shape[0]
        )
        return self._convert(SearchResult(hits=hits, stats=stats))

    def _filtered_query(
        self, q: np.ndarray, k: int, ef: int | None, filt: Filter
    ) -> SearchResult:
        """Filter first, then pick the strategy by subset size.

        Small subsets get an exact restricted scan; large ones run the
        graph search with non-matching nodes routed through but never
        returned, with the beam inflated by inverse selectivity.
        """
        filt.validate()
        allowed = [
            id for id, md in self._metadata.items() if eval_filter_strict(filt, md)
        ]
        if not allowed:
            return SearchResult(hits=[])
        nlive = len(self._metadata)
        if isinstance(self._index, FlatIndex):
            return self._convert(self._index.search(q, k, allowed_ids=allowed))
        if len(allowed) <= self._db.filtered_scan_threshold:
            vectors = self._index.gather(allowed)
            ids = np.asarray(allowed, dtype=np.uint64)
            top_ids, top_d = exact_topk(
                vectors,
                ids,
                q,
                k,
                self.config.metric,
                self.config.metric is DistanceMetric.COSINE,
            )
            hits = [(int(i), float(d)) for i, d in zip(top_ids, top_d)]
            n = len(allowed)
            return self._convert(
                SearchResult(
                    hits=hits, stats=SearchStats(distance_evals=n, visited=n)
                )
            )
        base_ef = ef if ef is not None else max(k, DEFAULT_EF)
        selectivity = len(allowed) / nlive
        eff = min(int(math.ceil(base_ef / selectivity)), nlive)
        res = self._index.search(q, k, eff, allowed_ids=set(allowed))
        return self._convert(res)

    def get(self, id: int) -> Entity | None:
        """Original entity as stored, or None."""
        with self._lock.read():
            raw = self._store.get(entity_key(self.name, id))
        if raw is None:
            return None
        return decode_entity(raw)

    def metadata_of(self, id: int) -> dict | None:
        with self._lock.read():
            md = self._metadata.get(id)
            return dict(md) if md is not None else None

    # ---------------------------------------------------------- durability

    def _flush_locked(self) -> None:
        digest = self._store.digest(entity_prefix(self.name))
        snap = snapshot_index(self._index, self._quantizer, self._codes, digest)
        self._store.put(snapshot_key(self.name), snap)
        self._store.flush()

    def flush(self) -> None:
        """Checkpoint: snapshot the index and fsync the log."""
        with self._lock.write():
            self._flush_locked()

    def durable(self) -> None:
        """Fsync the entity log without writing a snapshot."""
        self._store.flush()

    def compact(self) -> None:
        """Drop dead log records, then re-checkpoint."""
        with self._lock.write():
            self._store.compact()
            self._flush_locked()

    def close(self) -> None:
        with self._lock.write():
            self._flush_locked()
            self._store.close()

    def audit(self) -> list[str]:
        """Cross-check store, index, metadata, and codes; [] means clean."""
        problems = []
        with self._lock.read():
            kv_ids = {
                int.from_bytes(k[-8:], "big")
                for k, _ in self._store.items_in_log_order(entity_prefix(self.name))
            }
            md_ids = set(self._metadata)
            if isinstance(self._index, FlatIndex):
                idx_ids = {int(i) for i in self._index.ids}
            else:
                idx_ids = set(self._index.live_ids())
            if kv_ids != md_ids:
                problems.append(
                    f"store/metadata id mismatch: {len(kv_ids)} vs {len(md_ids)}"
                )
            if md_ids != idx_ids:
                problems.append(
                    f"metadata/index id mismatch: {len(md_ids)} vs {len(idx_ids)}"
                )
            if self._codes is not None and self._quantizer is not None:
                code_ids = {int(i) for i in self._codes.ids}
                if code_ids != md_ids:
                    problems.append(
                        f"metadata/codes id mismatch: {len(md_ids)} vs {len(code_ids)}"
                    )
        return problems

    # -------------------------------------------------------------- loading

    @classmethod
    def _open(cls, db: "Database", name: str, store: LogEngine) -> "Collection":
        raw_meta = store.get(collection_meta_key(name))
        if raw_meta is None:
            raise MalformedBytes(f"collection {name!r} has no meta record")
        config = CollectionConfig.from_json(json.loads(raw_meta), name=name)
        col = cls.__new__(cls)
        col._db = db
        col.config = config
        col.name = name
        col._store = store
        col._lock = RwLock()
        col._metadata = {}
        col._quantizer = None
        col._codes = None

        digest = store.digest(entity_prefix(name))
        snap_raw = store.get(snapshot_key(name))
        index = None
        if snap_raw is not None:
            try:
                s_index, s_quant, s_codes, s_digest = load_index(snap_raw)
            except MalformedBytes:
                s_index = s_quant = s_codes = None
                s_digest = b""
            if s_digest == digest and s_index is not None:
                index = s_index
                col._quantizer = s_quant
                col._codes = s_codes
            elif s_quant is not None:
                # stale snapshot: keep the learned codebook, rebuild the rest
                col._quantizer = s_quant

        entities = [
            decode_entity(v)
            for _, v in store.items_in_log_order(entity_prefix(name))
        ]
        for ent in entities:
            col._metadata[ent.id] = dict(ent.metadata)

        if index is not None:
            col._index = index
            return col

        # the log is the source of truth: replay in original insert order
        col._index = _new_index(config)
        for ent in entities:
            col._index.insert(ent.id, col._index_vector(ent.vector))
        if isinstance(config.quantization, BqParams):
            if col._quantizer is None:
                col._quantizer = bq_train(config.dim, config.quantization.m, seed=0)
            col._codes = CodeStore(width=col._quantizer.code_width)
            vectors, ids = col._live_index_vectors()
            if ids.shape[0]:
                codes = bq_encode_batch(vectors, col._quantizer)
                for i in range(ids.shape[0]):
                    col._codes.put(int(ids[i]), codes[i])
        elif isinstance(config.quantization, PqParams):
            if col._quantizer is not None:
                col._codes = CodeStore(width=config.quantization.m)
                vectors, ids = col._live_index_vectors()
                if ids.shape[0]:
                    codes = pq_encode_batch(vectors, col._quantizer)
                    for i in range(ids.shape[0]):
                        col._codes.put(int(ids[i]), codes[i])
            else:
                col._maybe_train()
        return col


class Database:
    """Directory of collections, one subdirectory with one log each."""

    def __init__(
        self,
        path,
        filtered_scan_threshold: int = 10000,
        pq_train_threshold: int = 1000,
        pq_train_sample: int = 100000,
    ):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.filtered_scan_threshold = filtered_scan_threshold
        self.pq_train_threshold = pq_train_threshold
        self.pq_train_sample = pq_train_sample
        self._lock = threading.Lock()
        self._collections: dict[str, Collection] = {}
        for sub in sorted(self.path.iterdir()):
            wal = sub / "wal.qx"
            if sub.is_dir() and wal.exists():
                store = LogEngine(str(wal))
                self._collections[sub.name] = Collection._open(self, sub.name, store)

    def create_collection(self, config: CollectionConfig) -> Collection:
        config.validate()
        with self._lock:
            cdir = self.path / config.name
            if config.name in self._collections or cdir.exists():
                raise NameConflict(f"collection {config.name!r} already exists")
            cdir.mkdir()
            store = LogEngine(str(cdir / "wal.qx"))
            store.put(
                collection_meta_key(config.name),
                json.dumps(config.to_json(), sort_keys=True).encode(),
            )
            store.flush()
            col = Collection(self, config, store)
            self._collections[config.name] = col
            return col

    def collection(self, name: str) -> Collection:
        with self._lock:
            col = self._collections.get(name)
        if col is None:
            raise UnknownCollection(f"no collection named {name!r}")
        return col

    def has_collection(self, name: str) -> bool:
        with self._lock:
            return name in self._collections

    def list_collections(self) -> list[str]:
        with self._lock:
            return sorted(self._collections)

    def drop_collection(self, name: str) -> None:
        with self._lock:
            col = self._collections.pop(name, None)
            if col is None:
                raise UnknownCollection(f"no collection named {name!r}")
            col._store.close()
            shutil.rmtree(self.path / name)

    def flush(self) -> None:
        for name in self.list_collections():
            self.collection(name).flush()

    def close(self) -> None:
        with self._lock:
            for col in self._collections.values():
                col.close()
            self._collections.clear()

    def __enter__(self) -> "Database":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
