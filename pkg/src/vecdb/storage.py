"""Durable key-value storage on an append-only log, plus the entity and
index snapshot codecs.

Log file layout (all integers little-endian unless the key scheme says
otherwise):

    header  = magic "QXAR" | version u16
    record  = length u32 | crc32 u32 | payload
    payload = op u8 (1 put, 2 delete) | klen u32 | key | vlen u32 | value
              (delete records stop after the key)

A record that fails its checksum, or is cut short, truncates the log at
the last valid byte during recovery. The in-memory index is a plain dict
rebuilt by a full scan, so iteration in dict order is exactly log order.

Key scheme (values little-endian, ids in keys big-endian so that sorted
key order is id order):

    c/<collection>/meta       collection config (json bytes)
    e/<collection>/<id u64 BE> entity record
    i/<collection>/snapshot   index + quantizer snapshot
"""

from __future__ import annotations

import hashlib
import os
import struct
import threading
import zlib

import numpy as np

from .errors import MalformedBytes, StorageClosed, VersionMismatch
from .flat import FlatIndex
from .hnsw import HnswIndex
from .quantization import CodeStore, Hyperplanes, PqCodebook
from .types import DistanceMetric, Entity

MAGIC = b"QXAR"
VERSION = 1
_HEADER = struct.Struct("<4sH")
_FRAME = struct.Struct("<II")

_OP_PUT = 1
_OP_DELETE = 2


# ------------------------------------------------------------ key scheme


def collection_meta_key(name: str) -> bytes:
    return f"c/{name}/meta".encode()

def entity_key(name: str, id: int) -> bytes:
    return b"e/" + name.encode() + b"/" + struct.pack(">Q", id)

def entity_prefix(name: str) -> bytes:
    return b"e/" + name.encode() + b"/"

def id_from_entity_key(key: bytes, name: str) -> int:
    return struct.unpack(">Q", key[len(entity_prefix(name)) :])[0]

def snapshot_key(name: str) -> bytes:
    return f"i/{name}/snapshot".encode()


# ----------------------------------------------------------- log engine


class LogEngine:
    """Append-only log with a dict index; read-your-writes, fsync on flush."""

    def __init__(self, path: str):
        self.path = str(path)
        self._lock = threading.Lock()
        self._map: dict[bytes, bytes] = {}
        self._closed = False
        self._recover()
        self._f = open(self.path, "ab")

    def _recover(self) -> None:
        if not os.path.exists(self.path):
            with open(self.path, "wb") as f:
                f.write(_HEADER.pack(MAGIC, VERSION))
                f.flush()
                os.fsync(f.fileno())
            return
        with open(self.path, "rb") as f:
            data = f.read()
        if len(data) < _HEADER.size:
            # never got a full header; rewrite one
            with open(self.path, "wb") as f:
                f.write(_HEADER.pack(MAGIC, VERSION))
            return
        magic, version = _HEADER.unpack_from(data, 0)
        if magic != MAGIC:
            raise MalformedBytes(f"{self.path}: bad magic {magic!r}")
        if version > VERSION:
            raise VersionMismatch(
                f"{self.path}: log version {version} newer than supported {VERSION}"
            )
        off = _HEADER.size
        good = off
        while off + _FRAME.size <= len(data):
            length, crc = _FRAME.unpack_from(data, off)
            start = off + _FRAME.size
            end = start + length
            if end > len(data):
                break
            payload = data[start:end]
            if zlib.crc32(payload) != crc:
                break
            try:
                self._apply(payload)
            except MalformedBytes:
                break
            off = end
            good = end
        if good < len(data):
            # drop the torn tail so future appends continue cleanly
            with open(self.path, "r+b") as f:
                f.truncate(good)

    def _apply(self, payload: bytes) -> None:
        if len(payload) < 5:
            raise MalformedBytes("record payload too short")
        op = payload[0]
        (klen,) = struct.unpack_from("<I", payload, 1)
        if 5 + klen > len(payload):
            raise MalformedBytes("record key overruns payload")
        key = payload[5 : 5 + klen]
        if op == _OP_PUT:
            voff = 5 + klen
            if voff + 4 > len(payload):
                raise MalformedBytes("record value length missing")
            (vlen,) = struct.unpack_from("<I", payload, voff)
            if voff + 4 + vlen != len(payload):
                raise MalformedBytes("record value length mismatch")
            self._map[key] = payload[voff + 4 : voff + 4 + vlen]
        elif op == _OP_DELETE:
            if 5 + klen != len(payload):
                raise MalformedBytes("delete record has trailing bytes")
            self._map.pop(key, None)
        else:
            raise MalformedBytes(f"unknown op {op}")

    def _append(self, payload: bytes) -> None:
        if self._closed:
            raise StorageClosed(f"{self.path} is closed")
        self._f.write(_FRAME.pack(len(payload), zlib.crc32(payload)))
        self._f.write(payload)

    def put(self, key: bytes, value: bytes) -> None:
        with self._lock:
            payload = (
                bytes([_OP_PUT])
                + struct.pack("<I", len(key))
                + key
                + struct.pack("<I", len(value))
                + value
            )
            self._append(payload)
            self._map[key] = value

    def delete(self, key: bytes) -> bool:
        with self._lock:
            if key not in self._map:
                return False
            payload = bytes([_OP_DELETE]) + struct.pack("<I", len(key)) + key
            self._append(payload)
            del self._map[key]
            return True

    def get(self, key: bytes) -> bytes | None:
        with self._lock:
            return self._map.get(key)

    def __contains__(self, key: bytes) -> bool:
        with self._lock:
            return key in self._map

    def __len__(self) -> int:
        with self._lock:
            return len(self._map)

    def iterate(self, prefix: bytes = b"") -> list[tuple[bytes, bytes]]:
        """Items with the prefix, sorted by key."""
        with self._lock:
            keys = sorted(k for k in self._map if k.startswith(prefix))
            return [(k, self._map[k]) for k in keys]

    def items_in_log_order(self, prefix: bytes = b"") -> list[tuple[bytes, bytes]]:
        """Items with the prefix in original append order (dict order)."""
        with self._lock:
            return [(k, v) for k, v in self._map.items() if k.startswith(prefix)]

    def digest(self, prefix: bytes = b"") -> bytes:
        """Order-sensitive fingerprint of the live records under a prefix.

        Used to decide snapshot freshness: any put or delete after the
        snapshot, including a same-value replacement, changes it.
        """
        h = hashlib.sha256()
        with self._lock:
            for k, v in self._map.items():
                if not k.startswith(prefix):
                    continue
                h.update(struct.pack("<I", len(k)))
                h.update(k)
                h.update(struct.pack("<I", zlib.crc32(v)))
        return h.digest()

    def flush(self) -> None:
        """Durability point: buffered appends reach disk before return."""
        with self._lock:
            if self._closed:
                raise StorageClosed(f"{self.path} is closed")
            self._f.flush()
            os.fsync(self._f.fileno())

    def compact(self) -> None:
        """Rewrite only live records, preserving log order, then swap in."""
        with self._lock:
            if self._closed:
                raise StorageClosed(f"{self.path} is closed")
            tmp = self.path + ".compact"
            with open(tmp, "wb") as f:
                f.write(_HEADER.pack(MAGIC, VERSION))
                for key, value in self._map.items():
                    payload = (
                        bytes([_OP_PUT])
                        + struct.pack("<I", len(key))
                        + key
                        + struct.pack("<I", len(value))
                        + value
                    )
                    f.write(_FRAME.pack(len(payload), zlib.crc32(payload)))
                    f.write(payload)
                f.flush()
                os.fsync(f.fileno())
            self._f.close()
            os.replace(tmp, self.path)
            dirfd = os.open(os.path.dirname(os.path.abspath(self.path)), os.O_RDONLY)
            try:
                os.fsync(dirfd)
            finally:
                os.close(dirfd)
            self._f = open(self.path, "ab")

    def close(self) -> None:
        with self._lock:
            if self._closed:
                return
            self._f.flush()
            os.fsync(self._f.fileno())
            self._f.close()
            self._closed = True


# ---------------------------------------------------------- entity codec
#
# id u64 | dim u32 | components f32*dim | nfields u16
# field   = klen u16 | key utf8 | tag u8 | value
# tags    = 1 str (u32 len + utf8) | 2 int (i64) | 3 float (f64) | 4 bool (u8)

_TAG_STR = 1
_TAG_INT = 2
_TAG_FLOAT = 3
_TAG_BOOL = 4


def encode_entity(entity: Entity) -> bytes:
    out = bytearray()
    out += struct.pack("<QI", entity.id, entity.vector.shape[0])
    out += entity.vector.astype("<f4").tobytes()
    out += struct.pack("<H", len(entity.metadata))
    for key, value in entity.metadata.items():
        kb = key.encode()
        out += struct.pack("<H", len(kb))
        out += kb
        if type(value) is bool:
            out += struct.pack("<BB", _TAG_BOOL, 1 if value else 0)
        elif type(value) is int:
            out += struct.pack("<Bq", _TAG_INT, value)
        elif type(value) is float:
            out += struct.pack("<Bd", _TAG_FLOAT, value)
        elif type(value) is str:
            vb = value.encode()
            out += struct.pack("<BI", _TAG_STR, len(vb))
            out += vb
        else:
            raise MalformedBytes(f"unsupported metadata type for {key!r}")
    return bytes(out)


def _need(buf: bytes, off: int, n: int) -> None:
    if off + n > len(buf):
        raise MalformedBytes(f"truncated at byte {off}, need {n} more")


def decode_entity(buf: bytes) -> Entity:
    """Inverse of encode_entity; any malformed input raises, never crashes."""
    off = 0
    _need(buf, off, 12)
    id, dim = struct.unpack_from("<QI", buf, off)
    off += 12
    if dim < 1 or dim > 2**24:
        raise MalformedBytes(f"implausible dim {dim} at byte 4")
    _need(buf, off, 4 * dim)
    vector = np.frombuffer(buf, dtype="<f4", count=dim, offset=off).copy()
    off += 4 * dim
    if not np.all(np.isfinite(vector)):
        raise MalformedBytes("non-finite vector component")
    _need(buf, off, 2)
    (nfields,) = struct.unpack_from("<H", buf, off)
    off += 2
    metadata: dict = {}
    for _ in range(nfields):
        _need(buf, off, 2)
        (klen,) = struct.unpack_from("<H", buf, off)
        off += 2
        _need(buf, off, klen)
        try:
            key = buf[off : off + klen].decode()
        except UnicodeDecodeError:
            raise MalformedBytes(f"key is not utf-8 at byte {off}")
        off += klen
        _need(buf, off, 1)
        tag = buf[off]
        off += 1
        if tag == _TAG_BOOL:
            _need(buf, off, 1)
            metadata[key] = bool(buf[off])
            off += 1
        elif tag == _TAG_INT:
            _need(buf, off, 8)
            metadata[key] = struct.unpack_from("<q", buf, off)[0]
            off += 8
        elif tag == _TAG_FLOAT:
            _need(buf, off, 8)
            value = struct.unpack_from("<d", buf, off)[0]
            if not np.isfinite(value):
                raise MalformedBytes(f"non-finite metadata float at byte {off}")
            metadata[key] = value
            off += 8
        elif tag == _TAG_STR:
            _need(buf, off, 4)
            (vlen,) = struct.unpack_from("<I", buf, off)
            off += 4
            _need(buf, off, vlen)
            try:
                metadata[key] = buf[off : off + vlen].decode()
            except UnicodeDecodeError:
                raise MalformedBytes(f"string value is not utf-8 at byte {off}")
            off += vlen
        else:
            raise MalformedBytes(f"unknown tag {tag} at byte {off - 1}")
    if off != len(buf):
        raise MalformedBytes(f"{len(buf) - off} trailing bytes after entity")
    return Entity(id=id, vector=vector, metadata=metadata)


# ------------------------------------------------------- snapshot codec
#
# magic "QXSN" | version u16 | digest 32B | index kind u8 | quant kind u8
# followed by one index section and one quantizer section.

SNAP_MAGIC = b"QXSN"
SNAP_VERSION = 1

_KIND_FLAT = 0
_KIND_HNSW = 1
_QUANT_NONE = 0
_QUANT_PQ = 1
_QUANT_BQ = 2

_METRIC_CODE = {
    DistanceMetric.COSINE: 0,
    DistanceMetric.EUCLIDEAN: 1,
    DistanceMetric.DOT: 2,
}
_METRIC_FROM = {v: k for k, v in _METRIC_CODE.items()}


class _Reader:
    def __init__(self, buf: bytes, off: int = 0):
        self.buf = buf
        self.off = off

    def take(self, n: int) -> bytes:
        _need(self.buf, self.off, n)
        out = self.buf[self.off : self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        _need(self.buf, self.off, s.size)
        out = s.unpack_from(self.buf, self.off)
        self.off += s.size
        return out

    def array(self, dtype, count: int) -> np.ndarray:
        nbytes = np.dtype(dtype).itemsize * count
        _need(self.buf, self.off, nbytes)
        out = np.frombuffer(self.buf, dtype=dtype, count=count, offset=self.off).copy()
        self.off += nbytes
        return out


def _dump_flat(out: bytearray, index: FlatIndex) -> None:
    n = len(index)
    out += struct.pack(
        "<IBBQ",
        index.dim,
        _METRIC_CODE[index.metric],
        1 if index.assume_normalized else 0,
        n,
    )
    out += index.ids.astype("<u8").tobytes()
    out += index.vectors.astype("<f4").tobytes()


def _load_flat(r: _Reader) -> FlatIndex:
    dim, mcode, norm, n = r.unpack("<IBBQ")
    ids = r.array("<u8", n)
    vectors = r.array("<f4", n * dim).reshape(n, dim)
    return FlatIndex.from_arrays(
        dim, _METRIC_FROM[mcode], bool(norm), ids, vectors
    )


def _dump_hnsw(out: bytearray, index: HnswIndex) -> None:
    st = index.get_state()
    rng = st["rng_state"]
    out += struct.pack(
        "<IBBIIQ",
        st["dim"],
        _METRIC_CODE[st["metric"]],
        1 if st["assume_normalized"] else 0,
        st["m"],
        st["ef_construction"],
        st["seed"],
    )
    out += rng["state"]["state"].to_bytes(16, "little")
    out += rng["state"]["inc"].to_bytes(16, "little")
    out += struct.pack("<BI", rng["has_uint32"], rng["uinteger"])
    entry = st["entry"] if st["entry"] is not None else -1
    out += struct.pack("<QqI", st["n"], entry, st["max_level"] + 1)
    out += st["ids"].astype("<u8").tobytes()
    out += st["deleted"].astype("<u1").tobytes()
    for row in range(st["n"]):
        levels = st["neighbors"][row]
        out += struct.pack("<H", len(levels) - 1)
        for nbrs in levels:
            out += struct.pack("<H", len(nbrs))
            out += np.asarray(nbrs, dtype="<u4").tobytes()
    out += st["vectors"].astype("<f4").tobytes()


def _load_hnsw(r: _Reader) -> HnswIndex:
    dim, mcode, norm, m, efc, seed = r.unpack("<IBBIIQ")
    rng_state = int.from_bytes(r.take(16), "little")
    rng_inc = int.from_bytes(r.take(16), "little")
    has_uint32, uinteger = r.unpack("<BI")
    n, entry, max_level_p1 = r.unpack("<QqI")
    ids = r.array("<u8", n)
    deleted = r.array("<u1", n).astype(bool)
    levels = []
    neighbors = []
    for _ in range(n):
        (level,) = r.unpack("<H")
        levels.append(level)
        per = []
        for _ in range(level + 1):
            (cnt,) = r.unpack("<H")
            per.append([int(x) for x in r.array("<u4", cnt)])
        neighbors.append(per)
    vectors = r.array("<f4", n * dim).reshape(n, dim)
    return HnswIndex.from_state(
        {
            "dim": dim,
            "metric": _METRIC_FROM[mcode],
            "assume_normalized": bool(norm),
            "m": m,
            "ef_construction": efc,
            "seed": seed,
            "rng_state": {
                "bit_generator": "PCG64",
                "state": {"state": rng_state, "inc": rng_inc},
                "has_uint32": int(has_uint32),
                "uinteger": int(uinteger),
            },
            "n": n,
            "entry": None if entry < 0 else int(entry),
            "max_level": max_level_p1 - 1,
            "ids": ids,
            "deleted": deleted,
            "levels": levels,
            "neighbors": neighbors,
            "vectors": vectors,
        }
    )


def snapshot_index(
    index, quantizer=None, codes: CodeStore | None = None, digest: bytes = b"\0" * 32
) -> bytes:
    """Serialize an index plus optional quantizer state to bytes.

    The same logical state always produces the same bytes: arrays are
    written in row (insertion) order.
    """
    if len(digest) != 32:
        raise MalformedBytes("digest must be 32 bytes")
    out = bytearray()
    out += SNAP_MAGIC
    out += struct.pack("<H", SNAP_VERSION)
    out += digest
    if isinstance(index, FlatIndex):
        kind = _KIND_FLAT
    elif isinstance(index, HnswIndex):
        kind = _KIND_HNSW
    else:
        raise MalformedBytes(f"cannot snapshot {type(index).__name__}")
    if quantizer is None:
        qkind = _QUANT_NONE
    elif isinstance(quantizer, PqCodebook):
        qkind = _QUANT_PQ
    elif isinstance(quantizer, Hyperplanes):
        qkind = _QUANT_BQ
    else:
        raise MalformedBytes(f"cannot snapshot {type(quantizer).__name__}")
    out += struct.pack("<BB", kind, qkind)
    if kind == _KIND_FLAT:
        _dump_flat(out, index)
    else:
        _dump_hnsw(out, index)
    if qkind == _QUANT_PQ:
        out += struct.pack(
            "<III", quantizer.m, quantizer.k, quantizer.sub_dim
        )
        out += quantizer.centroids.astype("<f4").tobytes()
    elif qkind == _QUANT_BQ:
        out += struct.pack("<II", quantizer.m, quantizer.dim)
        out += quantizer.normals.astype("<f4").tobytes()
    if qkind != _QUANT_NONE:
        ncodes = len(codes) if codes is not None else 0
        width = codes.codes.shape[1] if codes is not None else 0
        out += struct.pack("<QH", ncodes, width)
        if codes is not None:
            out += np.asarray(codes.ids, dtype="<u8").tobytes()
            out += codes.codes.astype("<u1").tobytes()
    return bytes(out)


def load_index(buf: bytes):
    """Inverse of snapshot_index.

    Returns:
        (index, quantizer, code store or None, digest)

    Raises MalformedBytes on garbage and VersionMismatch when the
    version field is newer than this build understands.
    """
    r = _Reader(buf)
    if r.take(4) != SNAP_MAGIC:
        raise MalformedBytes("bad snapshot magic")
    (version,) = r.unpack("<H")
    if version > SNAP_VERSION:
        raise VersionMismatch(
            f"snapshot version {version} newer than supported {SNAP_VERSION}"
        )
    digest = r.take(32)
    kind, qkind = r.unpack("<BB")
    if kind == _KIND_FLAT:
        index = _load_flat(r)
    elif kind == _KIND_HNSW:
        index = _load_hnsw(r)
    else:
        raise MalformedBytes(f"unknown index kind {kind}")
    quantizer = None
    codes = None
    if qkind == _QUANT_PQ:
        m, k, sub = r.unpack("<III")
        cents = r.array("<f4", m * k * sub).reshape(m, k, sub)
        quantizer = PqCodebook(centroids=cents)
    elif qkind == _QUANT_BQ:
        m, dim = r.unpack("<II")
        normals = r.array("<f4", m * dim).reshape(m, dim)
        quantizer = Hyperplanes(normals=normals)
    elif qkind != _QUANT_NONE:
        raise MalformedBytes(f"unknown quantizer kind {qkind}")
    if qkind != _QUANT_NONE:
        ncodes, width = r.unpack("<QH")
        ids = r.array("<u8", ncodes)
        mat = r.array("<u1", ncodes * width).reshape(ncodes, width)
        codes = CodeStore(width=width)
        for i in range(ncodes):
            codes.put(int(ids[i]), mat[i])
    if r.off != len(buf):
        raise MalformedBytes(f"{len(buf) - r.off} trailing bytes after snapshot")
    return index, quantizer, codes, digest


def entity_state_digest(store: LogEngine, name: str) -> bytes:
    """Digest of a collection's live entity records, order-sensitive."""
    return store.digest(entity_prefix(name))
