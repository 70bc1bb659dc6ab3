"""
Durability and recovery
=======================

Every write is journaled to an append-only log (length + checksum per
record) before it is acknowledged. flush() additionally checkpoints the
index so a reopen can skip the graph rebuild. A torn tail (the bytes a
crash leaves behind mid-write) is detected by checksum and truncated;
everything before it survives.
"""

import os
import shutil
import tempfile

import numpy as np

from vecdb.engine import Database
from vecdb.types import CollectionConfig, DistanceMetric, Entity, HnswParams

rng = np.random.default_rng(43)
vectors = rng.standard_normal((2000, 16)).astype(np.float32)
query = rng.standard_normal(16).astype(np.float32)

root = tempfile.mkdtemp()
home = os.path.join(root, "db")

db = Database(home)
col = db.create_collection(
    CollectionConfig(name="notes", dim=16, metric=DistanceMetric.EUCLIDEAN,
                     index=HnswParams(m=8, ef_construction=100, seed=0))
)
col.upsert([Entity(id=i, vector=vectors[i]) for i in range(2000)])
before = col.search(query, k=5).hits
col.flush()                      # checkpoint: snapshot + fsync

# simulate a crash: copy the directory while the process is still live,
# then pretend the copy is all that survived
crashed = os.path.join(root, "crashed")
shutil.copytree(home, crashed)
db.close()

db2 = Database(crashed)
col2 = db2.collection("notes")
print("entities after reopen:", col2.count)
print("results identical:", col2.search(query, k=5).hits == before)
print("audit problems:", col2.audit())

# a torn tail: chop bytes off the end of the log mid-record
wal = os.path.join(crashed, "notes", "wal.qx")
db2.close()
size = os.path.getsize(wal)
with open(wal, "r+b") as f:
    f.truncate(size - 37)        # some arbitrary mid-record cut
db3 = Database(crashed)
col3 = db3.collection("notes")
print(f"\nafter tearing 37 bytes off the log tail:")
print("entities recovered:", col3.count)
print("audit problems:", col3.audit())

# compaction drops replaced/deleted records and dead checkpoints
col3.delete(list(range(0, 1000)))
col3.flush()
size_before = os.path.getsize(wal)
col3.compact()
print(f"\nlog size: {size_before} -> {os.path.getsize(wal)} bytes after compaction")
print("entities:", col3.count)

db3.close()
shutil.rmtree(root)
