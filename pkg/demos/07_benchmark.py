"""
The benchmark harness
=====================

`vecdb-bench run` loads an fvecs corpus, builds a collection, computes
(and caches) exact ground truth, then sweeps query settings reporting
recall@k, the last-distances ratio, the mean fraction of requested
neighbors returned, and throughput.

Real corpora drop in as directories of {base,query[,groundtruth]} files
(see the README for where to get SIFT or Fashion-MNIST); here we
synthesize a small one so the pipeline runs self-contained.
"""

import os
import tempfile

import numpy as np

from vecdb.bench import main, write_fvecs

rng = np.random.default_rng(61)

root = tempfile.mkdtemp()
directory = os.path.join(root, "toy")
os.makedirs(directory)

# 5,000 base vectors in 32 dims, 50 held-out queries
write_fvecs(
    os.path.join(directory, "toy_base.fvecs"),
    rng.standard_normal((5000, 32)).astype(np.float32),
)
write_fvecs(
    os.path.join(directory, "toy_query.fvecs"),
    rng.standard_normal((50, 32)).astype(np.float32),
)

# equivalent to:
#   vecdb-bench run --dataset ./toy --m 8 --ef-construction 100 \
#       --ef 16,64,256 --k 10 --out report.json
rc = main(
    [
        "run",
        "--dataset", directory,
        "--m", "8",
        "--ef-construction", "100",
        "--ef", "16,64,256",
        "--k", "10",
        "--out", os.path.join(root, "report.json"),
    ]
)
print(f"\nexit code: {rc}")
print("ground truth cached as:",
      [f for f in os.listdir(directory) if f.startswith(".gt-")][0])
