# %% [markdown]
# # Query time against search space
#
# Random descending 3-vectors stand in for d=3 encodings. The index is built
# outside the timed region.

# %%
import time

import numpy as np

from tulbench.analyze import machine_description
from tulbench.classify import KnnIndex, rank_labels_batch

machine_description()

# %%
rng = np.random.default_rng(0)
points = -np.sort(-rng.integers(0, 800_000, size=(300_000, 3)), axis=1)
labels = rng.integers(0, 8_000, size=300_000)
queries = -np.sort(-rng.integers(0, 800_000, size=(10_000, 3)), axis=1)

# %%
for n in (3_000, 30_000, 300_000):
    index = KnnIndex(points[:n], labels[:n])
    search, full = [], []
    for _ in range(5):
        t0 = time.perf_counter()
        index.query(queries, 3)
        search.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        rank_labels_batch(index, queries, 3, 5)
        full.append(time.perf_counter() - t0)
    print(f"n={n:7d}  build={1000 * index.build_seconds:7.1f} ms  "
          f"search={1e3 * min(search) / len(queries):.4f} ms/query  "
          f"classify={1e3 * np.median(full) / len(queries):.4f} ms/query")

# %% [markdown]
# Same for d = 1, where the index is a sorted array and a binary search.

# %%
flat = points[:, :1]
for n in (3_000, 30_000, 300_000):
    index = KnnIndex(flat[:n], labels[:n])
    t0 = time.perf_counter()
    rank_labels_batch(index, queries[:, :1], 3, 5)
    print(f"n={n:7d}  {1e3 * (time.perf_counter() - t0) / len(queries):.4f} ms/query")
