# %% [markdown]
# # How unique are venue sets, and how do k, d and N matter

# %%
import numpy as np

from tulbench.analyze import (interval_comparison, jaccard_matrix, scaling_curve, sweep_d,
                              sweep_k, uniqueness_stats, venue_distribution)
from tulbench.pipeline import PipelineConfig, build_dataset
from tulbench.synthetic import SyntheticSpec, generate_synthetic

records = generate_synthetic(SyntheticSpec(n_users=300, trajectories_per_user=(10, 30),
                                           seed=11)).records
ds = build_dataset(records, PipelineConfig("daily"))
ds.summary()

# %%
users, m = jaccard_matrix(ds, 10)
np.set_printoptions(precision=2, suppress=True, linewidth=120)
print(users)
print(m)

# %%
stats = uniqueness_stats(ds, 25)
print(f"mean pairwise Jaccard distance, top 25: {stats.mean_jaccard:.3f}")
print(f"venues per user: {stats.venue_user_ratio:.2f}")

# %% [markdown]
# Venue ID spread for the first few users. Each box would hold the shared
# venues low down and the private ones at the top.

# %%
for u, vs in venue_distribution(ds, 5).items():
    q = np.percentile(vs, [0, 25, 50, 75, 100])
    print(u, len(vs), q.round(1))

# %% [markdown]
# Error rate against k, for d = 1.

# %%
for k, err in sweep_k(ds, d=1, k_values=(1, 3, 5, 7, 9, 11, 13, 15), seed=0).items():
    print(f"k={k:2d}  error={err:.4f}")

# %%
for d, r in sweep_d(ds, (1, 2, 3), seed=0).items():
    print(f"d={d}  ACC@1={r.acc_at[1]:.4f}  Macro-F1={r.macro_f1:.4f}")

# %% [markdown]
# Top-N users, for growing N. The search space grows with N while the
# planted signal stays put.

# %%
for n, r in scaling_curve(ds, [10, 30, 100, 300], seed=0).items():
    print(f"N={n:4d}  search space={r.search_space_size:5d}  ACC@1={r.acc_at[1]:.4f}  "
          f"Macro-F1={r.macro_f1:.4f}")

# %% [markdown]
# Daily vs weekly vs monthly buckets on one source. Longer buckets mean
# fewer, longer trajectories.

# %%
long = generate_synthetic(SyntheticSpec(n_users=40, trajectories_per_user=120,
                                        day_gap=(2, 4), seed=3)).records
datasets = {t: build_dataset(long, PipelineConfig(t)) for t in ("daily", "weekly", "monthly")}
for t, r in interval_comparison(datasets, seed=0).items():
    print(f"{t:8s} trajectories={datasets[t].trajectory_count:5d}  ACC@1={r.acc_at[1]:.4f}")
