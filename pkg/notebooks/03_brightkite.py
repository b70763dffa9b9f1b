# %% [markdown]
# # Brightkite
#
# Needs the public SNAP dump `loc-brightkite_totalCheckins.txt.gz`. Point
# `TULBENCH_BRIGHTKITE` at it; without it this script stops after the first
# cell. The full file takes a few minutes to parse and preprocess.

# %%
import os
import sys

path = os.environ.get("TULBENCH_BRIGHTKITE")
if not path or not os.path.exists(path):
    print("set TULBENCH_BRIGHTKITE to the Brightkite check-in file")
    sys.exit(0)

# %%
from tulbench.analyze import uniqueness_stats
from tulbench.evaluate import cross_validate
from tulbench.ingest import SCHEMAS, ParseStats, parse_with_schema, summarize
from tulbench.pipeline import PipelineConfig, build_dataset

stats = ParseStats()
records = list(parse_with_schema(path, SCHEMAS["brightkite"], 0.01, stats))
summarize(records, stats.rejected).to_dict()

# %%
daily = build_dataset(records, PipelineConfig("daily"))
daily.summary()

# %%
top = daily.restrict_users(daily.top_users(92))
r = cross_validate(top, d=1, k=3, K_list=(1, 5), seed=0)
print(f"top-92 daily  ACC@1={r.acc_at[1]:.4f}  ACC@5={r.acc_at[5]:.4f}  Macro-F1={r.macro_f1:.4f}")

# %%
print(f"mean top-25 Jaccard distance: {uniqueness_stats(daily, 25).mean_jaccard:.4f}")

# %%
for d in (1, 2, 3):
    r = cross_validate(daily, d=d, k=3, seed=0)
    print(f"all users, d={d}  Macro-F1={r.macro_f1:.4f}  {r.mean_query_time:.3f} ms/query")
