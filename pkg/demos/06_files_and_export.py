# %% [markdown]
# # File formats
#
# Samples live in binary shards indexed by a JSON manifest. Predictions and
# heatmap dumps use small binary formats of their own. Single samples export
# to PLY for viewing.

# %%
import tempfile
from pathlib import Path

import numpy as np

from lidarsynth.body_model import gen_toy_model, save_body_model
from lidarsynth.dataset_io import (Dataset, export_ply, read_heatmap_dump, read_predictions,
                                   write_heatmap_dump, write_predictions)
from lidarsynth.pipeline import (GenConfig, decode_heatmap_records, encode_dataset_heatmaps, evaluate_dataset,
                                 gen_pose_db, save_pose_db, synth)

work = Path(tempfile.mkdtemp())
save_body_model(gen_toy_model(0), work / "toy.lbm")
save_pose_db(work / "poses.csv", gen_pose_db(50, seed=1))
synth(GenConfig(str(work / "toy.lbm"), str(work / "poses.csv"), count=20, seed=3), work / "ds")

ds = Dataset(work / "ds")
print(sorted(p.name for p in (work / "ds").iterdir()))
print("first record:", ds.records[0])

# %% [markdown]
# Encode ground truth to heatmaps, decode them back as predictions, and score
# them. The remaining error is the quantization.

# %%
write_heatmap_dump(work / "gt.lhh", encode_dataset_heatmaps(ds, (128,) * 3, 2.0), (128,) * 3, 2.0)
bins, sigma, recs = read_heatmap_dump(work / "gt.lhh")
write_predictions(work / "pred.bin", decode_heatmap_records(bins, sigma, recs))
report = evaluate_dataset(ds, read_predictions(work / "pred.bin")).report
print(f"heatmap round-trip MPJPE {report.mpjpe:.1f} mm (bin width {3000 / 128:.1f} mm)")

# %%
sid, sample = next(iter(ds))
export_ply(sample, work / "sample.ply")
print((work / "sample.ply").read_text().splitlines()[:12])
print("labels present:", np.unique(sample.labels))
