"""Score-vs-IoU analysis: does the coupled score track actual mask quality?

Generates scenes, corrupts predictions through a noise channel, and
tabulates quality scores against the IoU each mask achieves with its ground
truth, along with the error taxonomy and a simplified AP.
"""

import numpy as np

from plquality.evaluation import (
    Taxonomy,
    categorize_errors,
    score_iou_table,
    simplified_ap,
    scored_masks_from_predictions,
)
from plquality.synthetic import BenchmarkConfig, NoiseChannel, corrupt_predictions, generate_scene

config = BenchmarkConfig()
channel = NoiseChannel("strong", logit_noise=2.6, class_confusion=0.25)

all_rows = []
ap_values = []
histogram_total = None
for seed in range(12):
    scene = generate_scene(seed, config, scene_id=seed)
    preds = corrupt_predictions(scene, channel, seed=seed + 500)
    if not preds:
        continue
    table = score_iou_table(preds, scene.instances)
    all_rows.extend(table.rows)
    scored = scored_masks_from_predictions(preds)
    ap_values.append(simplified_ap(scored, scene.instances))
    _, histogram = categorize_errors(scored, scene.instances, Taxonomy.identity(config.num_classes))
    if histogram_total is None:
        histogram_total = histogram
    else:
        histogram_total.update(histogram)

coupled = np.array([r.scores.coupled_score for r in all_rows])
class_q = np.array([r.scores.class_quality for r in all_rows])
mask_q = np.array([r.scores.mask_quality for r in all_rows])
iou = np.array([r.best_iou for r in all_rows])

print(f"instances analyzed: {len(all_rows)}")
print(f"{'quantity':>14} {'mean':>7} {'corr with IoU':>14}")
for name, values in (("coupled score", coupled), ("class quality", class_q), ("mask quality", mask_q)):
    corr = np.corrcoef(values, iou)[0, 1]
    print(f"{name:>14} {values.mean():7.3f} {corr:14.3f}")

print("\nerror taxonomy histogram:", {k.value: v for k, v in sorted(histogram_total.items())})
print(f"simplified AP@0.5 (mean over scenes): {np.mean(ap_values):.3f}")
print(
    "\nUnder class confusion the coupled score can sit high while the mask"
    "\nIoU sags (and vice versa), which is the observation motivating the"
    "\ndecoupled thresholds."
)
