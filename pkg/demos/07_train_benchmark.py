"""End-to-end training on the synthetic benchmark, with a mini ablation.

Runs burn-in plus teacher-student mutual learning under the default
configuration, prints the training trajectory, then compares the full
pipeline against its single-module ablations on a handful of seeds.

Takes a minute or two; pass --quick for a single-seed smoke run.
"""

import sys

import numpy as np

from plquality.training import (
    ABLATION_VARIANTS,
    PipelineSettings,
    ablation_settings,
    run_pipeline,
)

quick = "--quick" in sys.argv
settings = PipelineSettings()

result = run_pipeline(settings, seed=1)
print("single run (seed 1):")
print(f"  burn-in loss {result.burn_in_history[0]:.3f} -> {result.burn_in_history[-1]:.3f}")
for record in result.log[:: max(1, len(result.log) // 6)]:
    print(
        f"  it {record['iteration']:3d}  w={record['fusion_weight']:.3f}  "
        f"loss={record['loss_total']:.3f}  kept={record['pseudo_kept']}  "
        f"precision={record['pseudo_precision']}"
    )
print(f"  final: mIoU {result.metrics['miou']:.2f}  pixel acc {result.metrics['pixel_accuracy']:.2f}")
print(f"  run pseudo-label precision {result.pseudo_precision:.3f}  recall {result.pseudo_recall:.3f}")

seeds = range(1) if quick else range(6)
print(f"\nablation over {len(list(seeds))} seed(s):")
for variant in ABLATION_VARIANTS:
    miou = []
    precision = []
    for seed in seeds:
        res = run_pipeline(ablation_settings(settings, variant), seed=seed)
        miou.append(res.metrics["miou"])
        precision.append(res.pseudo_precision)
    print(
        f"  {variant:8s} mean mIoU {np.mean(miou):6.2f}   "
        f"mean pseudo-label precision {np.nanmean(precision):.3f}"
    )
print(
    "\n'no_ddtf' swaps the dual thresholds for the coupled 0.765 baseline,"
    "\n'no_dicc' disables category correction, 'no_pmua' drops the"
    "\nuncertainty weighting, and 'none' removes all three."
)
