#!/usr/bin/env python3
"""Train the four chunker x smoothing variants on the change-point task.

This is a reduced-size rendition of the full comparison (run `chunklab sweep`
for the desk-scale study): sigmoid scoring collapses toward overcompression
early when paired with chunk-level smoothing, while byte-level smoothing
keeps the boundary rate pinned near the target and reaches lower
reconstruction error.

Runtime: a couple of minutes on one CPU core.
"""

import numpy as np

from chunklab.harness import ExperimentConfig, sweep

cfg = ExperimentConfig(T=1024, d_z=32, d_x=8, d_h=64, c_tar=4.0, c_max=8.0,
                       sigma=0.1, steps=300, seeds=(1, 2, 3))
print(f"config: T={cfg.T}, C_tar={cfg.c_tar}, {cfg.steps} steps, seeds {cfg.seeds}\n")
result = sweep(cfg, workers=1)

print(f"{'variant':>14} {'final mse (median)':>20} {'final C_emp':>12} {'max C_emp<=150':>15} {'final F1':>9}")
for variant in sorted(result.logs):
    logs = result.logs[variant]
    med_mse = float(np.median([lg.summary.l_mse for lg in logs]))
    med_cemp = float(np.median([lg.summary.c_emp for lg in logs]))
    early_peak = float(np.median([max(r.c_emp for r in lg.rows[:150]) for lg in logs]))
    med_f1 = float(np.median([lg.summary.f1 for lg in logs]))
    print(f"{variant:>14} {med_mse:>20.4f} {med_cemp:>12.2f} {early_peak:>15.2f} {med_f1:>9.3f}")

print("""
what to look for:
  sigmoid_chunk: the early-compression peak runs toward the 8.0 cap and the
                 final error stays high (the overcompression failure mode)
  *_byte:        compression holds near the target and the error drops lower
                 than the matching chunk-smoothing variant
""")
