#!/usr/bin/env python3
"""Robustness analysis on a synthetic scene: coarse-scale and label-ratio
sweeps, printed as the same value/OA/Kappa tables the CLI sweep emits.

Usage: python scripts/sweep_scale.py [--seed 0] [--workdir /tmp/hypercd_sweep]
"""

import argparse
import os
from dataclasses import replace

from hypercd.pipeline import (
    PipelineConfig,
    resolve_scales,
    run_synth,
    stage_stack,
    sweep,
)


def _table(title: str, results) -> None:
    print(f"\n{title}")
    print("value,FAR,MAR,OA,Kappa")
    for value, m in results:
        print(f"{value:g},{m.far:.6f},{m.mar:.6f},{m.oa:.6f},{m.kappa:.6f}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workdir", default="/tmp/hypercd_sweep")
    args = ap.parse_args()

    scene = os.path.join(args.workdir, "scene")
    t1, t2, ref = run_synth(128, 128, 3, 0.02, seed=args.seed, out_dir=scene)
    base = PipelineConfig(
        t1=t1, t2=t2, reference=ref,
        out_dir=os.path.join(args.workdir, "base"),
        fine_scale=None, coarse_scale=None, seed=args.seed,
    )
    s1, _ = resolve_scales(base, stage_stack(base))
    print(f"auto fine scale: {s1:.3f}")

    # coarse scale stepped like the customary 15..30-by-3 grid at fine=8
    ratios = [15 / 8, 18 / 8, 21 / 8, 24 / 8, 27 / 8, 30 / 8]
    cfg = replace(base, fine_scale=s1, out_dir=os.path.join(args.workdir, "s2"))
    _table("coarse-scale sweep", sweep(cfg, "coarse_scale", [s1 * r for r in ratios]))

    cfg = replace(base, out_dir=os.path.join(args.workdir, "ratio"))
    _table(
        "label-ratio sweep",
        sweep(cfg, "label_ratio", [0.05, 0.10, 0.15, 0.20, 0.25]),
    )


if __name__ == "__main__":
    main()
