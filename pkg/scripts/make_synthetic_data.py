#!/usr/bin/env python3
"""Generate synthetic train/calibration/eval splits plus a ready experiment config.

Writes JSONL datasets for one of the two built-in task families and a
config.json wired to them, so the full pipeline can be exercised straight
away:

    python3 scripts/make_synthetic_data.py --out runs/demo
    cascadekit train --config runs/demo/config.json
    cascadekit label --config runs/demo/config.json
    cascadekit run   --config runs/demo/config.json
"""

import argparse
import json
from pathlib import Path

from cascadekit import planted_hard_task, save_dataset, tiered_task

TASKS = {"planted": planted_hard_task, "tiered": tiered_task}


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("runs/demo"))
    parser.add_argument("--task", choices=sorted(TASKS), default="planted")
    parser.add_argument("--train-size", type=int, default=800)
    parser.add_argument("--eval-size", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    make = TASKS[args.task]
    args.out.mkdir(parents=True, exist_ok=True)
    splits = {
        "train.jsonl": make(args.train_size, seed=args.seed),
        "eval.jsonl": make(args.eval_size, seed=args.seed + 7),
    }
    for name, ds in splits.items():
        save_dataset(ds, args.out / name)
        difficult = sum(inst.difficulty or 0 for inst in ds.instances)
        print(f"{args.out / name}: {len(ds)} instances, {difficult} marked difficult")

    config = {
        "train_dataset": "train.jsonl",
        "calibration_dataset": "eval.jsonl",
        "eval_dataset": "eval.jsonl",
        "output_dir": "out",
        "full_model_cost": 12,
        "stages": [
            {"architecture": {"kind": "linear"}, "layer_cost": 2},
            {"architecture": {"kind": "mlp", "hidden_size": 8}, "layer_cost": 12},
        ],
        "train": {"epochs": 10, "learning_rate": 0.2, "seed": args.seed},
        "target_speedups": [2.0, 3.0],
        "sweep_thresholds": [round(t / 20, 2) for t in range(21)],
    }
    config_path = args.out / "config.json"
    config_path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    print(f"{config_path}: experiment config for a 2-stage cascade")


if __name__ == "__main__":
    main()
