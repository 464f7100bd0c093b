"""Binary instance-difficulty labeling via leave-one-out cross-training.

For each of several consecutive seeds, K fold-held-out models are trained
and each instance is predicted by the one model that never saw it.  An
instance is easy (difficulty 0) only if every seed's model got it right;
a single miss marks it difficult.  Fold assignment is fixed across seeds,
so seeds vary initialization and batch order only.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .classifier import Architecture, TrainConfig, predict_batch, train
from .dataset import Dataset, assign_folds
from .errors import ValidationError


@dataclass(frozen=True)
class DifficultyReport:
    """Per-instance difficulty labels plus the per-seed evidence behind them."""

    labels: dict[str, int]
    per_seed_correct: dict[str, list[bool]]
    num_folds: int
    seeds: tuple[int, ...]

    def __post_init__(self) -> None:
        if set(self.labels) != set(self.per_seed_correct):
            raise ValidationError("labels and per_seed_correct must cover the same ids")
        for inst_id, outcomes in self.per_seed_correct.items():
            if len(outcomes) != len(self.seeds):
                raise ValidationError(
                    f"instance {inst_id!r} has {len(outcomes)} seed outcomes, "
                    f"expected {len(self.seeds)}"
                )
            expected = 0 if all(outcomes) else 1
            if self.labels[inst_id] != expected:
                raise ValidationError(
                    f"instance {inst_id!r}: label {self.labels[inst_id]} inconsistent "
                    f"with seed outcomes {outcomes}"
                )

    @property
    def num_easy(self) -> int:
        return sum(1 for d in self.labels.values() if d == 0)

    @property
    def num_difficult(self) -> int:
        return sum(1 for d in self.labels.values() if d == 1)


def label_difficulty(
    dataset: Dataset,
    architecture: Architecture,
    base_config: TrainConfig,
    num_folds: int = 8,
    num_seeds: int = 5,
    threads: int = 1,
) -> DifficultyReport:
    """Label every instance easy (0) or difficult (1) for an architecture.

    Trains one model per (seed, fold) on the dataset minus that fold, with
    seeds ``base_config.seed .. base_config.seed + num_seeds - 1``, and
    scores each instance with its held-out models.  Difficulty labeling
    uses the plain task loss, so ``base_config.dar_weight`` must be 0.
    Deterministic regardless of ``threads``.
    """
    if num_seeds < 1:
        raise ValidationError("num_seeds must be >= 1")
    if base_config.dar_weight != 0:
        raise ValidationError("difficulty labeling requires dar_weight = 0")
    if threads < 1:
        raise ValidationError("threads must be >= 1")

    folds = assign_folds(dataset, num_folds, base_config.seed)
    fold_indices: dict[int, list[int]] = {k: [] for k in range(num_folds)}
    for idx, inst in enumerate(dataset.instances):
        fold_indices[folds.fold_of[inst.id]].append(idx)

    seeds = tuple(base_config.seed + s for s in range(num_seeds))
    jobs = [(si, seed, fold) for si, seed in enumerate(seeds) for fold in range(num_folds)]

    def run_job(job: tuple[int, int, int]) -> tuple[int, int, np.ndarray]:
        _, seed, fold = job
        heldout = fold_indices[fold]
        heldout_set = set(heldout)
        train_ds = dataset.subset([i for i in range(len(dataset)) if i not in heldout_set])
        model = train(train_ds, architecture, replace(base_config, seed=seed))
        X = np.stack([dataset.instances[i].features for i in heldout])
        y = np.array([dataset.instances[i].label for i in heldout])
        preds = predict_batch(model, X).argmax(axis=1)
        return job[0], fold, preds == y

    if threads == 1:
        results = [run_job(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_job, jobs))

    per_seed_correct = {inst.id: [False] * num_seeds for inst in dataset.instances}
    for seed_index, fold, correct in results:
        for offset, idx in enumerate(fold_indices[fold]):
            per_seed_correct[dataset.instances[idx].id][seed_index] = bool(correct[offset])

    labels = {
        inst_id: 0 if all(outcomes) else 1
        for inst_id, outcomes in per_seed_correct.items()
    }
    return DifficultyReport(labels, per_seed_correct, num_folds, seeds)


def apply_difficulty(dataset: Dataset, report: DifficultyReport) -> Dataset:
    """Copy of the dataset with the report's difficulty labels attached."""
    return dataset.with_difficulty(report.labels)


def report_to_dict(report: DifficultyReport) -> dict:
    return {
        "labels": dict(report.labels),
        "per_seed_correct": {k: list(v) for k, v in report.per_seed_correct.items()},
        "num_folds": report.num_folds,
        "seeds": list(report.seeds),
    }


def report_from_dict(payload: dict) -> DifficultyReport:
    try:
        return DifficultyReport(
            labels={str(k): int(v) for k, v in payload["labels"].items()},
            per_seed_correct={
                str(k): [bool(b) for b in v] for k, v in payload["per_seed_correct"].items()
            },
            num_folds=int(payload["num_folds"]),
            seeds=tuple(int(s) for s in payload["seeds"]),
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise ValidationError(f"malformed difficulty report: {exc}")


def save_report(report: DifficultyReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_report(path) -> DifficultyReport:
    with open(path, "r", encoding="utf-8") as fh:
        return report_from_dict(json.load(fh))
