"""Sequential model cascades with confidence-gated early exits.

Stages run cheapest-first; an instance stops at the first stage whose top
class probability strictly exceeds that stage's threshold, and the last
stage always answers.  Cost accounting charges every stage an instance
actually ran, so re-running a harder model on top of a cheap miss is paid
for in full.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .classifier import (
    ClassDistribution,
    ClassifierModel,
    confidence,
    load_model,
    predict,
    predict_batch,
    save_model,
)
from .dataset import Dataset, Instance
from .errors import ValidationError

DEFAULT_FULL_MODEL_COST = 12
DEFAULT_CALIBRATION_TOLERANCE = 0.04


@dataclass(frozen=True)
class StageSpec:
    """One cascade member: a model plus its abstract layer cost."""

    model: ClassifierModel
    layer_cost: int

    def __post_init__(self) -> None:
        if self.layer_cost < 1:
            raise ValidationError("layer_cost must be >= 1")


@dataclass(frozen=True)
class Cascade:
    """Ordered stages, per-stage exit thresholds, and the reference cost.

    ``full_model_cost`` is the layer count of the notional full model that
    speed-ups are quoted against; it is explicit because the reference can
    exceed the largest stage actually present.
    """

    stages: tuple[StageSpec, ...]
    thresholds: tuple[float, ...]
    full_model_cost: int = DEFAULT_FULL_MODEL_COST

    def __post_init__(self) -> None:
        stages = tuple(self.stages)
        thresholds = tuple(float(t) for t in self.thresholds)
        object.__setattr__(self, "stages", stages)
        object.__setattr__(self, "thresholds", thresholds)
        if not stages:
            raise ValidationError("cascade needs at least one stage")
        costs = [s.layer_cost for s in stages]
        if any(a > b for a, b in zip(costs, costs[1:])):
            raise ValidationError(f"stage costs must be ascending, got {costs}")
        if len(thresholds) != len(stages) - 1:
            raise ValidationError(
                f"{len(stages)} stages need {len(stages) - 1} thresholds, "
                f"got {len(thresholds)}"
            )
        if any(not 0.0 <= t <= 1.0 for t in thresholds):
            raise ValidationError("thresholds must lie in [0, 1]")
        if self.full_model_cost < 1:
            raise ValidationError("full_model_cost must be >= 1")

    def with_shared_threshold(self, tau: float) -> "Cascade":
        """Same stages with every non-final threshold set to ``tau``."""
        return Cascade(self.stages, (float(tau),) * (len(self.stages) - 1), self.full_model_cost)


@dataclass(frozen=True)
class ExitTrace:
    """Where one instance left the cascade and what it cost to get there."""

    instance_id: str
    exit_stage: int
    distribution: ClassDistribution
    confidence: float
    executed_costs: tuple[int, ...]
    total_cost: int

    def __post_init__(self) -> None:
        if self.exit_stage != len(self.executed_costs) - 1:
            raise ValidationError("executed_costs must cover stages 0..exit_stage")
        if self.total_cost != sum(self.executed_costs):
            raise ValidationError("total_cost must equal the sum of executed_costs")

    @property
    def predicted_label(self) -> int:
        return self.distribution.predicted_label


def cascade_predict(cascade: Cascade, instance: Instance) -> ExitTrace:
    """Run stages in order until one clears its threshold (strictly) or the
    last stage is reached; the last stage emits unconditionally."""
    executed: list[int] = []
    last = len(cascade.stages) - 1
    for stage_index, stage in enumerate(cascade.stages):
        dist = predict(stage.model, instance)
        executed.append(stage.layer_cost)
        conf = confidence(dist)
        if stage_index == last or conf > cascade.thresholds[stage_index]:
            return ExitTrace(
                instance_id=instance.id,
                exit_stage=stage_index,
                distribution=dist,
                confidence=conf,
                executed_costs=tuple(executed),
                total_cost=sum(executed),
            )
    raise AssertionError("unreachable: final stage always emits")


def run_cascade(cascade: Cascade, dataset: Dataset) -> list[ExitTrace]:
    """Traces for every instance, in dataset order."""
    return [cascade_predict(cascade, inst) for inst in dataset.instances]


def speedup_ratio(traces: list[ExitTrace], full_model_cost: int) -> float:
    """Reference cost divided by the mean executed cost per instance."""
    if not traces:
        raise ValidationError("speedup_ratio needs at least one trace")
    if full_model_cost < 1:
        raise ValidationError("full_model_cost must be >= 1")
    mean_cost = sum(t.total_cost for t in traces) / len(traces)
    return full_model_cost / mean_cost


def _confidence_matrix(cascade: Cascade, dataset: Dataset) -> np.ndarray:
    """Per-stage top probabilities, shape (num_stages, num_instances)."""
    X = dataset.feature_matrix()
    return np.stack([predict_batch(stage.model, X).max(axis=1) for stage in cascade.stages])


def _exit_stages(conf: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Exit stage per instance given a (num_stages, N) confidence matrix."""
    num_stages = conf.shape[0]
    if num_stages == 1:
        return np.zeros(conf.shape[1], dtype=np.int64)
    gated = conf[:-1] > thresholds[:, None]
    exited = gated.any(axis=0)
    first = gated.argmax(axis=0)
    return np.where(exited, first, num_stages - 1)


def calibrate_threshold(
    cascade: Cascade,
    calibration: Dataset,
    target_speedup: float,
    tolerance: float = DEFAULT_CALIBRATION_TOLERANCE,
) -> tuple[float, ...]:
    """Find a shared threshold whose measured speed-up matches the target.

    Sweeps the threshold over every confidence value any non-final stage
    produces on the calibration set (plus 0 and 1), so every operating
    point achievable on that set is tried.  Returns per-stage thresholds
    all equal to the winning value.  Raises if the closest achievable
    speed-up misses the target by more than ``tolerance * target``, or if
    the target is outside [1, full_model_cost / smallest stage cost].
    """
    if not calibration.instances:
        raise ValidationError("calibration dataset is empty")
    if tolerance <= 0:
        raise ValidationError("tolerance must be positive")
    costs = np.array([s.layer_cost for s in cascade.stages], dtype=np.float64)
    max_speedup = cascade.full_model_cost / costs[0]
    if not 1.0 <= target_speedup <= max_speedup:
        raise ValidationError(
            f"target speed-up {target_speedup:g} outside achievable range "
            f"[1, {max_speedup:g}] for this cascade"
        )

    conf = _confidence_matrix(cascade, calibration)
    cum_costs = np.cumsum(costs)
    candidates = np.unique(np.concatenate([conf[:-1].ravel(), [0.0, 1.0]]))

    best_tau = 0.0
    best_gap = np.inf
    best_measured = np.nan
    lo, hi = np.inf, -np.inf
    for tau in candidates:
        exit_stage = _exit_stages(conf, np.full(len(cascade.stages) - 1, tau))
        measured = cascade.full_model_cost / cum_costs[exit_stage].mean()
        lo, hi = min(lo, measured), max(hi, measured)
        gap = abs(measured - target_speedup)
        if gap < best_gap:
            best_gap, best_tau, best_measured = gap, float(tau), measured
    if best_gap > tolerance * target_speedup:
        raise ValidationError(
            f"no threshold reaches {target_speedup:g}x within "
            f"{tolerance:.0%}: closest {best_measured:g}x, achievable "
            f"range [{lo:g}x, {hi:g}x] on this calibration set"
        )
    return (best_tau,) * (len(cascade.stages) - 1)


def trace_to_dict(trace: ExitTrace) -> dict:
    return {
        "instance_id": trace.instance_id,
        "exit_stage": trace.exit_stage,
        "probs": [float(p) for p in trace.distribution.probs],
        "confidence": trace.confidence,
        "executed_costs": list(trace.executed_costs),
        "total_cost": trace.total_cost,
    }


def trace_from_dict(payload: dict) -> ExitTrace:
    try:
        return ExitTrace(
            instance_id=str(payload["instance_id"]),
            exit_stage=int(payload["exit_stage"]),
            distribution=ClassDistribution(np.asarray(payload["probs"], dtype=np.float64)),
            confidence=float(payload["confidence"]),
            executed_costs=tuple(int(c) for c in payload["executed_costs"]),
            total_cost=int(payload["total_cost"]),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed trace record: {exc}")


def save_traces(traces: list[ExitTrace], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace_to_dict(trace), sort_keys=True))
            fh.write("\n")


def load_traces(path) -> list[ExitTrace]:
    traces = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}: line {line_no}: invalid JSON ({exc.msg})")
            traces.append(trace_from_dict(payload))
    return traces


def save_cascade(cascade: Cascade, path, model_filenames: list[str] | None = None) -> None:
    """Write a cascade description JSON plus one model file per stage.

    Model files live next to the description; the description references
    them by relative name so the bundle can be moved as a directory.
    """
    directory = os.path.dirname(os.path.abspath(path))
    if model_filenames is None:
        model_filenames = [f"stage{i}_model.json" for i in range(len(cascade.stages))]
    if len(model_filenames) != len(cascade.stages):
        raise ValidationError("need one model filename per stage")
    for stage, name in zip(cascade.stages, model_filenames):
        save_model(stage.model, os.path.join(directory, name))
    payload = {
        "stages": [
            {"model_path": name, "layer_cost": stage.layer_cost}
            for stage, name in zip(cascade.stages, model_filenames)
        ],
        "thresholds": list(cascade.thresholds),
        "full_model_cost": cascade.full_model_cost,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_cascade(path) -> Cascade:
    """Read a cascade description JSON, loading stage models from paths
    resolved relative to the description file."""
    directory = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    try:
        stages = tuple(
            StageSpec(
                model=load_model(os.path.join(directory, entry["model_path"])),
                layer_cost=int(entry["layer_cost"]),
            )
            for entry in payload["stages"]
        )
        thresholds = tuple(float(t) for t in payload["thresholds"])
        full_model_cost = int(payload["full_model_cost"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed cascade description: {exc}")
    return Cascade(stages, thresholds, full_model_cost)
