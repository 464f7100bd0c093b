"""Expected accuracy gain from inserting an extra model into a cascade.

Given exit counts measured on the enlarged cascade, the original cascade's
exit counts at equal total cost are recovered in closed form (only the two
stages adjacent to the insertion move), and the expected accuracy change
follows under the assumption that each model's accuracy is the same on any
subset it answers.  Two successively looser upper bounds quantify the best
case.  :func:`empirical_gain` is the measured counterpart for real runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .cascade import Cascade, run_cascade, speedup_ratio
from .dataset import Dataset
from .errors import ValidationError
from .metrics import accuracy, scored_from_traces

FEASIBILITY_SLACK = 1e-9
SPEEDUP_MATCH_TOLERANCE = 0.01


@dataclass(frozen=True)
class GainScenario:
    """An insertion of one new model into an existing cascade.

    ``insert_after`` is the 0-based index of the model directly below the
    new one, so costs satisfy
    ``layer_counts[insert_after] < new_layers < layer_counts[insert_after + 1]``.
    ``new_exits[k]`` counts instances exiting at original model k in the
    enlarged cascade; ``new_model_exits`` counts exits at the new model.
    """

    layer_counts: tuple[int, ...]
    accuracies: tuple[float, ...]
    insert_after: int
    new_layers: int
    new_accuracy: float
    new_exits: tuple[int, ...]
    new_model_exits: int

    def __post_init__(self) -> None:
        n = len(self.layer_counts)
        if n < 2:
            raise ValidationError("scenario needs at least two original models")
        if len(self.accuracies) != n or len(self.new_exits) != n:
            raise ValidationError("layer_counts, accuracies, new_exits must align")
        if any(c < 1 for c in self.layer_counts):
            raise ValidationError("layer counts must be >= 1")
        if any(a >= b for a, b in zip(self.layer_counts, self.layer_counts[1:])):
            raise ValidationError(f"layer counts must be strictly ascending, got {self.layer_counts}")
        if any(not 0.0 <= a <= 1.0 for a in (*self.accuracies, self.new_accuracy)):
            raise ValidationError("accuracies must lie in [0, 1]")
        if not 0 <= self.insert_after <= n - 2:
            raise ValidationError(f"insert_after must be in [0, {n - 2}], got {self.insert_after}")
        lo = self.layer_counts[self.insert_after]
        hi = self.layer_counts[self.insert_after + 1]
        if not lo < self.new_layers < hi:
            raise ValidationError(
                f"new_layers must fall strictly between {lo} and {hi}, got {self.new_layers}"
            )
        if any(s < 0 for s in self.new_exits) or self.new_model_exits < 0:
            raise ValidationError("exit counts must be non-negative")
        if self.num_instances < 1:
            raise ValidationError("scenario needs at least one instance")

    @property
    def num_instances(self) -> int:
        return sum(self.new_exits) + self.new_model_exits


@dataclass(frozen=True)
class OriginalExits:
    """Per-stage exit counts of the original cascade at matched cost.

    The algebra runs over reals, so counts may be fractional and, for
    scenarios no threshold setting can realize, negative; ``feasible``
    flags the latter rather than rounding it away.
    """

    exits: tuple[float, ...]

    @property
    def feasible(self) -> bool:
        return all(s >= -FEASIBILITY_SLACK for s in self.exits)


def _moved_mass(scenario: GainScenario) -> float:
    i = scenario.insert_after
    ratio = scenario.new_layers / scenario.layer_counts[i + 1]
    return ratio * (scenario.new_exits[i + 1] + scenario.new_model_exits)


def solve_original_exits(scenario: GainScenario) -> OriginalExits:
    """Original-cascade exit counts with total cost equal to the enlarged
    cascade's, moving instances only between the two insertion-adjacent
    stages."""
    i = scenario.insert_after
    moved = _moved_mass(scenario)
    exits = [float(s) for s in scenario.new_exits]
    exits[i] += scenario.new_model_exits - moved
    exits[i + 1] += moved
    return OriginalExits(tuple(exits))


def predict_gain(scenario: GainScenario) -> float:
    """Expected accuracy of the enlarged cascade minus the original's."""
    i = scenario.insert_after
    a = scenario.accuracies
    first = scenario.new_model_exits * (scenario.new_accuracy - a[i])
    second = _moved_mass(scenario) * (a[i + 1] - a[i])
    return (first - second) / scenario.num_instances


def gain_upper_bound(scenario: GainScenario) -> float:
    """Upper bound on the gain; needs the new model's accuracy to sit
    between its neighbors' accuracies."""
    i = scenario.insert_after
    a = scenario.accuracies
    if not a[i] <= scenario.new_accuracy <= a[i + 1]:
        raise ValidationError(
            "gain_upper_bound requires new_accuracy between the neighboring "
            f"accuracies ({a[i]:g}, {a[i + 1]:g}), got {scenario.new_accuracy:g}"
        )
    cost_ratio = scenario.layer_counts[i] / scenario.layer_counts[i + 1]
    mass = scenario.new_model_exits - cost_ratio * (
        scenario.new_exits[i + 1] + scenario.new_model_exits
    )
    return (a[i + 1] - a[i]) * mass / scenario.num_instances


def max_gain_bound(
    layer_counts: tuple[int, ...],
    accuracies: tuple[float, ...],
    exit_counts: tuple[float, ...],
) -> float:
    """Loosest bound, from the original cascade alone: no insertion point
    is specified, so each factor is taken at its worst adjacent pair."""
    n = len(layer_counts)
    if n < 2:
        raise ValidationError("max_gain_bound needs at least two models")
    if len(accuracies) != n or len(exit_counts) != n:
        raise ValidationError("layer_counts, accuracies, exit_counts must align")
    total = sum(exit_counts)
    if total <= 0:
        raise ValidationError("exit counts must sum to a positive total")
    mass = max(exit_counts[j] + exit_counts[j + 1] for j in range(n - 1))
    gap = max(accuracies[j + 1] - accuracies[j] for j in range(n - 1))
    ratio = min(layer_counts[j] / layer_counts[j + 1] for j in range(n - 1))
    return (mass / total) * gap * (1.0 - ratio)


def empirical_gain(
    cascade_without: Cascade, cascade_with: Cascade, dataset: Dataset
) -> float:
    """Measured accuracy difference (with minus without the extra model).

    Both cascades must land within 1% of each other's measured speed-up on
    the dataset, otherwise the comparison confounds accuracy with cost.
    """
    traces_without = run_cascade(cascade_without, dataset)
    traces_with = run_cascade(cascade_with, dataset)
    sp_without = speedup_ratio(traces_without, cascade_without.full_model_cost)
    sp_with = speedup_ratio(traces_with, cascade_with.full_model_cost)
    if abs(sp_with - sp_without) > SPEEDUP_MATCH_TOLERANCE * sp_without:
        raise ValidationError(
            f"speed-ups differ by more than 1%: {sp_without:g}x without vs "
            f"{sp_with:g}x with the extra model"
        )
    acc_without = accuracy(scored_from_traces(traces_without, dataset))
    acc_with = accuracy(scored_from_traces(traces_with, dataset))
    return acc_with - acc_without


def gain_report(scenario: GainScenario) -> dict:
    """Predicted gain, both bounds, and the recovered original exits.

    The tighter bound needs the new model's accuracy between its
    neighbors'; when that fails it is reported as null.
    """
    exits = solve_original_exits(scenario)
    i = scenario.insert_after
    a = scenario.accuracies
    bound = None
    if a[i] <= scenario.new_accuracy <= a[i + 1]:
        bound = gain_upper_bound(scenario)
    return {
        "predicted_gain": predict_gain(scenario),
        "original_exits": [float(s) for s in exits.exits],
        "feasible": exits.feasible,
        "gain_upper_bound": bound,
        "max_gain_bound": max_gain_bound(
            scenario.layer_counts, scenario.accuracies, exits.exits
        ),
    }


def scenario_to_dict(scenario: GainScenario) -> dict:
    return {
        "layer_counts": list(scenario.layer_counts),
        "accuracies": list(scenario.accuracies),
        "insert_after": scenario.insert_after,
        "new_layers": scenario.new_layers,
        "new_accuracy": scenario.new_accuracy,
        "new_exits": list(scenario.new_exits),
        "new_model_exits": scenario.new_model_exits,
    }


def scenario_from_dict(payload: dict) -> GainScenario:
    try:
        return GainScenario(
            layer_counts=tuple(int(c) for c in payload["layer_counts"]),
            accuracies=tuple(float(a) for a in payload["accuracies"]),
            insert_after=int(payload["insert_after"]),
            new_layers=int(payload["new_layers"]),
            new_accuracy=float(payload["new_accuracy"]),
            new_exits=tuple(int(s) for s in payload["new_exits"]),
            new_model_exits=int(payload["new_model_exits"]),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed gain scenario: {exc}")


def save_scenario(scenario: GainScenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(scenario), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_scenario(path) -> GainScenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))
