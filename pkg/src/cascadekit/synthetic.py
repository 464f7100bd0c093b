"""Synthetic binary tasks with controllable difficulty structure.

Both generators attach ground-truth difficulty flags to the instances they
plant as hard, so experiments can score confidence-difficulty ranking
against a known reference instead of a labeling heuristic.
"""

from __future__ import annotations

import numpy as np

from .dataset import Dataset, Instance
from .errors import ValidationError


def planted_hard_task(
    num_instances: int,
    seed: int,
    hard_fraction: float = 0.2,
    separation: float = 2.0,
    noise: float = 0.45,
    marker_offset: float = 0.7,
    marker_noise: float = 0.35,
    marker_class_pull: float = 0.25,
    id_prefix: str = "inst",
) -> Dataset:
    """Two separable blobs plus a planted unlearnable subpopulation.

    Easy instances (difficulty 0) are two class blobs split along feature
    0.  Hard instances (difficulty 1) sit on top of the class-1 blob with
    coin-flip labels, so no model can beat chance on them.

    Feature 2 is a confounded marker: among easy instances it leans
    toward the class sign (scaled by ``marker_class_pull``), while hard
    instances carry a larger offset ``marker_offset`` regardless of label.
    The true class posterior is therefore non-monotone in the marker
    (rising through the easy range, falling back to chance in the hard
    range), which a linear logit cannot represent; a model that treats the
    marker as class evidence ends up systematically overconfident exactly
    on the hard group.
    """
    if num_instances < 1:
        raise ValidationError("num_instances must be >= 1")
    if not 0.0 <= hard_fraction < 1.0:
        raise ValidationError("hard_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    num_hard = int(round(num_instances * hard_fraction))
    instances = []
    for i in range(num_instances):
        hard = i < num_hard
        label = int(rng.integers(0, 2))
        if hard:
            center = separation / 2.0
            marker_mean = marker_offset
        else:
            center = (separation / 2.0) if label == 1 else (-separation / 2.0)
            marker_mean = marker_class_pull * (2 * label - 1)
        features = np.array(
            [
                center + noise * rng.standard_normal(),
                noise * rng.standard_normal(),
                marker_mean + marker_noise * rng.standard_normal(),
            ]
        )
        instances.append(
            Instance(
                id=f"{id_prefix}{i:05d}",
                features=features,
                label=label,
                difficulty=1 if hard else 0,
            )
        )
    return Dataset(tuple(instances), num_classes=2, feature_dim=3)


def tiered_task(
    num_instances: int,
    seed: int,
    easy_fraction: float = 0.6,
    easy_offset: float = 1.5,
    xor_offset: float = 1.2,
    noise: float = 0.3,
    id_prefix: str = "inst",
) -> Dataset:
    """A mix of linearly separable instances and corner-XOR instances.

    Easy instances (difficulty 0) split along feature 0 and any linear
    model handles them.  Hard instances (difficulty 1) occupy the four
    corners of feature space with labels given by the sign product, which
    no linear model can do better than chance on but a small hidden layer
    solves; they are what the expensive cascade stages are for.
    """
    if num_instances < 1:
        raise ValidationError("num_instances must be >= 1")
    if not 0.0 < easy_fraction < 1.0:
        raise ValidationError("easy_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    num_easy = int(round(num_instances * easy_fraction))
    instances = []
    for i in range(num_instances):
        if i < num_easy:
            label = int(rng.integers(0, 2))
            features = np.array(
                [
                    (easy_offset if label == 1 else -easy_offset)
                    + noise * rng.standard_normal(),
                    noise * rng.standard_normal(),
                ]
            )
            difficulty = 0
        else:
            sx = 1 if rng.integers(0, 2) else -1
            sy = 1 if rng.integers(0, 2) else -1
            label = 1 if sx * sy > 0 else 0
            features = np.array(
                [
                    sx * xor_offset + noise * rng.standard_normal(),
                    sy * xor_offset + noise * rng.standard_normal(),
                ]
            )
            difficulty = 1
        instances.append(
            Instance(
                id=f"{id_prefix}{i:05d}",
                features=features,
                label=label,
                difficulty=difficulty,
            )
        )
    return Dataset(tuple(instances), num_classes=2, feature_dim=2)
