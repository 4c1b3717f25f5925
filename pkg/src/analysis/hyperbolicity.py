"""
Normalized worst-case Gromov delta-hyperbolicity.

Every unordered quadruple is enumerated exactly. For a quadruple the three pairing sums
S1 >= S2 >= S3 give the defect (S1 - S2) / 2; delta is the largest defect and the
reported value is 2 * delta / diam, which lies in [0, 1] for any metric. The sums are
taken on the matrix divided by its diameter, so scaling the input by a power of two
leaves the value bit-identical; any other factor only perturbs it by rounding.
"""
import logging
from functools import lru_cache
from itertools import combinations
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.analysis.results import HyperbolicityResult
from src.analysis.scenes import complete_scenes
from src.core.errors import InsufficientDataError, InvalidMetricError
from src.core.manifold import ManifoldSpec, pairwise_distances
from src.data.bundle import SceneRecord, SlotBundle
from src.utils.logger import StageTimer
from src.utils.parallel import map_ordered

logger = logging.getLogger(__name__)

MIN_POINTS = 4
CHUNK_SIZE = 1 << 16


@lru_cache(maxsize=32)
def quadruple_table(n: int) -> np.ndarray:
    """All C(n, 4) unordered index quadruples as an (m, 4) array."""
    table = np.fromiter(
        (index for quad in combinations(range(n), 4) for index in quad), dtype=np.intp
    ).reshape(-1, 4)
    table.setflags(write=False)
    return table


def quadruple_count(n: int) -> int:
    return int(quadruple_table(n).shape[0])


def _check_metric(distances) -> np.ndarray:
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise InvalidMetricError(f"Distance matrix must be square, got shape {d.shape}")
    if d.shape[0] < MIN_POINTS:
        raise InsufficientDataError(f"Gromov delta needs at least {MIN_POINTS} points, got {d.shape[0]}")
    if not np.all(np.isfinite(d)):
        raise InvalidMetricError("Distance matrix contains non-finite values")
    if not np.array_equal(d, d.T):
        raise InvalidMetricError("Distance matrix is not symmetric")
    if np.any(d < 0):
        raise InvalidMetricError("Distance matrix has negative entries")
    if np.any(np.diag(d) != 0):
        raise InvalidMetricError("Distance matrix has a nonzero diagonal")
    return d


def gromov_delta(distances) -> float:
    """
    Normalized worst-case four-point delta of a finite metric.

    Args:
        distances: Symmetric nonnegative n x n matrix with zero diagonal, n >= 4

    Returns:
        2 * delta / diam in [0, 1]; 0 when the diameter is 0
    """
    d = _check_metric(distances)
    diam = float(d.max())
    if diam == 0.0:
        return 0.0

    unit = d / diam
    table = quadruple_table(d.shape[0])
    # 2 * delta / diam, the largest S1 - S2 of the unit-diameter metric, never exceeds 1
    worst = 0.0
    for start in range(0, table.shape[0], CHUNK_SIZE):
        quads = table[start:start + CHUNK_SIZE]
        i, j, k, l = quads[:, 0], quads[:, 1], quads[:, 2], quads[:, 3]
        sums = np.stack([unit[i, j] + unit[k, l], unit[i, k] + unit[j, l], unit[i, l] + unit[j, k]], axis=1)
        sums.sort(axis=1)
        worst = max(worst, float(np.max(sums[:, 2] - sums[:, 1])))
        if worst >= 1.0:
            break
    return min(worst, 1.0)


def _scene_delta(scene: SceneRecord, manifold: ManifoldSpec, levels: Sequence[int], per_level: bool):
    union = gromov_delta(pairwise_distances(scene.stacked_slots(levels), manifold))
    if not per_level:
        return union, None
    level_deltas = {}
    for level in levels:
        if scene.slots[level].shape[0] < MIN_POINTS:
            continue
        level_deltas[level] = gromov_delta(pairwise_distances(scene.slots[level], manifold))
    return union, level_deltas


def hyperbolicity_analysis(
    bundle: SlotBundle,
    manifold: ManifoldSpec,
    levels: Optional[Sequence[int]] = None,
    per_level: bool = False,
    workers: int = 1,
) -> HyperbolicityResult:
    """
    Per-scene normalized delta over the union of all levels' slots.

    Args:
        bundle: Slot bundle
        manifold: Metric used for the pairwise distance matrix (l2 for Euclidean)
        levels: Levels pooled per scene (default: all bundle levels)
        per_level: Also evaluate each level on its own; levels with fewer than 4 slots are skipped
        workers: Scene-level worker count

    Returns:
        HyperbolicityResult with one delta per usable scene
    """
    levels = sorted(levels or bundle.levels)
    scenes = complete_scenes(bundle, levels, min_slots=MIN_POINTS)

    with StageTimer("hyperbolicity", f"{manifold.label}, {len(scenes)} scenes"):
        outputs = map_ordered(lambda s: _scene_delta(s, manifold, levels, per_level), scenes, workers)

    per_scene = np.array([union for union, _ in outputs], dtype=np.float64)
    per_level_delta: Optional[Dict[int, np.ndarray]] = None
    if per_level:
        per_level_delta = {}
        for level in levels:
            values: List[float] = [lv[level] for _, lv in outputs if level in lv]
            if values:
                per_level_delta[level] = np.array(values, dtype=np.float64)
    return HyperbolicityResult(manifold, [s.scene_id for s in scenes], per_scene, per_level_delta)
