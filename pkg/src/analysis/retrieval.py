"""
Hit@1 parent retrieval.

For every non-excluded fine slot the coarse slots are ranked by manifold distance;
the slot counts as a hit only when its mask-based parent is strictly closest.
"""
import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.analysis.results import RetrievalResult
from src.analysis.scenes import complete_scenes, required_levels, scene_hierarchy
from src.core.errors import InvalidInputError
from src.core.hierarchy import BinarizationPolicy, ParentAssignment
from src.core.manifold import ManifoldSpec, retrieval_distances
from src.data.bundle import SceneRecord, SlotBundle
from src.utils.config import CONSECUTIVE_PAIRS, TAU_EXCL
from src.utils.logger import StageTimer
from src.utils.parallel import map_ordered

logger = logging.getLogger(__name__)


def strict_nearest(distances: np.ndarray) -> np.ndarray:
    """
    Index of the strictly smallest entry per row, or -1 when the minimum is tied.
    """
    nearest = np.argmin(distances, axis=1)
    minima = distances[np.arange(distances.shape[0]), nearest]
    ties = np.sum(distances == minima[:, None], axis=1) > 1
    return np.where(ties, -1, nearest)


def hit_at_1(coarse_slots, fine_slots, gt: ParentAssignment, manifold: ManifoldSpec) -> RetrievalResult:
    """
    Hit@1 of one coarse/fine slot set against its mask-based parents.

    Args:
        coarse_slots: N1 x d coarse slot matrix
        fine_slots: N2 x d fine slot matrix
        gt: Parent assignment for the same level pair
        manifold: Cosine distance for Euclidean, geodesic distance for Lorentz

    Returns:
        RetrievalResult; n_evaluated is 0 when every fine slot is excluded
    """
    coarse = np.asarray(coarse_slots, dtype=np.float64)
    fine = np.asarray(fine_slots, dtype=np.float64)
    n_coarse, n_fine = gt.level_pair
    if coarse.ndim != 2 or fine.ndim != 2 or coarse.shape[0] != n_coarse or fine.shape[0] != n_fine:
        raise InvalidInputError(
            f"Slot counts {coarse.shape[0] if coarse.ndim == 2 else '?'}/{fine.shape[0] if fine.ndim == 2 else '?'} "
            f"do not match level pair {gt.level_pair}"
        )

    evaluated = gt.evaluated()
    if not evaluated:
        return RetrievalResult(gt.level_pair, manifold, 0, 0)

    distances = retrieval_distances(coarse, fine[evaluated], manifold)
    predicted = strict_nearest(distances)
    hits = int(np.sum(predicted == gt.parent_of[evaluated]))
    return RetrievalResult(gt.level_pair, manifold, hits, len(evaluated))


def _scene_retrieval(scene: SceneRecord, manifolds: Sequence[ManifoldSpec], pairs, policy, tau_excl):
    graph = scene_hierarchy(scene, pairs, policy, tau_excl)
    results = {}
    for coarse, fine in pairs:
        gt = graph.assignments[(coarse, fine)]
        for manifold in manifolds:
            results[(manifold, (coarse, fine))] = hit_at_1(scene.slots[coarse], scene.slots[fine], gt, manifold)
    return results


def retrieval_analysis(
    bundle: SlotBundle,
    manifolds: Sequence[ManifoldSpec],
    pairs: Sequence[Tuple[int, int]] = CONSECUTIVE_PAIRS,
    policy: BinarizationPolicy = BinarizationPolicy(),
    tau_excl: float = TAU_EXCL,
    workers: int = 1,
) -> List[RetrievalResult]:
    """
    Pool Hit@1 over all complete scenes for every manifold and level pair.

    Returns:
        Results ordered manifold-major, then by level pair
    """
    scenes = complete_scenes(bundle, required_levels(pairs))
    totals: Dict[Tuple[ManifoldSpec, Tuple[int, int]], RetrievalResult] = {
        (m, pair): RetrievalResult(pair, m, 0, 0) for m in manifolds for pair in pairs
    }
    with StageTimer("retrieval", f"{len(scenes)} scenes x {len(manifolds)} manifolds"):
        per_scene = map_ordered(lambda s: _scene_retrieval(s, manifolds, pairs, policy, tau_excl), scenes, workers)
        for scene_results in per_scene:
            for key, result in scene_results.items():
                totals[key] = totals[key].merge(result)
    return [totals[(m, pair)] for m in manifolds for pair in pairs]
