"""
Cross-manifold agreement of predicted parents.

Each manifold predicts the parent of a fine slot as its nearest coarse slot (ties to the
lowest index); the mask-based parent is the ground-truth labeling. Two labelings agree on
a fine slot when they pick the same parent.
"""
import logging
from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.analysis.results import GT_LABEL, AgreementMatrix, TradeoffSummary, manifold_labels
from src.analysis.scenes import complete_scenes, required_levels, scene_hierarchy
from src.core.hierarchy import BinarizationPolicy
from src.core.manifold import ManifoldSpec, retrieval_distances
from src.data.bundle import SceneRecord, SlotBundle
from src.utils.config import CONSECUTIVE_PAIRS, TAU_EXCL
from src.utils.logger import StageTimer
from src.utils.parallel import map_ordered

logger = logging.getLogger(__name__)


def _scene_parents(scene: SceneRecord, manifolds: Sequence[ManifoldSpec], pairs, policy, tau_excl) -> np.ndarray:
    """Predicted parents as an (n_slots, n_manifolds + 1) array, GT last."""
    graph = scene_hierarchy(scene, pairs, policy, tau_excl)
    blocks = []
    for coarse, fine in pairs:
        gt = graph.assignments[(coarse, fine)]
        evaluated = gt.evaluated()
        if not evaluated:
            continue
        columns = [
            np.argmin(retrieval_distances(scene.slots[coarse], scene.slots[fine][evaluated], m), axis=1)
            for m in manifolds
        ]
        columns.append(gt.parent_of[evaluated])
        blocks.append(np.stack(columns, axis=1))
    if not blocks:
        return np.empty((0, len(manifolds) + 1), dtype=np.intp)
    return np.concatenate(blocks, axis=0)


def agreement_analysis(
    bundle: SlotBundle,
    manifolds: Sequence[ManifoldSpec],
    pairs: Sequence[Tuple[int, int]] = CONSECUTIVE_PAIRS,
    policy: BinarizationPolicy = BinarizationPolicy(),
    tau_excl: float = TAU_EXCL,
    workers: int = 1,
) -> AgreementMatrix:
    """
    Pairwise agreement between manifold-induced and mask-based parents.

    Agreement is pooled over scenes and level pairs on non-excluded fine slots.
    With no evaluated slot the off-diagonal entries are NaN.

    Returns:
        Symmetric AgreementMatrix with unit diagonal, labels = manifolds then "gt"
    """
    labels = manifold_labels(manifolds) + [GT_LABEL]
    scenes = complete_scenes(bundle, required_levels(pairs))

    with StageTimer("agreement", f"{len(scenes)} scenes x {len(manifolds)} manifolds"):
        blocks = map_ordered(lambda s: _scene_parents(s, manifolds, pairs, policy, tau_excl), scenes, workers)
    parents = np.concatenate(blocks, axis=0) if blocks else np.empty((0, len(labels)), dtype=np.intp)

    size = len(labels)
    entries = np.eye(size)
    n_slots = parents.shape[0]
    if n_slots == 0:
        logger.warning("No evaluated fine slots; agreement is undefined")
    for a in range(size):
        for b in range(a + 1, size):
            value = float(np.mean(parents[:, a] == parents[:, b])) if n_slots else float("nan")
            entries[a, b] = entries[b, a] = value
    return AgreementMatrix(labels, entries, n_slots)


def summarize_tradeoff(retrieval: Sequence, separation: Sequence) -> TradeoffSummary:
    """
    Mean Hit@1 over level pairs and OV mean per manifold.

    Args:
        retrieval: RetrievalResult records
        separation: SeparationResult records

    Returns:
        TradeoffSummary naming the best geometry for each task
    """
    grouped: Dict[str, List[float]] = {}
    for result in retrieval:
        grouped.setdefault(result.manifold.label, [])
        if result.hit_at_1 is not None:
            grouped[result.manifold.label].append(result.hit_at_1)
    mean_hits = {label: (float(np.mean(values)) if values else None) for label, values in grouped.items()}
    ov = {r.manifold.label: r.ov_mean for r in separation if np.isfinite(r.ov_mean)}
    return TradeoffSummary(mean_hits, ov)
