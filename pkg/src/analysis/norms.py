"""Per-level slot depth statistics and spread ratios under one manifold."""
import math
import logging
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from src.analysis.results import NormStats
from src.analysis.separation import centroid_depth
from src.core.errors import InsufficientDataError
from src.core.manifold import ManifoldSpec, depths
from src.data.bundle import SlotBundle

logger = logging.getLogger(__name__)


def norm_stats(bundle: SlotBundle, manifold: ManifoldSpec, levels: Optional[Sequence[int]] = None) -> NormStats:
    """
    Per-level mean and std of individual slot depths pooled over scenes.

    Under a Lorentz manifold the depth d_L(o, exp(s)) equals ||s|| by radial isometry,
    so the mean time component x0 is reported next to it. The centroid spread ratio
    compares mean centroid depths of the coarsest and finest levels.

    Raises:
        InsufficientDataError: no scene holds any of the requested levels
    """
    levels = sorted(levels or bundle.levels)
    per_level: Dict[int, Tuple[float, float]] = {}
    time_component: Optional[Dict[int, float]] = {} if manifold.is_lorentz else None
    centroid_means: Dict[int, float] = {}

    for level in levels:
        level_slots = [scene.slots[level] for scene in bundle.scenes if level in scene.slots]
        if not level_slots:
            logger.warning(f"No scene holds level {level}; skipping it in norm statistics")
            continue
        slots = np.concatenate(level_slots, axis=0)
        values = depths(slots, manifold)
        per_level[level] = (float(np.mean(values)), float(np.std(values)))
        if manifold.is_lorentz:
            c = manifold.curvature
            radii = math.sqrt(c) * np.sqrt(np.sum(slots * slots, axis=1))
            time_component[level] = float(np.mean(np.cosh(radii) / math.sqrt(c)))
        centroid_means[level] = float(np.mean([centroid_depth(s, manifold) for s in level_slots]))

    if not per_level:
        raise InsufficientDataError("Norm statistics need at least one scene")

    present = sorted(per_level)
    finest = centroid_means[present[-1]]
    centroid_ratio = centroid_means[present[0]] / finest if finest > 0 else None
    return NormStats(manifold, per_level, time_component, centroid_ratio)
