import logging
from typing import Iterable, List, Sequence, Tuple

from src.core.hierarchy import BinarizationPolicy, HierarchyGraph, build_hierarchy
from src.data.bundle import SceneRecord, SlotBundle

logger = logging.getLogger(__name__)


def required_levels(pairs: Sequence[Tuple[int, int]]) -> List[int]:
    return sorted({level for pair in pairs for level in pair})


def complete_scenes(bundle: SlotBundle, levels: Iterable[int], min_slots: int = 1) -> List[SceneRecord]:
    """Scenes holding every requested level; the rest are skipped with a warning."""
    levels = list(levels)
    usable = []
    for scene in bundle.scenes:
        if not scene.has_levels(levels):
            missing = [level for level in levels if level not in scene.slots]
            logger.warning(f"Skipping scene {scene.scene_id}: missing levels {missing}")
            continue
        total = sum(scene.slots[level].shape[0] for level in levels)
        if total < min_slots:
            logger.warning(f"Skipping scene {scene.scene_id}: {total} slots, need at least {min_slots}")
            continue
        usable.append(scene)
    return usable


def scene_hierarchy(scene: SceneRecord, pairs: Sequence[Tuple[int, int]], policy: BinarizationPolicy,
                    tau_excl: float) -> HierarchyGraph:
    levels = required_levels(pairs)
    masks = {level: mask for level, mask in scene.mask_sets().items() if level in levels}
    return build_hierarchy(masks, policy, pairs, tau_excl, scene_id=scene.scene_id)
