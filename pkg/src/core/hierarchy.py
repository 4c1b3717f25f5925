"""
Visual hierarchy construction from slot attention masks.

Masks at consecutive granularities are binarized, every fine slot is scored against
every coarse slot by mask inclusion, and the best-scoring coarse slot becomes its parent.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import (
    EmptyChildError,
    IncompleteSceneError,
    InvalidInputError,
    InvalidParameterError,
)
from src.utils.config import CONSECUTIVE_PAIRS, TAU_EXCL

logger = logging.getLogger(__name__)

ARGMAX = "argmax"
THRESHOLD = "threshold"

REASON_NEAR_DUPLICATE = "near_duplicate"
REASON_EMPTY = "empty"


@dataclass(frozen=True)
class BinarizationPolicy:
    kind: str = ARGMAX
    threshold: Optional[float] = None

    def __post_init__(self):
        if self.kind == ARGMAX:
            if self.threshold is not None:
                raise InvalidParameterError("The argmax policy takes no threshold")
        elif self.kind == THRESHOLD:
            if self.threshold is None or not (0.0 < float(self.threshold) < 1.0):
                raise InvalidParameterError(f"Threshold must lie in (0, 1), got {self.threshold}")
            object.__setattr__(self, "threshold", float(self.threshold))
        else:
            raise InvalidParameterError(f"Unknown binarization policy {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "BinarizationPolicy":
        """Parse `argmax` or `threshold:<tau>`."""
        text = text.strip().lower()
        if text == ARGMAX:
            return cls(ARGMAX)
        if text.startswith(THRESHOLD + ":"):
            raw = text.split(":", 1)[1]
            try:
                return cls(THRESHOLD, float(raw))
            except ValueError:
                raise InvalidParameterError(f"Invalid threshold {raw!r}")
        raise InvalidParameterError(f"Unknown binarization policy {text!r}")

    @property
    def label(self) -> str:
        if self.kind == THRESHOLD:
            return f"{THRESHOLD}:{self.threshold:g}"
        return ARGMAX


@dataclass(frozen=True, eq=False)
class AttentionMaskSet:
    """Soft per-slot, per-patch attention weights for one granularity level."""
    level: int
    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 2:
            raise InvalidInputError(f"Mask weights must be an N x L matrix, got shape {weights.shape}")
        if weights.shape[0] != self.level or self.level < 1:
            raise InvalidInputError(f"Level {self.level} does not match {weights.shape[0]} mask rows")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0.0) or np.any(weights > 1.0):
            raise InvalidInputError(f"Mask weights at level {self.level} must be finite and in [0, 1]")
        object.__setattr__(self, "weights", weights)

    @property
    def patches(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True, eq=False)
class BinaryMaskSet:
    level: int
    bits: np.ndarray
    policy: BinarizationPolicy

    @property
    def patches(self) -> int:
        return self.bits.shape[1]


@dataclass(eq=False)
class ParentAssignment:
    """Parent of every fine slot for one coarse/fine level pair."""
    level_pair: Tuple[int, int]
    parent_of: np.ndarray
    inclusion: np.ndarray
    excluded: Dict[int, str] = field(default_factory=dict)

    def evaluated(self) -> List[int]:
        """Fine slot indices that take part in evaluation."""
        return [j for j in range(len(self.parent_of)) if j not in self.excluded]

    def to_dict(self) -> Dict:
        return {
            "level_pair": list(self.level_pair),
            "parent_of": [int(p) for p in self.parent_of],
            "inclusion": [float(v) for v in self.inclusion],
            "excluded": {str(j): reason for j, reason in sorted(self.excluded.items())},
        }


@dataclass(eq=False)
class HierarchyGraph:
    scene_id: str
    assignments: Dict[Tuple[int, int], ParentAssignment]

    def fine_slot_count(self) -> int:
        return sum(len(a.parent_of) for a in self.assignments.values())


def binarize_masks(masks: AttentionMaskSet, policy: BinarizationPolicy = BinarizationPolicy()) -> BinaryMaskSet:
    """
    Turn soft attention weights into binary regions.

    Args:
        masks: Soft masks for one level
        policy: argmax (each patch to its strongest slot, ties to the lowest index)
            or threshold (weight >= tau)

    Returns:
        BinaryMaskSet with uint8 bits
    """
    weights = masks.weights
    if policy.kind == ARGMAX:
        winners = np.argmax(weights, axis=0)
        bits = np.zeros(weights.shape, dtype=np.uint8)
        bits[winners, np.arange(weights.shape[1])] = 1
    else:
        bits = (weights >= policy.threshold).astype(np.uint8)
    return BinaryMaskSet(masks.level, bits, policy)


def inclusion_score(child: Sequence, parent: Sequence) -> float:
    """
    Fraction of the child's binary area that lies inside the parent.

    Raises:
        EmptyChildError: the child mask has no set bit
    """
    c = np.asarray(child, dtype=np.int64)
    p = np.asarray(parent, dtype=np.int64)
    if c.shape != p.shape or c.ndim != 1:
        raise InvalidInputError(f"Mask rows disagree in length: {c.shape} vs {p.shape}")
    area = int(c.sum())
    if area == 0:
        raise EmptyChildError("Child mask is empty; inclusion score is undefined")
    return float(int(c @ p) / area)


def inclusion_matrix(fine_bits: np.ndarray, coarse_bits: np.ndarray) -> np.ndarray:
    """Inclusion of every fine row in every coarse row; empty fine rows give NaN."""
    fine = fine_bits.astype(np.int64)
    coarse = coarse_bits.astype(np.int64)
    overlap = fine @ coarse.T
    area = fine.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(area[:, None] > 0, overlap / np.maximum(area, 1)[:, None], np.nan)


def assign_parents(fine: BinaryMaskSet, coarse: BinaryMaskSet, tau_excl: float = TAU_EXCL) -> ParentAssignment:
    """
    Assign each fine slot to the coarse slot that best contains it.

    Fine slots whose winning inclusion exceeds tau_excl did not split from their
    parent and are excluded; empty fine masks are excluded with their own reason.

    Args:
        fine: Binary masks at the finer level
        coarse: Binary masks at the coarser level
        tau_excl: Exclusion threshold in (0, 1]

    Returns:
        ParentAssignment covering every fine slot
    """
    if not (0.0 < tau_excl <= 1.0):
        raise InvalidParameterError(f"tau_excl must lie in (0, 1], got {tau_excl}")
    if fine.patches != coarse.patches:
        raise InvalidInputError(f"Patch counts differ: fine {fine.patches} vs coarse {coarse.patches}")
    if fine.level <= coarse.level:
        raise InvalidInputError(f"Fine level {fine.level} must exceed coarse level {coarse.level}")

    scores = inclusion_matrix(fine.bits, coarse.bits)
    empty = np.isnan(scores[:, 0])
    filled = np.where(np.isnan(scores), -1.0, scores)
    parent_of = np.argmax(filled, axis=1)
    inclusion = np.where(empty, 0.0, filled[np.arange(fine.level), parent_of])

    excluded: Dict[int, str] = {}
    for j in range(fine.level):
        if empty[j]:
            excluded[j] = REASON_EMPTY
        elif inclusion[j] > tau_excl:
            excluded[j] = REASON_NEAR_DUPLICATE
    if empty.any():
        logger.debug(f"{int(empty.sum())} empty fine masks at level {fine.level}")
    return ParentAssignment((coarse.level, fine.level), parent_of, inclusion, excluded)


def build_hierarchy(
    scene_masks: Mapping[int, AttentionMaskSet],
    policy: BinarizationPolicy = BinarizationPolicy(),
    pairs: Sequence[Tuple[int, int]] = CONSECUTIVE_PAIRS,
    tau_excl: float = TAU_EXCL,
    scene_id: str = "",
) -> HierarchyGraph:
    """
    Build parent assignments for every requested coarse/fine pair of one scene.

    Args:
        scene_masks: Soft masks keyed by level
        policy: Binarization policy applied at every level
        pairs: Level pairs to evaluate (default: the four consecutive pairs)
        tau_excl: Exclusion threshold
        scene_id: Identifier carried into the graph

    Returns:
        HierarchyGraph with one ParentAssignment per pair
    """
    needed = sorted({level for pair in pairs for level in pair})
    missing = [level for level in needed if level not in scene_masks]
    if missing:
        raise IncompleteSceneError(f"Scene {scene_id!r} is missing levels {missing}")

    patch_counts = {scene_masks[level].patches for level in needed}
    if len(patch_counts) != 1:
        raise InvalidInputError(f"Scene {scene_id!r} has inconsistent patch counts {sorted(patch_counts)}")

    binary = {level: binarize_masks(scene_masks[level], policy) for level in needed}
    assignments = {
        (coarse, fine): assign_parents(binary[fine], binary[coarse], tau_excl)
        for coarse, fine in pairs
    }
    return HierarchyGraph(scene_id, assignments)
