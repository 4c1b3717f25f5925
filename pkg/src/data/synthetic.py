"""
Synthetic slot bundles with a planted hierarchy.

Every scene plants one root per coarsest-level slot around a common anchor direction.
Each finer level derives its slots from planted parents plus Gaussian noise, and the
whole level is rescaled so its mean slot norm follows the norm profile (flat unless
configured). Masks are
contiguous nested partitions of the patch range; optional boundary jitter lets fine
regions cross their parent's border by a bounded amount, which keeps the mask-based
parent equal to the planted one.

Randomness comes from Philox streams keyed by (seed, scene, level, slot), so any
scene can be regenerated on its own and worker count never changes the output.
"""
import math
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.errors import InvalidConfigError
from src.data.bundle import (
    STORAGE_DTYPE,
    BundleManifest,
    PlantedTruth,
    SceneRecord,
    SlotBundle,
)
from src.utils.config import DEFAULT_LEVELS, consecutive_pairs
from src.utils.logger import StageTimer
from src.utils.parallel import map_ordered

logger = logging.getLogger(__name__)

MODE_PLANTED = "planted"
MODE_IID = "iid"

MAX_MASK_BLEED = 0.3
ANCHOR_FACTOR = 4.0
# Mask weights: a floor shared by every slot plus the region owner's share
MASK_FLOOR = 0.2
MASK_OWNER = 0.8

# Stream keys below level 1 and above any slot index
SCENE_STREAM = (0, 0)
MASK_STREAM = 1 << 20

# A non-flat profile shifts each child radially off its parent by the ratio of the two
# level norms, which exceeds the sibling spread at small child_noise.
FLAT_NORM = 2.0
PROFILE_FLAT = "flat"
PROFILE_DECREASING = "decreasing"


def flat_norm_profile(levels: Sequence[int], norm: float = FLAT_NORM) -> Dict[int, float]:
    """Same target mean norm at every level."""
    return {level: norm for level in levels}


def decreasing_norm_profile(levels: Sequence[int]) -> Dict[int, float]:
    """Target mean norms decreasing with granularity: 2.0 - 0.1 * rank."""
    return {level: FLAT_NORM - 0.1 * rank for rank, level in enumerate(sorted(levels))}


# Named profiles accepted wherever a norm profile is configured by name
NORM_PROFILES = {
    PROFILE_FLAT: flat_norm_profile,
    PROFILE_DECREASING: decreasing_norm_profile,
}


@dataclass
class SyntheticConfig:
    n_scenes: int = 100
    d_s: int = 64
    patches: int = 576
    levels: Tuple[int, ...] = DEFAULT_LEVELS
    parent_separation: float = 1.0
    child_noise: float = 0.1
    norm_profile: Optional[Union[str, Dict[int, float]]] = None
    seed: int = 0
    mode: str = MODE_PLANTED
    mask_bleed: float = 0.25
    norm_jitter: float = 0.1
    anchor_norm: Optional[float] = None

    def __post_init__(self):
        self.levels = tuple(int(level) for level in self.levels)
        if self.norm_profile is None:
            self.norm_profile = flat_norm_profile(self.levels)
        elif isinstance(self.norm_profile, str):
            if self.norm_profile not in NORM_PROFILES:
                raise InvalidConfigError(
                    f"Unknown norm profile {self.norm_profile!r}; choose from {sorted(NORM_PROFILES)} or give a map"
                )
            self.norm_profile = NORM_PROFILES[self.norm_profile](self.levels)
        else:
            self.norm_profile = {int(k): float(v) for k, v in self.norm_profile.items()}
        if self.anchor_norm is None:
            self.anchor_norm = ANCHOR_FACTOR * self.parent_separation

    def validate(self) -> None:
        """
        Raise InvalidConfigError naming the first violated constraint.
        """
        if self.n_scenes < 0:
            raise InvalidConfigError(f"n_scenes must be >= 0, got {self.n_scenes}")
        if not self.levels or any(level < 1 for level in self.levels):
            raise InvalidConfigError(f"levels must be positive integers, got {list(self.levels)}")
        if any(a >= b for a, b in zip(self.levels, self.levels[1:])):
            raise InvalidConfigError(f"levels must be strictly increasing, got {list(self.levels)}")
        if self.d_s < self.levels[0] + 1:
            raise InvalidConfigError(
                f"d_s={self.d_s} must exceed the {self.levels[0]} roots so root offsets stay orthogonal to the anchor"
            )
        if not self.parent_separation > 0:
            raise InvalidConfigError(f"parent_separation must be > 0, got {self.parent_separation}")
        if not self.child_noise > 0:
            raise InvalidConfigError(f"child_noise must be > 0, got {self.child_noise}")
        if not self.anchor_norm > 0:
            raise InvalidConfigError(f"anchor_norm must be > 0, got {self.anchor_norm}")
        if not 0.0 <= self.norm_jitter <= 1.0:
            raise InvalidConfigError(f"norm_jitter must lie in [0, 1], got {self.norm_jitter}")
        if not 0.0 <= self.mask_bleed <= MAX_MASK_BLEED:
            raise InvalidConfigError(f"mask_bleed must lie in [0, {MAX_MASK_BLEED}], got {self.mask_bleed}")
        if self.mode not in (MODE_PLANTED, MODE_IID):
            raise InvalidConfigError(f"mode must be '{MODE_PLANTED}' or '{MODE_IID}', got {self.mode!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        missing = [level for level in self.levels if level not in self.norm_profile]
        if missing:
            raise InvalidConfigError(f"norm_profile lacks levels {missing}")
        if any(not (math.isfinite(v) and v > 0) for v in self.norm_profile.values()):
            raise InvalidConfigError("norm_profile values must be finite and > 0")

        grid = math.isqrt(self.patches) if self.patches > 0 else 0
        if grid * grid != self.patches:
            raise InvalidConfigError(
                f"patches={self.patches} cannot nest: masks need a square patch grid (e.g. 576 = 24 x 24)"
            )
        smallest = min(int(np.diff(b).min()) for b in nested_boundaries(self.levels, self.patches).values())
        if smallest < 1:
            raise InvalidConfigError(
                f"levels {list(self.levels)} cannot nest into {self.patches} patches: some slot receives no patch"
            )

    def to_dict(self) -> Dict:
        return {
            "n_scenes": self.n_scenes,
            "d_s": self.d_s,
            "patches": self.patches,
            "levels": list(self.levels),
            "parent_separation": self.parent_separation,
            "child_noise": self.child_noise,
            "norm_profile": {str(k): v for k, v in sorted(self.norm_profile.items())},
            "seed": self.seed,
            "mode": self.mode,
            "mask_bleed": self.mask_bleed,
            "norm_jitter": self.norm_jitter,
            "anchor_norm": self.anchor_norm,
        }


def _balanced(total: int, parts: int) -> List[int]:
    """Split total into parts as evenly as possible, remainder to the lowest indices."""
    base, rem = divmod(total, parts)
    return [base + (1 if i < rem else 0) for i in range(parts)]


def planted_parents(levels: Sequence[int]) -> Dict[Tuple[int, int], List[int]]:
    """Parent index of every fine slot for each consecutive level pair."""
    parents = {}
    for coarse, fine in consecutive_pairs(levels):
        counts = _balanced(fine, coarse)
        parents[(coarse, fine)] = [p for p, count in enumerate(counts) for _ in range(count)]
    return parents


def nested_boundaries(levels: Sequence[int], patches: int) -> Dict[int, np.ndarray]:
    """
    Region boundaries per level as arrays of N+1 patch offsets.

    The coarsest level splits the patch range evenly; every parent region is then
    split contiguously among its children.
    """
    levels = sorted(levels)
    boundaries = {levels[0]: np.concatenate([[0], np.cumsum(_balanced(patches, levels[0]))])}
    parents = planted_parents(levels)
    for coarse, fine in consecutive_pairs(levels):
        coarse_bounds = boundaries[coarse]
        child_counts = np.bincount(parents[(coarse, fine)], minlength=coarse)
        edges = [0]
        for p in range(coarse):
            size = int(coarse_bounds[p + 1] - coarse_bounds[p])
            for piece in _balanced(size, int(child_counts[p])):
                edges.append(edges[-1] + piece)
        boundaries[fine] = np.asarray(edges)
    return boundaries


def jitter_limits(boundaries: Dict[int, np.ndarray], bleed: float) -> Dict[int, np.ndarray]:
    """
    Largest shift allowed for each interior boundary of each level.

    A boundary at level k moves by at most bleed/2 of the smallest region touching it
    at level k or any finer level, so a child always keeps more of its area inside
    its own parent than inside any neighbour.
    """
    levels = sorted(boundaries)
    adjacent: Dict[int, Dict[int, int]] = {}
    for level in levels:
        bounds = boundaries[level]
        lengths = np.diff(bounds)
        local = {}
        for i in range(1, len(bounds) - 1):
            local[int(bounds[i])] = int(min(lengths[i - 1], lengths[i]))
        adjacent[level] = local

    limits = {}
    for idx, level in enumerate(levels):
        interior = boundaries[level][1:-1]
        finer = levels[idx:]
        limits[level] = np.array(
            [int(math.floor(bleed * min(adjacent[m][int(pos)] for m in finer) / 2.0)) for pos in interior],
            dtype=np.int64,
        )
    return limits


def _stream(config: SyntheticConfig, scene: int, level: int, slot: int) -> np.random.Generator:
    seq = np.random.SeedSequence(config.seed, spawn_key=(scene, level, slot))
    return np.random.Generator(np.random.Philox(seq))


def _labels_to_masks(labels: np.ndarray, level: int) -> np.ndarray:
    weights = np.full((level, labels.size), MASK_FLOOR / level)
    weights[labels, np.arange(labels.size)] += MASK_OWNER
    return weights


def _scene_masks(config: SyntheticConfig, scene: int, boundaries, limits) -> Dict[int, np.ndarray]:
    masks = {}
    for level in config.levels:
        bounds = boundaries[level].copy()
        shifts = limits[level]
        if np.any(shifts > 0):
            rng = _stream(config, scene, level, MASK_STREAM)
            bounds[1:-1] += rng.integers(-shifts, shifts + 1)
        labels = np.repeat(np.arange(level), np.diff(bounds))
        masks[level] = _labels_to_masks(labels, level)
    return masks


def _planted_slots(config: SyntheticConfig, scene: int, parents) -> Dict[int, np.ndarray]:
    d = config.d_s
    sep = config.parent_separation
    roots = config.levels[0]

    scene_rng = _stream(config, scene, *SCENE_STREAM)
    basis, _ = np.linalg.qr(scene_rng.standard_normal((d, roots + 1)))
    anchor = basis[:, 0]
    # Root offsets are orthonormal, so every pair of roots sits exactly sep apart
    raw = {roots: config.anchor_norm * anchor + (sep / math.sqrt(2.0)) * basis[:, 1:].T}
    jitter = math.exp(config.norm_jitter * scene_rng.standard_normal()) if config.norm_jitter > 0 else 1.0

    noise_std = config.child_noise * sep / math.sqrt(d)
    for coarse, fine in consecutive_pairs(config.levels):
        children = np.empty((fine, d))
        for j, p in enumerate(parents[(coarse, fine)]):
            children[j] = raw[coarse][p] + noise_std * _stream(config, scene, fine, j).standard_normal(d)
        raw[fine] = children

    slots = {}
    for level, values in raw.items():
        mean_norm = float(np.mean(np.sqrt(np.sum(values * values, axis=1))))
        slots[level] = values * (config.norm_profile[level] * jitter / mean_norm)
    return slots


def _iid_slots(config: SyntheticConfig, scene: int) -> Dict[int, np.ndarray]:
    return {
        level: np.stack([_stream(config, scene, level, j).standard_normal(config.d_s) for j in range(level)])
        for level in config.levels
    }


def _to_storage(values: np.ndarray) -> np.ndarray:
    """Round to the float32 storage grid so in-memory and reloaded bundles agree."""
    return values.astype(STORAGE_DTYPE).astype(np.float64)


def generate_scene(config: SyntheticConfig, scene: int, boundaries=None, limits=None) -> SceneRecord:
    """Generate one scene; the output depends only on the config and the scene index."""
    if boundaries is None:
        boundaries = nested_boundaries(config.levels, config.patches)
    if limits is None:
        limits = jitter_limits(boundaries, config.mask_bleed)
    parents = planted_parents(config.levels)

    if config.mode == MODE_IID:
        slots = _iid_slots(config, scene)
    else:
        slots = _planted_slots(config, scene, parents)
    masks = _scene_masks(config, scene, boundaries, limits)

    planted = PlantedTruth(parents, dict(config.norm_profile), config.mode)
    return SceneRecord(
        scene_id=f"scene_{scene:05d}",
        slots={level: _to_storage(v) for level, v in slots.items()},
        masks={level: _to_storage(v) for level, v in masks.items()},
        planted=planted,
    )


def generate_synthetic(config: SyntheticConfig, workers: int = 1) -> SlotBundle:
    """
    Generate a bundle with a planted hierarchy.

    Args:
        config: Generator settings (validated here)
        workers: Scene-level worker count; the output does not depend on it

    Returns:
        SlotBundle whose scenes carry their planted parent maps

    Raises:
        InvalidConfigError: the config violates a constraint
    """
    config.validate()
    boundaries = nested_boundaries(config.levels, config.patches)
    limits = jitter_limits(boundaries, config.mask_bleed)

    with StageTimer("generate", f"{config.n_scenes} scenes, mode={config.mode}"):
        scenes = map_ordered(lambda i: generate_scene(config, i, boundaries, limits), range(config.n_scenes), workers)

    manifest = BundleManifest(
        d_s=config.d_s,
        patches=config.patches,
        levels=config.levels,
        source=f"synthetic:{config.mode}",
        planted=True,
    )
    logger.info(f"Generated {len(scenes)} {config.mode} scenes (seed={config.seed})")
    return SlotBundle(manifest, scenes)
