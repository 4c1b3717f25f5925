"""
Slot bundle persistence.

A bundle directory holds `manifest.json`, one little-endian float32 blob per scene,
level and kind (`slots_<id>_<N>.bin`, `masks_<id>_<N>.bin`) and, for synthetic data,
`planted_<id>.json`. Values are widened to float64 on load.
"""
import os
import re
import json
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from src.core.errors import (
    BundleFormatError,
    DataCorruptionError,
    InvalidInputError,
    MissingBlobError,
)
from src.core.hierarchy import AttentionMaskSet

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
PRECISION = "f32"
STORAGE_DTYPE = np.dtype("<f4")
MANIFEST_NAME = "manifest.json"

SCENE_ID_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")

# Issue kinds reported by validate_bundle
ISSUE_MANIFEST = "manifest"
ISSUE_MISSING = "missing"
ISSUE_SIZE = "size"
ISSUE_NON_FINITE = "non_finite"
ISSUE_MASK_RANGE = "mask_range"
ISSUE_PLANTED = "planted"


def slots_filename(scene_id: str, level: int) -> str:
    return f"slots_{scene_id}_{level}.bin"


def masks_filename(scene_id: str, level: int) -> str:
    return f"masks_{scene_id}_{level}.bin"


def planted_filename(scene_id: str) -> str:
    return f"planted_{scene_id}.json"


def _pair_key(pair: Tuple[int, int]) -> str:
    return f"{pair[0]}-{pair[1]}"


def _parse_pair_key(key: str) -> Tuple[int, int]:
    coarse, fine = key.split("-")
    return int(coarse), int(fine)


def dump_json(data) -> str:
    """Deterministic JSON text shared by every file this package writes."""
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


@dataclass
class PlantedTruth:
    """Ground truth recorded by the synthetic generator."""
    parents: Dict[Tuple[int, int], List[int]]
    norm_profile: Dict[int, float] = field(default_factory=dict)
    mode: str = "planted"

    def to_dict(self) -> Dict:
        return {
            "mode": self.mode,
            "norm_profile": {str(level): float(v) for level, v in sorted(self.norm_profile.items())},
            "parents": {_pair_key(pair): [int(p) for p in parents] for pair, parents in sorted(self.parents.items())},
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "PlantedTruth":
        return cls(
            parents={_parse_pair_key(k): [int(p) for p in v] for k, v in data.get("parents", {}).items()},
            norm_profile={int(k): float(v) for k, v in data.get("norm_profile", {}).items()},
            mode=data.get("mode", "planted"),
        )


@dataclass(eq=False)
class SceneRecord:
    """Slots (N x d_s) and soft masks (N x L) per level for one scene."""
    scene_id: str
    slots: Dict[int, np.ndarray]
    masks: Dict[int, np.ndarray]
    planted: Optional[PlantedTruth] = None

    @property
    def levels(self) -> Tuple[int, ...]:
        return tuple(sorted(self.slots))

    def has_levels(self, levels: Iterable[int]) -> bool:
        return all(level in self.slots and level in self.masks for level in levels)

    def mask_sets(self) -> Dict[int, AttentionMaskSet]:
        return {level: AttentionMaskSet(level, weights) for level, weights in self.masks.items()}

    def stacked_slots(self, levels: Iterable[int]) -> np.ndarray:
        """Slots of the given levels stacked in ascending level order."""
        return np.concatenate([self.slots[level] for level in sorted(levels)], axis=0)


@dataclass
class BundleManifest:
    d_s: int
    patches: int
    levels: Tuple[int, ...]
    precision: str = PRECISION
    source: str = ""
    planted: bool = False

    def to_dict(self, scenes: List[SceneRecord]) -> Dict:
        return {
            "format_version": FORMAT_VERSION,
            "d_s": int(self.d_s),
            "L": int(self.patches),
            "levels": [int(level) for level in self.levels],
            "precision": self.precision,
            "source": self.source,
            "planted": bool(self.planted),
            "scenes": [
                {
                    "id": scene.scene_id,
                    "files": {
                        str(level): {
                            "slots": slots_filename(scene.scene_id, level),
                            "masks": masks_filename(scene.scene_id, level),
                        }
                        for level in self.levels
                    },
                }
                for scene in scenes
            ],
        }


@dataclass(eq=False)
class SlotBundle:
    manifest: BundleManifest
    scenes: List[SceneRecord]

    @property
    def levels(self) -> Tuple[int, ...]:
        return self.manifest.levels

    @property
    def scene_ids(self) -> List[str]:
        return [scene.scene_id for scene in self.scenes]

    def __len__(self) -> int:
        return len(self.scenes)


@dataclass(frozen=True)
class BundleIssue:
    """One violation found while validating a bundle on disk."""
    kind: str
    message: str
    scene_id: Optional[str] = None
    level: Optional[int] = None
    slot: Optional[int] = None
    patch: Optional[int] = None
    file: Optional[str] = None
    expected_bytes: Optional[int] = None
    actual_bytes: Optional[int] = None

    def __str__(self) -> str:
        coords = []
        if self.scene_id is not None:
            coords.append(f"scene={self.scene_id}")
        if self.level is not None:
            coords.append(f"level={self.level}")
        if self.slot is not None:
            coords.append(f"slot={self.slot}")
        if self.patch is not None:
            coords.append(f"patch={self.patch}")
        if self.file is not None:
            coords.append(f"file={self.file}")
        prefix = " ".join(coords)
        return f"[{self.kind}] {prefix}: {self.message}" if prefix else f"[{self.kind}] {self.message}"

    def to_error(self) -> Exception:
        if self.kind == ISSUE_MISSING:
            return MissingBlobError(str(self))
        if self.kind in (ISSUE_NON_FINITE, ISSUE_MASK_RANGE):
            return DataCorruptionError(str(self))
        return BundleFormatError(str(self))


def validate_scene(scene: SceneRecord, manifest: BundleManifest) -> None:
    """Check one in-memory scene against the manifest shapes."""
    if not SCENE_ID_PATTERN.match(scene.scene_id):
        raise InvalidInputError(f"Scene id {scene.scene_id!r} is not filename safe")
    for level in manifest.levels:
        if level not in scene.slots or level not in scene.masks:
            raise BundleFormatError(f"scene {scene.scene_id} is missing level {level}")
        slots, masks = scene.slots[level], scene.masks[level]
        if slots.shape != (level, manifest.d_s):
            raise BundleFormatError(
                f"scene {scene.scene_id} level {level}: slots have shape {slots.shape}, expected {(level, manifest.d_s)}"
            )
        if masks.shape != (level, manifest.patches):
            raise BundleFormatError(
                f"scene {scene.scene_id} level {level}: masks have shape {masks.shape}, expected {(level, manifest.patches)}"
            )
        if not (np.all(np.isfinite(slots)) and np.all(np.isfinite(masks))):
            raise DataCorruptionError(f"scene {scene.scene_id} level {level}: non-finite values")
        if np.any(masks < 0.0) or np.any(masks > 1.0):
            raise DataCorruptionError(f"scene {scene.scene_id} level {level}: mask values outside [0, 1]")


def save_bundle(bundle: SlotBundle, path: str) -> None:
    """
    Write a bundle directory: blobs first, manifest last.

    Args:
        bundle: Valid bundle
        path: Target directory (created if needed)

    Raises:
        OSError: with the offending path when a write fails
    """
    for scene in bundle.scenes:
        validate_scene(scene, bundle.manifest)

    try:
        os.makedirs(path, exist_ok=True)
        for scene in bundle.scenes:
            for level in bundle.manifest.levels:
                _write_blob(os.path.join(path, slots_filename(scene.scene_id, level)), scene.slots[level])
                _write_blob(os.path.join(path, masks_filename(scene.scene_id, level)), scene.masks[level])
            if scene.planted is not None:
                _write_text(os.path.join(path, planted_filename(scene.scene_id)), dump_json(scene.planted.to_dict()))
        _write_text(os.path.join(path, MANIFEST_NAME), dump_json(bundle.manifest.to_dict(bundle.scenes)))
    except OSError as e:
        raise OSError(f"Failed to write bundle to {path}: {e}") from e

    logger.info(f"Saved bundle with {len(bundle.scenes)} scenes to {path}")


def _write_blob(filepath: str, values: np.ndarray) -> None:
    with open(filepath, "wb") as f:
        f.write(np.ascontiguousarray(values, dtype=STORAGE_DTYPE).tobytes())


def _write_text(filepath: str, text: str) -> None:
    with open(filepath, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _is_positive_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool) and value >= 1


def _read_manifest(path: str, issues: List[BundleIssue]) -> Optional[Dict]:
    manifest_path = os.path.join(path, MANIFEST_NAME)
    if not os.path.isfile(manifest_path):
        issues.append(BundleIssue(ISSUE_MISSING, "manifest not found", file=MANIFEST_NAME))
        return None
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        issues.append(BundleIssue(ISSUE_MANIFEST, f"manifest is not valid JSON: {e}", file=MANIFEST_NAME))
        return None
    if not isinstance(data, dict):
        issues.append(BundleIssue(ISSUE_MANIFEST, "manifest must be a JSON object", file=MANIFEST_NAME))
        return None

    required = ("format_version", "d_s", "L", "levels", "precision", "scenes")
    missing = [key for key in required if key not in data]
    if missing:
        issues.append(BundleIssue(ISSUE_MANIFEST, f"manifest lacks keys {missing}", file=MANIFEST_NAME))
        return None
    if data["format_version"] != FORMAT_VERSION:
        issues.append(BundleIssue(
            ISSUE_MANIFEST, f"unsupported format_version {data['format_version']}", file=MANIFEST_NAME
        ))
        return None
    if data["precision"] != PRECISION:
        issues.append(BundleIssue(ISSUE_MANIFEST, f"unsupported precision {data['precision']!r}", file=MANIFEST_NAME))
        return None
    for key in ("d_s", "L"):
        if not _is_positive_int(data[key]):
            issues.append(BundleIssue(ISSUE_MANIFEST, f"{key} must be a positive integer, got {data[key]!r}",
                                      file=MANIFEST_NAME))
            return None
    if not isinstance(data["scenes"], list):
        issues.append(BundleIssue(ISSUE_MANIFEST, "scenes must be a list", file=MANIFEST_NAME))
        return None
    levels = data["levels"]
    valid_levels = isinstance(levels, list) and levels and all(_is_positive_int(n) for n in levels)
    if not valid_levels or list(levels) != sorted(set(levels)):
        issues.append(BundleIssue(ISSUE_MANIFEST, f"levels must be ascending positive integers, got {levels}",
                                  file=MANIFEST_NAME))
        return None
    return data


def _read_blob(path: str, filename: Optional[str], rows: int, cols: int, scene_id: str, level: int,
               issues: List[BundleIssue]) -> Optional[np.ndarray]:
    if not filename or not isinstance(filename, str):
        issues.append(BundleIssue(ISSUE_MANIFEST, "no blob listed for this level", scene_id=scene_id, level=level))
        return None
    filepath = os.path.join(path, filename)
    if not os.path.isfile(filepath):
        issues.append(BundleIssue(ISSUE_MISSING, "blob not found", scene_id=scene_id, level=level, file=filename))
        return None

    expected = rows * cols * STORAGE_DTYPE.itemsize
    actual = os.path.getsize(filepath)
    if actual != expected:
        row_bytes = cols * STORAGE_DTYPE.itemsize
        if row_bytes and actual % row_bytes == 0:
            detail = f"blob holds {actual // row_bytes} rows, expected {rows}"
        else:
            detail = "blob is truncated or padded"
        issues.append(BundleIssue(
            ISSUE_SIZE, f"{detail} ({actual} bytes, expected {expected})",
            scene_id=scene_id, level=level, file=filename, expected_bytes=expected, actual_bytes=actual,
        ))
        return None

    with open(filepath, "rb") as f:
        raw = np.frombuffer(f.read(), dtype=STORAGE_DTYPE)
    return raw.reshape(rows, cols).astype(np.float64)


def _check_values(values: np.ndarray, scene_id: str, level: int, filename: str, is_mask: bool,
                  issues: List[BundleIssue]) -> bool:
    ok = True
    bad = np.argwhere(~np.isfinite(values))
    for slot, col in bad:
        ok = False
        issues.append(BundleIssue(
            ISSUE_NON_FINITE, f"non-finite value {values[slot, col]}",
            scene_id=scene_id, level=level, slot=int(slot), patch=int(col) if is_mask else None, file=filename,
        ))
    if is_mask:
        with np.errstate(invalid="ignore"):
            outside = np.argwhere((values < 0.0) | (values > 1.0))
        for slot, patch in outside:
            ok = False
            issues.append(BundleIssue(
                ISSUE_MASK_RANGE, f"mask value {float(values[slot, patch]):g} outside [0, 1]",
                scene_id=scene_id, level=level, slot=int(slot), patch=int(patch), file=filename,
            ))
    return ok


def _read_planted(planted_path: str, scene_id: str, issues: List[BundleIssue]) -> Optional[PlantedTruth]:
    try:
        with open(planted_path, "r", encoding="utf-8") as f:
            return PlantedTruth.from_dict(json.load(f))
    except (ValueError, KeyError, TypeError, AttributeError) as e:
        issues.append(BundleIssue(ISSUE_PLANTED, f"planted truth is unreadable: {e}", scene_id=scene_id,
                                  file=os.path.basename(planted_path)))
        return None


def _scan(path: str) -> Tuple[Optional[BundleManifest], List[SceneRecord], List[BundleIssue]]:
    """Read everything a bundle references, collecting every violation on the way."""
    issues: List[BundleIssue] = []
    if not os.path.isdir(path):
        issues.append(BundleIssue(ISSUE_MISSING, f"bundle directory {path} not found"))
        return None, [], issues
    data = _read_manifest(path, issues)
    if data is None:
        return None, [], issues

    manifest = BundleManifest(
        d_s=int(data["d_s"]),
        patches=int(data["L"]),
        levels=tuple(int(n) for n in data["levels"]),
        precision=data["precision"],
        source=data.get("source", ""),
        planted=bool(data.get("planted", False)),
    )

    scenes: List[SceneRecord] = []
    seen = set()
    for entry in data["scenes"]:
        if not isinstance(entry, dict):
            issues.append(BundleIssue(ISSUE_MANIFEST, f"scene entry must be an object, got {entry!r}",
                                      file=MANIFEST_NAME))
            continue
        scene_id = str(entry.get("id", ""))
        if not SCENE_ID_PATTERN.match(scene_id) or scene_id in seen:
            issues.append(BundleIssue(ISSUE_MANIFEST, "scene id is invalid or duplicated", scene_id=scene_id))
            continue
        seen.add(scene_id)
        files = entry.get("files", {})
        if not isinstance(files, dict):
            files = {}
        slots: Dict[int, np.ndarray] = {}
        masks: Dict[int, np.ndarray] = {}
        complete = True
        for level in manifest.levels:
            names = files.get(str(level), {})
            if not isinstance(names, dict):
                names = {}
            slot_name, mask_name = names.get("slots"), names.get("masks")
            slot_values = _read_blob(path, slot_name, level, manifest.d_s, scene_id, level, issues)
            mask_values = _read_blob(path, mask_name, level, manifest.patches, scene_id, level, issues)
            if slot_values is None or mask_values is None:
                complete = False
                continue
            complete &= _check_values(slot_values, scene_id, level, slot_name, False, issues)
            complete &= _check_values(mask_values, scene_id, level, mask_name, True, issues)
            slots[level], masks[level] = slot_values, mask_values

        planted = None
        if manifest.planted:
            planted_path = os.path.join(path, planted_filename(scene_id))
            if not os.path.isfile(planted_path):
                issues.append(BundleIssue(ISSUE_MISSING, "planted truth not found", scene_id=scene_id,
                                          file=planted_filename(scene_id)))
                complete = False
            else:
                planted = _read_planted(planted_path, scene_id, issues)
                complete &= planted is not None

        if complete:
            scenes.append(SceneRecord(scene_id, slots, masks, planted))
    return manifest, scenes, issues


def read_scene_ids(path: str) -> List[str]:
    """Scene ids listed in a bundle's manifest, or an empty list when it cannot be read."""
    try:
        with open(os.path.join(path, MANIFEST_NAME), "r", encoding="utf-8") as f:
            data = json.load(f)
        return [str(entry.get("id", "")) for entry in data.get("scenes", [])]
    except (OSError, ValueError, AttributeError):
        return []


def validate_bundle(path: str) -> List[BundleIssue]:
    """
    Check a bundle on disk without raising.

    Returns:
        Every violation found (empty when the bundle is valid)
    """
    _, _, issues = _scan(path)
    return issues


def load_bundle(path: str) -> SlotBundle:
    """
    Load and validate a bundle directory.

    Raises:
        MissingBlobError: a referenced file is absent
        BundleFormatError: manifest or blob shapes disagree
        DataCorruptionError: non-finite values or masks outside [0, 1]
    """
    manifest, scenes, issues = _scan(path)
    if issues:
        if len(issues) > 1:
            logger.debug(f"{len(issues)} issues in bundle {path}; raising the first")
        raise issues[0].to_error()
    logger.info(f"Loaded bundle {path}: {len(scenes)} scenes, levels {list(manifest.levels)}, d_s={manifest.d_s}")
    return SlotBundle(manifest, scenes)
