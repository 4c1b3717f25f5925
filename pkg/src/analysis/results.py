"""Result records produced by the analyses; each carries the manifold it was computed under."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.errors import InvalidInputError
from src.core.manifold import ManifoldSpec

GT_LABEL = "gt"
AGREEMENT_DEFINITION = "parent-assignment agreement over non-excluded fine slots"


def _summary(values: np.ndarray) -> Dict[str, Optional[float]]:
    if values.size == 0:
        return {"mean": None, "std": None, "q1": None, "median": None, "q3": None}
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    return {
        "mean": float(np.mean(values)),
        "std": float(np.std(values)),
        "q1": float(q1),
        "median": float(median),
        "q3": float(q3),
    }


@dataclass
class RetrievalResult:
    level_pair: Tuple[int, int]
    manifold: ManifoldSpec
    hits: int
    n_evaluated: int

    @property
    def hit_at_1(self) -> Optional[float]:
        """Percentage of evaluated fine slots whose GT parent ranks first; None when nothing was evaluated."""
        if self.n_evaluated == 0:
            return None
        return 100.0 * self.hits / self.n_evaluated

    @property
    def random_baseline(self) -> float:
        return 100.0 / self.level_pair[0]

    def merge(self, other: "RetrievalResult") -> "RetrievalResult":
        if other.level_pair != self.level_pair or other.manifold != self.manifold:
            raise InvalidInputError(
                f"Cannot merge retrieval results for {self.level_pair}/{self.manifold} and {other.level_pair}/{other.manifold}"
            )
        return RetrievalResult(self.level_pair, self.manifold, self.hits + other.hits,
                               self.n_evaluated + other.n_evaluated)

    def to_dict(self) -> Dict:
        return {
            "level_pair": list(self.level_pair),
            "manifold": self.manifold.label,
            "hit_at_1": self.hit_at_1,
            "hits": self.hits,
            "n_evaluated": self.n_evaluated,
            "random_baseline": self.random_baseline,
        }


@dataclass
class SeparationResult:
    manifold: ManifoldSpec
    levels: Tuple[int, ...]
    scene_ids: List[str]
    per_level_samples: Dict[int, np.ndarray]
    ov_matrix: np.ndarray
    pair_centroid_distance: Dict[Tuple[int, int], float] = field(default_factory=dict)

    @property
    def ov_mean(self) -> float:
        """Mean OV over distinct level pairs; undefined (NaN) entries are left out."""
        upper = np.triu_indices(len(self.levels), k=1)
        if upper[0].size == 0:
            return 1.0
        values = self.ov_matrix[upper]
        values = values[np.isfinite(values)]
        return float(np.mean(values)) if values.size else float("nan")

    @property
    def level_means(self) -> Dict[int, float]:
        return {level: float(np.mean(self.per_level_samples[level])) for level in self.levels}

    @property
    def depth_order(self) -> List[int]:
        """Levels sorted by decreasing mean depth (deepest first), ties by level."""
        means = self.level_means
        return sorted(self.levels, key=lambda level: (-means[level], level))

    @property
    def inverted(self) -> bool:
        """True when coarse levels lie strictly deeper than finer ones."""
        return self.depth_order == sorted(self.levels) and len(set(self.level_means.values())) == len(self.levels)

    def to_dict(self) -> Dict:
        return {
            "manifold": self.manifold.label,
            "levels": list(self.levels),
            "level_means": {str(level): v for level, v in self.level_means.items()},
            "ov_matrix": [[float(v) for v in row] for row in self.ov_matrix],
            "ov_mean": self.ov_mean,
            "depth_order": self.depth_order,
            "inverted": self.inverted,
            "pair_centroid_distance": {
                f"{a}-{b}": v for (a, b), v in sorted(self.pair_centroid_distance.items())
            },
            "n_scenes": len(self.scene_ids),
        }


@dataclass
class HyperbolicityResult:
    manifold: ManifoldSpec
    scene_ids: List[str]
    per_scene_delta: np.ndarray
    per_level_delta: Optional[Dict[int, np.ndarray]] = None

    @property
    def summary(self) -> Dict[str, Optional[float]]:
        return _summary(self.per_scene_delta)

    @property
    def mean(self) -> Optional[float]:
        return self.summary["mean"]

    def to_dict(self) -> Dict:
        data = {
            "manifold": self.manifold.label,
            "point_set": "per_level" if self.per_level_delta is not None else "union",
            "summary": self.summary,
            "n_scenes": len(self.scene_ids),
        }
        if self.per_level_delta is not None:
            data["per_level_summary"] = {
                str(level): _summary(values) for level, values in sorted(self.per_level_delta.items())
            }
        return data


@dataclass
class AgreementMatrix:
    labels: List[str]
    entries: np.ndarray
    n_slots: int

    def get(self, a: str, b: str) -> float:
        return float(self.entries[self.labels.index(a), self.labels.index(b)])

    def to_dict(self) -> Dict:
        return {
            "definition": AGREEMENT_DEFINITION,
            "labels": list(self.labels),
            "entries": [[float(v) for v in row] for row in self.entries],
            "n_slots": self.n_slots,
        }


@dataclass
class NormStats:
    manifold: ManifoldSpec
    per_level: Dict[int, Tuple[float, float]]
    time_component: Optional[Dict[int, float]] = None
    centroid_spread_ratio: Optional[float] = None

    @property
    def spread_ratio(self) -> Optional[float]:
        """Mean depth at the coarsest level over the finest level."""
        levels = sorted(self.per_level)
        finest = self.per_level[levels[-1]][0]
        if finest == 0.0:
            return None
        return self.per_level[levels[0]][0] / finest

    def to_dict(self) -> Dict:
        data = {
            "manifold": self.manifold.label,
            "per_level": {
                str(level): {"mean": mean, "std": std} for level, (mean, std) in sorted(self.per_level.items())
            },
            "spread_ratio": self.spread_ratio,
            "centroid_spread_ratio": self.centroid_spread_ratio,
        }
        if self.time_component is not None:
            data["time_component"] = {str(level): v for level, v in sorted(self.time_component.items())}
        return data


@dataclass
class TradeoffSummary:
    """Which geometry wins retrieval and which wins level separation."""
    mean_hit_at_1: Dict[str, Optional[float]]
    ov_mean: Dict[str, float]

    @property
    def best_retrieval(self) -> Optional[str]:
        scored = [(v, label) for label, v in self.mean_hit_at_1.items() if v is not None]
        if not scored:
            return None
        best = max(v for v, _ in scored)
        return next(label for v, label in scored if v == best)

    @property
    def best_separation(self) -> Optional[str]:
        if not self.ov_mean:
            return None
        best = min(self.ov_mean.values())
        return next(label for label, v in self.ov_mean.items() if v == best)

    def to_dict(self) -> Dict:
        return {
            "mean_hit_at_1": dict(self.mean_hit_at_1),
            "ov_mean": dict(self.ov_mean),
            "best_retrieval": self.best_retrieval,
            "best_separation": self.best_separation,
        }


def manifold_labels(manifolds: Sequence[ManifoldSpec]) -> List[str]:
    return [m.label for m in manifolds]
