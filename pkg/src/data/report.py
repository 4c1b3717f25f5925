"""
Analysis report serialization.

Structured reports are one JSON document; tabular exports are one CSV file per analysis.
Numbers keep 6 significant digits and undefined values are written as explicit nulls,
so two exports of the same results are byte-identical.
"""
import os
import csv
import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from src.analysis.results import (
    AgreementMatrix,
    HyperbolicityResult,
    NormStats,
    RetrievalResult,
    SeparationResult,
    TradeoffSummary,
)
from src.data.bundle import dump_json
from src.utils.config import TOOLKIT_VERSION

logger = logging.getLogger(__name__)

STRUCTURED = "structured"
TABULAR = "tabular"
NULL_MARKER = "null"

RETRIEVE = "retrieve"
SEPARATE = "separate"
NORMS = "norms"
HYPERBOLICITY = "hyperbolicity"
AGREEMENT = "agreement"
ANALYSES = (RETRIEVE, SEPARATE, NORMS, HYPERBOLICITY, AGREEMENT)


def round_sig(value: float, digits: int = 6) -> Optional[float]:
    """Round to significant digits; non-finite values become None."""
    if value is None or not math.isfinite(value):
        return None
    return float(f"{value:.{digits}g}")


def clean(obj: Any) -> Any:
    """Convert result data into JSON-ready values with rounded floats."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return round_sig(float(obj))
    return obj


def _cell(value: Any) -> str:
    if value is None:
        return NULL_MARKER
    if isinstance(value, (float, np.floating)):
        rounded = round_sig(float(value))
        return NULL_MARKER if rounded is None else repr(rounded)
    return str(value)


@dataclass
class AnalysisReport:
    """Everything one analyze run produced, plus the config that produced it."""
    config: Dict[str, Any]
    seed: Optional[int] = None
    requested: Sequence[str] = ANALYSES
    retrieval: Optional[List[RetrievalResult]] = None
    separation: Optional[List[SeparationResult]] = None
    norms: Optional[List[NormStats]] = None
    hyperbolicity: Optional[List[HyperbolicityResult]] = None
    agreement: Optional[AgreementMatrix] = None
    tradeoff: Optional[TradeoffSummary] = None
    errors: Dict[str, str] = field(default_factory=dict)

    def blocks(self) -> Dict[str, Any]:
        records = {
            RETRIEVE: self.retrieval,
            SEPARATE: self.separation,
            NORMS: self.norms,
            HYPERBOLICITY: self.hyperbolicity,
            AGREEMENT: self.agreement,
        }
        out = {}
        for name in ANALYSES:
            if name not in self.requested:
                continue
            value = records[name]
            if value is None:
                out[name] = None
            elif isinstance(value, list):
                out[name] = [record.to_dict() for record in value]
            else:
                out[name] = value.to_dict()
        return out

    def to_dict(self) -> Dict[str, Any]:
        return clean({
            "toolkit": "hyperlens",
            "version": TOOLKIT_VERSION,
            "seed": self.seed,
            "config": self.config,
            "analyses": self.blocks(),
            "tradeoff": self.tradeoff.to_dict() if self.tradeoff is not None else None,
            "errors": dict(sorted(self.errors.items())),
        })


class ReportWriter:
    """
    Writes analysis reports in structured or tabular form and prints console summaries.
    """

    def __init__(self, report: AnalysisReport):
        self.report = report

    def write_structured(self, path: str) -> str:
        """
        Write the whole report as one JSON document.

        Args:
            path: Target file path

        Returns:
            Path of the written file
        """
        parent = os.path.dirname(os.path.abspath(path))
        os.makedirs(parent, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(dump_json(self.report.to_dict()))
        logger.info(f"Wrote structured report to {path}")
        return path

    def write_tabular(self, directory: str) -> List[str]:
        """
        Write one CSV table per available analysis into a directory.

        Returns:
            Paths of the written files, in a fixed order
        """
        os.makedirs(directory, exist_ok=True)
        tables = self.tables()
        written = []
        for name, (header, rows) in tables.items():
            path = os.path.join(directory, f"{name}.csv")
            with open(path, "w", encoding="utf-8", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(header)
                for row in rows:
                    writer.writerow([_cell(v) for v in row])
            written.append(path)
        logger.info(f"Wrote {len(written)} tables to {directory}")
        return written

    def tables(self) -> Dict[str, tuple]:
        r = self.report
        tables: Dict[str, tuple] = {}
        if RETRIEVE in r.requested:
            rows = [
                [f"{x.level_pair[0]}-{x.level_pair[1]}", x.manifold.label, x.hit_at_1, x.n_evaluated, x.random_baseline]
                for x in (r.retrieval or [])
            ]
            tables["retrieval"] = (["pair", "manifold", "hit_at_1", "n_evaluated", "baseline"], rows)
        if SEPARATE in r.requested:
            samples, overlaps = [], []
            for result in r.separation or []:
                for level in result.levels:
                    for scene_id, value in zip(result.scene_ids, result.per_level_samples[level]):
                        samples.append([result.manifold.label, scene_id, level, float(value)])
                for i, a in enumerate(result.levels):
                    for j, b in enumerate(result.levels):
                        if i < j:
                            overlaps.append([result.manifold.label, a, b, float(result.ov_matrix[i, j])])
            tables["separation_samples"] = (["manifold", "scene_id", "level", "depth"], samples)
            tables["separation_ov"] = (["manifold", "level_a", "level_b", "ov"], overlaps)
        if NORMS in r.requested:
            rows = []
            for stats in r.norms or []:
                for level, (mean, std) in sorted(stats.per_level.items()):
                    time = stats.time_component.get(level) if stats.time_component is not None else None
                    rows.append([stats.manifold.label, level, mean, std, time])
            tables["norms"] = (["manifold", "level", "mean", "std", "time_component"], rows)
        if HYPERBOLICITY in r.requested:
            rows = []
            for result in r.hyperbolicity or []:
                for scene_id, value in zip(result.scene_ids, result.per_scene_delta):
                    rows.append([result.manifold.label, "all", scene_id, float(value)])
                for level, values in sorted((result.per_level_delta or {}).items()):
                    for value in values:
                        rows.append([result.manifold.label, level, None, float(value)])
            tables["hyperbolicity"] = (["manifold", "levels", "scene_id", "delta_norm"], rows)
        if AGREEMENT in r.requested:
            rows = []
            if r.agreement is not None:
                for a in r.agreement.labels:
                    for b in r.agreement.labels:
                        rows.append([a, b, r.agreement.get(a, b)])
            tables["agreement"] = (["row", "column", "agreement"], rows)
        return tables

    def print_summary(self) -> None:
        """Print Hit@1 per pair and manifold, OV and mean delta per manifold."""
        r = self.report
        print("\n=== HYPERLENS SUMMARY ===")

        if r.retrieval:
            pairs = sorted({x.level_pair for x in r.retrieval})
            labels = list(dict.fromkeys(x.manifold.label for x in r.retrieval))
            cells = {(x.manifold.label, x.level_pair): x for x in r.retrieval}
            print("\nHit@1 (%) by level pair:")
            print(f"  {'manifold':<14}" + "".join(f"{f'({a},{b})':>10}" for a, b in pairs))
            for label in labels:
                row = "".join(f"{_fmt(cells[(label, pair)].hit_at_1):>10}" for pair in pairs)
                print(f"  {label:<14}{row}")
            print(f"  {'random':<14}" + "".join(f"{100.0 / a:>10.1f}" for a, _ in pairs))

        if r.separation:
            print("\nLevel separation (OV mean, lower separates better):")
            for result in r.separation:
                flag = "inverted" if result.inverted else "not inverted"
                print(f"  {result.manifold.label:<14}{_fmt(result.ov_mean, 4):>10}  depth order {result.depth_order} ({flag})")

        if r.norms:
            print("\nSlot norm spread ratio (coarsest / finest):")
            for stats in r.norms:
                print(f"  {stats.manifold.label:<14}{_fmt(stats.spread_ratio, 4):>10}"
                      f"  centroid {_fmt(stats.centroid_spread_ratio, 4)}")

        if r.hyperbolicity:
            print("\nGromov delta (normalized, mean):")
            for result in r.hyperbolicity:
                print(f"  {result.manifold.label:<14}{_fmt(result.mean, 4):>10}")

        if r.agreement is not None:
            print(f"\nAgreement with mask parents over {r.agreement.n_slots} fine slots:")
            for label in r.agreement.labels[:-1]:
                print(f"  {label:<14}{_fmt(r.agreement.get(label, 'gt'), 4):>10}")

        if r.tradeoff is not None:
            print(f"\nBest retrieval: {r.tradeoff.best_retrieval}; best separation: {r.tradeoff.best_separation}")

        for name, message in sorted(r.errors.items()):
            print(f"\n{name} failed: {message}")


def _fmt(value: Optional[float], decimals: int = 1) -> str:
    if value is None or not math.isfinite(value):
        return "n/a"
    return f"{value:.{decimals}f}"


def export_report(report: AnalysisReport, path: str, fmt: str = STRUCTURED):
    """
    Export a report in the requested format.

    Args:
        report: Collected results
        path: JSON file path (structured) or directory (tabular)
        fmt: "structured" or "tabular"
    """
    writer = ReportWriter(report)
    if fmt == STRUCTURED:
        return writer.write_structured(path)
    if fmt == TABULAR:
        return writer.write_tabular(path)
    raise ValueError(f"Unknown report format {fmt!r}")
