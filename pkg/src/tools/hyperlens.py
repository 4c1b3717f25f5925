#!/usr/bin/env python3
"""
hyperlens command line: generate synthetic bundles, run the hierarchy analyses, validate bundles.

Exit codes: 0 success, 1 I/O failure, 2 usage or config error, 3 validation failure.
"""
import os
import sys
import argparse
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

# Add parent directory to path for imports
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../..')))

from src.analysis.agreement import agreement_analysis, summarize_tradeoff
from src.analysis.hyperbolicity import hyperbolicity_analysis
from src.analysis.norms import norm_stats
from src.analysis.results import manifold_labels
from src.analysis.retrieval import retrieval_analysis
from src.analysis.separation import separation_analysis
from src.core.errors import BundleFormatError, HyperlensError, InvalidConfigError, InvalidInputError
from src.core.hierarchy import BinarizationPolicy
from src.core.manifold import ManifoldSpec
from src.data.bundle import load_bundle, read_scene_ids, save_bundle, validate_bundle
from src.data.report import (
    AGREEMENT,
    ANALYSES,
    HYPERBOLICITY,
    NORMS,
    RETRIEVE,
    SEPARATE,
    AnalysisReport,
    ReportWriter,
)
from src.data.synthetic import MODE_IID, MODE_PLANTED, NORM_PROFILES, SyntheticConfig, generate_synthetic
from src.utils.config import DEFAULT_CURVATURES, TAU_EXCL, consecutive_pairs, get_default_workers, get_log_level
from src.utils.logger import StageTimer, configure_logging

logger = logging.getLogger("hyperlens")

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_VALIDATION = 3

DEFAULT_MANIFOLDS = ",".join(
    manifold_labels([ManifoldSpec.euclidean()] + [ManifoldSpec.lorentz(c) for c in DEFAULT_CURVATURES])
)


@dataclass
class RunConfig:
    """Effective settings of one analyze run."""
    input_path: str
    output_path: str
    manifolds: List[ManifoldSpec]
    pairs: Optional[List[Tuple[int, int]]] = None
    policy: BinarizationPolicy = field(default_factory=BinarizationPolicy)
    tau_excl: float = TAU_EXCL
    seed: Optional[int] = None
    workers: int = 1
    analyses: List[str] = field(default_factory=lambda: list(ANALYSES))
    tabular_dir: Optional[str] = None
    delta_per_level: bool = False

    def __post_init__(self):
        if not self.manifolds:
            raise InvalidConfigError("At least one manifold is required")
        if not 0.0 < self.tau_excl <= 1.0:
            raise InvalidConfigError(f"--tau-excl must lie in (0, 1], got {self.tau_excl}")
        if self.workers < 1:
            raise InvalidConfigError(f"--workers must be >= 1, got {self.workers}")
        unknown = [name for name in self.analyses if name not in ANALYSES]
        if unknown:
            raise InvalidConfigError(f"Unknown analyses {unknown}; choose from {list(ANALYSES)}")

    def echo(self) -> Dict:
        """Settings that determine the results; worker count and output locations are left out."""
        return {
            "input": self.input_path,
            "manifolds": manifold_labels(self.manifolds),
            "pairs": [list(pair) for pair in self.pairs] if self.pairs is not None else None,
            "policy": self.policy.label,
            "tau_excl": self.tau_excl,
            "analyses": list(self.analyses),
            "delta_per_level": self.delta_per_level,
        }


def parse_manifolds(text: str) -> List[ManifoldSpec]:
    items = [item for item in text.split(",") if item.strip()]
    if not items:
        raise InvalidConfigError("--manifolds needs at least one entry")
    return [ManifoldSpec.parse(item) for item in items]


def parse_levels(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(item) for item in text.split(",") if item.strip())
    except ValueError:
        raise InvalidConfigError(f"--levels must be a comma-separated list of integers, got {text!r}")


def parse_norm_profile(text: Optional[str]) -> Optional[Union[str, Dict[int, float]]]:
    """Parse `3:1.446,13:1.137` style profiles; profile names pass through."""
    if not text:
        return None
    if text in NORM_PROFILES:
        return text
    profile = {}
    try:
        for item in text.split(","):
            level, value = item.split(":")
            profile[int(level)] = float(value)
    except ValueError:
        raise InvalidConfigError(f"--norm-profile must look like '3:1.4,5:1.3', got {text!r}")
    return profile


def parse_pairs(text: Optional[str]) -> Optional[List[Tuple[int, int]]]:
    if not text:
        return None
    pairs = []
    try:
        for item in text.split(","):
            coarse, fine = item.split("-")
            pairs.append((int(coarse), int(fine)))
    except ValueError:
        raise InvalidConfigError(f"--pairs must look like '3-5,5-7', got {text!r}")
    return pairs


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(prog="hyperlens",
                                     description="Hierarchy analysis of slot embeddings in Euclidean and Lorentz space")
    parser.add_argument('--log-level', type=str, default=get_log_level(), help='Log level for progress output')
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Generate a synthetic bundle with a planted hierarchy")
    gen.add_argument('--scenes', type=int, default=100, help='Number of scenes')
    gen.add_argument('--dim', type=int, default=64, help='Slot dimension d_s')
    gen.add_argument('--patches', type=int, default=576, help='Patch count L (square grid)')
    gen.add_argument('--levels', type=str, default="3,5,7,11,13", help='Comma-separated granularity levels')
    gen.add_argument('--seed', type=int, default=0, help='64-bit seed')
    gen.add_argument('--separation', type=float, default=1.0, help='Distance between root clusters')
    gen.add_argument('--child-noise', type=float, default=0.1, help='RMS child offset relative to the separation')
    gen.add_argument('--norm-profile', type=str, default=None,
                     help="'flat' (default), 'decreasing', or a per-level map such as '3:1.446,13:1.137'")
    gen.add_argument('--mode', choices=[MODE_PLANTED, MODE_IID], default=MODE_PLANTED, help='Slot model')
    gen.add_argument('--mask-bleed', type=float, default=0.25, help='Mask boundary jitter in [0, 0.3]')
    gen.add_argument('--norm-jitter', type=float, default=0.1, help='Per-scene log-normal norm jitter')
    gen.add_argument('--anchor-norm', type=float, default=None, help='Distance of the root cluster from the origin')
    gen.add_argument('-o', '--output', type=str, required=True, help='Bundle directory to write')
    gen.add_argument('--workers', type=int, default=get_default_workers(), help='Scene-level workers')
    gen.add_argument('--quiet', action='store_true', help='Only warnings and errors on stderr')

    analyze = sub.add_parser("analyze", help="Run the hierarchy analyses on a bundle")
    analyze.add_argument('bundle', type=str, help='Bundle directory')
    analyze.add_argument('--manifolds', type=str, default=DEFAULT_MANIFOLDS,
                         help="Comma-separated manifolds: 'euclidean' or 'lorentz:<c>'")
    which = analyze.add_mutually_exclusive_group()
    which.add_argument('--all', action='store_true', help='Run every analysis (default)')
    which.add_argument('--only', type=str, default=None, help=f"Comma-separated subset of {','.join(ANALYSES)}")
    analyze.add_argument('-o', '--output', type=str, default="report.json", help='Structured report path')
    analyze.add_argument('--tabular', type=str, default=None, help='Directory for CSV tables')
    analyze.add_argument('--pairs', type=str, default=None, help="Level pairs, e.g. '3-5,5-7' (default: consecutive)")
    analyze.add_argument('--policy', type=str, default="argmax", help="Mask binarization: 'argmax' or 'threshold:<tau>'")
    analyze.add_argument('--tau-excl', type=float, default=TAU_EXCL, help='Near-duplicate exclusion threshold')
    analyze.add_argument('--delta-per-level', action='store_true', help='Also compute delta on each level alone')
    analyze.add_argument('--seed', type=int, default=None, help='Seed echoed into the report')
    analyze.add_argument('--workers', type=int, default=get_default_workers(), help='Scene-level workers')
    analyze.add_argument('--quiet', action='store_true', help='Suppress progress and the console summary')

    validate = sub.add_parser("validate", help="Check bundle integrity")
    validate.add_argument('bundle', type=str, help='Bundle directory')
    validate.add_argument('--quiet', action='store_true', help='Only print violations')

    return parser.parse_args(argv)


def cmd_gen(args: argparse.Namespace) -> int:
    try:
        config = SyntheticConfig(
            n_scenes=args.scenes,
            d_s=args.dim,
            patches=args.patches,
            levels=parse_levels(args.levels),
            parent_separation=args.separation,
            child_noise=args.child_noise,
            norm_profile=parse_norm_profile(args.norm_profile),
            seed=args.seed,
            mode=args.mode,
            mask_bleed=args.mask_bleed,
            norm_jitter=args.norm_jitter,
            anchor_norm=args.anchor_norm,
        )
        bundle = generate_synthetic(config, workers=max(args.workers, 1))
    except (InvalidConfigError, InvalidInputError) as e:
        print(f"Invalid generator config: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        save_bundle(bundle, args.output)
    except OSError as e:
        print(f"Error writing bundle: {e}", file=sys.stderr)
        return EXIT_IO

    print(f"Generated {len(bundle)} scenes (seed={config.seed}) in {args.output}")
    return EXIT_OK


def build_run_config(args: argparse.Namespace) -> RunConfig:
    analyses = list(ANALYSES)
    if args.only:
        analyses = [name.strip() for name in args.only.split(",") if name.strip()]
    return RunConfig(
        input_path=args.bundle,
        output_path=args.output,
        manifolds=parse_manifolds(args.manifolds),
        pairs=parse_pairs(args.pairs),
        policy=BinarizationPolicy.parse(args.policy),
        tau_excl=args.tau_excl,
        seed=args.seed,
        workers=args.workers,
        analyses=analyses,
        tabular_dir=args.tabular,
        delta_per_level=args.delta_per_level,
    )


def run_analyses(bundle, config: RunConfig) -> AnalysisReport:
    """Run every requested analysis; a failing analysis leaves a null block and an error entry."""
    pairs = config.pairs if config.pairs is not None else list(consecutive_pairs(bundle.levels))
    report = AnalysisReport(config=config.echo(), seed=config.seed, requested=list(config.analyses))
    report.config["pairs"] = [list(pair) for pair in pairs]
    workers = config.workers

    def attempt(name, fn):
        try:
            return fn()
        except HyperlensError as e:
            logger.error(f"{name} failed: {e}")
            report.errors[name] = str(e)
            return None

    if RETRIEVE in config.analyses:
        report.retrieval = attempt(RETRIEVE, lambda: retrieval_analysis(
            bundle, config.manifolds, pairs, config.policy, config.tau_excl, workers))
    if SEPARATE in config.analyses:
        report.separation = attempt(SEPARATE, lambda: separation_analysis(bundle, config.manifolds, workers=workers))
    if NORMS in config.analyses:
        report.norms = attempt(NORMS, lambda: [norm_stats(bundle, m) for m in config.manifolds])
    if HYPERBOLICITY in config.analyses:
        report.hyperbolicity = attempt(HYPERBOLICITY, lambda: [
            hyperbolicity_analysis(bundle, m, per_level=config.delta_per_level, workers=workers)
            for m in config.manifolds
        ])
    if AGREEMENT in config.analyses:
        report.agreement = attempt(AGREEMENT, lambda: agreement_analysis(
            bundle, config.manifolds, pairs, config.policy, config.tau_excl, workers))
    if report.retrieval and report.separation:
        report.tradeoff = summarize_tradeoff(report.retrieval, report.separation)
    return report


def cmd_analyze(args: argparse.Namespace) -> int:
    try:
        config = build_run_config(args)
    except (InvalidConfigError, InvalidInputError) as e:
        print(f"Invalid arguments: {e}", file=sys.stderr)
        return EXIT_USAGE

    try:
        bundle = load_bundle(config.input_path)
    except (BundleFormatError, OSError) as e:
        print(f"Cannot read bundle {config.input_path}: {e}", file=sys.stderr)
        return EXIT_IO

    try:
        with StageTimer("analyze", f"{len(bundle)} scenes"):
            report = run_analyses(bundle, config)
    except (InvalidConfigError, InvalidInputError) as e:
        print(f"Invalid arguments: {e}", file=sys.stderr)
        return EXIT_USAGE

    writer = ReportWriter(report)
    try:
        writer.write_structured(config.output_path)
        if config.tabular_dir:
            writer.write_tabular(config.tabular_dir)
    except OSError as e:
        print(f"Error writing report: {e}", file=sys.stderr)
        return EXIT_IO

    if not args.quiet:
        writer.print_summary()
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    if not os.path.isdir(args.bundle):
        print(f"Bundle directory {args.bundle} not found", file=sys.stderr)
        return EXIT_IO

    issues = validate_bundle(args.bundle)
    failed = {issue.scene_id for issue in issues if issue.scene_id is not None}
    if not args.quiet:
        scene_ids = read_scene_ids(args.bundle)
        if scene_ids:
            print(f"{'scene':<24} status")
            print("-" * 32)
            for scene_id in scene_ids:
                print(f"{scene_id:<24} {'FAIL' if scene_id in failed else 'OK'}")
    for issue in issues:
        print(str(issue))
    if issues:
        return EXIT_VALIDATION
    print("all scenes OK")
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "analyze": cmd_analyze, "validate": cmd_validate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_arguments(argv)
    configure_logging(args.log_level, quiet=getattr(args, "quiet", False))
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nStopped by user", file=sys.stderr)
        sys.exit(EXIT_IO)
