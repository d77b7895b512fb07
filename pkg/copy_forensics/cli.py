"""
Command-line entry point.

    copy-forensics fit      --model nrm --responses r.csv --key k.txt --out m.npz
    copy-forensics detect   --model m.npz --responses r.csv --key k.txt --variant omega2s --out pairs.csv
    copy-forensics rooms    --results pairs.csv --p-star 0.01 --threshold 0.6 --out rooms.csv
    copy-forensics simulate --synthetic desk --pairs 100000 --seed 7 --out-type1 t.csv --out-power p.csv
    copy-forensics replay   --manifest rooms.csv.manifest.json

Every command writes ``<output>.manifest.json`` next to its main output:
flags, seed, input fingerprints and status. The manifest is written as
``running`` before any output and finalized as ``complete`` or ``failed``.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import __version__, dataio
from .config import DetectConfig, FitConfig, SimulationConfig, default_threads
from .errors import CopyForensicsError, DomainError, InputFormatError
from .indices import detect_room, model_for
from .models import fit_nominal_mml, fit_wesolowsky
from .mtp import group_summary, massive_summary, report_rooms
from .sim import Simulator, as_table, build_scenario, holds_size, parse_synthetic_spec
from .state_model import RoomDetection, RunManifest
from .variants import VARIANTS, Family, get_variant_info, parse_variants

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 2

MODEL_ALIASES = {"nrm": "nominal", "nominal": "nominal", "wesolowsky": "wesolowsky"}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _configure_logging(verbose: int, quiet: bool):
    level = logging.WARNING if quiet else (logging.DEBUG if verbose else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _parse_levels(text: Optional[str]):
    if not text:
        return ()
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise DomainError(f"--levels must be comma-separated integers, got {text!r}") from None


# ==========================================
# MANIFEST
# ==========================================

class ManifestWriter:
    """Keeps ``<output>.manifest.json`` in step with a run."""

    def __init__(self, command: str, argv: Sequence[str], args: argparse.Namespace, output: Path):
        flags = {k: _jsonable(v) for k, v in vars(args).items() if k != "handler"}
        self.path = Path(f"{output}.manifest.json")
        self.manifest = RunManifest(
            command=command,
            argv=list(argv),
            flags=flags,
            seed=getattr(args, "seed", None),
            version=__version__,
            started_at=_now(),
        )

    def fingerprint(self, path: Optional[Path]):
        if path is not None:
            self.manifest.input_fingerprints[str(path)] = dataio.file_fingerprint(path)

    def write(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(asdict(self.manifest), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def finish(self, status: str, error: str = ""):
        self.manifest.status = status
        self.manifest.error = error
        self.manifest.finished_at = _now()
        self.write()


def read_manifest(path: Path) -> RunManifest:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return RunManifest(**data)
    except (ValueError, TypeError) as exc:
        raise InputFormatError(f"{path}: not a run manifest ({exc})") from None


# ==========================================
# COMMANDS
# ==========================================

def _load_exam(args):
    design = dataio.parse_key(args.key, args.options)
    return dataio.parse_responses(args.responses, design)


def _fit_config(args) -> FitConfig:
    return FitConfig(
        quadrature_nodes=args.quadrature_nodes,
        max_cycles=args.max_cycles,
        tolerance=args.tolerance,
        min_examinees=args.min_examinees,
    )


def cmd_fit(args, manifest: ManifestWriter) -> List[str]:
    manifest.fingerprint(args.responses)
    manifest.fingerprint(args.key)
    matrix = _load_exam(args)
    if MODEL_ALIASES[args.model] == "nominal":
        model = fit_nominal_mml(matrix, _fit_config(args))
    else:
        model = fit_wesolowsky(matrix)
    dataio.save_model(model, args.out)
    print(f"{model.kind} model for {len(matrix)} students, {matrix.design.num_questions} items -> {args.out}")
    return [str(args.out)]


def _load_tables(paths: Sequence[Path], matrix, manifest: ManifestWriter) -> Dict[Family, object]:
    tables = {}
    for path in paths:
        manifest.fingerprint(path)
        model = dataio.load_model(path, matrix.design)
        family = Family.OMEGA if model.kind == "nominal" else Family.GAMMA
        if family in tables:
            raise DomainError(f"{path}: more than one {model.kind} model given")
        tables[family] = model.probability_table(matrix)
    return tables


def cmd_detect(args, manifest: ManifestWriter) -> List[str]:
    manifest.fingerprint(args.responses)
    manifest.fingerprint(args.key)
    config = DetectConfig(alpha=args.alpha, continuity_correction=args.continuity)
    variants = parse_variants(args.variant)
    matrix = _load_exam(args)
    tables = _load_tables(args.model, matrix, manifest)
    for variant in variants:
        model_for(variant, tables)

    threads = args.threads or default_threads()
    detections = []
    for variant in variants:
        table = model_for(variant, tables)
        flagged = 0
        for room_id, records in matrix.rooms().items():
            detection = detect_room(records, variant, table, config.alpha, threads,
                                    config.continuity_correction, room_id=room_id)
            detections.append(detection)
            flagged += sum(r.flagged for r in detection.results)
        print(f"{variant.name}: {flagged} pairs with p <= {config.alpha:.6g}")
    dataio.write_pair_results((r for d in detections for r in d.results), args.out)
    roster = _roster_path(args.out)
    dataio.write_room_roster(detections, roster)
    return [str(args.out), str(roster)]


def _roster_path(results: Path) -> Path:
    return Path(f"{results}.roster.csv")


def _detections(results, variant_name: Optional[str],
                roster: Sequence[RoomDetection] = ()) -> List[RoomDetection]:
    """Group pair results by room; rooms known only from the roster come back skipped."""
    chosen = None
    if variant_name:
        variant = parse_variants(variant_name)
        if len(variant) != 1:
            raise DomainError("rooms takes a single --variant")
        chosen = variant[0]
        results = [r for r in results if r.variant == chosen]
    variants = {r.variant for r in results}
    if chosen is None and not results:
        variants = {d.variant for d in roster}
    if len(variants) > 1:
        names = ", ".join(sorted(v.name for v in variants))
        raise DomainError(f"results hold several variants ({names}); choose one with --variant")
    if chosen is None and variants:
        chosen = next(iter(variants))
    roster = {d.room_id: d for d in roster if d.variant == chosen}

    by_room: Dict[str, list] = {}
    for result in results:
        by_room.setdefault(result.room_id, []).append(result)
    detections = []
    for room_id in dict.fromkeys(list(roster) + list(by_room)):
        room_results = tuple(by_room.get(room_id, ()))
        if room_id in roster:
            num_students = roster[room_id].num_students
        else:
            num_students = len({r.copier_id for r in room_results} | {r.source_id for r in room_results})
        detections.append(RoomDetection(room_id, chosen, room_results, num_students, skipped=not room_results))
    return detections


def cmd_rooms(args, manifest: ManifestWriter) -> List[str]:
    manifest.fingerprint(args.results)
    config = DetectConfig(p_star=args.p_star, threshold=args.threshold,
                          attribution=args.attribution, correction=args.correction)
    roster_path = args.roster or _roster_path(args.results)
    roster = []
    if args.roster is not None or roster_path.exists():
        manifest.fingerprint(roster_path)
        roster = dataio.read_room_roster(roster_path)
    detections = _detections(dataio.read_pair_results(args.results), args.variant, roster)
    reports = report_rooms(detections, config.p_star, config.threshold, config.attribution,
                           config.correction, threads=args.threads or default_threads())
    dataio.write_room_reports(reports, args.out)
    outputs = [str(args.out)]

    summary = massive_summary(reports)
    print(f"flagged {summary.flagged_rooms} of {summary.num_rooms} rooms "
          f"(proportion {summary.proportion:.6g}, suspected students {summary.prevalence:.6g})")
    if args.groups is not None:
        manifest.fingerprint(args.groups)
        summaries = group_summary(reports, dataio.read_room_groups(args.groups))
        out = args.summary_out or Path(f"{args.out}.groups.csv")
        dataio.write_group_summaries(summaries, out)
        outputs.append(str(out))
        for s in summaries:
            print(f"  {s.label}: {s.flagged_rooms}/{s.num_rooms} rooms flagged ({s.proportion:.6g})")
    return outputs


def cmd_simulate(args, manifest: ManifestWriter) -> List[str]:
    config = SimulationConfig(
        num_pairs=args.pairs,
        alpha=args.alpha,
        copy_levels=_parse_levels(args.levels),
        variants=parse_variants(args.variant),
        seed=args.seed,
        chunk_size=args.chunk_size,
        continuity_correction=args.continuity,
    )
    outputs = []
    true_model = None
    if args.synthetic:
        if args.responses or args.key:
            raise DomainError("give either --synthetic or --responses/--key, not both")
        true_model, matrix = build_scenario(parse_synthetic_spec(args.synthetic), args.seed)
        if args.dump_synthetic is not None:
            dataio.write_responses(matrix, args.dump_synthetic)
            key_path = Path(f"{args.dump_synthetic}.key")
            dataio.write_key(matrix.design, key_path)
            outputs += [str(args.dump_synthetic), str(key_path)]
    else:
        if not (args.responses and args.key):
            raise DomainError("simulate needs --synthetic or both --responses and --key")
        manifest.fingerprint(args.responses)
        manifest.fingerprint(args.key)
        matrix = _load_exam(args)

    tables = _load_tables(args.model, matrix, manifest)
    families = {v.family for v in config.variants}
    if Family.OMEGA in families and Family.OMEGA not in tables:
        if args.true_model and true_model is not None:
            tables[Family.OMEGA] = as_table(true_model, matrix)
        else:
            tables[Family.OMEGA] = fit_nominal_mml(matrix, _fit_config(args)).probability_table(matrix)
    if Family.GAMMA in families and Family.GAMMA not in tables:
        tables[Family.GAMMA] = fit_wesolowsky(matrix).probability_table(matrix)

    simulator = Simulator(matrix, tables, config, threads=args.threads or default_threads())
    rates, curves = simulator.run()
    dataio.write_type1_rates(rates, args.out_type1)
    outputs.append(str(args.out_type1))
    if args.out_power is not None:
        if args.size_adjusted:
            curves = simulator.size_adjusted_curves()
        dataio.write_power_curves(curves, args.out_power)
        outputs.append(str(args.out_power))
    for variant, estimate in rates.items():
        verdict = "holds size" if holds_size(estimate, config.alpha) else "exceeds alpha"
        print(f"{variant.name}: type-I {estimate.per_thousand:.6g} per 1000 "
              f"(se {1000 * estimate.se:.6g}, {verdict})")
    return outputs


def cmd_replay(args, manifest: ManifestWriter) -> List[str]:
    recorded = read_manifest(args.manifest)
    if recorded.command == "replay":
        raise DomainError("cannot replay a replay manifest")
    logger.info("replaying %s run from %s", recorded.command, recorded.started_at)
    code = main(recorded.argv)
    if code != EXIT_OK:
        raise CopyForensicsError(f"replayed {recorded.command} run failed (exit {code})")
    return list(recorded.outputs)


# ==========================================
# PARSER
# ==========================================

def _add_exam_args(parser: argparse.ArgumentParser, required: bool = True):
    parser.add_argument("--responses", type=Path, required=required, help="responses CSV")
    parser.add_argument("--key", type=Path, required=required, help="answer key file")
    parser.add_argument("--options", type=int, default=4, help="options per item (default 4)")


def _add_fit_args(parser: argparse.ArgumentParser):
    defaults = FitConfig()
    parser.add_argument("--quadrature-nodes", type=int, default=defaults.quadrature_nodes)
    parser.add_argument("--max-cycles", type=int, default=defaults.max_cycles)
    parser.add_argument("--tolerance", type=float, default=defaults.tolerance)
    parser.add_argument("--min-examinees", type=int, default=defaults.min_examinees)


def _variant_listing() -> str:
    lines = ["variants:"]
    for name, variant in VARIANTS.items():
        lines.append(f"  {name:<8} {get_variant_info(variant).description}")
    return "\n".join(lines)


def _add_threads(parser: argparse.ArgumentParser):
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $COPY_FORENSICS_THREADS or CPU count)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="copy-forensics", description="Detect answer copying on multiple-choice exams")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a response model")
    fit.add_argument("--model", choices=sorted(MODEL_ALIASES), required=True)
    _add_exam_args(fit)
    _add_fit_args(fit)
    fit.add_argument("--out", type=Path, required=True)
    fit.set_defaults(handler=cmd_fit, primary="out")

    detect_defaults = DetectConfig()
    detect = sub.add_parser("detect", help="test every ordered pair within each room",
                            epilog=_variant_listing(), formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_exam_args(detect)
    detect.add_argument("--model", type=Path, action="append", required=True,
                        help="fitted model file (repeat for both families)")
    detect.add_argument("--variant", default="omega2s", help="variant name, comma list or 'all'")
    detect.add_argument("--alpha", type=float, default=detect_defaults.alpha)
    detect.add_argument("--continuity", action="store_true", help="continuity correction for standardized variants")
    _add_threads(detect)
    detect.add_argument("--out", type=Path, required=True)
    detect.set_defaults(handler=cmd_detect, primary="out")

    rooms = sub.add_parser("rooms", help="FDR correction and massive-cheating flags per room")
    rooms.add_argument("--results", type=Path, required=True, help="pair results CSV from detect")
    rooms.add_argument("--variant", default=None)
    rooms.add_argument("--roster", type=Path, default=None,
                       help="room roster from detect (default: <results>.roster.csv when present)")
    rooms.add_argument("--p-star", type=float, default=detect_defaults.p_star)
    rooms.add_argument("--threshold", type=float, default=detect_defaults.threshold)
    rooms.add_argument("--attribution", choices=("copier", "either"), default=detect_defaults.attribution)
    rooms.add_argument("--correction", choices=("bh", "bonferroni"), default=detect_defaults.correction)
    rooms.add_argument("--groups", type=Path, default=None, help="room_id,group CSV for per-group summaries")
    rooms.add_argument("--summary-out", type=Path, default=None)
    _add_threads(rooms)
    rooms.add_argument("--out", type=Path, required=True)
    rooms.set_defaults(handler=cmd_rooms, primary="out")

    sim_defaults = SimulationConfig()
    simulate = sub.add_parser("simulate", help="type-I error and power on cross-room pairs",
                              epilog=_variant_listing(), formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_exam_args(simulate, required=False)
    simulate.add_argument("--synthetic", default=None, help="scenario name or nrm:items=..,n=..,students=..[,rooms=..]")
    simulate.add_argument("--true-model", action="store_true",
                          help="with --synthetic, score with the generating parameters instead of a refit")
    simulate.add_argument("--model", type=Path, action="append", default=[], help="reuse a fitted model file")
    simulate.add_argument("--pairs", type=int, default=sim_defaults.num_pairs)
    simulate.add_argument("--alpha", type=float, default=sim_defaults.alpha)
    simulate.add_argument("--levels", default=None, help="copy levels, e.g. 1,5,10 (default 1,5,10,...,N)")
    simulate.add_argument("--variant", default="omega2s")
    simulate.add_argument("--seed", type=int, default=sim_defaults.seed)
    simulate.add_argument("--chunk-size", type=int, default=sim_defaults.chunk_size)
    simulate.add_argument("--continuity", action="store_true")
    simulate.add_argument("--size-adjusted", action="store_true",
                          help="power at each variant's calibrated null cut instead of alpha")
    simulate.add_argument("--dump-synthetic", type=Path, default=None, help="write the synthetic responses here")
    _add_fit_args(simulate)
    _add_threads(simulate)
    simulate.add_argument("--out-type1", type=Path, required=True)
    simulate.add_argument("--out-power", type=Path, default=None)
    simulate.set_defaults(handler=cmd_simulate, primary="out_type1")

    replay = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    replay.add_argument("--manifest", type=Path, required=True)
    replay.set_defaults(handler=cmd_replay, primary="manifest")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose, args.quiet)

    primary = getattr(args, args.primary)
    if args.command == "replay":
        primary = Path(f"{primary}.replay")
    manifest = ManifestWriter(args.command, argv, args, primary)
    try:
        manifest.write()
        outputs = args.handler(args, manifest)
    except (CopyForensicsError, OSError) as exc:
        logger.debug("run failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        try:
            manifest.finish("failed", str(exc))
        except OSError:
            pass
        return EXIT_FAILED
    except BaseException as exc:
        try:
            manifest.finish("failed", f"{type(exc).__name__}: {exc}")
        except OSError:
            pass
        raise
    manifest.manifest.outputs = outputs
    manifest.finish("complete")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
