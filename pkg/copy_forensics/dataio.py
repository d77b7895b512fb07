"""
File formats for copy_forensics.

Inputs:
- responses CSV ``student_id,room_id,answers`` with answers a fixed-width
  string over ``A..`` and ``*`` for a blank (header row optional)
- key file: one line of option letters

Outputs:
- model files: ``.npz`` container holding the parameter arrays plus a JSON
  header (magic, format version, model kind, exam key and fingerprint)
- pair results, room reports, group summaries, type-I and power tables as CSV
"""

import csv
import hashlib
import io
import json
import logging
import zipfile
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from . import __version__
from .errors import InputFormatError, ModelFileError
from .models import MODEL_KINDS
from .state_model import (
    OPTION_LETTERS,
    ExamDesign,
    MassiveSummary,
    PairResult,
    PowerCurve,
    RateEstimate,
    ResponseMatrix,
    RoomDetection,
    RoomReport,
    StudentRecord,
    letters_to_options,
)
from .variants import IndexVariant, get_variant

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MODEL_MAGIC = "COPY-FORENSICS-MODEL"
MODEL_FORMAT_VERSION = 1
META_KEY = "__meta__"

RESPONSE_HEADER = ["student_id", "room_id", "answers"]
PAIR_HEADER = ["copier", "source", "room", "variant", "matches", "n_scored", "statistic", "p_value"]
ROSTER_HEADER = ["room", "variant", "num_students", "skipped"]
ROOM_HEADER = ["room_id", "num_students", "num_tests", "suspected_share", "skipped", "massive_flag"]
GROUP_HEADER = ["group", "num_rooms", "flagged_rooms", "flagged_share",
                "num_students", "suspected_students", "prevalence"]
TYPE1_HEADER = ["variant", "type1_rate", "se"]
POWER_HEADER = ["variant", "k", "power", "se", "proportion"]


def file_fingerprint(path: PathLike) -> str:
    """sha256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _fmt(value: float) -> str:
    return repr(float(value))


# ==========================================
# RESPONSES AND KEYS
# ==========================================

def parse_key(path: PathLike, n_options: int) -> ExamDesign:
    """Read a one-line key such as ``ACBD``."""
    text = Path(path).read_text(encoding="utf-8").strip()
    if not text:
        raise InputFormatError("empty key")
    if "\n" in text:
        raise InputFormatError("key must be a single line")
    key = []
    for position, ch in enumerate(text, start=1):
        index = OPTION_LETTERS.find(ch.upper())
        if index < 0:
            raise InputFormatError(f"key position {position}: invalid character {ch!r}")
        if index >= n_options:
            raise InputFormatError(f"key position {position}: option {ch.upper()} out of range")
        key.append(index)
    return ExamDesign(num_options=n_options, key=tuple(key))


def parse_response_row(fields: Sequence[str], design: ExamDesign, row: int) -> StudentRecord:
    """Turn one CSV row into a StudentRecord, naming the row on error."""
    if len(fields) != 3:
        raise InputFormatError(f"row {row}: expected 3 columns, got {len(fields)}")
    student_id, room_id, answers = (f.strip() for f in fields)
    if not student_id:
        raise InputFormatError(f"row {row}: empty student_id")
    if len(answers) != design.num_questions:
        raise InputFormatError(f"row {row}: expected {design.num_questions} answers")
    try:
        options = letters_to_options(answers)
    except InputFormatError as exc:
        raise InputFormatError(f"row {row}: {exc}") from None
    for position, option in enumerate(options, start=1):
        if option >= design.num_options:
            raise InputFormatError(
                f"row {row}: answer {position}: option {OPTION_LETTERS[option]} out of range"
            )
    return StudentRecord(student_id=student_id, room_id=room_id, responses=options)


def parse_responses(path: PathLike, design: ExamDesign) -> ResponseMatrix:
    """Read a responses CSV; rows are numbered from 1, header excluded."""
    records: List[StudentRecord] = []
    seen: Dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        row = 0
        for fields in reader:
            if not fields or all(not f.strip() for f in fields):
                continue
            if row == 0 and not records and [f.strip().lower() for f in fields] == RESPONSE_HEADER:
                continue
            row += 1
            record = parse_response_row(fields, design, row)
            if record.student_id in seen:
                raise InputFormatError(
                    f"row {row}: duplicate student_id {record.student_id!r} (first on row {seen[record.student_id]})"
                )
            seen[record.student_id] = row
            records.append(record)
    logger.info("read %d students from %s", len(records), path)
    return ResponseMatrix(design=design, records=tuple(records))


def format_responses(matrix: ResponseMatrix) -> str:
    """Serialize a matrix to the responses CSV format (with header)."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(RESPONSE_HEADER)
    for record in matrix.records:
        writer.writerow((record.student_id, record.room_id, record.answer_string))
    return buffer.getvalue()


def write_responses(matrix: ResponseMatrix, path: PathLike):
    Path(path).write_text(format_responses(matrix), encoding="utf-8")


def write_key(design: ExamDesign, path: PathLike):
    Path(path).write_text(design.key_letters + "\n", encoding="utf-8")


# ==========================================
# MODEL FILES
# ==========================================

def save_model(model, path: PathLike):
    """Persist a fitted model with a self-describing header."""
    arrays, extra = model.to_arrays()
    meta = {
        "magic": MODEL_MAGIC,
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "num_options": model.design.num_options,
        "key": model.design.key_letters,
        "fingerprint": model.design.fingerprint,
        "package_version": __version__,
        "extra": extra,
    }
    payload = dict(arrays)
    payload[META_KEY] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **payload)
    logger.info("saved %s model to %s", model.kind, path)


def load_model(path: PathLike, design: Optional[ExamDesign] = None):
    """Load a model file; with ``design``, refuse a model fitted on another exam."""
    try:
        with np.load(path, allow_pickle=False) as archive:
            if META_KEY not in archive.files:
                raise ModelFileError(f"{path}: not a model file (no header)")
            meta = json.loads(str(archive[META_KEY]))
            arrays = {name: archive[name] for name in archive.files if name != META_KEY}
    except ModelFileError:
        raise
    except (OSError, ValueError, EOFError, KeyError, zipfile.BadZipFile) as exc:
        raise ModelFileError(f"{path}: unreadable or truncated model file ({exc})") from None

    if meta.get("magic") != MODEL_MAGIC:
        raise ModelFileError(f"{path}: wrong magic header {meta.get('magic')!r}")
    found = meta.get("format_version")
    if found != MODEL_FORMAT_VERSION:
        raise ModelFileError(
            f"{path}: model format version mismatch (expected {MODEL_FORMAT_VERSION}, found {found})"
        )
    kind = meta.get("kind")
    if kind not in MODEL_KINDS:
        raise ModelFileError(f"{path}: unknown model kind {kind!r}")

    stored = parse_key_letters(meta["key"], int(meta["num_options"]))
    if stored.fingerprint != meta.get("fingerprint"):
        raise ModelFileError(f"{path}: header fingerprint does not match its key")
    if design is not None and design.fingerprint != stored.fingerprint:
        raise ModelFileError(
            f"{path}: exam fingerprint mismatch (expected {design.fingerprint[:12]}, "
            f"found {stored.fingerprint[:12]})"
        )
    try:
        return MODEL_KINDS[kind].from_arrays(stored, arrays, meta.get("extra", {}))
    except KeyError as exc:
        raise ModelFileError(f"{path}: missing array {exc}") from None


def parse_key_letters(letters: str, n_options: int) -> ExamDesign:
    key = []
    for position, ch in enumerate(letters, start=1):
        index = OPTION_LETTERS.find(ch)
        if not 0 <= index < n_options:
            raise InputFormatError(f"key position {position}: option {ch} out of range")
        key.append(index)
    return ExamDesign(num_options=n_options, key=tuple(key))


# ==========================================
# RESULT TABLES
# ==========================================

def _write_rows(path: PathLike, header: List[str], rows: Iterable[Sequence[object]]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def write_pair_results(results: Iterable[PairResult], path: PathLike):
    _write_rows(path, PAIR_HEADER, (
        (r.copier_id, r.source_id, r.room_id, r.variant.name, r.matches, r.n_scored,
         _fmt(r.statistic), _fmt(r.p_value))
        for r in results
    ))


def read_pair_results(path: PathLike) -> List[PairResult]:
    """Read a pair-results CSV written by ``write_pair_results``."""
    results = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return results
        if [h.strip() for h in header] != PAIR_HEADER:
            raise InputFormatError(f"{path}: expected header {','.join(PAIR_HEADER)}")
        for row, fields in enumerate(reader, start=1):
            if not fields:
                continue
            if len(fields) != len(PAIR_HEADER):
                raise InputFormatError(f"row {row}: expected {len(PAIR_HEADER)} columns, got {len(fields)}")
            copier, source, room, variant, matches, n_scored, statistic, p_value = fields
            try:
                p = float(p_value)
                result = PairResult(
                    copier_id=copier, source_id=source, room_id=room, variant=get_variant(variant),
                    matches=int(matches), statistic=float(statistic), p_value=p, n_scored=int(n_scored),
                )
            except ValueError as exc:
                raise InputFormatError(f"row {row}: {exc}") from None
            if not 0.0 <= p <= 1.0:
                raise InputFormatError(f"row {row}: p_value {p_value} outside [0, 1]")
            if not 0 <= result.matches <= result.n_scored:
                raise InputFormatError(f"row {row}: matches {matches} outside [0, n_scored={n_scored}]")
            results.append(result)
    return results


def write_room_roster(detections: Iterable[RoomDetection], path: PathLike):
    """One row per room and variant seen by detect, skipped rooms included."""
    _write_rows(path, ROSTER_HEADER, (
        (d.room_id, d.variant.name, d.num_students, str(d.skipped).lower()) for d in detections
    ))


def read_room_roster(path: PathLike) -> List[RoomDetection]:
    """Read a roster written by ``write_room_roster``; detections carry no pair results."""
    roster = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return roster
        if [h.strip() for h in header] != ROSTER_HEADER:
            raise InputFormatError(f"{path}: expected header {','.join(ROSTER_HEADER)}")
        for row, fields in enumerate(reader, start=1):
            if not fields:
                continue
            if len(fields) != len(ROSTER_HEADER):
                raise InputFormatError(f"row {row}: expected {len(ROSTER_HEADER)} columns, got {len(fields)}")
            room, variant, num_students, skipped = fields
            if skipped not in ("true", "false"):
                raise InputFormatError(f"row {row}: skipped must be true or false, got {skipped!r}")
            try:
                roster.append(RoomDetection(room, get_variant(variant), (), int(num_students),
                                            skipped=skipped == "true"))
            except ValueError as exc:
                raise InputFormatError(f"row {row}: {exc}") from None
    return roster


def write_room_reports(reports: Iterable[RoomReport], path: PathLike):
    _write_rows(path, ROOM_HEADER, (
        (r.room_id, r.num_students, r.num_tests, _fmt(r.suspected_share),
         str(r.skipped).lower(), str(r.massive_flag).lower())
        for r in reports
    ))


def write_group_summaries(summaries: Iterable[MassiveSummary], path: PathLike):
    _write_rows(path, GROUP_HEADER, (
        (s.label, s.num_rooms, s.flagged_rooms, _fmt(s.proportion),
         s.num_students, s.suspected_students, _fmt(s.prevalence))
        for s in summaries
    ))


def read_room_groups(path: PathLike) -> Dict[str, str]:
    """Read ``room_id,group`` rows (header optional)."""
    groups: Dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row, fields in enumerate(csv.reader(fh), start=1):
            if not fields:
                continue
            if row == 1 and [f.strip().lower() for f in fields] == ["room_id", "group"]:
                continue
            if len(fields) != 2:
                raise InputFormatError(f"row {row}: expected room_id,group")
            groups[fields[0].strip()] = fields[1].strip()
    return groups


def write_type1_rates(rates: Dict[IndexVariant, RateEstimate], path: PathLike):
    _write_rows(path, TYPE1_HEADER, (
        (variant.name, _fmt(estimate.rate), _fmt(estimate.se)) for variant, estimate in rates.items()
    ))


def write_power_curves(curves: Iterable[PowerCurve], path: PathLike):
    _write_rows(path, POWER_HEADER, (
        (curve.variant.name, point.k, _fmt(point.estimate.rate), _fmt(point.estimate.se), _fmt(point.proportion))
        for curve in curves
        for point in curve.points
    ))
