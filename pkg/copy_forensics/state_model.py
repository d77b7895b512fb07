"""
State Model - Data Classes for copy detection

Defines the immutable values passed between modules:
- Exam design and answer key
- Student answer records and the response matrix
- Pair results and room reports
- Monte-Carlo estimates (type-I rates, power curves)
- Run manifests
"""

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

import numpy as np

from .errors import DomainError, InputFormatError
from .variants import IndexVariant

# Sentinel for an unanswered question.
MISSING = -1

OPTION_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
MISSING_CHAR = "*"


def option_letter(option: int) -> str:
    """Letter for a 0-based option index, ``*`` for MISSING."""
    if option == MISSING:
        return MISSING_CHAR
    return OPTION_LETTERS[option]


def letters_to_options(text: str) -> Tuple[int, ...]:
    """Map ``A*C`` to ``(0, MISSING, 2)``; option range is checked by the caller."""
    options = []
    for position, ch in enumerate(text, start=1):
        if ch == MISSING_CHAR:
            options.append(MISSING)
            continue
        index = OPTION_LETTERS.find(ch.upper())
        if index < 0:
            raise InputFormatError(f"answer {position}: invalid character {ch!r}")
        options.append(index)
    return tuple(options)


def _frozen_array(values, dtype=np.int8) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


# ==========================================
# EXAM / RESPONSES
# ==========================================

@dataclass(frozen=True)
class ExamDesign:
    """Question count, option count and answer key (0-based options)."""
    num_options: int
    key: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "key", tuple(int(k) for k in self.key))
        if len(self.key) < 1:
            raise DomainError("exam needs at least one question")
        if not 2 <= self.num_options <= len(OPTION_LETTERS):
            raise DomainError(f"option count {self.num_options} outside [2, {len(OPTION_LETTERS)}]")
        for position, k in enumerate(self.key):
            if not 0 <= k < self.num_options:
                raise DomainError(f"key entry {position + 1}: option {k} out of range")

    @property
    def num_questions(self) -> int:
        return len(self.key)

    @property
    def key_letters(self) -> str:
        return "".join(option_letter(k) for k in self.key)

    @cached_property
    def key_array(self) -> np.ndarray:
        return _frozen_array(self.key)

    @property
    def fingerprint(self) -> str:
        """Hash of option count and key; ties fitted models to this exam."""
        payload = f"{self.num_options}:{self.key_letters}".encode("ascii")
        return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class StudentRecord:
    """One examinee's answers (0-based options, MISSING for blanks)."""
    student_id: str
    room_id: str
    responses: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "responses", tuple(int(r) for r in self.responses))

    @cached_property
    def answers(self) -> np.ndarray:
        return _frozen_array(self.responses)

    @property
    def num_answered(self) -> int:
        return sum(1 for r in self.responses if r != MISSING)

    @property
    def answer_string(self) -> str:
        return "".join(option_letter(r) for r in self.responses)

    def validate(self, design: ExamDesign, row: Optional[int] = None):
        """Raise InputFormatError if the record does not fit the design."""
        where = f"row {row}" if row is not None else f"student {self.student_id}"
        if len(self.responses) != design.num_questions:
            raise InputFormatError(
                f"{where}: expected {design.num_questions} answers, got {len(self.responses)}"
            )
        for position, r in enumerate(self.responses):
            if r != MISSING and not 0 <= r < design.num_options:
                raise InputFormatError(f"{where}: answer {position + 1} out of range")


@dataclass(frozen=True)
class ResponseMatrix:
    """All examinees of one exam, in input order."""
    design: ExamDesign
    records: Tuple[StudentRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for row, record in enumerate(self.records, start=1):
            record.validate(self.design, row=row)
            if record.student_id in seen:
                raise InputFormatError(f"row {row}: duplicate student_id {record.student_id!r}")
            seen.add(record.student_id)

    def __len__(self) -> int:
        return len(self.records)

    @cached_property
    def answers(self) -> np.ndarray:
        """(students, questions) int8 array, MISSING = -1."""
        if not self.records:
            return _frozen_array(np.empty((0, self.design.num_questions)))
        return _frozen_array([r.responses for r in self.records])

    @cached_property
    def student_ids(self) -> Tuple[str, ...]:
        return tuple(r.student_id for r in self.records)

    @cached_property
    def room_ids(self) -> Tuple[str, ...]:
        return tuple(r.room_id for r in self.records)

    @cached_property
    def index_of(self) -> Dict[str, int]:
        return {sid: i for i, sid in enumerate(self.student_ids)}

    def record(self, student_id: str) -> StudentRecord:
        return self.records[self.index_of[student_id]]

    def rooms(self) -> Dict[str, Tuple[StudentRecord, ...]]:
        """Records grouped by room, rooms in order of first appearance."""
        grouped: Dict[str, List[StudentRecord]] = {}
        for record in self.records:
            grouped.setdefault(record.room_id, []).append(record)
        return {room: tuple(recs) for room, recs in grouped.items()}

    def correct_mask(self) -> np.ndarray:
        """Boolean (students, questions): answered and equal to the key."""
        return self.answers == self.design.key_array[np.newaxis, :]

    def answered_mask(self) -> np.ndarray:
        return self.answers != MISSING


# ==========================================
# DETECTION RESULTS
# ==========================================

@dataclass(frozen=True)
class PairResult:
    """Outcome of one ordered-pair test (copier c, source s)."""
    copier_id: str
    source_id: str
    room_id: str
    variant: IndexVariant
    matches: int
    statistic: float  # M_cs for exact variants, z for standardized ones
    p_value: float
    n_scored: int
    flagged: bool = False  # p_value <= alpha of the run


@dataclass(frozen=True)
class RoomDetection:
    """All ordered-pair results of one room for one variant."""
    room_id: str
    variant: IndexVariant
    results: Tuple[PairResult, ...]
    num_students: int
    excluded_ids: Tuple[str, ...] = ()
    skipped: bool = False


@dataclass(frozen=True)
class RoomReport:
    """Multiple-testing outcome for one room."""
    room_id: str
    variant: Optional[IndexVariant]
    num_students: int
    num_tests: int
    rejected_pairs: Tuple[Tuple[str, str], ...]
    suspected_students: FrozenSet[str]
    suspected_share: float
    massive_flag: bool
    p_star: float
    threshold: float
    skipped: bool = False


@dataclass(frozen=True)
class MassiveSummary:
    """Share of rooms flagged for massive cheating (one exam or one group)."""
    label: str
    num_rooms: int
    flagged_rooms: int
    proportion: float
    num_students: int = 0
    suspected_students: int = 0

    @property
    def prevalence(self) -> float:
        """Share of students suspected across the rooms."""
        if self.num_students == 0:
            return 0.0
        return self.suspected_students / self.num_students


# ==========================================
# MONTE-CARLO ESTIMATES
# ==========================================

@dataclass(frozen=True)
class RateEstimate:
    """Rejection proportion with its binomial standard error."""
    rejections: int
    trials: int

    @property
    def rate(self) -> float:
        return self.rejections / self.trials if self.trials else 0.0

    @property
    def se(self) -> float:
        if not self.trials:
            return 0.0
        p = self.rate
        return float(np.sqrt(p * (1.0 - p) / self.trials))

    @property
    def per_thousand(self) -> float:
        return 1000.0 * self.rate


@dataclass(frozen=True)
class PowerPoint:
    """Power at one copy level."""
    k: int
    proportion: float  # k / N
    estimate: RateEstimate


@dataclass(frozen=True)
class PowerCurve:
    """Power of one variant across copy levels."""
    variant: IndexVariant
    points: Tuple[PowerPoint, ...]

    def rate_at(self, k: int) -> float:
        for point in self.points:
            if point.k == k:
                return point.estimate.rate
        raise KeyError(k)


# ==========================================
# RUN MANIFEST
# ==========================================

@dataclass
class RunManifest:
    """Provenance record written next to every CLI output."""
    command: str
    argv: List[str]
    flags: Mapping[str, object]
    seed: Optional[int]
    input_fingerprints: Dict[str, str] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    version: str = ""
    started_at: str = ""
    finished_at: str = ""
    status: str = "running"  # running, complete, failed
    error: str = ""
