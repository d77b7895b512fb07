"""
Wesolowsky response model (the gamma indices).

The probability that student j answers item i correctly is

    p_i = (1 - (1 - r_i) ** a_j) ** (1 / a_j)

with r_i the item's proportion correct and a_j a per-student strength
solved from mean_i p_i(a_j) = c_j, the student's own proportion correct.
Incorrect answers split over the distractors in the proportions observed
among all incorrect answers to the item.
"""

import logging
from dataclasses import dataclass
from typing import ClassVar, Dict, Tuple

import numpy as np
from scipy.optimize import brentq

from ..errors import DomainError, IneligibleStudentError, InsufficientDataError
from ..state_model import ExamDesign, ResponseMatrix, StudentRecord
from .base import ProbabilityTable, check_design

logger = logging.getLogger(__name__)

EPSILON = 1e-6
LOG_A_BOUNDS = (np.log(1e-3), np.log(1e3))
ROOT_XTOL = 1e-13
RESIDUAL_TOL = 1e-8


def correct_probability(rates: np.ndarray, a: float) -> np.ndarray:
    """p_i(a) computed in log space so tiny a and r near 1 stay finite."""
    rates = np.asarray(rates, dtype=float)
    inner = -np.expm1(a * np.log1p(-rates))  # 1 - (1 - r) ** a
    return np.exp(np.log(inner) / a)


@dataclass(frozen=True, eq=False)
class WesolowskyModel:
    """Fitted Wesolowsky model for one exam."""
    design: ExamDesign
    correct_rates: np.ndarray       # r_i, (questions,)
    distractor_shares: np.ndarray   # q_iv, (questions, options), zero at the key
    student_ids: Tuple[str, ...]
    strengths: np.ndarray           # a_j, NaN when undefined
    proportions_correct: np.ndarray  # c_j (clamped)
    clamped: np.ndarray             # a_j hit the bracket boundary
    kind: ClassVar[str] = "wesolowsky"

    def __post_init__(self):
        object.__setattr__(self, "student_ids", tuple(self.student_ids))
        for name in ("correct_rates", "distractor_shares", "strengths",
                     "proportions_correct", "clamped"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "_index", {sid: i for i, sid in enumerate(self.student_ids)})

    @property
    def fingerprint(self) -> str:
        return self.design.fingerprint

    def student_index(self, student_id: str) -> int:
        try:
            return self._index[student_id]
        except KeyError:
            raise IneligibleStudentError(f"student {student_id!r} is not covered by the model") from None

    def strength(self, student_id: str) -> float:
        a = float(self.strengths[self.student_index(student_id)])
        if not np.isfinite(a):
            raise IneligibleStudentError(f"student {student_id!r} answered no questions")
        return a

    def probabilities_for_strength(self, a: float) -> np.ndarray:
        """(questions, options) table for a student with strength a."""
        p = correct_probability(self.correct_rates, a)
        table = (1.0 - p)[:, np.newaxis] * self.distractor_shares
        rows = np.arange(self.design.num_questions)
        table[rows, self.design.key_array] = p
        return table

    def option_probabilities(self, record: StudentRecord) -> np.ndarray:
        return self.probabilities_for_strength(self.strength(record.student_id))

    def probability_table(self, matrix: ResponseMatrix) -> ProbabilityTable:
        check_design(self.design, matrix)
        n_items, n_options = self.design.num_questions, self.design.num_options
        probs = np.zeros((len(matrix), n_items, n_options))
        eligible = np.zeros(len(matrix), dtype=bool)
        for row, record in enumerate(matrix.records):
            index = self._index.get(record.student_id)
            if index is None or not np.isfinite(self.strengths[index]):
                continue
            probs[row] = self.probabilities_for_strength(float(self.strengths[index]))
            eligible[row] = True
        return ProbabilityTable(matrix.design, matrix.student_ids, probs, eligible)

    def to_arrays(self):
        arrays = {
            "correct_rates": self.correct_rates,
            "distractor_shares": self.distractor_shares,
            "strengths": self.strengths,
            "proportions_correct": self.proportions_correct,
            "clamped": self.clamped,
            "student_ids": np.array(self.student_ids, dtype=str),
        }
        return arrays, {}

    @classmethod
    def from_arrays(cls, design: ExamDesign, arrays: Dict[str, np.ndarray], meta: Dict[str, object]):
        return cls(
            design=design,
            correct_rates=arrays["correct_rates"],
            distractor_shares=arrays["distractor_shares"],
            student_ids=tuple(str(s) for s in arrays["student_ids"]),
            strengths=arrays["strengths"],
            proportions_correct=arrays["proportions_correct"],
            clamped=arrays["clamped"].astype(bool),
        )


def solve_strength(rates: np.ndarray, target: float) -> Tuple[float, bool]:
    """Solve mean(p_i(a)) = target for a; returns (a, clamped).

    The mean is strictly increasing in a, so a bracketed root search on
    log a is safe. Targets outside the bracket's range clamp to its ends.
    """
    def gap(log_a: float) -> float:
        return float(np.mean(correct_probability(rates, np.exp(log_a)))) - target

    lo, hi = LOG_A_BOUNDS
    gap_lo, gap_hi = gap(lo), gap(hi)
    if gap_lo >= 0.0:
        return float(np.exp(lo)), gap_lo > RESIDUAL_TOL
    if gap_hi <= 0.0:
        return float(np.exp(hi)), -gap_hi > RESIDUAL_TOL
    log_a = brentq(gap, lo, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200)
    return float(np.exp(log_a)), False


def wes_prob(model: WesolowskyModel, student: str, item: int, option: int) -> float:
    """Probability that the student picks the option on the item."""
    n_items, n_options = model.design.num_questions, model.design.num_options
    if not 0 <= item < n_items:
        raise DomainError(f"item {item} outside [0, {n_items})")
    if not 0 <= option < n_options:
        raise DomainError(f"option {option} outside [0, {n_options})")
    a = model.strength(student)
    p = float(correct_probability(model.correct_rates[item:item + 1], a)[0])
    if option == model.design.key[item]:
        return p
    return (1.0 - p) * float(model.distractor_shares[item, option])


def fit_wesolowsky(matrix: ResponseMatrix, design: ExamDesign = None) -> WesolowskyModel:
    """Estimate r_i, q_iv and a_j from observed proportions."""
    design = design or matrix.design
    if design.fingerprint != matrix.design.fingerprint:
        raise DomainError("design does not match the response matrix")
    if len(matrix) < 2:
        raise InsufficientDataError(f"need at least 2 students, got {len(matrix)}")

    answers = matrix.answers
    answered = matrix.answered_mask()
    correct = matrix.correct_mask()
    n_items, n_options = design.num_questions, design.num_options

    answered_per_item = answered.sum(axis=0)
    correct_per_item = correct.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        rates = np.where(answered_per_item > 0, correct_per_item / np.maximum(answered_per_item, 1), 0.5)
    rates = np.clip(rates, EPSILON, 1.0 - EPSILON)

    shares = np.zeros((n_items, n_options))
    for item in range(n_items):
        key = design.key[item]
        column = answers[:, item]
        wrong = column[(column >= 0) & (column != key)]
        counts = np.bincount(wrong, minlength=n_options).astype(float)
        counts[key] = 0.0
        if counts.sum() > 0:
            shares[item] = counts / counts.sum()
        else:
            # no incorrect answers observed: spread evenly over distractors
            shares[item] = 1.0 / (n_options - 1)
            shares[item, key] = 0.0

    n_students = len(matrix)
    strengths = np.full(n_students, np.nan)
    proportions = np.full(n_students, np.nan)
    clamped = np.zeros(n_students, dtype=bool)
    for row in range(n_students):
        mask = answered[row]
        n_answered = int(mask.sum())
        if n_answered == 0:
            logger.warning("student %s answered no questions; excluded", matrix.student_ids[row])
            continue
        c = float(np.clip(correct[row].sum() / n_answered, EPSILON, 1.0 - EPSILON))
        proportions[row] = c
        strengths[row], clamped[row] = solve_strength(rates[mask], c)
        if clamped[row]:
            logger.warning("student %s: strength clamped to %.6g", matrix.student_ids[row], strengths[row])

    logger.info(
        "fitted Wesolowsky model: %d students, %d undefined, %d clamped",
        n_students, int(np.isnan(strengths).sum()), int(clamped.sum()),
    )
    return WesolowskyModel(
        design=design,
        correct_rates=rates,
        distractor_shares=shares,
        student_ids=matrix.student_ids,
        strengths=strengths,
        proportions_correct=proportions,
        clamped=clamped,
    )
