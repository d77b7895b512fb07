"""
Shared pieces of the behavioral response models.

A response model turns a student's record into an (questions, options)
table of answer probabilities. Detection and simulation only ever see that
table, computed once per student and frozen in a ProbabilityTable.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Mapping, Protocol, Tuple

import numpy as np

from ..errors import IneligibleStudentError
from ..state_model import ExamDesign, ResponseMatrix, StudentRecord


class ResponseModel(Protocol):
    """What detection needs from a fitted model."""

    kind: str
    design: ExamDesign

    def option_probabilities(self, record: StudentRecord) -> np.ndarray:
        """(questions, options) probabilities for this student."""

    def probability_table(self, matrix: ResponseMatrix) -> "ProbabilityTable":
        """Probabilities for every student of the matrix."""

    def to_arrays(self) -> Tuple[Dict[str, np.ndarray], Dict[str, object]]:
        """Arrays and JSON-able metadata for persistence."""


@dataclass(frozen=True, eq=False)
class ProbabilityTable:
    """Frozen per-student option probabilities, shape (students, questions, options)."""
    design: ExamDesign
    student_ids: Tuple[str, ...]
    probabilities: np.ndarray
    eligible: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "student_ids", tuple(self.student_ids))
        probs = np.asarray(self.probabilities, dtype=float)
        probs.setflags(write=False)
        object.__setattr__(self, "probabilities", probs)
        eligible = np.asarray(self.eligible, dtype=bool)
        eligible.setflags(write=False)
        object.__setattr__(self, "eligible", eligible)

    @cached_property
    def index_of(self) -> Mapping[str, int]:
        return {sid: i for i, sid in enumerate(self.student_ids)}

    def is_eligible(self, student_id: str) -> bool:
        index = self.index_of.get(student_id)
        return index is not None and bool(self.eligible[index])

    def for_student(self, student_id: str) -> np.ndarray:
        index = self.index_of.get(student_id)
        if index is None:
            raise IneligibleStudentError(f"student {student_id!r} is not covered by the model")
        if not self.eligible[index]:
            raise IneligibleStudentError(f"student {student_id!r} has no usable model parameters")
        return self.probabilities[index]


def check_design(model_design: ExamDesign, matrix: ResponseMatrix):
    """Refuse to apply a model to a different exam."""
    from ..errors import ModelFileError

    if model_design.fingerprint != matrix.design.fingerprint:
        raise ModelFileError(
            "model was fitted on a different exam "
            f"(model {model_design.fingerprint[:12]}, data {matrix.design.fingerprint[:12]})"
        )
