"""
Synthetic exam scenarios.

A scenario fixes the size of a synthetic exam (questions, options, students,
rooms). Item parameters are drawn at random from the run seed and answers
are generated independently per student from the nominal response model,
so every pair of students is a true null pair.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from scipy.special import softmax

from ..errors import DomainError
from ..models.nominal import NominalModel
from ..state_model import ExamDesign, ResponseMatrix, StudentRecord
from .rng import ABILITIES, SYNTHETIC, stream

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scenario:
    """Size of a synthetic exam."""
    name: str
    description: str
    num_items: int
    num_options: int
    num_students: int
    num_rooms: int

    def __post_init__(self):
        if self.num_items < 1:
            raise DomainError("scenario needs at least one item")
        if not 2 <= self.num_options <= 26:
            raise DomainError(f"option count {self.num_options} outside [2, 26]")
        if self.num_students < 2:
            raise DomainError("scenario needs at least 2 students")
        if not 1 <= self.num_rooms <= self.num_students:
            raise DomainError(f"room count {self.num_rooms} outside [1, {self.num_students}]")

    @property
    def spec(self) -> str:
        """The ``nrm:...`` string that rebuilds this scenario."""
        return (f"nrm:items={self.num_items},n={self.num_options},"
                f"students={self.num_students},rooms={self.num_rooms}")


SCENARIOS: Dict[str, Scenario] = {
    "desk": Scenario(
        name="desk",
        description="Desk-scale size and power study: 2000 students in 20 rooms, 48 items",
        num_items=48, num_options=4, num_students=2000, num_rooms=20,
    ),
    "recovery": Scenario(
        name="recovery",
        description="Parameter recovery check: 1000 students, 30 items",
        num_items=30, num_options=4, num_students=1000, num_rooms=10,
    ),
    "small": Scenario(
        name="small",
        description="Quick smoke run",
        num_items=20, num_options=4, num_students=300, num_rooms=6,
    ),
}


def get_scenario(name: str) -> Scenario:
    """Preset by name."""
    try:
        return SCENARIOS[name]
    except KeyError:
        raise DomainError(f"unknown scenario {name!r}; choose from {', '.join(list_scenarios())}") from None


def list_scenarios() -> List[str]:
    return list(SCENARIOS.keys())


_SPEC_FIELDS = {"items": "num_items", "n": "num_options", "students": "num_students", "rooms": "num_rooms"}


def parse_synthetic_spec(text: str) -> Scenario:
    """Parse ``desk`` or ``nrm:items=30,n=4,students=2000[,rooms=20]``.

    Without ``rooms`` the students are split into rooms of about 100.
    """
    text = text.strip()
    if text in SCENARIOS:
        return SCENARIOS[text]
    family, _, body = text.partition(":")
    if family != "nrm" or not body:
        raise DomainError(f"synthetic spec must look like 'nrm:items=30,n=4,students=2000', got {text!r}")
    values = {}
    for part in body.split(","):
        key, sep, raw = part.partition("=")
        key = key.strip()
        if not sep or key not in _SPEC_FIELDS:
            raise DomainError(f"synthetic spec: unknown field {part!r}")
        try:
            values[_SPEC_FIELDS[key]] = int(raw)
        except ValueError:
            raise DomainError(f"synthetic spec: {key} must be an integer, got {raw!r}") from None
    missing = {"num_items", "num_options", "num_students"} - set(values)
    if missing:
        raise DomainError(f"synthetic spec: missing {', '.join(sorted(missing))}")
    values.setdefault("num_rooms", max(2, values["num_students"] // 100))
    return Scenario(name=text, description="parsed from the command line", **values)


KEY_SLOPE_RANGE = (0.8, 1.6)
LURE_SLOPE_RATIO = 0.8      # lure slope = -ratio * key slope
DISTRACTOR_SLOPE_RATIO = 0.5  # other distractors within +-ratio * key slope


def random_nominal_model(num_items: int, num_options: int, rng: np.random.Generator,
                         quadrature_nodes: int = 21) -> NominalModel:
    """
    Plausible item parameters with ability-dependent distractors.

    The key carries the largest slope. One distractor per item is a lure
    for weak examinees (negative slope); the remaining distractors get
    slopes between the two, so which wrong answer a student picks depends
    on ability as it does in fitted nominal models. Item difficulty
    varies through the key intercept.
    """
    key = rng.integers(0, num_options, size=num_items)
    key_slope = rng.uniform(*KEY_SLOPE_RANGE, size=num_items)
    lure = (key + rng.integers(1, num_options, size=num_items)) % num_options
    slopes = DISTRACTOR_SLOPE_RATIO * key_slope[:, np.newaxis] * rng.uniform(-1.0, 1.0, size=(num_items, num_options))
    intercepts = rng.normal(0.0, 0.6, size=(num_items, num_options))
    rows = np.arange(num_items)
    slopes[rows, key] = key_slope
    slopes[rows, lure] = -LURE_SLOPE_RATIO * key_slope
    intercepts[rows, key] += 0.3 + 0.8 * rng.standard_normal(num_items)
    design = ExamDesign(num_options=num_options, key=tuple(int(k) for k in key))
    return NominalModel.from_parameters(design, intercepts, slopes, quadrature_nodes)


def draw_abilities(num_students: int, rng: np.random.Generator) -> np.ndarray:
    """Standard-normal abilities."""
    return rng.standard_normal(num_students)


def room_label(index: int) -> str:
    return f"room-{index + 1:03d}"


def student_label(index: int) -> str:
    return f"s{index + 1:05d}"


def generate_synthetic(model: NominalModel, num_students: int, num_rooms: int,
                       rng: np.random.Generator, abilities: Optional[np.ndarray] = None) -> ResponseMatrix:
    """Independent examinees answering every item; rooms assigned round-robin."""
    if num_students < 1:
        raise DomainError("num_students must be >= 1")
    if num_rooms < 1:
        raise DomainError("num_rooms must be >= 1")
    thetas = draw_abilities(num_students, rng) if abilities is None else np.asarray(abilities, dtype=float)
    if thetas.shape != (num_students,):
        raise DomainError(f"expected {num_students} abilities, got shape {thetas.shape}")

    logits = model.intercepts[np.newaxis] + model.slopes[np.newaxis] * thetas[:, np.newaxis, np.newaxis]
    cumulative = np.cumsum(softmax(logits, axis=2), axis=2)
    draws = rng.random((num_students, model.design.num_questions, 1))
    answers = np.minimum((draws > cumulative).sum(axis=2), model.design.num_options - 1)

    records = tuple(
        StudentRecord(student_id=student_label(j), room_id=room_label(j % num_rooms),
                      responses=tuple(answers[j].tolist()))
        for j in range(num_students)
    )
    logger.info("generated %d synthetic students in %d rooms", num_students, num_rooms)
    return ResponseMatrix(design=model.design, records=records)


def build_scenario(scenario: Scenario, seed: int):
    """(true model, matrix) for a scenario; both depend only on the seed."""
    model = random_nominal_model(scenario.num_items, scenario.num_options, stream(seed, SYNTHETIC, 0))
    abilities = draw_abilities(scenario.num_students, stream(seed, ABILITIES))
    matrix = generate_synthetic(model, scenario.num_students, scenario.num_rooms,
                                stream(seed, SYNTHETIC, 1), abilities=abilities)
    return model, matrix
