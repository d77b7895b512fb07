"""
Shared test fixtures for copy_forensics tests.
"""

import numpy as np
import pytest

from copy_forensics.models import fit_wesolowsky
from copy_forensics.models.nominal import NominalModel
from copy_forensics.sim.scenarios import generate_synthetic, random_nominal_model
from copy_forensics.state_model import ExamDesign, ResponseMatrix, StudentRecord, letters_to_options


def make_matrix(design, rows):
    """Build a ResponseMatrix from (student_id, room_id, answer letters) rows."""
    return ResponseMatrix(design=design, records=tuple(
        StudentRecord(student_id=sid, room_id=room, responses=letters_to_options(answers))
        for sid, room, answers in rows
    ))


@pytest.fixture
def small_design():
    """Four questions, four options, key ACBD."""
    return ExamDesign(num_options=4, key=(0, 2, 1, 3))


@pytest.fixture
def small_matrix(small_design):
    """Six students in two rooms, one of them with a blank."""
    return make_matrix(small_design, [
        ("s1", "r1", "ACBD"),
        ("s2", "r1", "ACBA"),
        ("s3", "r1", "A*BD"),
        ("s4", "r2", "BCBD"),
        ("s5", "r2", "DDDD"),
        ("s6", "r2", "ACCD"),
    ])


@pytest.fixture(scope="session")
def true_nominal_model() -> NominalModel:
    """Seeded random nominal model: 20 items, 4 options."""
    return random_nominal_model(20, 4, np.random.default_rng(20240611))


@pytest.fixture(scope="session")
def synthetic_matrix(true_nominal_model) -> ResponseMatrix:
    """400 independent examinees from the true model, 8 rooms."""
    return generate_synthetic(true_nominal_model, 400, 8, np.random.default_rng(7))


@pytest.fixture(scope="session")
def wesolowsky_model(synthetic_matrix):
    return fit_wesolowsky(synthetic_matrix)


@pytest.fixture
def matrix_factory():
    """make_matrix as a fixture, for tests that build their own rooms."""
    return make_matrix
