"""
Unit tests for file formats.

Tests response and key parsing, model files and the result tables.
"""

import json

import numpy as np
import pytest

from copy_forensics import dataio
from copy_forensics.errors import InputFormatError, ModelFileError
from copy_forensics.models import NominalModel, fit_wesolowsky
from copy_forensics.state_model import MISSING, ExamDesign, PowerCurve, PowerPoint, RateEstimate, RoomDetection
from copy_forensics.variants import get_variant


@pytest.fixture
def key_file(tmp_path):
    path = tmp_path / "key.txt"
    path.write_text("ACBD\n")
    return path


def write_csv(tmp_path, text, name="responses.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


@pytest.mark.unit
class TestParseKey:
    """Test answer key parsing."""

    def test_letters_to_options(self, key_file):
        """Verify ACBD maps to options (0, 2, 1, 3)."""
        design = dataio.parse_key(key_file, 4)
        assert design.key == (0, 2, 1, 3)
        assert design.key_letters == "ACBD"

    def test_option_out_of_range(self, tmp_path):
        """Verify ACBE with four options names the bad option."""
        path = write_csv(tmp_path, "ACBE\n", "key.txt")
        with pytest.raises(InputFormatError, match="option E out of range"):
            dataio.parse_key(path, 4)

    def test_empty_key(self, tmp_path):
        """Verify an empty key file raises."""
        path = write_csv(tmp_path, "", "key.txt")
        with pytest.raises(InputFormatError, match="empty key"):
            dataio.parse_key(path, 4)

    def test_missing_file(self, tmp_path):
        """Verify a missing key file raises OSError."""
        with pytest.raises(OSError):
            dataio.parse_key(tmp_path / "nope.txt", 4)


@pytest.mark.unit
class TestParseResponses:
    """Test response CSV parsing."""

    def test_plain_row(self, tmp_path, key_file):
        """Verify s1,r1,ACBD becomes (0, 2, 1, 3)."""
        design = dataio.parse_key(key_file, 4)
        matrix = dataio.parse_responses(write_csv(tmp_path, "s1,r1,ACBD\n"), design)
        assert matrix.records[0].responses == (0, 2, 1, 3)

    def test_blank_answer(self, tmp_path, key_file):
        """Verify * reads as MISSING."""
        design = dataio.parse_key(key_file, 4)
        matrix = dataio.parse_responses(write_csv(tmp_path, "s2,r1,A*BD\n"), design)
        assert matrix.records[0].responses == (0, MISSING, 1, 3)

    def test_header_is_optional(self, tmp_path, key_file):
        """Verify a header row is skipped."""
        design = dataio.parse_key(key_file, 4)
        matrix = dataio.parse_responses(write_csv(tmp_path, "student_id,room_id,answers\ns1,r1,ACBD\n"), design)
        assert matrix.student_ids == ("s1",)

    def test_short_row_names_row(self, tmp_path, key_file):
        """Verify a short third row reports 'row 3: expected 4 answers'."""
        design = dataio.parse_key(key_file, 4)
        path = write_csv(tmp_path, "s1,r1,ACBD\ns2,r1,ACBD\ns3,r1,ACB\n")
        with pytest.raises(InputFormatError, match="row 3: expected 4 answers"):
            dataio.parse_responses(path, design)

    def test_option_out_of_range(self, tmp_path, key_file):
        """Verify an answer beyond the option count names row and position."""
        design = dataio.parse_key(key_file, 4)
        with pytest.raises(InputFormatError, match="row 1: answer 2"):
            dataio.parse_responses(write_csv(tmp_path, "s1,r1,AEBD\n"), design)

    def test_duplicate_student(self, tmp_path, key_file):
        """Verify a repeated student_id raises."""
        design = dataio.parse_key(key_file, 4)
        with pytest.raises(InputFormatError, match="duplicate student_id"):
            dataio.parse_responses(write_csv(tmp_path, "s1,r1,ACBD\ns1,r2,ACBD\n"), design)

    def test_serialize_then_parse(self, tmp_path, small_matrix):
        """Verify written responses read back to the same matrix."""
        path = tmp_path / "out.csv"
        dataio.write_responses(small_matrix, path)
        again = dataio.parse_responses(path, small_matrix.design)
        assert again == small_matrix

    def test_ids_with_commas_and_quotes(self, tmp_path, small_design, matrix_factory):
        """Verify ids holding a comma or a quote are quoted on write and read back intact."""
        matrix = matrix_factory(small_design, [("Doe, J", "room \"A\"", "ACBD"), ("O'Neil", "room \"A\"", "AC*D")])
        path = tmp_path / "out.csv"
        dataio.write_responses(matrix, path)
        assert path.read_text().splitlines()[1] == '"Doe, J","room ""A""",ACBD'
        assert dataio.parse_responses(path, small_design) == matrix


@pytest.mark.unit
class TestModelFiles:
    """Test model persistence."""

    def test_nominal_round_trip(self, tmp_path, true_nominal_model):
        """Verify a saved nominal model loads with identical parameters."""
        path = tmp_path / "m.npz"
        dataio.save_model(true_nominal_model, path)
        loaded = dataio.load_model(path, true_nominal_model.design)
        assert isinstance(loaded, NominalModel)
        np.testing.assert_array_equal(loaded.intercepts, true_nominal_model.intercepts)
        np.testing.assert_array_equal(loaded.slopes, true_nominal_model.slopes)

    def test_wesolowsky_round_trip(self, tmp_path, small_matrix):
        """Verify a saved Wesolowsky model keeps its students and strengths."""
        model = fit_wesolowsky(small_matrix)
        path = tmp_path / "w.npz"
        dataio.save_model(model, path)
        loaded = dataio.load_model(path)
        assert loaded.student_ids == model.student_ids
        np.testing.assert_array_equal(loaded.strengths, model.strengths)

    def test_wrong_fingerprint(self, tmp_path, true_nominal_model):
        """Verify a model refuses another exam."""
        path = tmp_path / "m.npz"
        dataio.save_model(true_nominal_model, path)
        other = ExamDesign(num_options=4, key=(0,) * true_nominal_model.design.num_questions)
        with pytest.raises(ModelFileError, match="fingerprint mismatch"):
            dataio.load_model(path, other)

    def test_wrong_magic(self, tmp_path):
        """Verify a foreign npz archive is refused."""
        path = tmp_path / "bad.npz"
        meta = {"magic": "SOMETHING-ELSE", "format_version": 1}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta)), x=np.zeros(3))
        with pytest.raises(ModelFileError, match="magic"):
            dataio.load_model(path)

    def test_version_mismatch(self, tmp_path, true_nominal_model, monkeypatch):
        """Verify a different format version names expected and found."""
        path = tmp_path / "m.npz"
        monkeypatch.setattr(dataio, "MODEL_FORMAT_VERSION", 99)
        dataio.save_model(true_nominal_model, path)
        monkeypatch.setattr(dataio, "MODEL_FORMAT_VERSION", 1)
        with pytest.raises(ModelFileError, match="expected 1, found 99"):
            dataio.load_model(path)

    def test_truncated_file(self, tmp_path, true_nominal_model):
        """Verify a truncated file raises instead of returning a partial model."""
        path = tmp_path / "m.npz"
        dataio.save_model(true_nominal_model, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(ModelFileError):
            dataio.load_model(path)


@pytest.mark.unit
class TestResultTables:
    """Test result CSV writers and readers."""

    def test_pair_results_read_back(self, tmp_path):
        """Verify pair results survive a write and read."""
        from copy_forensics.state_model import PairResult

        variant = get_variant("gamma2")
        results = [PairResult("a", "b", "r1", variant, 7, 7.0, 1.25e-7, 10),
                   PairResult("b", "a", "r1", variant, 7, 7.0, 0.5, 10)]
        path = tmp_path / "pairs.csv"
        dataio.write_pair_results(results, path)
        back = dataio.read_pair_results(path)
        assert [(r.copier_id, r.source_id, r.p_value) for r in back] == [("a", "b", 1.25e-7), ("b", "a", 0.5)]
        assert back[0].variant == variant

    def test_pair_results_keep_n_scored(self, tmp_path):
        """Verify the scored-question count is written and read back."""
        from copy_forensics.state_model import PairResult

        result = PairResult("a", "b", "r1", get_variant("omega2s"), 3, 0.5, 0.25, 9)
        path = tmp_path / "pairs.csv"
        dataio.write_pair_results([result], path)
        back, = dataio.read_pair_results(path)
        assert back.n_scored == 9
        assert 0 <= back.matches <= back.n_scored

    def test_pair_results_matches_above_n_scored(self, tmp_path):
        """Verify a row with more matches than scored questions is refused."""
        path = write_csv(tmp_path, ",".join(dataio.PAIR_HEADER) + "\na,b,r1,omega2s,12,10,1.0,0.5\n")
        with pytest.raises(InputFormatError, match=r"outside \[0, n_scored=10\]"):
            dataio.read_pair_results(path)

    def test_pair_results_bad_p_value(self, tmp_path):
        """Verify p-values outside [0, 1] are refused on read."""
        path = write_csv(tmp_path, ",".join(dataio.PAIR_HEADER) + "\na,b,r1,omega2s,3,10,1.0,1.5\n")
        with pytest.raises(InputFormatError, match="row 1"):
            dataio.read_pair_results(path)

    def test_empty_pair_file(self, tmp_path):
        """Verify an empty results file reads as no results."""
        assert dataio.read_pair_results(write_csv(tmp_path, "")) == []

    def test_room_roster_read_back(self, tmp_path):
        """Verify the roster keeps skipped rooms and their eligible counts."""
        variant = get_variant("gamma1")
        path = tmp_path / "roster.csv"
        dataio.write_room_roster([RoomDetection("r1", variant, (), 3), RoomDetection("r2", variant, (), 1, skipped=True)],
                                 path)
        back = dataio.read_room_roster(path)
        assert [(d.room_id, d.variant, d.num_students, d.skipped) for d in back] == [
            ("r1", variant, 3, False), ("r2", variant, 1, True)]

    def test_room_roster_bad_flag(self, tmp_path):
        """Verify a skipped column other than true or false names the row."""
        path = write_csv(tmp_path, ",".join(dataio.ROSTER_HEADER) + "\nr1,gamma1,3,maybe\n")
        with pytest.raises(InputFormatError, match="row 1"):
            dataio.read_room_roster(path)

    def test_power_csv_columns(self, tmp_path):
        """Verify the power table carries k and the copied share."""
        curve = PowerCurve(get_variant("omega2s"), (PowerPoint(5, 0.25, RateEstimate(30, 100)),))
        path = tmp_path / "power.csv"
        dataio.write_power_curves([curve], path)
        lines = path.read_text().splitlines()
        assert lines[0] == "variant,k,power,se,proportion"
        assert lines[1].startswith("omega2s,5,0.3,")

    def test_room_groups(self, tmp_path):
        """Verify room_id,group rows with a header."""
        path = write_csv(tmp_path, "room_id,group\nr1,remote\nr2,proctored\n")
        assert dataio.read_room_groups(path) == {"r1": "remote", "r2": "proctored"}
