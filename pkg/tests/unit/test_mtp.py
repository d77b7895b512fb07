"""
Unit tests for per-room multiple testing.

Tests Benjamini-Hochberg and Bonferroni rejection, room reports, the
massive-cheating summary and group summaries.
"""

import numpy as np
import pytest

from copy_forensics.errors import DomainError
from copy_forensics.indices import detect_room
from copy_forensics.mtp import (
    bh_reject,
    bonferroni_reject,
    group_summary,
    massive_summary,
    report_rooms,
    room_report,
)
from copy_forensics.sim.scenarios import generate_synthetic
from copy_forensics.state_model import PairResult, RoomDetection, RoomReport
from copy_forensics.variants import get_variant

VARIANT = get_variant("omega2s")


def pair(copier, source, p, room="r1"):
    return PairResult(copier_id=copier, source_id=source, room_id=room, variant=VARIANT,
                      matches=0, statistic=0.0, p_value=p, n_scored=10)


def room_results(students, rejected, room="r1"):
    """Every ordered pair of the room; pairs in ``rejected`` get p = 1e-9."""
    return [pair(c, s, 1e-9 if (c, s) in rejected else 0.9, room)
            for c in students for s in students if c != s]


def report(room, flagged, students=10, skipped=False):
    return RoomReport(room_id=room, variant=VARIANT, num_students=students, num_tests=students * (students - 1),
                      rejected_pairs=(), suspected_students=frozenset(f"x{i}" for i in range(flagged * 7)),
                      suspected_share=0.7 if flagged else 0.0, massive_flag=bool(flagged),
                      p_star=0.01, threshold=0.6, skipped=skipped)


@pytest.mark.unit
class TestBhReject:
    """Test the Benjamini-Hochberg step-up procedure."""

    def test_hand_example(self):
        """Verify p = (0.001, 0.005, 0.02, 0.9) at p* = 0.05 rejects the first three."""
        assert bh_reject([0.001, 0.005, 0.02, 0.9], 0.05) == frozenset({0, 1, 2})

    def test_all_ones_reject_nothing(self):
        """Verify p = 1 everywhere rejects nothing."""
        assert bh_reject([1.0] * 20, 0.05) == frozenset()

    def test_single_hypothesis(self):
        """Verify one p <= p* is rejected."""
        assert bh_reject([0.01], 0.05) == frozenset({0})

    def test_empty_input(self):
        """Verify no p-values give no rejections."""
        assert bh_reject([], 0.05) == frozenset()

    def test_step_up_rescues_larger_p(self):
        """Verify a p above its own threshold is rejected when a later one passes."""
        # thresholds 0.0125, 0.025, 0.0375, 0.05: P(3) = 0.03 passes, so P(2) = 0.026 is rejected too
        assert bh_reject([0.02, 0.026, 0.03, 0.6], 0.05) == frozenset({0, 1, 2})

    def test_order_does_not_matter(self):
        """Verify rejections follow the p-values, not their positions."""
        assert bh_reject([0.9, 0.02, 0.001, 0.005], 0.05) == frozenset({1, 2, 3})

    @pytest.mark.parametrize("bad", [-0.1, 1.5, float("nan")])
    def test_invalid_p_value(self, bad):
        """Verify p-values outside [0, 1] raise."""
        with pytest.raises(DomainError):
            bh_reject([0.1, bad], 0.05)

    def test_invalid_p_star(self):
        """Verify p* must lie in (0, 1)."""
        with pytest.raises(DomainError):
            bh_reject([0.1], 0.0)


@pytest.mark.unit
class TestBonferroni:
    """Test the Bonferroni alternative."""

    def test_divides_by_test_count(self):
        """Verify only p <= p*/m is rejected."""
        assert bonferroni_reject([0.001, 0.005, 0.02, 0.9], 0.05) == frozenset({0, 1})


@pytest.mark.unit
class TestRoomReport:
    """Test per-room reports."""

    students = [f"s{i}" for i in range(10)]

    def test_no_rejections(self):
        """Verify a clean room has share 0 and no flag."""
        result = room_report(room_results(self.students, set()), "r1", 10)
        assert result.suspected_share == 0.0
        assert not result.massive_flag
        assert result.num_tests == 90

    def test_every_pair_rejected(self):
        """Verify a fully rejected room has share 1 and is flagged."""
        everything = {(c, s) for c in self.students for s in self.students if c != s}
        result = room_report(room_results(self.students, everything), "r1", 10)
        assert result.suspected_share == 1.0
        assert result.massive_flag

    def test_seven_of_ten_copiers(self):
        """Verify 7 suspected copiers of 10 gives share 0.7 and a flag at 0.6."""
        rejected = {(f"s{i}", "s9") for i in range(7)}
        result = room_report(room_results(self.students, rejected), "r1", 10, threshold=0.6)
        assert result.suspected_share == pytest.approx(0.7)
        assert result.massive_flag
        assert result.suspected_students == frozenset(f"s{i}" for i in range(7))

    def test_threshold_above_one_never_flags(self):
        """Verify threshold 1.01 flags nothing."""
        everything = {(c, s) for c in self.students for s in self.students if c != s}
        result = room_report(room_results(self.students, everything), "r1", 10, threshold=1.01)
        assert not result.massive_flag

    def test_either_role_attribution(self):
        """Verify attribution 'either' also counts sources."""
        rejected = {("s0", "s9")}
        copier_only = room_report(room_results(self.students, rejected), "r1", 10)
        either = room_report(room_results(self.students, rejected), "r1", 10, attribution="either")
        assert copier_only.suspected_students == frozenset({"s0"})
        assert either.suspected_students == frozenset({"s0", "s9"})

    def test_empty_room_is_skipped(self):
        """Verify an empty room gives a skipped, unflagged report."""
        result = room_report([], "r9", 0)
        assert result.skipped
        assert not result.massive_flag

    def test_mixed_rooms_rejected(self):
        """Verify results from another room raise."""
        with pytest.raises(DomainError):
            room_report([pair("a", "b", 0.5, "r1"), pair("b", "a", 0.5, "r2")], "r1", 2)

    def test_report_rooms_keeps_order(self):
        """Verify report_rooms returns rooms in input order for any thread count."""
        detections = [
            RoomDetection(f"r{i}", VARIANT, tuple(room_results(["a", "b", "c"], set(), f"r{i}")), 3)
            for i in range(5)
        ]
        serial = report_rooms(detections)
        parallel = report_rooms(detections, threads=3)
        assert [r.room_id for r in serial] == [f"r{i}" for i in range(5)]
        assert serial == parallel


@pytest.mark.unit
class TestMassiveSummary:
    """Test the share of flagged rooms."""

    def test_none_flagged(self):
        """Verify no flagged rooms gives 0."""
        assert massive_summary([report("a", 0), report("b", 0)]).proportion == 0.0

    def test_all_flagged(self):
        """Verify all flagged gives 1."""
        assert massive_summary([report("a", 1), report("b", 1)]).proportion == 1.0

    def test_three_of_twelve(self):
        """Verify 3 of 12 flagged rooms gives 0.25."""
        reports = [report(f"r{i}", 1 if i < 3 else 0) for i in range(12)]
        assert massive_summary(reports).proportion == pytest.approx(0.25)

    def test_skipped_rooms_not_counted(self):
        """Verify skipped rooms leave the denominator."""
        reports = [report("a", 1), report("b", 0, students=1, skipped=True)]
        summary = massive_summary(reports)
        assert summary.num_rooms == 1
        assert summary.proportion == 1.0

    def test_prevalence(self):
        """Verify the suspected-student share across rooms."""
        summary = massive_summary([report("a", 1), report("b", 0)])
        assert summary.prevalence == pytest.approx(7 / 20)


@pytest.mark.unit
class TestGroupSummary:
    """Test summaries per room group."""

    def test_groups_and_unassigned(self):
        """Verify rooms are summarized per group, unknown rooms as 'unassigned'."""
        reports = [report("a", 1), report("b", 0), report("c", 1), report("d", 0)]
        summaries = group_summary(reports, {"a": "remote", "b": "remote", "c": "proctored"})
        by_label = {s.label: s for s in summaries}
        assert [s.label for s in summaries] == ["proctored", "remote", "unassigned"]
        assert by_label["remote"].proportion == pytest.approx(0.5)
        assert by_label["proctored"].flagged_rooms == 1
        assert by_label["unassigned"].num_rooms == 1


@pytest.mark.unit
@pytest.mark.slow
class TestFalseDiscoveryControl:
    """Test BH error control on rooms where nobody copied."""

    def test_all_null_rooms(self, true_nominal_model):
        """Verify the mean false-discovery proportion over 500 null rooms of 10 stays within p* + 3 se."""
        p_star, rooms = 0.05, 500
        matrix = generate_synthetic(true_nominal_model, 10 * rooms, rooms, np.random.default_rng(2024))
        table = true_nominal_model.probability_table(matrix)
        fdp = []
        for room_id, records in matrix.rooms().items():
            detection = detect_room(records, get_variant("omega2"), table, alpha=p_star, room_id=room_id)
            result = room_report(detection.results, room_id, detection.num_students, p_star=p_star)
            assert result.num_tests == 90
            # nobody copied, so any rejection makes the proportion 1
            fdp.append(1.0 if result.rejected_pairs else 0.0)
        assert np.mean(fdp) <= p_star + 3 * np.sqrt(p_star * (1 - p_star) / rooms)
