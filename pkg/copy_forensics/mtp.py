"""
Multiple testing per examination room and massive-cheating flags.

A room of n students yields n(n-1) ordered-pair p-values. They are
corrected together (Benjamini-Hochberg by default, Bonferroni on request);
a student is suspected when they are the copier in at least one rejected
pair, and the room is flagged when the suspected share exceeds the
threshold.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence

import numpy as np
from statsmodels.stats.multitest import multipletests

from .errors import DomainError
from .state_model import MassiveSummary, PairResult, RoomDetection, RoomReport

logger = logging.getLogger(__name__)

DEFAULT_P_STAR = 0.01
DEFAULT_THRESHOLD = 0.6

_METHODS = {"bh": "fdr_bh", "bonferroni": "bonferroni"}


def _validated(p_values: Sequence[float], p_star: float) -> np.ndarray:
    if not 0.0 < p_star < 1.0:
        raise DomainError(f"p_star must be in (0, 1), got {p_star}")
    p = np.asarray(p_values, dtype=float).ravel()
    bad = np.nonzero(~np.isfinite(p) | (p < 0.0) | (p > 1.0))[0]
    if bad.size:
        raise DomainError(f"p-value {p[bad[0]]!r} at position {int(bad[0])} outside [0, 1]")
    return p


def reject(p_values: Sequence[float], p_star: float, correction: str = "bh") -> FrozenSet[int]:
    """Indices of the hypotheses rejected by the chosen correction."""
    if correction not in _METHODS:
        raise DomainError(f"unknown correction {correction!r}")
    p = _validated(p_values, p_star)
    if p.size == 0:
        return frozenset()
    rejected, _, _, _ = multipletests(p, alpha=p_star, method=_METHODS[correction])
    return frozenset(int(i) for i in np.nonzero(rejected)[0])


def bh_reject(p_values: Sequence[float], p_star: float) -> FrozenSet[int]:
    """Benjamini-Hochberg step-up: reject the k smallest, k the largest i with P_(i) <= i p*/m."""
    return reject(p_values, p_star, "bh")


def bonferroni_reject(p_values: Sequence[float], p_star: float) -> FrozenSet[int]:
    """Reject every hypothesis with p <= p*/m."""
    return reject(p_values, p_star, "bonferroni")


def room_report(results: Sequence[PairResult], room_id: str, num_students: int,
                p_star: float = DEFAULT_P_STAR, threshold: float = DEFAULT_THRESHOLD,
                attribution: str = "copier", correction: str = "bh") -> RoomReport:
    """Correct one room's pair p-values and decide the massive-cheating flag."""
    if attribution not in ("copier", "either"):
        raise DomainError(f"attribution must be 'copier' or 'either', got {attribution!r}")
    results = list(results)
    variants = {r.variant for r in results}
    if len(variants) > 1:
        raise DomainError(f"room {room_id}: results mix variants {sorted(v.name for v in variants)}")
    foreign = {r.room_id for r in results} - {room_id}
    if foreign:
        raise DomainError(f"room {room_id}: results from other rooms {sorted(foreign)}")
    variant = next(iter(variants)) if variants else None

    if not results or num_students < 2:
        logger.warning("room %s skipped: no pair results", room_id)
        return RoomReport(
            room_id=room_id, variant=variant, num_students=num_students, num_tests=0,
            rejected_pairs=(), suspected_students=frozenset(), suspected_share=0.0,
            massive_flag=False, p_star=p_star, threshold=threshold, skipped=True,
        )

    rejected = sorted(reject([r.p_value for r in results], p_star, correction))
    rejected_pairs = tuple((results[i].copier_id, results[i].source_id) for i in rejected)
    suspected = {copier for copier, _ in rejected_pairs}
    if attribution == "either":
        suspected |= {source for _, source in rejected_pairs}
    share = len(suspected) / num_students
    return RoomReport(
        room_id=room_id,
        variant=variant,
        num_students=num_students,
        num_tests=len(results),
        rejected_pairs=rejected_pairs,
        suspected_students=frozenset(suspected),
        suspected_share=share,
        massive_flag=share > threshold,
        p_star=p_star,
        threshold=threshold,
    )


def report_rooms(detections: Iterable[RoomDetection], p_star: float = DEFAULT_P_STAR,
                 threshold: float = DEFAULT_THRESHOLD, attribution: str = "copier",
                 correction: str = "bh", threads: int = 1) -> List[RoomReport]:
    """room_report for many rooms; rooms are independent, order is preserved."""
    detections = list(detections)

    def run(detection: RoomDetection) -> RoomReport:
        return room_report(detection.results, detection.room_id, detection.num_students,
                           p_star, threshold, attribution, correction)

    if threads > 1 and len(detections) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, detections))
    return [run(d) for d in detections]


def massive_summary(reports: Iterable[RoomReport], label: str = "all") -> MassiveSummary:
    """Proportion of rooms flagged; skipped rooms are not counted."""
    counted = [r for r in reports if not r.skipped]
    flagged = sum(1 for r in counted if r.massive_flag)
    return MassiveSummary(
        label=label,
        num_rooms=len(counted),
        flagged_rooms=flagged,
        proportion=flagged / len(counted) if counted else 0.0,
        num_students=sum(r.num_students for r in counted),
        suspected_students=sum(len(r.suspected_students) for r in counted),
    )


def group_summary(reports: Iterable[RoomReport], room_groups: Mapping[str, str],
                  default_group: Optional[str] = "unassigned") -> List[MassiveSummary]:
    """massive_summary per group of rooms (e.g. proctoring regime), sorted by group."""
    grouped: Dict[str, List[RoomReport]] = {}
    for report in reports:
        group = room_groups.get(report.room_id, default_group)
        if group is None:
            continue
        grouped.setdefault(group, []).append(report)
    return [massive_summary(grouped[g], label=g) for g in sorted(grouped)]
