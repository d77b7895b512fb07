"""
Copy indices for ordered student pairs.

For a pair (copier c, source s) each scored question contributes a
Bernoulli match with probability

    unconditional:  pi_i = sum_v P_c(i, v) * P_s(i, v)
    conditional:    pi_i = P_c(i, answer of s on i)

Questions where either student left a blank are not scored: they add
nothing to the match count and nothing to the profile. The p-value is the
exact Poisson-binomial upper tail or its normal approximation.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import norm

from . import pbd
from .errors import DomainError, InsufficientDataError
from .models.base import ProbabilityTable, ResponseModel
from .state_model import MISSING, PairResult, RoomDetection, StudentRecord
from .variants import Family, IndexVariant

logger = logging.getLogger(__name__)

ModelLike = Union[ResponseModel, ProbabilityTable]

PAIR_CHUNK = 4096


def count_matches(resp_c, resp_s) -> int:
    """Number of questions both answered with the same option."""
    resp_c = np.asarray(resp_c)
    resp_s = np.asarray(resp_s)
    if resp_c.shape != resp_s.shape:
        raise DomainError(f"answer vectors differ in length ({resp_c.size} vs {resp_s.size})")
    return int(np.sum((resp_c == resp_s) & (resp_c != MISSING) & (resp_s != MISSING)))


def scored_questions(resp_c, resp_s) -> np.ndarray:
    """Boolean mask of questions answered by both students."""
    return (np.asarray(resp_c) != MISSING) & (np.asarray(resp_s) != MISSING)


def match_probabilities(variant: IndexVariant, probs_c: np.ndarray, probs_s: np.ndarray,
                        answers_s: np.ndarray) -> np.ndarray:
    """Unclamped pi_i for every question (blanks of s read as option 0)."""
    if variant.is_conditional:
        picked = np.where(np.asarray(answers_s) == MISSING, 0, answers_s).astype(np.intp)
        return np.take_along_axis(probs_c, picked[..., np.newaxis], axis=-1)[..., 0]
    return np.sum(probs_c * probs_s, axis=-1)


def match_profile(variant: IndexVariant, probs_c: np.ndarray, probs_s: np.ndarray,
                  answers_c, answers_s) -> pbd.MatchProfile:
    """Profile over the questions both students answered."""
    scored = scored_questions(answers_c, answers_s)
    if not scored.any():
        raise InsufficientDataError("no overlapping answered questions")
    pis = match_probabilities(variant, probs_c, probs_s, np.asarray(answers_s))
    return pbd.MatchProfile(pis[scored])


def exact_p(profile: pbd.MatchProfile, m: int) -> float:
    """P(M >= m) under the null."""
    if not 0 <= m <= profile.num_questions:
        raise DomainError(f"match count {m} outside [0, {profile.num_questions}]")
    return pbd.upper_tail(profile, m)


def standardized_p(profile: pbd.MatchProfile, m: int,
                   continuity_correction: bool = False) -> Tuple[float, float]:
    """(z, one-sided normal p) for the match count m."""
    if not 0 <= m <= profile.num_questions:
        raise DomainError(f"match count {m} outside [0, {profile.num_questions}]")
    shift = 0.5 if continuity_correction else 0.0
    z = (m - shift - profile.mean) / np.sqrt(profile.variance)
    return float(z), float(norm.sf(z))


def _probabilities(model: ModelLike, record: StudentRecord) -> np.ndarray:
    if isinstance(model, ProbabilityTable):
        return model.for_student(record.student_id)
    return model.option_probabilities(record)


def detect_pair(copier: StudentRecord, source: StudentRecord, variant: IndexVariant, model: ModelLike,
                alpha: Optional[float] = None, continuity_correction: bool = False) -> PairResult:
    """Test whether ``copier`` copied from ``source``."""
    probs_c = _probabilities(model, copier)
    probs_s = _probabilities(model, source)
    profile = match_profile(variant, probs_c, probs_s, copier.answers, source.answers)
    m = count_matches(copier.answers, source.answers)
    if variant.is_standardized:
        statistic, p_value = standardized_p(profile, m, continuity_correction)
    else:
        statistic, p_value = float(m), exact_p(profile, m)
    return PairResult(
        copier_id=copier.student_id,
        source_id=source.student_id,
        room_id=copier.room_id,
        variant=variant,
        matches=m,
        statistic=statistic,
        p_value=p_value,
        n_scored=profile.num_questions,
        flagged=alpha is not None and p_value <= alpha,
    )


@dataclass(frozen=True)
class PairScores:
    """Vectorized outcome for a batch of ordered pairs."""
    matches: np.ndarray
    statistics: np.ndarray
    p_values: np.ndarray
    n_scored: np.ndarray


def score_pairs(variant: IndexVariant, probs_c: np.ndarray, probs_s: np.ndarray,
                answers_c: np.ndarray, answers_s: np.ndarray,
                continuity_correction: bool = False) -> PairScores:
    """Evaluate many pairs at once; arrays are (pairs, questions[, options]).

    Pairs with no scored question get p = 1.
    """
    scored = (answers_c != MISSING) & (answers_s != MISSING)
    matches = np.sum((answers_c == answers_s) & scored, axis=1)
    raw = match_probabilities(variant, probs_c, probs_s, answers_s)
    pis = np.where(scored, np.clip(raw, pbd.PI_FLOOR, pbd.PI_CEIL), 0.0)
    n_scored = scored.sum(axis=1)
    empty = n_scored == 0
    if variant.is_standardized:
        shift = 0.5 if continuity_correction else 0.0
        mean = pis.sum(axis=1)
        sd = np.sqrt(np.where(empty, 1.0, np.sum(pis * (1.0 - pis), axis=1)))
        statistics = np.where(empty, 0.0, (matches - shift - mean) / sd)
        p_values = np.where(empty, 1.0, norm.sf(statistics))
    else:
        statistics = matches.astype(float)
        p_values = pbd.upper_tail_batch(pis, matches)
    return PairScores(matches, statistics, p_values, n_scored)


def ordered_pairs(records: Sequence[StudentRecord]) -> List[Tuple[StudentRecord, StudentRecord]]:
    """All (copier, source) pairs, copier then source by student_id."""
    ordered = sorted(records, key=lambda r: r.student_id)
    return [(c, s) for c in ordered for s in ordered if c.student_id != s.student_id]


def _table_for(model: ModelLike, records: Sequence[StudentRecord]) -> Dict[str, np.ndarray]:
    return {r.student_id: _probabilities(model, r) for r in records}


def detect_room(records: Sequence[StudentRecord], variant: IndexVariant, model: ModelLike,
                alpha: float, threads: int = 1, continuity_correction: bool = False,
                room_id: Optional[str] = None) -> RoomDetection:
    """Test every ordered pair of a room; output order does not depend on ``threads``."""
    records = list(records)
    room_id = room_id if room_id is not None else (records[0].room_id if records else "")
    eligible, excluded = [], []
    for record in records:
        if record.num_answered == 0:
            excluded.append(record.student_id)
        elif isinstance(model, ProbabilityTable) and not model.is_eligible(record.student_id):
            excluded.append(record.student_id)
        else:
            eligible.append(record)
    if excluded:
        logger.warning("room %s: %d students excluded (no usable answers or parameters)", room_id, len(excluded))
    if len(eligible) < 2:
        logger.warning("room %s skipped: fewer than 2 eligible students", room_id)
        return RoomDetection(room_id, variant, (), len(eligible), tuple(excluded), skipped=True)

    probs = _table_for(model, eligible)
    pairs = ordered_pairs(eligible)
    chunks = [pairs[i:i + PAIR_CHUNK] for i in range(0, len(pairs), PAIR_CHUNK)]

    def run(chunk):
        return score_pairs(
            variant,
            np.stack([probs[c.student_id] for c, _ in chunk]),
            np.stack([probs[s.student_id] for _, s in chunk]),
            np.stack([c.answers for c, _ in chunk]),
            np.stack([s.answers for _, s in chunk]),
            continuity_correction,
        )

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scored = list(pool.map(run, chunks))
    else:
        scored = [run(chunk) for chunk in chunks]

    results = []
    for chunk, scores in zip(chunks, scored):
        for t, (copier, source) in enumerate(chunk):
            p_value = float(scores.p_values[t])
            results.append(PairResult(
                copier_id=copier.student_id,
                source_id=source.student_id,
                room_id=room_id,
                variant=variant,
                matches=int(scores.matches[t]),
                statistic=float(scores.statistics[t]),
                p_value=p_value,
                n_scored=int(scores.n_scored[t]),
                flagged=p_value <= alpha,
            ))
    logger.debug("room %s: %d pairs, %d below alpha", room_id, len(results), sum(r.flagged for r in results))
    return RoomDetection(room_id, variant, tuple(results), len(eligible), tuple(excluded))


def model_for(variant: IndexVariant, models: Mapping[Family, ModelLike]) -> ModelLike:
    """The fitted model (or probability table) a variant needs."""
    try:
        return models[variant.family]
    except KeyError:
        needed = "nominal" if variant.family is Family.OMEGA else "wesolowsky"
        raise DomainError(f"variant {variant.name} needs a {needed} model") from None
