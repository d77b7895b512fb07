"""
Exact Poisson-binomial engine and the likelihood-ratio machinery of the
most powerful copy test.

The match count of an honest pair is a sum of independent Bernoulli
trials with heterogeneous success probabilities. Its pmf is built by the
usual convolution (one question at a time, O(N^2) time, O(N) space).
Copying a set A of questions forces those trials to succeed; the ratio of
that "spiked" pmf to the null pmf is non-decreasing in the count, so the
test that rejects for large counts is uniformly most powerful.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import FrozenSet, Iterable, Sequence

import numpy as np

from .errors import DomainError

PI_FLOOR = 1e-9
PI_CEIL = 1.0 - 1e-9


def convolve_bernoulli(probabilities: Sequence[float]) -> np.ndarray:
    """pmf of a sum of independent Bernoulli(p_i), index = number of successes."""
    pmf = np.array([1.0])
    for p in probabilities:
        nxt = np.zeros(len(pmf) + 1)
        nxt[:-1] = pmf * (1.0 - p)
        nxt[1:] += pmf * p
        pmf = nxt
    return pmf


def _upper_tails(pmf: np.ndarray) -> np.ndarray:
    """P(M >= x) for x = 0..N+1; summed from the top for small tails."""
    tails = np.empty(len(pmf) + 1)
    tails[:-1] = np.cumsum(pmf[::-1])[::-1]
    tails[-1] = 0.0
    np.clip(tails, 0.0, 1.0, out=tails)
    tails[0] = 1.0
    return tails


@dataclass(frozen=True, eq=False)
class MatchProfile:
    """Per-question match probabilities of one ordered pair under the null.

    Probabilities are clamped to [1e-9, 1 - 1e-9] so ratios and variances
    stay defined.
    """
    pis: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.pis, dtype=float)
        if raw.ndim != 1 or raw.size < 1:
            raise DomainError("match profile needs a non-empty vector of probabilities")
        if not np.all(np.isfinite(raw)) or np.any(raw < 0.0) or np.any(raw > 1.0):
            raise DomainError("match probabilities must lie in [0, 1]")
        clamped = np.clip(raw, PI_FLOOR, PI_CEIL)
        clamped.setflags(write=False)
        object.__setattr__(self, "pis", clamped)

    @property
    def num_questions(self) -> int:
        return int(self.pis.size)

    @property
    def mean(self) -> float:
        return float(self.pis.sum())

    @property
    def variance(self) -> float:
        return float(np.sum(self.pis * (1.0 - self.pis)))

    @cached_property
    def pmf_table(self) -> np.ndarray:
        table = convolve_bernoulli(self.pis)
        table.setflags(write=False)
        return table

    @cached_property
    def tail_table(self) -> np.ndarray:
        table = _upper_tails(self.pmf_table)
        table.setflags(write=False)
        return table


@dataclass(frozen=True)
class CopySet:
    """0-based positions of the questions c copied from s."""
    indices: FrozenSet[int]

    def __post_init__(self):
        object.__setattr__(self, "indices", frozenset(int(i) for i in self.indices))

    @classmethod
    def of(cls, positions: Iterable[int]) -> "CopySet":
        positions = list(positions)
        if len(set(positions)) != len(positions):
            raise DomainError("copy set has duplicate questions")
        return cls(frozenset(positions))

    def __len__(self) -> int:
        return len(self.indices)

    def check(self, num_questions: int):
        for i in self.indices:
            if not 0 <= i < num_questions:
                raise DomainError(f"copied question {i} outside [0, {num_questions})")


def _check_count(profile: MatchProfile, x: int, upper: int):
    if not isinstance(x, (int, np.integer)) or not 0 <= x <= upper:
        raise DomainError(f"count {x} outside [0, {upper}]")


def pmf(profile: MatchProfile, x: int) -> float:
    """P(M = x) under the null."""
    _check_count(profile, x, profile.num_questions)
    return float(profile.pmf_table[x])


def upper_tail(profile: MatchProfile, x: int) -> float:
    """Inclusive tail P(M >= x); 1 at x = 0 and 0 at x = N + 1."""
    _check_count(profile, x, profile.num_questions + 1)
    return float(profile.tail_table[x])


def critical_value(profile: MatchProfile, alpha: float) -> int:
    """Smallest k* with P(M > k*) <= alpha; reject when M > k*."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    exceed = profile.tail_table[1:] <= alpha  # exceed[k] <=> P(M > k) <= alpha
    return int(np.argmax(exceed))


def spiked_pmf(profile: MatchProfile, copied: CopySet, x: int) -> float:
    """pmf of the match count when the copied questions match with probability 1."""
    _check_count(profile, x, profile.num_questions)
    copied.check(profile.num_questions)
    forced = len(copied)
    if x < forced:
        return 0.0
    if forced == 0:
        return float(profile.pmf_table[x])
    keep = np.ones(profile.num_questions, dtype=bool)
    keep[list(copied.indices)] = False
    rest = convolve_bernoulli(profile.pis[keep])
    return float(rest[x - forced])


def likelihood_ratio(profile: MatchProfile, copied: CopySet, x: int) -> float:
    """Spiked pmf over null pmf at x."""
    denominator = pmf(profile, x)
    if denominator == 0.0:
        raise DomainError(f"null pmf vanishes at x={x}")
    return spiked_pmf(profile, copied, x) / denominator


def upper_tail_batch(pis: np.ndarray, matches: np.ndarray) -> np.ndarray:
    """P(M >= m) for many profiles at once.

    ``pis`` is (pairs, questions); a zero entry marks a question that is not
    scored for that pair (it can never add a match). Scored entries must
    already be clamped. Row-wise identical to ``upper_tail``.
    """
    pis = np.asarray(pis, dtype=float)
    matches = np.asarray(matches, dtype=np.int64)
    num_pairs, num_questions = pis.shape
    dist = np.zeros((num_pairs, num_questions + 1))
    dist[:, 0] = 1.0
    for i in range(num_questions):
        p = pis[:, i:i + 1]
        shifted = dist[:, :-1] * p
        dist *= 1.0 - p
        dist[:, 1:] += shifted
    tails = np.cumsum(dist[:, ::-1], axis=1)[:, ::-1]
    np.clip(tails, 0.0, 1.0, out=tails)
    tails[:, 0] = 1.0
    out = np.zeros(num_pairs)
    inside = matches <= num_questions
    rows = np.nonzero(inside)[0]
    out[rows] = tails[rows, matches[rows]]
    return out
