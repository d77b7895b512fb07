"""
Null pairs and copy injection.

Students who sat in different rooms cannot have copied from each other, so
ordered cross-room pairs form the null sample. Copying at level k is
simulated by overwriting k blindly chosen answers of the copier with the
source's answers; positions where the two already agreed still count
toward k.
"""

import logging
from typing import Optional, Sequence

import numpy as np

from ..errors import DomainError, InsufficientDataError
from ..state_model import ResponseMatrix

logger = logging.getLogger(__name__)

# Above this many cross-room pairs, sample by rejection instead of enumerating.
ENUMERATION_LIMIT = 4_000_000


def cross_room_pair_count(room_ids: Sequence[str]) -> int:
    """Number of ordered pairs (c, s) with different rooms."""
    _, sizes = np.unique(np.asarray(room_ids, dtype=object).astype(str), return_counts=True)
    total = int(sizes.sum())
    return total * total - int(np.sum(sizes.astype(np.int64) ** 2))


def sample_cross_room_pairs(matrix: ResponseMatrix, count: int, rng: np.random.Generator,
                            eligible: Optional[np.ndarray] = None) -> np.ndarray:
    """Draw ``count`` distinct ordered cross-room pairs as (count, 2) row indices.

    ``eligible`` restricts the draw to a subset of students (rows of the
    matrix); column 0 is the copier, column 1 the source.
    """
    if count < 1:
        raise DomainError(f"pair count must be >= 1, got {count}")
    rows = np.arange(len(matrix)) if eligible is None else np.nonzero(np.asarray(eligible, dtype=bool))[0]
    room_ids = np.asarray(matrix.room_ids, dtype=object)[rows].astype(str)
    if len(set(room_ids)) < 2:
        raise InsufficientDataError("cross-room sampling needs students in at least 2 rooms")
    _, room_codes = np.unique(room_ids, return_inverse=True)

    maximum = cross_room_pair_count(room_ids)
    if count > maximum:
        raise InsufficientDataError(
            f"requested {count} cross-room pairs but only {maximum} exist"
        )

    if maximum <= ENUMERATION_LIMIT and 4 * count >= maximum:
        copier, source = np.meshgrid(np.arange(len(rows)), np.arange(len(rows)), indexing="ij")
        copier, source = copier.ravel(), source.ravel()
        cross = room_codes[copier] != room_codes[source]
        copier, source = copier[cross], source[cross]
        picked = rng.choice(len(copier), size=count, replace=False)
        pairs = np.column_stack([rows[copier[picked]], rows[source[picked]]])
    else:
        pairs = _rejection_sample(rows, room_codes, count, rng)
    logger.debug("sampled %d of %d cross-room pairs", count, maximum)
    return pairs


def _rejection_sample(rows: np.ndarray, room_codes: np.ndarray, count: int,
                      rng: np.random.Generator) -> np.ndarray:
    n = len(rows)
    seen = set()
    out = np.empty((count, 2), dtype=np.int64)
    filled = 0
    while filled < count:
        batch = max(1024, 2 * (count - filled))
        c = rng.integers(0, n, size=batch)
        s = rng.integers(0, n, size=batch)
        cross = room_codes[c] != room_codes[s]
        for ci, si in zip(c[cross], s[cross]):
            key = int(ci) * n + int(si)
            if key in seen:
                continue
            seen.add(key)
            out[filled] = (rows[ci], rows[si])
            filled += 1
            if filled == count:
                break
    return out


def copy_positions(num_questions: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """k distinct question indices chosen uniformly."""
    if not 0 <= k <= num_questions:
        raise DomainError(f"copy level {k} outside [0, {num_questions}]")
    return rng.permutation(num_questions)[:k]


def inject_copy(resp_c, resp_s, k: int, rng: Optional[np.random.Generator] = None,
                positions: Optional[Sequence[int]] = None) -> np.ndarray:
    """Copier's answers with k positions overwritten by the source's (blanks included).

    Either ``rng`` picks the positions or ``positions`` names them (0-based).
    """
    resp_c = np.asarray(resp_c)
    resp_s = np.asarray(resp_s)
    if resp_c.shape != resp_s.shape or resp_c.ndim != 1:
        raise DomainError("answer vectors must be 1-D and of equal length")
    num_questions = resp_c.size
    if not 0 <= k <= num_questions:
        raise DomainError(f"copy level {k} outside [0, {num_questions}]")
    if positions is None:
        if rng is None:
            raise DomainError("inject_copy needs either rng or positions")
        positions = copy_positions(num_questions, k, rng)
    else:
        positions = np.asarray(positions, dtype=np.intp)
        if positions.size != k or len(set(positions.tolist())) != k:
            raise DomainError(f"expected {k} distinct positions, got {positions.tolist()}")
        if positions.size and (positions.min() < 0 or positions.max() >= num_questions):
            raise DomainError(f"positions outside [0, {num_questions})")
    out = resp_c.copy()
    out[positions] = resp_s[positions]
    return out


def inject_batch(answers_c: np.ndarray, answers_s: np.ndarray, orders: np.ndarray, k: int) -> np.ndarray:
    """Batch injection: row t copies the positions ``orders[t, :k]``.

    Sharing one order per pair across k nests the copy sets, so higher
    levels only add copied positions.
    """
    out = np.array(answers_c, copy=True)
    if k == 0:
        return out
    rows = np.arange(len(out))[:, np.newaxis]
    cols = orders[:, :k]
    out[rows, cols] = answers_s[rows, cols]
    return out
