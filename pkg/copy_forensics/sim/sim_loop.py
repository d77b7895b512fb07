"""
Monte-Carlo loop for the size and power study.

The Simulator owns one response matrix, the frozen probability tables of
the fitted models and a SimulationConfig. It samples the cross-room null
pairs once and reuses them for every variant and every copy level:

1. type-I rate: share of null pairs with p <= alpha
2. power at level k: the same pairs after injecting k copied answers;
   probabilities stay those of the pre-injection fit
3. size-adjusted power: each variant rejects at its own calibrated cut,
   the largest p-value cut that rejects at most alpha of the null pairs

Power is only comparable between variants that hold their size; a variant
whose type-I rate overshoots alpha gains power it has not earned. Use
``holds_size`` to screen variants and the size-adjusted curves to compare
all of them on equal terms.

Pairs are processed in fixed-size chunks. Chunk t draws its copy positions
from its own stream keyed by (seed, t), so results do not depend on the
number of worker threads.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from ..config import SimulationConfig
from ..errors import DomainError
from ..indices import score_pairs
from ..models.base import ProbabilityTable
from ..state_model import PowerCurve, PowerPoint, RateEstimate, ResponseMatrix
from ..variants import Family, IndexVariant
from .copying import inject_batch, sample_cross_room_pairs
from .rng import INJECTION, SAMPLING, stream

logger = logging.getLogger(__name__)


def rejections(p_values: np.ndarray, alpha: float) -> int:
    """Count of p <= alpha; alpha = 0 never rejects."""
    if alpha <= 0.0:
        return 0
    return int(np.count_nonzero(p_values <= alpha))


SIZE_SLACK_SE = 3.0


def size_bound(alpha: float, trials: int) -> float:
    """Largest empirical type-I rate still consistent with nominal alpha."""
    return alpha + SIZE_SLACK_SE * float(np.sqrt(alpha * (1.0 - alpha) / trials))


def holds_size(estimate: RateEstimate, alpha: float) -> bool:
    return estimate.rate <= size_bound(alpha, estimate.trials)


def calibrated_cut(null_p_values: np.ndarray, alpha: float) -> float:
    """Largest cut c such that p <= c rejects at most floor(alpha * n) null pairs.

    Tied p-values are rejected together or not at all; -inf rejects nothing.
    """
    ordered = np.sort(np.asarray(null_p_values, dtype=float))
    if ordered.size == 0:
        return -np.inf
    allowed = int(np.floor(alpha * ordered.size + 1e-9))
    if allowed >= ordered.size:
        return float(ordered[-1])
    below = ordered[:allowed][ordered[:allowed] < ordered[allowed]]
    return float(below[-1]) if below.size else -np.inf


class Simulator:
    """
    Coordinates the null-pair sample, copy injection and scoring.

    ``tables`` maps each model family to the probability table of the
    matrix; only the families of the configured variants are required.
    """

    def __init__(self, matrix: ResponseMatrix, tables: Mapping[Family, ProbabilityTable],
                 config: Optional[SimulationConfig] = None, threads: int = 1):
        self.matrix = matrix
        self.tables = dict(tables)
        self.config = config or SimulationConfig()
        self.threads = max(1, int(threads))
        for variant in self.config.variants:
            self._table(variant)
        for family, table in self.tables.items():
            if table.student_ids != matrix.student_ids:
                raise DomainError(f"{family.value} probability table does not follow the matrix rows")
        self.levels = self.config.levels_for(matrix.design.num_questions)

    def _table(self, variant: IndexVariant) -> ProbabilityTable:
        try:
            return self.tables[variant.family]
        except KeyError:
            raise DomainError(f"no {variant.family.value} probabilities for variant {variant.name}") from None

    @cached_property
    def eligible(self) -> np.ndarray:
        """Students usable by every supplied model."""
        mask = self.matrix.answered_mask().any(axis=1)
        for table in self.tables.values():
            mask &= table.eligible
        return mask

    @cached_property
    def null_pairs(self) -> np.ndarray:
        """(num_pairs, 2) row indices of the cross-room sample."""
        pairs = sample_cross_room_pairs(
            self.matrix, self.config.num_pairs, stream(self.config.seed, SAMPLING), eligible=self.eligible,
        )
        logger.info("sampled %d cross-room null pairs", len(pairs))
        return pairs

    @cached_property
    def chunks(self) -> List[Tuple[int, int]]:
        size = self.config.chunk_size
        total = len(self.null_pairs)
        return [(start, min(start + size, total)) for start in range(0, total, size)]

    def _orders(self, chunk_index: int, count: int) -> np.ndarray:
        """Copy orders for one chunk: row t is a permutation of the questions."""
        rng = stream(self.config.seed, INJECTION, chunk_index)
        return rng.permuted(np.tile(np.arange(self.matrix.design.num_questions), (count, 1)), axis=1)

    def _map(self, fn, items):
        if self.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(item) for item in items]

    def _chunk_p_values(self, variants, levels, chunk_index: int) -> Dict[Tuple[IndexVariant, int], np.ndarray]:
        start, stop = self.chunks[chunk_index]
        pairs = self.null_pairs[start:stop]
        answers = self.matrix.answers
        answers_c, answers_s = answers[pairs[:, 0]], answers[pairs[:, 1]]
        orders = self._orders(chunk_index, len(pairs)) if any(k > 0 for k in levels) else None
        p_values = {}
        for k in levels:
            injected = answers_c if k == 0 else inject_batch(answers_c, answers_s, orders, k)
            for variant in variants:
                probs = self._table(variant).probabilities
                scores = score_pairs(
                    variant, probs[pairs[:, 0]], probs[pairs[:, 1]], injected, answers_s,
                    self.config.continuity_correction,
                )
                p_values[(variant, k)] = scores.p_values
        return p_values

    def _count_chunk(self, variants, levels, chunk_index: int,
                     cuts: Optional[Mapping[IndexVariant, float]] = None) -> Dict[Tuple[IndexVariant, int], int]:
        counts = {}
        for (variant, k), p_values in self._chunk_p_values(variants, levels, chunk_index).items():
            if cuts is None:
                counts[(variant, k)] = rejections(p_values, self.config.alpha)
            else:
                counts[(variant, k)] = int(np.count_nonzero(p_values <= cuts[variant]))
        return counts

    def _count(self, variants, levels, cuts=None) -> Dict[Tuple[IndexVariant, int], int]:
        totals = {(v, k): 0 for v in variants for k in levels}
        chunk_counts = self._map(lambda t: self._count_chunk(variants, levels, t, cuts), list(range(len(self.chunks))))
        for counts in chunk_counts:
            for key, value in counts.items():
                totals[key] += value
        return totals

    def null_p_values(self, variant: IndexVariant) -> np.ndarray:
        """p-values of every null pair, in sample order."""
        parts = self._map(lambda t: self._chunk_p_values([variant], [0], t)[(variant, 0)],
                          list(range(len(self.chunks))))
        return np.concatenate(parts)

    def calibrated_cuts(self, variants=None) -> Dict[IndexVariant, float]:
        """Per-variant p-value cut whose null rejection rate is at most alpha."""
        variants = list(variants or self.config.variants)
        cuts = {v: calibrated_cut(self.null_p_values(v), self.config.alpha) for v in variants}
        for variant, cut in cuts.items():
            logger.debug("%s: calibrated cut %.6g at alpha %.6g", variant.name, cut, self.config.alpha)
        return cuts

    def size_adjusted_curves(self, variants=None) -> List[PowerCurve]:
        """Power at each copy level when every variant rejects at its calibrated cut."""
        variants = list(variants or self.config.variants)
        cuts = self.calibrated_cuts(variants)
        counts = self._count(variants, list(self.levels), cuts)
        return [self._curve(v, counts) for v in variants]

    def type1_rate(self, variant: IndexVariant) -> RateEstimate:
        """Rejection rate over the null pairs."""
        counts = self._count([variant], [0])
        return RateEstimate(counts[(variant, 0)], len(self.null_pairs))

    def power_curve(self, variant: IndexVariant) -> PowerCurve:
        """Rejection rate at each configured copy level."""
        counts = self._count([variant], list(self.levels))
        return self._curve(variant, counts)

    def _curve(self, variant: IndexVariant, counts) -> PowerCurve:
        trials = len(self.null_pairs)
        n = self.matrix.design.num_questions
        return PowerCurve(variant, tuple(
            PowerPoint(k=k, proportion=k / n, estimate=RateEstimate(counts[(variant, k)], trials))
            for k in self.levels
        ))

    def run(self) -> Tuple[Dict[IndexVariant, RateEstimate], List[PowerCurve]]:
        """Type-I rates and power curves of every configured variant in one pass."""
        variants = list(self.config.variants)
        levels = sorted(set(self.levels) | {0})
        counts = self._count(variants, levels)
        trials = len(self.null_pairs)
        rates = {v: RateEstimate(counts[(v, 0)], trials) for v in variants}
        curves = [self._curve(v, counts) for v in variants]
        for variant, curve in zip(variants, curves):
            logger.info(
                "%s: type-I %.6g per 1000 (se %.6g), power at k=%d %.6g",
                variant.name, rates[variant].per_thousand, 1000 * rates[variant].se,
                self.levels[-1], curve.points[-1].estimate.rate,
            )
            if not holds_size(rates[variant], self.config.alpha):
                logger.warning(
                    "%s: type-I rate %.6g exceeds the size bound %.6g; compare its power size-adjusted",
                    variant.name, rates[variant].rate, size_bound(self.config.alpha, trials),
                )
        return rates, curves


def as_table(model, matrix: ResponseMatrix) -> ProbabilityTable:
    """Freeze a fitted model into a probability table for the matrix."""
    return model if isinstance(model, ProbabilityTable) else model.probability_table(matrix)


def type1_rate(matrix: ResponseMatrix, variant: IndexVariant, model,
               config: Optional[SimulationConfig] = None, threads: int = 1) -> RateEstimate:
    """Empirical type-I rate of one variant."""
    simulator = Simulator(matrix, {variant.family: as_table(model, matrix)}, _only(config, variant), threads)
    return simulator.type1_rate(variant)


def power_curve(matrix: ResponseMatrix, variant: IndexVariant, model,
                config: Optional[SimulationConfig] = None, threads: int = 1) -> PowerCurve:
    """Empirical power of one variant across the copy levels."""
    simulator = Simulator(matrix, {variant.family: as_table(model, matrix)}, _only(config, variant), threads)
    return simulator.power_curve(variant)


def _only(config: Optional[SimulationConfig], variant: IndexVariant) -> SimulationConfig:
    return replace(config or SimulationConfig(), variants=(variant,))
