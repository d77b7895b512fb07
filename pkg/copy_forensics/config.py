"""
Run configuration for copy_forensics.

Each dataclass mirrors one group of CLI flags one-to-one, so a manifest's
flags can be turned back into a config without translation.
"""

import os
from dataclasses import dataclass, field
from typing import Tuple

from .errors import DomainError
from .variants import IndexVariant, get_variant

THREADS_ENV_VAR = "COPY_FORENSICS_THREADS"


def default_threads() -> int:
    """Worker count: env var if set, otherwise available CPUs."""
    raw = os.environ.get(THREADS_ENV_VAR, "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise DomainError(f"{THREADS_ENV_VAR} must be an integer, got {raw!r}") from None
        if value < 1:
            raise DomainError(f"{THREADS_ENV_VAR} must be >= 1")
        return value
    return os.cpu_count() or 1


def default_copy_levels(num_questions: int) -> Tuple[int, ...]:
    """Copy levels 1, 5, 10, 15, ..., N."""
    levels = [1] + list(range(5, num_questions + 1, 5))
    if levels[-1] != num_questions:
        levels.append(num_questions)
    return tuple(sorted(set(k for k in levels if k <= num_questions)))


@dataclass(frozen=True)
class FitConfig:
    """Settings for marginal maximum likelihood fitting of the nominal model."""
    quadrature_nodes: int = 21
    max_cycles: int = 200
    tolerance: float = 1e-4
    min_examinees: int = 200
    mstep_max_iter: int = 50

    def __post_init__(self):
        if self.quadrature_nodes < 3:
            raise DomainError("quadrature_nodes must be >= 3")
        if self.max_cycles < 1:
            raise DomainError("max_cycles must be >= 1")
        if self.tolerance <= 0:
            raise DomainError("tolerance must be positive")


@dataclass(frozen=True)
class DetectConfig:
    """Settings for pairwise detection and room reporting."""
    alpha: float = 0.001
    continuity_correction: bool = False
    p_star: float = 0.01
    threshold: float = 0.6
    attribution: str = "copier"  # copier, either
    correction: str = "bh"  # bh, bonferroni

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 < self.p_star < 1.0:
            raise DomainError(f"p_star must be in (0, 1), got {self.p_star}")
        if self.attribution not in ("copier", "either"):
            raise DomainError(f"attribution must be 'copier' or 'either', got {self.attribution!r}")
        if self.correction not in ("bh", "bonferroni"):
            raise DomainError(f"correction must be 'bh' or 'bonferroni', got {self.correction!r}")


@dataclass(frozen=True)
class SimulationConfig:
    """Settings for the type-I / power protocol."""
    num_pairs: int = 100_000
    alpha: float = 0.001
    copy_levels: Tuple[int, ...] = ()
    variants: Tuple[IndexVariant, ...] = field(default_factory=lambda: (get_variant("omega2s"),))
    seed: int = 0
    chunk_size: int = 2048
    continuity_correction: bool = False

    def __post_init__(self):
        object.__setattr__(self, "copy_levels", tuple(int(k) for k in self.copy_levels))
        object.__setattr__(self, "variants", tuple(self.variants))
        if self.num_pairs < 1:
            raise DomainError("num_pairs must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.chunk_size < 1:
            raise DomainError("chunk_size must be >= 1")
        if self.seed < 0:
            raise DomainError(f"seed must be non-negative, got {self.seed}")
        if any(k < 0 for k in self.copy_levels):
            raise DomainError("copy levels must be non-negative")

    def levels_for(self, num_questions: int) -> Tuple[int, ...]:
        """Configured copy levels, or the default grid; validated against N."""
        levels = self.copy_levels or default_copy_levels(num_questions)
        bad = [k for k in levels if k > num_questions]
        if bad:
            raise DomainError(f"copy levels {bad} exceed the {num_questions} questions")
        return levels
