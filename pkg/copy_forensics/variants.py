"""
Index variant definitions for answer-copying detection.

Every index is one point on three axes: the behavioral model that yields
option probabilities (omega = nominal response model, gamma = Wesolowsky
model), whether the match probabilities condition on the source's answers,
and whether the p-value comes from the exact Poisson-binomial tail or from
the normal approximation.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Tuple

from .errors import DomainError


class Family(Enum):
    """Behavioral model behind the option probabilities."""
    OMEGA = "omega"
    GAMMA = "gamma"


class Conditioning(Enum):
    """How the per-question match probability is built."""
    UNCONDITIONAL = "unconditional"
    CONDITIONAL = "conditional"


class Tail(Enum):
    """How the p-value is computed from the match count."""
    EXACT = "exact"
    STANDARDIZED = "standardized"


@dataclass(frozen=True)
class IndexVariant:
    """One of the eight copy indices."""
    family: Family
    conditioning: Conditioning
    tail: Tail

    @property
    def name(self) -> str:
        """Short name such as ``omega2s`` (1 = unconditional, 2 = conditional)."""
        number = "1" if self.conditioning is Conditioning.UNCONDITIONAL else "2"
        suffix = "s" if self.tail is Tail.STANDARDIZED else ""
        return f"{self.family.value}{number}{suffix}"

    @property
    def is_conditional(self) -> bool:
        return self.conditioning is Conditioning.CONDITIONAL

    @property
    def is_standardized(self) -> bool:
        return self.tail is Tail.STANDARDIZED

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class VariantInfo:
    """Human-readable metadata about a variant."""
    variant: IndexVariant
    title: str
    description: str
    symmetric: bool


def _build_variants() -> Dict[str, IndexVariant]:
    table = {}
    for family in Family:
        for conditioning in Conditioning:
            for tail in Tail:
                variant = IndexVariant(family, conditioning, tail)
                table[variant.name] = variant
    return table


VARIANTS: Dict[str, IndexVariant] = _build_variants()

_MODEL_TEXT = {
    Family.OMEGA: "nominal response model probabilities at the EAP ability",
    Family.GAMMA: "Wesolowsky probabilities from item difficulty and student strength",
}

_CONDITIONING_TEXT = {
    Conditioning.UNCONDITIONAL: "both answer vectors random (symmetric in the pair)",
    Conditioning.CONDITIONAL: "source answers fixed, copier's probability of matching them",
}

_TAIL_TEXT = {
    Tail.EXACT: "exact Poisson-binomial upper tail",
    Tail.STANDARDIZED: "normal approximation of the match count",
}

VARIANT_INFO: Dict[IndexVariant, VariantInfo] = {
    variant: VariantInfo(
        variant=variant,
        title=name.upper(),
        description=(
            f"{_MODEL_TEXT[variant.family]}; "
            f"{_CONDITIONING_TEXT[variant.conditioning]}; "
            f"{_TAIL_TEXT[variant.tail]}"
        ),
        symmetric=variant.conditioning is Conditioning.UNCONDITIONAL,
    )
    for name, variant in VARIANTS.items()
}


def get_variant_info(variant: IndexVariant) -> VariantInfo:
    """Get metadata for a variant."""
    return VARIANT_INFO[variant]


def get_variant(name: str) -> IndexVariant:
    """Look up a variant by its short name (case-insensitive)."""
    try:
        return VARIANTS[name.strip().lower()]
    except KeyError:
        known = ", ".join(VARIANTS)
        raise DomainError(f"unknown variant {name!r} (known: {known})") from None


def parse_variants(spec: str) -> Tuple[IndexVariant, ...]:
    """Parse ``all`` or a comma-separated list of short names."""
    if spec.strip().lower() == "all":
        return tuple(VARIANTS.values())
    names: List[str] = [part for part in spec.split(",") if part.strip()]
    if not names:
        raise DomainError("no variant given")
    return tuple(dict.fromkeys(get_variant(name) for name in names))
