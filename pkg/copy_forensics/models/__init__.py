"""
Behavioral response models.

Both models answer the same question: with what probability does a given
student pick each option of each item when answering honestly.
"""

from .base import ProbabilityTable, ResponseModel, check_design
from .nominal import (
    AbilityEstimate,
    NominalModel,
    eap_abilities,
    eap_ability,
    fit_nominal_mml,
    nrm_prob,
    standard_normal_quadrature,
)
from .wesolowsky import WesolowskyModel, correct_probability, fit_wesolowsky, solve_strength, wes_prob

MODEL_KINDS = {
    NominalModel.kind: NominalModel,
    WesolowskyModel.kind: WesolowskyModel,
}

__all__ = [
    "ProbabilityTable",
    "ResponseModel",
    "check_design",
    # Nominal response model
    "AbilityEstimate",
    "NominalModel",
    "eap_abilities",
    "eap_ability",
    "fit_nominal_mml",
    "nrm_prob",
    "standard_normal_quadrature",
    # Wesolowsky model
    "WesolowskyModel",
    "correct_probability",
    "fit_wesolowsky",
    "solve_strength",
    "wes_prob",
    "MODEL_KINDS",
]
