"""
Nominal response model (the omega indices).

    P(option v on item i | theta) = softmax_v(xi_iv + lambda_iv * theta)

Item parameters are fitted by marginal maximum likelihood with an EM
algorithm over a fixed quadrature of the standard-normal ability prior;
abilities are EAP posterior means on the same quadrature. Parameters are
identified by sum-to-zero constraints on intercepts and on slopes of each
item.
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import ClassVar, Dict, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_softmax, logsumexp, roots_hermitenorm, softmax

from ..config import FitConfig
from ..errors import DomainError, InsufficientDataError
from ..state_model import MISSING, ExamDesign, ResponseMatrix, StudentRecord
from .base import ProbabilityTable, check_design

logger = logging.getLogger(__name__)

INTERCEPT_BOUND = 20.0
SLOPE_BOUND = 8.0
PINNED_LOGIT_GAP = 10.0  # pinned option sits this far below the lowest free intercept
EAP_CHUNK = 4096


def standard_normal_quadrature(num_nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite nodes and probability weights for N(0, 1)."""
    nodes, weights = roots_hermitenorm(num_nodes)
    weights = weights / weights.sum()
    return nodes, weights


def center(values: np.ndarray) -> np.ndarray:
    """Impose the per-item sum-to-zero constraint."""
    return values - values.mean(axis=-1, keepdims=True)


@dataclass(frozen=True)
class AbilityEstimate:
    """EAP ability with its posterior standard deviation."""
    theta: float
    posterior_sd: float
    all_missing: bool = False


@dataclass(frozen=True, eq=False)
class NominalModel:
    """Fitted nominal response model for one exam."""
    design: ExamDesign
    intercepts: np.ndarray  # (questions, options)
    slopes: np.ndarray      # (questions, options)
    nodes: np.ndarray
    weights: np.ndarray
    pinned: np.ndarray = None      # (questions, options) option never chosen
    degenerate: np.ndarray = None  # (questions,) uniform fallback
    converged: bool = True
    cycles: int = 0
    loglik_trace: Tuple[float, ...] = ()
    kind: ClassVar[str] = "nominal"

    def __post_init__(self):
        shape = (self.design.num_questions, self.design.num_options)
        if self.pinned is None:
            object.__setattr__(self, "pinned", np.zeros(shape, dtype=bool))
        if self.degenerate is None:
            object.__setattr__(self, "degenerate", np.zeros(shape[0], dtype=bool))
        for name in ("intercepts", "slopes", "nodes", "weights", "pinned", "degenerate"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.intercepts.shape != shape or self.slopes.shape != shape:
            raise DomainError(f"parameter tables must have shape {shape}")
        object.__setattr__(self, "loglik_trace", tuple(float(v) for v in self.loglik_trace))

    @classmethod
    def from_parameters(cls, design: ExamDesign, intercepts, slopes, quadrature_nodes: int = 21):
        """Build a model from raw parameters, imposing the constraints."""
        nodes, weights = standard_normal_quadrature(quadrature_nodes)
        return cls(
            design=design,
            intercepts=center(np.asarray(intercepts, dtype=float)),
            slopes=center(np.asarray(slopes, dtype=float)),
            nodes=nodes,
            weights=weights,
        )

    @property
    def fingerprint(self) -> str:
        return self.design.fingerprint

    def probabilities(self, theta: float) -> np.ndarray:
        """(questions, options) answer probabilities at ability theta."""
        return softmax(self.intercepts + self.slopes * theta, axis=1)

    @cached_property
    def log_node_probabilities(self) -> np.ndarray:
        """(nodes, questions, options) log probabilities at each quadrature node."""
        logits = self.intercepts[np.newaxis] + self.slopes[np.newaxis] * self.nodes[:, np.newaxis, np.newaxis]
        table = log_softmax(logits, axis=2)
        table.setflags(write=False)
        return table

    def option_probabilities(self, record: StudentRecord) -> np.ndarray:
        return self.probabilities(eap_ability(self, record.answers).theta)

    def probability_table(self, matrix: ResponseMatrix) -> ProbabilityTable:
        check_design(self.design, matrix)
        thetas, _ = eap_abilities(self, matrix.answers)
        logits = self.intercepts[np.newaxis] + self.slopes[np.newaxis] * thetas[:, np.newaxis, np.newaxis]
        probs = softmax(logits, axis=2)
        eligible = matrix.answered_mask().any(axis=1)
        return ProbabilityTable(matrix.design, matrix.student_ids, probs, eligible)

    def to_arrays(self):
        arrays = {
            "intercepts": self.intercepts,
            "slopes": self.slopes,
            "nodes": self.nodes,
            "weights": self.weights,
            "pinned": self.pinned,
            "degenerate": self.degenerate,
            "loglik_trace": np.array(self.loglik_trace, dtype=float),
        }
        return arrays, {"converged": bool(self.converged), "cycles": int(self.cycles)}

    @classmethod
    def from_arrays(cls, design: ExamDesign, arrays: Dict[str, np.ndarray], meta: Dict[str, object]):
        return cls(
            design=design,
            intercepts=arrays["intercepts"],
            slopes=arrays["slopes"],
            nodes=arrays["nodes"],
            weights=arrays["weights"],
            pinned=arrays["pinned"].astype(bool),
            degenerate=arrays["degenerate"].astype(bool),
            converged=bool(meta.get("converged", True)),
            cycles=int(meta.get("cycles", 0)),
            loglik_trace=tuple(arrays["loglik_trace"]),
        )


def nrm_prob(model: NominalModel, theta: float, item: int, option: int) -> float:
    """Probability of choosing the option on the item at ability theta."""
    if not 0 <= item < model.design.num_questions:
        raise DomainError(f"item {item} outside [0, {model.design.num_questions})")
    if not 0 <= option < model.design.num_options:
        raise DomainError(f"option {option} outside [0, {model.design.num_options})")
    logits = model.intercepts[item] + model.slopes[item] * theta
    return float(softmax(logits)[option])


def _answer_loglik(model: NominalModel, answers: np.ndarray) -> np.ndarray:
    """(students, nodes) log-likelihood of each answer vector at each node."""
    answers = np.atleast_2d(answers)
    answered = answers != MISSING
    safe = np.where(answered, answers, 0).astype(np.intp)
    items = np.arange(model.design.num_questions)
    logp = model.log_node_probabilities  # (Q, N, n)
    picked = logp[:, items[np.newaxis, :], safe]  # (Q, J, N)
    picked = np.where(answered[np.newaxis], picked, 0.0)
    return picked.sum(axis=2).T


def eap_abilities(model: NominalModel, answers: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized EAP: posterior means and standard deviations for many students."""
    answers = np.atleast_2d(answers)
    thetas = np.zeros(len(answers))
    sds = np.ones(len(answers))
    log_prior = np.log(model.weights)
    for start in range(0, len(answers), EAP_CHUNK):
        block = answers[start:start + EAP_CHUNK]
        post = softmax(_answer_loglik(model, block) + log_prior[np.newaxis], axis=1)
        mean = post @ model.nodes
        var = post @ (model.nodes ** 2) - mean ** 2
        none_answered = ~(block != MISSING).any(axis=1)
        mean[none_answered] = 0.0
        sd = np.sqrt(np.maximum(var, 0.0))
        sd[none_answered] = 1.0
        thetas[start:start + len(block)] = mean
        sds[start:start + len(block)] = sd
    return thetas, sds


def eap_ability(model: NominalModel, responses) -> AbilityEstimate:
    """Posterior mean ability; MISSING answers add no likelihood factor."""
    answers = np.asarray(responses)
    if answers.shape != (model.design.num_questions,):
        raise DomainError(f"expected {model.design.num_questions} answers, got {answers.shape}")
    if not (answers != MISSING).any():
        return AbilityEstimate(theta=0.0, posterior_sd=1.0, all_missing=True)
    thetas, sds = eap_abilities(model, answers[np.newaxis])
    return AbilityEstimate(theta=float(thetas[0]), posterior_sd=float(sds[0]))


# ==========================================
# MARGINAL MAXIMUM LIKELIHOOD (EM)
# ==========================================

@dataclass
class _ItemProblem:
    """Expected-count multinomial logit for one item in the M-step."""
    counts: np.ndarray  # (nodes, options) expected counts
    nodes: np.ndarray
    free: np.ndarray    # (options,) bool
    fixed_xi: np.ndarray = field(default=None)
    fixed_lam: np.ndarray = field(default=None)

    def unpack(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        k = int(self.free.sum())
        xi = self.fixed_xi.copy()
        lam = self.fixed_lam.copy()
        xi[self.free] = x[:k]
        lam[self.free] = x[k:]
        return xi, lam

    def objective(self, x: np.ndarray) -> Tuple[float, np.ndarray]:
        xi, lam = self.unpack(x)
        logp = log_softmax(xi[np.newaxis] + lam[np.newaxis] * self.nodes[:, np.newaxis], axis=1)
        value = -float(np.sum(self.counts * logp))
        resid = self.counts - self.counts.sum(axis=1, keepdims=True) * np.exp(logp)
        grad_xi = -resid.sum(axis=0)
        grad_lam = -(self.nodes[:, np.newaxis] * resid).sum(axis=0)
        return value, np.concatenate([grad_xi[self.free], grad_lam[self.free]])


def _start_values(matrix: ResponseMatrix, counts: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Intercepts from log option shares, slopes from option/score correlations."""
    answered = matrix.answered_mask()
    correct = matrix.correct_mask()
    n_answered = answered.sum(axis=1)
    score = np.where(n_answered > 0, correct.sum(axis=1) / np.maximum(n_answered, 1), 0.0)
    z = (score - score.mean()) / (score.std() or 1.0)

    totals = counts.sum(axis=1, keepdims=True)
    n_options = counts.shape[1]
    xi = np.log((counts + 0.5) / (totals + 0.5 * n_options))
    lam = np.zeros_like(xi)
    answers = matrix.answers
    for item in range(counts.shape[0]):
        rows = answered[:, item]
        if rows.sum() < 3:
            continue
        for option in range(n_options):
            indicator = (answers[rows, item] == option).astype(float)
            if indicator.std() == 0.0 or z[rows].std() == 0.0:
                continue
            lam[item, option] = 2.0 * np.corrcoef(indicator, z[rows])[0, 1]
    return center(xi), center(np.clip(lam, -3.0, 3.0))


def fit_nominal_mml(matrix: ResponseMatrix, config: FitConfig = None) -> NominalModel:
    """Fit item parameters by EM under a standard-normal ability prior."""
    config = config or FitConfig()
    design = matrix.design
    n_students = int(matrix.answered_mask().any(axis=1).sum())
    if n_students < config.min_examinees:
        raise InsufficientDataError(
            f"insufficient examinees: {n_students} with answers, need {config.min_examinees}"
        )

    n_items, n_options = design.num_questions, design.num_options
    answers = matrix.answers
    onehot = (answers[:, :, np.newaxis] == np.arange(n_options)).astype(float)
    flat = onehot.reshape(len(answers), n_items * n_options)
    counts = onehot.sum(axis=0)

    chosen = counts > 0
    degenerate = chosen.sum(axis=1) <= 1
    pinned = ~chosen & ~degenerate[:, np.newaxis]
    for item in np.nonzero(degenerate)[0]:
        logger.warning("item %d: every answer identical; using uniform probabilities", item + 1)
    for item, option in zip(*np.nonzero(pinned)):
        logger.warning("item %d: option %s never chosen; parameters pinned", item + 1, chr(65 + option))

    nodes, weights = standard_normal_quadrature(config.quadrature_nodes)
    log_prior = np.log(weights)

    xi, lam = _start_values(matrix, counts)
    xi[degenerate] = 0.0
    lam[degenerate] = 0.0
    for item in range(n_items):
        if pinned[item].any():
            free = ~pinned[item]
            xi[item, pinned[item]] = xi[item, free].min() - PINNED_LOGIT_GAP
            lam[item, pinned[item]] = 0.0
    xi, lam = center(xi), center(lam)

    def e_step(xi_, lam_):
        logits = xi_[np.newaxis] + lam_[np.newaxis] * nodes[:, np.newaxis, np.newaxis]
        logp = log_softmax(logits, axis=2).reshape(len(nodes), n_items * n_options)
        joint = flat @ logp.T + log_prior[np.newaxis]  # (students, nodes)
        marginal = logsumexp(joint, axis=1)
        post = np.exp(joint - marginal[:, np.newaxis])
        expected = (post.T @ flat).reshape(len(nodes), n_items, n_options)
        return expected, float(marginal.sum())

    trace = []
    converged = False
    cycle = 0
    for cycle in range(1, config.max_cycles + 1):
        expected, loglik = e_step(xi, lam)
        trace.append(loglik)
        new_xi, new_lam = xi.copy(), lam.copy()
        for item in range(n_items):
            if degenerate[item]:
                continue
            free = ~pinned[item]
            problem = _ItemProblem(expected[:, item, :], nodes, free, xi[item].copy(), lam[item].copy())
            x0 = np.concatenate([xi[item, free], lam[item, free]])
            k = int(free.sum())
            bounds = [(-INTERCEPT_BOUND, INTERCEPT_BOUND)] * k + [(-SLOPE_BOUND, SLOPE_BOUND)] * k
            start_value, _ = problem.objective(x0)
            result = minimize(
                problem.objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                options={"maxiter": config.mstep_max_iter},
            )
            if result.fun <= start_value:
                item_xi, item_lam = problem.unpack(result.x)
                new_xi[item] = item_xi - item_xi.mean()
                new_lam[item] = item_lam - item_lam.mean()
        change = max(float(np.max(np.abs(new_xi - xi))), float(np.max(np.abs(new_lam - lam))))
        xi, lam = new_xi, new_lam
        logger.debug("EM cycle %d: loglik %.10g, max change %.3g", cycle, loglik, change)
        if change < config.tolerance:
            converged = True
            break

    _, final_loglik = e_step(xi, lam)
    trace.append(final_loglik)
    if converged:
        logger.info("EM converged after %d cycles (loglik %.6g)", cycle, final_loglik)
    else:
        logger.warning("EM stopped at max cycles %d without converging", config.max_cycles)

    return NominalModel(
        design=design,
        intercepts=xi,
        slopes=lam,
        nodes=nodes,
        weights=weights,
        pinned=pinned,
        degenerate=degenerate,
        converged=converged,
        cycles=cycle,
        loglik_trace=tuple(trace),
    )
