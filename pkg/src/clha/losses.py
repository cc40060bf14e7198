"""Alignment objectives over sequence likelihoods, with exact gradients.

Every loss here is a function of the per-response likelihoods ``p`` (the
token-mean log-probabilities from :func:`clha.lm.sequence_logprob`).  Each
returns per-response coefficients ``dL/dp_r``; parameter gradients are then
``sum_r coeff_r * d p_r / d params``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lm import TinyLM, accumulate_logprob_grad, sequence_logprob
from .reward import RescoredRecord


@dataclass(frozen=True)
class MarginConfig:
    margin: float = 2.0
    epsilon: float = 0.05
    # literal hinge orientation max(0, p_i - p_j + xi); off by default
    as_printed: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.margin) and self.margin >= 0):
            raise ValueError(f"margin must be finite and >= 0, got {self.margin}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")


@dataclass
class LossReport:
    clha: float
    sft: float
    total: float
    pair_terms: dict = field(default_factory=dict)
    k_gated_pairs: frozenset = frozenset()
    lambda_flag: float = 0
    alpha: float = 0.0

    def to_log(self, step: int, **extra) -> dict:
        out = {
            "step": step,
            "clha": self.clha,
            "sft": self.sft,
            "total": self.total,
            "lambda": self.lambda_flag,
            "gated_pairs": len(self.k_gated_pairs),
        }
        out.update(extra)
        return out


def xi_adjust(cfg: MarginConfig, i: int, j: int) -> float:
    """Rank-distance margin: ``margin * (j - i)``."""
    if not 0 <= i < j:
        raise ValueError(f"pair orientation violated: need 0 <= i < j, got ({i}, {j})")
    return cfg.margin * (j - i)


def clha_loss(p, k_mask, cfg: MarginConfig):
    """Pairwise hinge over all ranked pairs with rank-scaled margins.

    For ``i < j`` not gated by ``k_mask`` the term is
    ``max(0, p[j] - p[i] + xi(i, j))``: the better response must lead by at
    least ``xi``.  Returns ``(value, pair_terms, coeffs)``.
    """
    p = np.asarray(p, dtype=np.float64)
    k_mask = np.asarray(k_mask, dtype=bool)
    n = p.shape[0]
    if n < 2:
        raise ValueError("need at least two responses")
    if k_mask.shape != (n, n):
        raise ValueError(f"k_mask shape {k_mask.shape} does not match {n} responses")
    terms = {}
    coeffs = np.zeros(n)
    value = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            if k_mask[i, j]:
                terms[(i, j)] = 0.0
                continue
            xi = xi_adjust(cfg, i, j)
            arg = (p[i] - p[j] + xi) if cfg.as_printed else (p[j] - p[i] + xi)
            if arg > 0:
                terms[(i, j)] = float(arg)
                value += arg
                sign = 1.0 if cfg.as_printed else -1.0
                coeffs[i] += sign
                coeffs[j] -= sign
            else:
                terms[(i, j)] = 0.0
    return float(value), terms, coeffs


def sft_loss(per_token) -> float:
    """Token-mean negative log-likelihood of the top-ranked response."""
    per_token = np.asarray(per_token, dtype=np.float64)
    if per_token.size == 0:
        raise ValueError("empty response")
    return float(-per_token.mean())


def alpha_for_length(l: int) -> float:
    if l < 2:
        raise ValueError(f"ranking length must be >= 2, got {l}")
    return 0.05 * (l - 1) ** 2


def pro_loss(p):
    """Listwise softmax ranking loss; returns ``(value, coeffs)``."""
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[0]
    if n < 2:
        raise ValueError("need at least two responses")
    value = 0.0
    coeffs = np.zeros(n)
    for k in range(n - 1):
        tail = p[k:]
        m = tail.max()
        lse = m + math.log(np.exp(tail - m).sum())
        value -= p[k] - lse
        coeffs[k] -= 1.0
        coeffs[k:] += np.exp(tail - lse)
    return float(value), coeffs


def _likelihoods(model: TinyLM, record):
    out = [sequence_logprob(model, record.query, y) for y in record.responses]
    return np.array([o[0] for o in out]), out[0][1]


def _gradient(model: TinyLM, record, coeffs) -> np.ndarray:
    grad = np.zeros(model.n_params)
    for y, c in zip(record.responses, coeffs):
        accumulate_logprob_grad(grad, model, record.query, y, float(c))
    return grad


def total_loss(rescored: RescoredRecord, model: TinyLM, cfg: MarginConfig,
               contrastive: bool = True):
    """Contrastive hinge plus the reward-gated SFT term.

    ``alpha`` follows the ranking length; ``lambda`` is 1 when the top
    response's reward is negative, which removes its SFT term.  With
    ``contrastive=False`` only the gated SFT term remains.
    """
    record = rescored.record
    p, top_tokens = _likelihoods(model, record)
    n = record.n
    lam = 1 if rescored.rewards[0] < 0 else 0
    alpha = alpha_for_length(n)
    sft = sft_loss(top_tokens)
    if contrastive:
        clha, terms, coeffs = clha_loss(p, rescored.k_mask, cfg)
    else:
        clha, terms, coeffs = 0.0, {}, np.zeros(n)
    w_sft = alpha * (1 - lam)
    total = clha + w_sft * sft
    # d sft / d p_0 = -1 because sft == -p_0
    coeffs[0] -= w_sft
    report = LossReport(clha, sft, total, terms, frozenset(rescored.gated_pairs), lam, alpha)
    return report, _gradient(model, record, coeffs)


def pro_objective(rescored: RescoredRecord, model: TinyLM):
    record = rescored.record
    p, top_tokens = _likelihoods(model, record)
    value, coeffs = pro_loss(p)
    report = LossReport(value, sft_loss(top_tokens), value, {}, frozenset(), 0, 0.0)
    return report, _gradient(model, record, coeffs)


def sft_objective(rescored: RescoredRecord, model: TinyLM):
    record = rescored.record
    p, top_tokens = _likelihoods(model, record)
    value = sft_loss(top_tokens)
    coeffs = np.zeros(record.n)
    coeffs[0] = -1.0
    report = LossReport(0.0, value, value, {}, frozenset(), 0, 1.0)
    return report, _gradient(model, record, coeffs)
