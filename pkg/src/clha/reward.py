"""Linear reward scorer with its Bradley-Terry pair loss; record rescoring.

Features of a (query, response) pair are the response token frequencies
(``V`` entries) followed by the outer product of query and response token
frequencies (``V*V`` entries).  Frequencies rather than raw counts keep
scores on the scale of the oracle reward for any response length.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .optim import make_optimizer
from .oracle import OracleSpec
from .prefdata import NoiseLabel, PreferenceRecord


class TrainingError(RuntimeError):
    """Raised when an optimization run produces a non-finite loss."""


@dataclass
class RewardScorer:
    vocab_size: int
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        dim = self.vocab_size + self.vocab_size ** 2
        if self.weights.shape != (dim,):
            raise ValueError(f"expected {dim} weights, got shape {self.weights.shape}")

    @classmethod
    def zeros(cls, vocab_size: int) -> "RewardScorer":
        return cls(vocab_size, np.zeros(vocab_size + vocab_size ** 2))

    @classmethod
    def from_oracle(cls, oracle: OracleSpec, vocab_size: int) -> "RewardScorer":
        """Scorer whose score equals the oracle reward on every response."""
        scorer = cls.zeros(vocab_size)
        for t in oracle.target:
            scorer.weights[t] = 1.0
        for t in oracle.penalty:
            scorer.weights[t] = -1.0
        return scorer

    def features(self, query, response) -> np.ndarray:
        V = self.vocab_size
        r = np.bincount(np.asarray(response, dtype=np.int64), minlength=V)[:V] / len(response)
        q = np.bincount(np.asarray(query, dtype=np.int64), minlength=V)[:V] / len(query)
        return np.concatenate([r, np.outer(q, r).ravel()])

    def score(self, query, response) -> float:
        return float(self.features(query, response) @ self.weights)

    def copy(self) -> "RewardScorer":
        return RewardScorer(self.vocab_size, self.weights.copy())

    def to_dict(self) -> dict:
        return {"vocab_size": self.vocab_size, "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RewardScorer":
        return cls(int(d["vocab_size"]), np.asarray(d["weights"], dtype=np.float64))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "RewardScorer":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def rm_pair_loss(scorer: RewardScorer, query, chosen, rejected) -> tuple[float, np.ndarray]:
    """-log sigmoid(r(x, chosen) - r(x, rejected)) and its weight gradient."""
    dphi = scorer.features(query, chosen) - scorer.features(query, rejected)
    margin = float(dphi @ scorer.weights)
    loss = float(np.logaddexp(0.0, -margin))
    # d/dm softplus(-m) = -sigmoid(-m)
    sig_neg = math.exp(-np.logaddexp(0.0, margin))
    return loss, -sig_neg * dphi


@dataclass
class OptimizerConfig:
    epochs: int = 20
    learning_rate: float = 0.05
    batch_size: int = 16
    optimizer: str = "adam"
    seed: int = 0


def _pairs(records):
    for idx, rec in enumerate(records):
        for j in range(1, rec.n):
            yield idx, rec.query, rec.responses[0], rec.responses[j]


def train_reward(scorer: RewardScorer, records: list[PreferenceRecord],
                 opt: OptimizerConfig) -> RewardScorer:
    """Fit the scorer on (top, other) pairs of every record; returns a new scorer."""
    out = scorer.copy()
    pairs = list(_pairs(records))
    if opt.epochs == 0 or not pairs:
        return out
    optimizer = make_optimizer(opt.optimizer, opt.learning_rate)
    for epoch in range(opt.epochs):
        order = np.random.default_rng(opt.seed + epoch).permutation(len(pairs))
        for start in range(0, len(order), opt.batch_size):
            grad = np.zeros_like(out.weights)
            chunk = order[start:start + opt.batch_size]
            for k in chunk:
                idx, q, c, r = pairs[k]
                loss, g = rm_pair_loss(out, q, c, r)
                if not math.isfinite(loss):
                    raise TrainingError(f"non-finite reward loss at record {idx}, epoch {epoch}")
                grad += g
            optimizer.update(out.weights, grad / len(chunk))
    return out


def pairwise_accuracy(scorer: RewardScorer, records) -> float:
    """Fraction of (top, other) pairs the scorer orders strictly correctly."""
    hits = total = 0
    for _, q, c, r in _pairs(records):
        hits += scorer.score(q, c) > scorer.score(q, r)
        total += 1
    return hits / total


@dataclass(frozen=True)
class RescoredRecord:
    record: PreferenceRecord
    rewards: tuple
    noise: NoiseLabel
    k_mask: np.ndarray

    @property
    def gated_pairs(self) -> list[tuple[int, int]]:
        n = len(self.rewards)
        return [(i, j) for i in range(n) for j in range(i + 1, n) if self.k_mask[i, j]]


def similarity_mask(rewards, epsilon: float) -> np.ndarray:
    """Boolean matrix of reward pairs closer than ``epsilon``."""
    r = np.asarray(rewards, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        return np.abs(r[:, None] - r[None, :]) < epsilon


def rescore(scorer: RewardScorer, record: PreferenceRecord, epsilon: float = 0.05) -> RescoredRecord:
    if not epsilon >= 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    rewards = tuple(scorer.score(record.query, r) for r in record.responses)
    return from_rewards(record, rewards, epsilon)


def from_rewards(record: PreferenceRecord, rewards, epsilon: float) -> RescoredRecord:
    rewards = tuple(float(r) for r in rewards)
    return RescoredRecord(record, rewards, NoiseLabel.from_reward(rewards[0]),
                          similarity_mask(rewards, epsilon))


def unscored(record: PreferenceRecord) -> RescoredRecord:
    """Neutral rescoring used when rescoring is switched off: no gates fire."""
    n = record.n
    return RescoredRecord(record, (0.0,) * n, NoiseLabel(False, 0.0), np.zeros((n, n), dtype=bool))
