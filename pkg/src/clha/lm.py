"""Tiny autoregressive language model with exact log-probabilities.

The model is an order-``C`` tabular softmax: the logits for the next token
are ``table[row] + bias`` where ``row`` indexes the last ``C`` tokens of
``query + response[:t]``.  Positions with fewer than ``C`` predecessors are
left-padded with a begin symbol that no data token maps to.  Everything
here is small enough for finite-difference verification of gradients.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels


@dataclass
class TinyLM:
    vocab_size: int
    context_window: int
    table_size: int
    params: np.ndarray

    def __post_init__(self):
        self.params = np.ascontiguousarray(self.params, dtype=np.float64)
        if self.params.shape != (self.n_params,):
            raise ValueError(
                f"expected {self.n_params} parameters, got shape {self.params.shape}"
            )

    @property
    def n_params(self) -> int:
        return (self.table_size + 1) * self.vocab_size

    @property
    def eos(self) -> int:
        return self.vocab_size - 1

    @property
    def table(self) -> np.ndarray:
        return self.params[: self.table_size * self.vocab_size].reshape(
            self.table_size, self.vocab_size
        )

    @property
    def bias(self) -> np.ndarray:
        return self.params[self.table_size * self.vocab_size:]

    @classmethod
    def uniform(cls, vocab_size: int = 16, context_window: int = 2, table_size: int | None = None):
        if table_size is None:
            table_size = (vocab_size + 1) ** context_window
        return cls(vocab_size, context_window, table_size,
                   np.zeros((table_size + 1) * vocab_size))

    @classmethod
    def random(cls, vocab_size: int = 16, context_window: int = 2, seed: int = 0,
               scale: float = 1.0, table_size: int | None = None):
        model = cls.uniform(vocab_size, context_window, table_size)
        model.params = np.random.default_rng(seed).normal(0.0, scale, model.n_params)
        return model

    def copy(self) -> "TinyLM":
        return TinyLM(self.vocab_size, self.context_window, self.table_size, self.params.copy())

    def _dims(self):
        return self.vocab_size, self.context_window, self.table_size

    def check(self, tokens: Sequence[int]) -> None:
        for t in tokens:
            if not 0 <= t < self.vocab_size:
                raise ValueError(f"token {t} outside model vocabulary [0, {self.vocab_size})")

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "context_window": self.context_window,
            "table_size": self.table_size,
            "params": self.params.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TinyLM":
        return cls(int(d["vocab_size"]), int(d["context_window"]), int(d["table_size"]),
                   np.asarray(d["params"], dtype=np.float64))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "TinyLM":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _joined(query, response) -> np.ndarray:
    return np.fromiter((*query, *response), dtype=np.int64, count=len(query) + len(response))


def sequence_logprob(model: TinyLM, query, response) -> tuple[float, np.ndarray]:
    """Length-normalised log-likelihood of ``response`` given ``query``.

    Returns ``(p, per_token)`` where ``per_token[t]`` is
    ``log P(response[t] | query + response[:t])`` and ``p`` their mean.
    """
    if len(response) == 0:
        raise ValueError("empty response")
    per_token = _kernels.token_logprobs(model.params, *model._dims(),
                                        _joined(query, response), len(query))
    return float(per_token.mean()), per_token


def accumulate_logprob_grad(grad: np.ndarray, model: TinyLM, query, response,
                            scale: float = 1.0) -> None:
    """``grad += scale * d p / d params`` without allocating a full gradient."""
    _kernels.accumulate_grad(grad, model.params, *model._dims(),
                             _joined(query, response), len(query), scale / len(response))


def logprob_grad(model: TinyLM, query, response) -> np.ndarray:
    """Gradient of ``sequence_logprob(...)[0]`` with respect to ``model.params``."""
    grad = np.zeros(model.n_params)
    accumulate_logprob_grad(grad, model, query, response)
    return grad


def next_token_probs(model: TinyLM, prefix) -> np.ndarray:
    return _kernels.next_token_probs(model.params, *model._dims(),
                                     np.asarray(prefix, dtype=np.int64))


def sample(model: TinyLM, query, max_len: int, seed) -> tuple:
    """Ancestral sample of up to ``max_len`` tokens; stops after emitting EOS."""
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    rng = np.random.default_rng(seed)
    prefix = list(query)
    out = []
    for _ in range(max_len):
        cdf = np.cumsum(next_token_probs(model, prefix))
        tok = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        tok = min(tok, model.vocab_size - 1)
        out.append(tok)
        prefix.append(tok)
        if tok == model.eos:
            break
    return tuple(out)
