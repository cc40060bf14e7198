"""Builders shared by the loss, trainer and acceptance tests."""

import math

import numpy as np

from clha.lm import TinyLM
from clha.prefdata import PreferenceRecord


def model_with_logprobs(logps, vocab_size=None):
    """C=1 model where, after query token 0, single-token response ``r+1``
    has log-probability ``logps[r]`` exactly (up to rounding).

    Leftover mass is spread over the unused tokens, so the sum of
    ``exp(logps)`` must be below 1.
    """
    n = len(logps)
    V = vocab_size or n + 3
    mass = sum(math.exp(x) for x in logps)
    if mass >= 1:
        raise ValueError("log-probabilities leave no room for normalisation")
    rest = (1 - mass) / (V - n)
    logits = np.full(V, math.log(rest))
    logits[1:n + 1] = logps
    m = TinyLM.uniform(V, 1)
    m.table[1] = logits   # row for context token 0
    return m


def single_token_record(n):
    return PreferenceRecord((0,), tuple((r + 1,) for r in range(n)))
