"""Pure numpy implementations of the tabular language-model kernels.

Parameter layout (flat float64 vector): ``table[R, V]`` row-major, then
``bias[V]``.  A context row is the mixed-radix number formed by the last
``C`` tokens before a position, each shifted by +1 so that 0 is the
begin-of-context pad, reduced modulo ``R``.
"""

import numpy as np


def context_rows(seq, start, V, C, R):
    seq = np.asarray(seq, dtype=np.int64)
    n = seq.shape[0]
    base = V + 1
    rows = np.zeros(n - start, dtype=np.int64)
    mult = 1
    for c in range(C):
        # token c+1 places back from each position; pad with 0 before the start
        pos = np.arange(start, n) - (c + 1)
        sym = np.where(pos >= 0, seq[np.maximum(pos, 0)] + 1, 0)
        rows += sym * mult
        mult *= base
    return rows % R


def _log_softmax(logits):
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def token_logprobs(params, V, C, R, seq, start):
    seq = np.asarray(seq, dtype=np.int64)
    rows = context_rows(seq, start, V, C, R)
    table = params[: R * V].reshape(R, V)
    bias = params[R * V:]
    logits = table[rows] + bias
    lsm = _log_softmax(logits)
    return lsm[np.arange(rows.shape[0]), seq[start:]]


def accumulate_grad(grad, params, V, C, R, seq, start, scale):
    """grad += scale * d/dparams sum_t log P(seq[t] | context), t >= start."""
    if scale == 0.0:
        return
    seq = np.asarray(seq, dtype=np.int64)
    rows = context_rows(seq, start, V, C, R)
    table = params[: R * V].reshape(R, V)
    bias = params[R * V:]
    lsm = _log_softmax(table[rows] + bias)
    delta = -np.exp(lsm)
    delta[np.arange(rows.shape[0]), seq[start:]] += 1.0
    delta *= scale
    np.add.at(grad[: R * V].reshape(R, V), rows, delta)
    grad[R * V:] += delta.sum(axis=0)


def next_token_probs(params, V, C, R, seq):
    seq = np.asarray(seq, dtype=np.int64)
    n = seq.shape[0]
    ext = np.append(seq, 0)
    row = context_rows(ext, n, V, C, R)[0]
    logits = params[row * V:(row + 1) * V] + params[R * V:]
    return np.exp(_log_softmax(logits))
