"""Independent reference evaluations used to freeze expected values.

Nothing here imports the package under test.
"""

import mpmath as mp
import numpy as np

mp.mp.dps = 50


def neg_log_sigmoid(d):
    d = mp.mpf(d)
    return float(-mp.log(1 / (1 + mp.exp(-d))))


def mean_log(probs):
    return float(mp.fsum(mp.log(mp.mpf(p)) for p in probs) / len(probs))


def pro_value(p):
    p = [mp.mpf(x) for x in p]
    n = len(p)
    total = mp.mpf(0)
    for k in range(n - 1):
        total -= mp.log(mp.exp(p[k]) / mp.fsum(mp.exp(x) for x in p[k:]))
    return float(total)


def hinge_sum(p, margin, gated=()):
    p = [mp.mpf(x) for x in p]
    total = mp.mpf(0)
    for i in range(len(p)):
        for j in range(i + 1, len(p)):
            if (i, j) in gated:
                continue
            total += max(mp.mpf(0), p[j] - p[i] + mp.mpf(margin) * (j - i))
    return float(total)


def central_difference(f, x, h=1e-5, coords=None):
    """Central-difference gradient of scalar ``f`` at ``x`` over ``coords``."""
    x = np.array(x, dtype=np.float64)
    coords = range(x.size) if coords is None else coords
    out = {}
    for k in coords:
        xp = x.copy(); xp[k] += h
        xm = x.copy(); xm[k] -= h
        out[k] = (f(xp) - f(xm)) / (2 * h)
    return out


def rel_err(a, b, floor=1e-8):
    a = np.asarray(a, dtype=np.float64); b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


# (hypothesis, references, max_n, expected); expected values are nltk
# sentence_bleu with uniform weights and no smoothing
BLEU_FIXTURES = [
    ([1, 2, 3, 4], [[1, 2, 3, 5]], 2, 0.7071067811865475),
    ([1, 2, 3, 4, 5, 6, 7, 8], [[1, 2, 3, 4, 5, 6, 7, 9, 10]], 4, 0.7420884818558928),
    ([3, 3, 3, 3, 1, 2], [[3, 1, 2, 4], [1, 2, 3, 3, 5, 6, 7]], 2, 0.5353620496724769),
    ([5, 6, 7, 8, 9, 1, 2], [[5, 6, 7, 8, 9, 1, 2, 3, 4, 0, 11]], 4, 0.5647181220077593),
    ([2, 4, 6, 8, 10, 12, 14, 16, 1], [[2, 4, 6, 8, 10, 12], [4, 6, 8, 10, 12, 14, 16, 1, 9, 9]], 3,
     0.8948393168143697),
    ([7, 1, 7, 1, 7, 1, 7], [[7, 1, 7, 2, 7, 1, 7]], 3, 0.6114214174657597),
]


def nltk_bleu(hyp, refs, max_n):
    import warnings

    from nltk.translate.bleu_score import sentence_bleu
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return float(sentence_bleu(refs, hyp, weights=(1.0 / max_n,) * max_n))
