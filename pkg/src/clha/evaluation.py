"""BLEU, oracle-reward evaluation and pairwise win-rate comparison."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .lm import TinyLM, sample
from .oracle import DEFAULT_ORACLE, OracleSpec, oracle_reward  # noqa: F401


def _ngrams(seq, n):
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def bleu(hypothesis: Sequence[int], references: Sequence[Sequence[int]], max_n: int = 4) -> float:
    """Sentence BLEU with clipped counts, uniform weights and no smoothing.

    Any empty n-gram precision (including a hypothesis shorter than ``n``)
    gives 0.  Brevity penalty uses the reference length closest to the
    hypothesis length, the shorter one on ties.
    """
    if max_n < 1:
        raise ValueError("max_n must be >= 1")
    if len(hypothesis) == 0 or not references or any(len(r) == 0 for r in references):
        raise ValueError("hypothesis and references must be nonempty")
    hyp = list(hypothesis)
    refs = [list(r) for r in references]
    log_prec = 0.0
    for n in range(1, max_n + 1):
        counts = _ngrams(hyp, n)
        total = sum(counts.values())
        if total == 0:
            return 0.0
        max_ref: Counter = Counter()
        for r in refs:
            max_ref |= _ngrams(r, n)
        clipped = sum(min(c, max_ref[g]) for g, c in counts.items())
        if clipped == 0:
            return 0.0
        log_prec += math.log(clipped / total) / max_n
    c = len(hyp)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * math.exp(log_prec)


@dataclass
class EvalSummary:
    mean_reward: float
    bleu: float
    win_rate: Optional[dict] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["win_rate"] is None:
            del d["win_rate"]
        return d


def prompt_seed(seed: int, index: int) -> np.random.SeedSequence:
    """Per-prompt sampling stream, independent of evaluation order."""
    return np.random.SeedSequence([seed, index])


def generate(model: TinyLM, prompts, max_len: int, seed: int) -> list[tuple]:
    return [sample(model, q, max_len, prompt_seed(seed, i)) for i, q in enumerate(prompts)]


def evaluate(model: TinyLM, prompts, oracle: OracleSpec, refs=None, seed: int = 0,
             max_len: int = 9, samples=None):
    """Sample one response per prompt and score it.

    ``refs`` is either ``None``, the string ``"self"`` (each sample is its
    own reference), or a list of reference lists aligned with ``prompts``.
    Returns ``(summary, audit_rows)``.
    """
    if len(prompts) == 0:
        raise ValueError("no prompts")
    if samples is None:
        samples = generate(model, prompts, max_len, seed)
    audit = []
    rewards, bleus = [], []
    for i, (q, y) in enumerate(zip(prompts, samples)):
        r = oracle_reward(y, oracle)
        row = {"index": i, "prompt": list(q), "response": list(y), "reward": r}
        rewards.append(r)
        if refs is not None:
            row_refs = [y] if isinstance(refs, str) and refs == "self" else refs[i]
            b = bleu(y, row_refs)
            row["bleu"] = b
            bleus.append(b)
        audit.append(row)
    mean_bleu = float(np.mean(bleus)) if bleus else 0.0
    return EvalSummary(float(np.mean(rewards)), mean_bleu), audit


def compare(model_a: TinyLM, model_b: TinyLM, prompts, oracle: OracleSpec, seed: int = 0,
            max_len: int = 9, delta_tie: float = 1e-9):
    """Per-prompt oracle comparison of two models; returns ``(counts, audit)``."""
    if len(prompts) == 0:
        raise ValueError("no prompts")
    ya = generate(model_a, prompts, max_len, seed)
    yb = generate(model_b, prompts, max_len, seed)
    counts = {"wins": 0, "ties": 0, "losses": 0}
    audit = []
    for i, (a, b) in enumerate(zip(ya, yb)):
        ra, rb = oracle_reward(a, oracle), oracle_reward(b, oracle)
        if ra > rb + delta_tie:
            outcome = "win"
            counts["wins"] += 1
        elif rb > ra + delta_tie:
            outcome = "loss"
            counts["losses"] += 1
        else:
            outcome = "tie"
            counts["ties"] += 1
        audit.append({"index": i, "response_a": list(a), "response_b": list(b),
                      "reward_a": ra, "reward_b": rb, "outcome": outcome})
    return counts, audit
