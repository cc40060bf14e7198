"""Preference records, JSONL ingestion and the synthetic data generator.

Rank order inside a record is positional: ``responses[0]`` is the most
preferred answer and index ``i`` beats index ``j`` whenever ``i < j``.
Nothing in this module ever re-sorts a record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .oracle import DEFAULT_ORACLE, OracleSpec, oracle_reward

TokenSequence = tuple  # tuple[int, ...]


class DataError(ValueError):
    """Raised for malformed preference data."""


def check_tokens(tokens: Sequence[int], vocab_size: int, what: str = "sequence") -> None:
    if len(tokens) < 1:
        raise DataError(f"{what} is empty")
    for t in tokens:
        if not 0 <= t < vocab_size:
            raise DataError(f"{what} has token {t} outside [0, {vocab_size})")


@dataclass(frozen=True)
class NoiseLabel:
    is_noisy: bool
    chosen_reward: float

    @classmethod
    def from_reward(cls, chosen_reward: float) -> "NoiseLabel":
        return cls(bool(chosen_reward < 0), float(chosen_reward))


@dataclass(frozen=True)
class PreferenceRecord:
    query: TokenSequence
    responses: tuple
    rewards: Optional[tuple] = None
    source_tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "query", tuple(int(t) for t in self.query))
        object.__setattr__(
            self, "responses", tuple(tuple(int(t) for t in r) for r in self.responses)
        )
        if self.rewards is not None:
            object.__setattr__(self, "rewards", tuple(float(r) for r in self.rewards))
        if len(self.query) < 1:
            raise DataError("query is empty")
        if len(self.responses) < 2:
            raise DataError("ranking length < 2")
        if any(len(r) < 1 for r in self.responses):
            raise DataError("empty response")
        if self.rewards is not None and len(self.rewards) != len(self.responses):
            raise DataError(
                f"rewards length {len(self.rewards)} != responses length {len(self.responses)}"
            )

    @property
    def n(self) -> int:
        return len(self.responses)

    def validate(self, vocab_size: int) -> None:
        check_tokens(self.query, vocab_size, "query")
        for i, r in enumerate(self.responses):
            check_tokens(r, vocab_size, f"response {i}")


class SymbolTokenizer:
    """Identity tokenizer over whitespace-separated integer symbols."""

    name = "symbols"

    def __init__(self, vocab_size: int = 16):
        self.vocab_size = vocab_size

    def encode(self, text: str) -> TokenSequence:
        try:
            tokens = tuple(int(s) for s in text.split())
        except ValueError as exc:
            raise DataError(f"non-integer symbol in {text!r}") from exc
        check_tokens(tokens, self.vocab_size, "text")
        return tokens

    def decode(self, tokens: Sequence[int]) -> str:
        return " ".join(str(t) for t in tokens)


class ByteTokenizer:
    """UTF-8 byte-level tokenizer; every byte is a token."""

    name = "bytes"
    vocab_size = 256

    def encode(self, text: str) -> TokenSequence:
        tokens = tuple(text.encode("utf-8"))
        check_tokens(tokens, 256, "text")
        return tokens

    def decode(self, tokens: Sequence[int]) -> str:
        return bytes(tokens).decode("utf-8")


def make_tokenizer(name: str, vocab_size: int = 16):
    if name == "symbols":
        return SymbolTokenizer(vocab_size)
    if name == "bytes":
        return ByteTokenizer()
    raise ValueError(f"unknown tokenizer {name!r}")


def _parse_line(line: str, lineno: int, tokenizer) -> PreferenceRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed JSON at line {lineno}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise DataError(f"expected a JSON object at line {lineno}")
    prompt, responses = obj.get("prompt"), obj.get("responses")
    if not isinstance(prompt, str):
        raise DataError(f"missing or non-string 'prompt' at line {lineno}")
    if not isinstance(responses, list) or not all(isinstance(r, str) for r in responses):
        raise DataError(f"'responses' must be an array of strings at line {lineno}")
    if len(responses) < 2:
        raise DataError(f"ranking length < 2 at line {lineno}")
    rewards = obj.get("rewards")
    if rewards is not None:
        if not isinstance(rewards, list) or not all(
            isinstance(r, (int, float)) and not isinstance(r, bool) for r in rewards
        ):
            raise DataError(f"'rewards' must be an array of numbers at line {lineno}")
        if len(rewards) != len(responses):
            raise DataError(
                f"rewards/responses length mismatch ({len(rewards)} vs {len(responses)}) "
                f"at line {lineno}"
            )
    try:
        return PreferenceRecord(
            query=tokenizer.encode(prompt),
            responses=tuple(tokenizer.encode(r) for r in responses),
            rewards=None if rewards is None else tuple(rewards),
            source_tag=str(obj.get("source_tag", "")),
        )
    except DataError as exc:
        raise DataError(f"{exc} at line {lineno}") from exc


def load_jsonl(path, tokenizer) -> list[PreferenceRecord]:
    """Read one PreferenceRecord per non-blank line, preserving order."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            records.append(_parse_line(line, lineno, tokenizer))
    return records


def record_to_json(record: PreferenceRecord, tokenizer, **extra) -> dict:
    obj = {
        "prompt": tokenizer.decode(record.query),
        "responses": [tokenizer.decode(r) for r in record.responses],
    }
    if record.rewards is not None:
        obj["rewards"] = list(record.rewards)
    obj["source_tag"] = record.source_tag
    obj.update(extra)
    return obj


def write_jsonl(records: Iterable[PreferenceRecord], path, tokenizer) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_json(rec, tokenizer), ensure_ascii=False))
            fh.write("\n")


@dataclass(frozen=True)
class SynthConfig:
    vocab_size: int = 16
    query_len: int = 4
    response_len: int = 8
    rank_len: int = 2
    records: int = 2000
    noise: float = 0.0
    oracle: OracleSpec = field(default_factory=lambda: DEFAULT_ORACLE)
    # append the end-of-sequence id (vocab_size - 1) to every response
    terminate: bool = True

    def to_dict(self) -> dict:
        return {
            "vocab_size": self.vocab_size,
            "query_len": self.query_len,
            "response_len": self.response_len,
            "rank_len": self.rank_len,
            "records": self.records,
            "noise": self.noise,
            "oracle": self.oracle.to_dict(),
            "terminate": self.terminate,
        }


def _draw_response(rng, cfg: SynthConfig, positive: bool) -> tuple:
    # data tokens exclude the end-of-sequence id vocab_size - 1
    eos = (cfg.vocab_size - 1,) if cfg.terminate else ()
    while True:
        resp = tuple(int(t) for t in rng.integers(0, cfg.vocab_size - 1, cfg.response_len)) + eos
        r = oracle_reward(resp, cfg.oracle)
        if (r > 0) if positive else (r < 0):
            return resp


def generate_synthetic(config: SynthConfig, seed: int) -> list[PreferenceRecord]:
    """Build ``config.records`` ranked records with exactly round(noise * N) swapped.

    Every clean record has a top response with positive oracle reward and
    lower-ranked responses with negative reward, so a swapped (noisy) record
    is exactly one whose top response scores below zero.
    """
    if not 0.0 <= config.noise <= 1.0:
        raise ValueError(f"noise fraction must lie in [0, 1], got {config.noise}")
    if config.vocab_size < 4:
        raise ValueError("vocab_size must be >= 4")
    if config.rank_len not in (2, 3):
        raise ValueError("rank_len must be 2 or 3")
    for t in config.oracle.target | config.oracle.penalty:
        if not 0 <= t < config.vocab_size - 1:
            raise ValueError(f"oracle token {t} is not a data token")

    rng = np.random.default_rng(seed)
    ranked = []
    for _ in range(config.records):
        query = tuple(int(t) for t in rng.integers(0, config.vocab_size - 1, config.query_len))
        responses = [_draw_response(rng, config, True)]
        responses += [_draw_response(rng, config, False) for _ in range(config.rank_len - 1)]
        responses.sort(key=lambda r: -oracle_reward(r, config.oracle))
        ranked.append((query, responses))

    n_noisy = int(np.floor(config.noise * config.records + 0.5))
    noisy = set(int(i) for i in rng.permutation(config.records)[:n_noisy])
    out = []
    for idx, (query, responses) in enumerate(ranked):
        tag = "clean"
        if idx in noisy:
            responses = [responses[1], responses[0]] + responses[2:]
            tag = "noisy_injected"
        out.append(PreferenceRecord(query, tuple(responses), None, tag))
    return out
