"""Ground-truth reward for synthetic preference tasks."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class OracleSpec:
    """Token sets that make a response good (``target``) or bad (``penalty``)."""

    target: frozenset[int]
    penalty: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "target", frozenset(int(t) for t in self.target))
        object.__setattr__(self, "penalty", frozenset(int(t) for t in self.penalty))
        overlap = self.target & self.penalty
        if overlap:
            raise ValueError(f"oracle target and penalty sets overlap: {sorted(overlap)}")

    def to_dict(self) -> dict:
        return {"target": sorted(self.target), "penalty": sorted(self.penalty)}

    @classmethod
    def from_dict(cls, d: dict) -> "OracleSpec":
        return cls(frozenset(d["target"]), frozenset(d["penalty"]))

    @classmethod
    def load(cls, path) -> "OracleSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


DEFAULT_ORACLE = OracleSpec(frozenset({1, 2, 3}), frozenset({4, 5, 6}))


def oracle_reward(response: Sequence[int], oracle: OracleSpec) -> float:
    """(#target tokens - #penalty tokens) / length, in [-1, 1]."""
    if len(response) == 0:
        raise ValueError("empty response")
    good = sum(1 for t in response if t in oracle.target)
    bad = sum(1 for t in response if t in oracle.penalty)
    return (good - bad) / len(response)
