"""Deterministic training loop and the ablation grid."""

from __future__ import annotations

import dataclasses
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .lm import TinyLM
from .losses import LossReport, MarginConfig, pro_objective, sft_objective, total_loss
from .optim import clip_global_norm, make_optimizer
from .reward import RescoredRecord, RewardScorer, TrainingError, rescore, unscored

log = logging.getLogger(__name__)

OBJECTIVES = ("clha", "clha_no_rescore", "clha_no_contrastive", "clha_no_xi", "pro", "sft")
RESCORING_OBJECTIVES = ("clha", "clha_no_contrastive", "clha_no_xi")


@dataclass
class TrainConfig:
    objective: str = "clha"
    epochs: int = 2
    learning_rate: float = 1e-2
    batch_size: int = 8
    seed: int = 0
    margin_cfg: MarginConfig = field(default_factory=MarginConfig)
    optimizer: str = "adam"
    clip_norm: float = 10.0
    threads: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.margin_cfg, dict):
            self.margin_cfg = MarginConfig(**self.margin_cfg)
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}; choose from {OBJECTIVES}")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("threads")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)


def _threads(cfg: TrainConfig) -> int:
    if cfg.threads is not None:
        return max(1, cfg.threads)
    env = os.environ.get("CLHA_THREADS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


def record_objective(rescored: RescoredRecord, model: TinyLM, cfg: TrainConfig):
    obj = cfg.objective
    if obj == "pro":
        return pro_objective(rescored, model)
    if obj == "sft":
        return sft_objective(rescored, model)
    margin_cfg = cfg.margin_cfg
    if obj == "clha_no_xi":
        margin_cfg = dataclasses.replace(margin_cfg, margin=0.0)
    return total_loss(rescored, model, margin_cfg, contrastive=obj != "clha_no_contrastive")


def prepare(records, scorer: Optional[RewardScorer], cfg: TrainConfig) -> list[RescoredRecord]:
    if cfg.objective in RESCORING_OBJECTIVES:
        if scorer is None:
            raise ValueError(f"objective {cfg.objective!r} needs a reward scorer")
        return [rescore(scorer, r, cfg.margin_cfg.epsilon) for r in records]
    return [unscored(r) for r in records]


def batch_gradient(model: TinyLM, batch, cfg: TrainConfig, indices=None):
    """Per-record reports and the mean gradient, reduced in batch order."""
    fn = lambda rs: record_objective(rs, model, cfg)  # noqa: E731
    threads = _threads(cfg)
    if threads > 1 and len(batch) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(fn, batch))
    else:
        results = [fn(rs) for rs in batch]
    grad = np.zeros(model.n_params)
    reports = []
    for k, (report, g) in enumerate(results):
        if not math.isfinite(report.total):
            idx = indices[k] if indices is not None else k
            raise TrainingError(f"non-finite loss at record {idx}")
        grad += g
        reports.append(report)
    grad /= len(batch)
    return reports, grad


def aggregate(reports: list[LossReport]) -> LossReport:
    n = len(reports)
    pair_terms: dict = {}
    for r in reports:
        for key, v in r.pair_terms.items():
            pair_terms[key] = pair_terms.get(key, 0.0) + v / n
    gated = frozenset((b, i, j) for b, r in enumerate(reports) for i, j in r.k_gated_pairs)
    return LossReport(
        clha=sum(r.clha for r in reports) / n,
        sft=sum(r.sft for r in reports) / n,
        total=sum(r.total for r in reports) / n,
        pair_terms=pair_terms,
        k_gated_pairs=gated,
        lambda_flag=sum(r.lambda_flag for r in reports) / n,
        alpha=sum(r.alpha for r in reports) / n,
    )


def step(model: TinyLM, batch: list[RescoredRecord], cfg: TrainConfig,
         optimizer=None, indices=None) -> tuple[LossReport, float]:
    """One optimizer update with the mean batch gradient (mutates ``model``).

    Returns the aggregated report and the pre-clipping gradient norm.
    """
    if not batch:
        raise ValueError("empty batch")
    if optimizer is None:
        optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate)
    reports, grad = batch_gradient(model, batch, cfg, indices)
    norm = clip_global_norm(grad, cfg.clip_norm)
    optimizer.update(model.params, grad)
    return aggregate(reports), norm


def train(model: TinyLM, scorer: Optional[RewardScorer], records, cfg: TrainConfig,
          on_epoch_end: Optional[Callable[[int, TinyLM], None]] = None):
    """Run ``cfg.epochs`` shuffled passes; returns ``(model, history)``.

    The input model is not modified.  ``history`` holds one dict per step
    (the aggregated report as a log line plus the gradient norm).
    """
    if not records:
        raise ValueError("no training records")
    model = model.copy()
    for rec in records:
        rec.validate(model.vocab_size)
    optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate)
    history = []
    n_step = 0
    for epoch in range(cfg.epochs):
        # the scorer is frozen, so rescoring depends only on the data
        prepared = prepare(records, scorer, cfg)
        order = np.random.default_rng(cfg.seed + epoch).permutation(len(prepared))
        for start in range(0, len(order), cfg.batch_size):
            idx = [int(i) for i in order[start:start + cfg.batch_size]]
            try:
                report, norm = step(model, [prepared[i] for i in idx], cfg, optimizer, idx)
            except TrainingError as exc:
                raise TrainingError(f"step {n_step}: {exc}") from exc
            history.append(report.to_log(n_step, epoch=epoch, grad_norm=norm,
                                         clipped=norm > cfg.clip_norm > 0))
            n_step += 1
        log.info("epoch %d mean loss %.6f", epoch,
                 np.mean([h["total"] for h in history if h["epoch"] == epoch]))
        if on_epoch_end is not None:
            on_epoch_end(epoch, model)
    return model, history
