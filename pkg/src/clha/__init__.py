"""Contrastive preference alignment on a tiny tabular language model."""

from .evaluation import EvalSummary, bleu, compare, evaluate
from .lm import TinyLM, logprob_grad, sample, sequence_logprob
from .losses import (LossReport, MarginConfig, alpha_for_length, clha_loss, pro_loss,
                     sft_loss, total_loss, xi_adjust)
from .oracle import DEFAULT_ORACLE, OracleSpec, oracle_reward
from .prefdata import (NoiseLabel, PreferenceRecord, SynthConfig, generate_synthetic,
                       load_jsonl, write_jsonl)
from .reward import (OptimizerConfig, RescoredRecord, RewardScorer, rescore, rm_pair_loss,
                     train_reward)
from .trainer import TrainConfig, step, train

__version__ = "0.1.0"
