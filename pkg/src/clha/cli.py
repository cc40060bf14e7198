"""Command-line entry point: ``clha <command> [flags]``.

Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import _kernels
from .evaluation import compare, evaluate
from .lm import TinyLM
from .losses import MarginConfig
from .oracle import DEFAULT_ORACLE, OracleSpec
from .prefdata import (DataError, SynthConfig, generate_synthetic, load_jsonl,
                       make_tokenizer, record_to_json, write_jsonl)
from .reward import (OptimizerConfig, RewardScorer, TrainingError, rescore,
                     train_reward)
from .trainer import OBJECTIVES, TrainConfig, train

log = logging.getLogger("clha")


class UsageError(Exception):
    """Bad flags, missing inputs or inconsistent configuration (exit 2)."""


@dataclass
class RunManifest:
    command: str
    config_digest: str
    seed: int
    artifact_paths: list
    started: str
    finished: str = ""
    config: dict = field(default_factory=dict)

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _now() -> str:
    # SOURCE_DATE_EPOCH pins timestamps for reproducible manifests
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def _json_safe(x):
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    return x


def config_digest(config: dict) -> str:
    blob = json.dumps(_json_safe(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _manifest(command: str, config: dict, seed: int, started: str) -> RunManifest:
    config = _json_safe(config)
    return RunManifest(command, config_digest(config), seed, [], started, config=config)


def _finish(manifest: RunManifest, paths, manifest_path) -> None:
    manifest.artifact_paths = [str(p) for p in paths]
    manifest.finished = _now()
    manifest.write(manifest_path)


def _sidecar(path, suffix: str) -> Path:
    return Path(str(path) + suffix)


def _read_json(path, what: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} file {path} is not valid JSON: {exc.msg}") from None


def dataset_vocab(path, override=None) -> int:
    """Vocabulary of a dataset: --vocab, else its generator manifest, else 16."""
    if override is not None:
        return override
    side = _sidecar(path, ".manifest.json")
    if side.exists():
        cfg = _read_json(side, "manifest").get("config", {})
        if "vocab_size" in cfg:
            return int(cfg["vocab_size"])
    return 16


def _load_data(path, tokenizer_name: str, vocab: int):
    if not Path(path).exists():
        raise UsageError(f"data file not found: {path}")
    return load_jsonl(path, make_tokenizer(tokenizer_name, vocab))


def _load_oracle(path) -> OracleSpec:
    try:
        return OracleSpec.from_dict(_read_json(path, "oracle"))
    except (KeyError, TypeError) as exc:
        raise UsageError(f"oracle file {path} needs 'target' and 'penalty' arrays") from exc


def _load_model(path) -> TinyLM:
    try:
        return TinyLM.from_dict(_read_json(path, "checkpoint"))
    except (KeyError, TypeError) as exc:
        raise UsageError(f"checkpoint {path} is malformed: {exc}") from exc


def _write_jsonl(rows, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(_json_safe(row)))
            fh.write("\n")


# commands ----------------------------------------------------------------

def cmd_gen(args) -> int:
    started = _now()
    if not 0.0 <= args.noise <= 1.0:
        raise UsageError(f"argument --noise: must lie in [0, 1], got {args.noise}")
    if args.records < 1:
        raise UsageError("argument --records: must be >= 1")
    oracle = _load_oracle(args.oracle) if args.oracle else DEFAULT_ORACLE
    cfg = SynthConfig(vocab_size=args.vocab, query_len=args.query_len,
                      response_len=args.response_len, rank_len=args.rank_len,
                      records=args.records, noise=args.noise, oracle=oracle)
    try:
        records = generate_synthetic(cfg, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out)
    tok = make_tokenizer("symbols", args.vocab)
    write_jsonl(records, out, tok)
    oracle_path = _sidecar(out, ".oracle.json")
    with open(oracle_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(oracle.to_dict(), fh)
    config = {**cfg.to_dict(), "seed": args.seed}
    _finish(_manifest("gen", config, args.seed, started), [out, oracle_path],
            _sidecar(out, ".manifest.json"))
    noisy = sum(r.source_tag != "clean" for r in records)
    print(f"wrote {len(records)} records ({noisy} noisy) to {out}")
    return 0


def cmd_train_rm(args) -> int:
    started = _now()
    vocab = dataset_vocab(args.data, args.vocab)
    if args.oracle_backed:
        oracle_path = args.oracle or _sidecar(args.data, ".oracle.json")
        scorer = RewardScorer.from_oracle(_load_oracle(oracle_path), vocab)
        config = {"oracle_backed": True, "oracle": str(oracle_path), "vocab_size": vocab}
    else:
        records = _load_data(args.data, args.tokenizer, vocab)
        opt = OptimizerConfig(epochs=args.epochs, learning_rate=args.lr,
                              batch_size=args.batch_size, optimizer=args.optimizer, seed=args.seed)
        scorer = train_reward(RewardScorer.zeros(vocab), records, opt)
        config = {"oracle_backed": False, "data": str(args.data), "vocab_size": vocab,
                  **asdict(opt)}
    scorer.save(args.out)
    _finish(_manifest("train-rm", config, args.seed, started), [args.out],
            _sidecar(args.out, ".manifest.json"))
    print(f"wrote scorer to {args.out}")
    return 0


def cmd_rescore(args) -> int:
    started = _now()
    if not args.epsilon >= 0:
        raise UsageError(f"argument --epsilon: must be >= 0, got {args.epsilon}")
    vocab = dataset_vocab(args.data, args.vocab)
    d = _read_json(args.scorer, "scorer")
    try:
        scorer = RewardScorer.from_dict(d)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"scorer {args.scorer} is malformed: {exc}") from exc
    if scorer.vocab_size != vocab:
        raise UsageError(f"vocabulary mismatch: scorer V={scorer.vocab_size}, data V={vocab}")
    tok = make_tokenizer(args.tokenizer, vocab)
    records = _load_data(args.data, args.tokenizer, vocab)
    rows, noisy, gated_total = [], [], 0
    for idx, rec in enumerate(records):
        rs = rescore(scorer, rec, args.epsilon)
        gated = rs.gated_pairs
        gated_total += len(gated)
        if rs.noise.is_noisy:
            noisy.append(idx)
        row = record_to_json(rec, tok)
        row["rewards"] = list(rs.rewards)
        row["lambda"] = int(rs.noise.is_noisy)
        row["k_gated_pairs"] = [list(p) for p in gated]
        rows.append(row)
    out = Path(args.out)
    _write_jsonl(rows, out)
    report = {"records": len(records), "noisy_count": len(noisy), "noisy_indices": noisy,
              "gated_pairs": gated_total, "epsilon": args.epsilon}
    report_path = Path(args.report) if args.report else _sidecar(out, ".report.json")
    with open(report_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_json_safe(report), fh, indent=2)
        fh.write("\n")
    config = {"data": str(args.data), "scorer": str(args.scorer), "epsilon": args.epsilon,
              "vocab_size": vocab, "tokenizer": args.tokenizer}
    _finish(_manifest("rescore", config, 0, started), [out, report_path],
            _sidecar(out, ".manifest.json"))
    print(json.dumps(_json_safe({k: v for k, v in report.items() if k != "noisy_indices"})))
    return 0


def _train_config(args) -> TrainConfig:
    raw = _read_json(args.config, "config") if args.config else {}
    if args.objective:
        raw["objective"] = args.objective
    if args.seed is not None:
        raw["seed"] = args.seed
    margin = dict(raw.get("margin_cfg", {}))
    if args.hinge_as_printed:
        margin["as_printed"] = True
    raw["margin_cfg"] = margin
    try:
        return TrainConfig.from_dict(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid training config: {exc}") from exc


def cmd_train(args) -> int:
    started = _now()
    cfg = _train_config(args)
    vocab = dataset_vocab(args.data, args.vocab)
    records = _load_data(args.data, args.tokenizer, vocab)
    scorer = None
    if args.scorer:
        scorer = RewardScorer.from_dict(_read_json(args.scorer, "scorer"))
        if scorer.vocab_size != vocab:
            raise UsageError(f"vocabulary mismatch: scorer V={scorer.vocab_size}, data V={vocab}")
    elif cfg.objective in ("clha", "clha_no_contrastive", "clha_no_xi"):
        raise UsageError(f"objective {cfg.objective} needs --scorer for rescoring")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = TinyLM.uniform(vocab, args.context)
    paths = []

    def checkpoint(epoch, m):
        p = out / f"checkpoint_epoch{epoch}.json"
        m.save(p)
        paths.append(p)

    model, history = train(model, scorer, records, cfg, on_epoch_end=checkpoint)
    model_path = out / "model.json"
    model.save(model_path)
    hist_path = out / "history.jsonl"
    _write_jsonl(history, hist_path)
    config = {**cfg.to_dict(), "data": str(args.data), "scorer": args.scorer,
              "vocab_size": vocab, "context_window": args.context,
              "hinge_orientation": "as_printed" if cfg.margin_cfg.as_printed else "corrected",
              "kernels": _kernels.BACKEND}
    _finish(_manifest("train", config, cfg.seed, started), [*paths, model_path, hist_path],
            out / "manifest.json")
    if history:
        print(json.dumps({"steps": len(history), "final_total": history[-1]["total"]}))
    return 0


def _prompts_and_model(args, model_path):
    model = _load_model(model_path)
    vocab = dataset_vocab(args.prompts, args.vocab)
    if vocab != model.vocab_size:
        raise UsageError(
            f"vocabulary mismatch: model V={model.vocab_size}, prompts V={vocab}")
    records = _load_data(args.prompts, args.tokenizer, vocab)
    return model, records


def cmd_eval(args) -> int:
    started = _now()
    model, records = _prompts_and_model(args, args.model)
    oracle = _load_oracle(args.oracle)
    prompts = [r.query for r in records]
    refs = None
    if args.refs == "self":
        refs = "self"
    elif args.refs == "chosen":
        refs = [[r.responses[0]] for r in records]
    summary, audit = evaluate(model, prompts, oracle, refs=refs, seed=args.seed,
                              max_len=args.max_len)
    out = Path(args.out)
    _write_jsonl(audit, out)
    config = {"model": str(args.model), "prompts": str(args.prompts), "oracle": oracle.to_dict(),
              "refs": args.refs, "max_len": args.max_len, "seed": args.seed}
    _finish(_manifest("eval", config, args.seed, started), [out], _sidecar(out, ".manifest.json"))
    print(json.dumps(summary.to_dict()))
    return 0


def cmd_compare(args) -> int:
    started = _now()
    model_a, records = _prompts_and_model(args, args.model_a)
    model_b, _ = _prompts_and_model(args, args.model_b)
    oracle = _load_oracle(args.oracle)
    counts, audit = compare(model_a, model_b, [r.query for r in records], oracle,
                            seed=args.seed, max_len=args.max_len, delta_tie=args.delta_tie)
    out = Path(args.out)
    _write_jsonl(audit, out)
    config = {"model_a": str(args.model_a), "model_b": str(args.model_b),
              "prompts": str(args.prompts), "oracle": oracle.to_dict(),
              "max_len": args.max_len, "seed": args.seed, "delta_tie": args.delta_tie}
    _finish(_manifest("compare", config, args.seed, started), [out],
            _sidecar(out, ".manifest.json"))
    print(json.dumps(counts))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="clha", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_flags(sp):
        sp.add_argument("--tokenizer", choices=("symbols", "bytes"), default="symbols")
        sp.add_argument("--vocab", type=int, default=None,
                        help="vocabulary size (default: from the dataset manifest, else 16)")

    g = sub.add_parser("gen", help="generate a synthetic preference dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--records", type=int, default=2000)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--rank-len", type=int, choices=(2, 3), default=2)
    g.add_argument("--vocab", type=int, default=16)
    g.add_argument("--query-len", type=int, default=4)
    g.add_argument("--response-len", type=int, default=8)
    g.add_argument("--oracle", help="oracle JSON {target: [...], penalty: [...]}")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("train-rm", help="train (or build an oracle-backed) reward scorer")
    r.add_argument("--data", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--oracle-backed", action="store_true")
    r.add_argument("--oracle")
    r.add_argument("--epochs", type=int, default=20)
    r.add_argument("--lr", type=float, default=0.05)
    r.add_argument("--batch-size", type=int, default=16)
    r.add_argument("--optimizer", choices=("sgd", "adam"), default="adam")
    r.add_argument("--seed", type=int, default=0)
    data_flags(r)
    r.set_defaults(func=cmd_train_rm)

    s = sub.add_parser("rescore", help="attach rewards, lambda and k-gates to a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--scorer", required=True)
    s.add_argument("--epsilon", type=float, default=0.05, help="'inf' gates every pair")
    s.add_argument("--out", required=True)
    s.add_argument("--report")
    data_flags(s)
    s.set_defaults(func=cmd_rescore)

    t = sub.add_parser("train", help="align a tiny LM under one objective")
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--objective", choices=OBJECTIVES)
    t.add_argument("--hinge-as-printed", "--eq4-as-printed", dest="hinge_as_printed",
                   action="store_true",
                   help="use the literal hinge orientation max(0, p_i - p_j + xi)")
    t.add_argument("--scorer")
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--context", type=int, default=2)
    t.add_argument("--out", required=True)
    data_flags(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="sample and score a trained model")
    e.add_argument("--model", required=True)
    e.add_argument("--prompts", required=True)
    e.add_argument("--oracle", required=True)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--refs", choices=("none", "chosen", "self"), default="chosen")
    e.add_argument("--max-len", type=int, default=9)
    e.add_argument("--out", required=True)
    data_flags(e)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("compare", help="oracle win/tie/loss between two models")
    c.add_argument("--model-a", required=True)
    c.add_argument("--model-b", required=True)
    c.add_argument("--prompts", required=True)
    c.add_argument("--oracle", required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--max-len", type=int, default=9)
    c.add_argument("--delta-tie", type=float, default=1e-9)
    c.add_argument("--out", required=True)
    data_flags(c)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DataError) as exc:
        print(f"clha {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"clha {args.command}: training failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
