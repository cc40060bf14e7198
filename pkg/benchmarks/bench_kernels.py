"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--vocab 16] [--context 2] [--len 13] [--repeat 5]

Reports the best-of-``repeat`` time per call for each kernel and the
end-to-end cost of one training epoch under both backends.
"""

import argparse
import time

import numpy as np

from clha import _pykernels

try:
    from clha import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat, number):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        times.append((time.perf_counter() - t0) / number)
    return min(times)


def bench_kernels(mod, V, C, L, repeat, number):
    R = (V + 1) ** C
    rng = np.random.default_rng(0)
    params = rng.normal(size=(R + 1) * V)
    seq = rng.integers(0, V, L)
    start = L // 3
    grad = np.zeros_like(params)
    return {
        "token_logprobs": best_of(lambda: mod.token_logprobs(params, V, C, R, seq, start), repeat, number),
        "accumulate_grad": best_of(lambda: mod.accumulate_grad(grad, params, V, C, R, seq, start, 0.5),
                                   repeat, number),
        "next_token_probs": best_of(lambda: mod.next_token_probs(params, V, C, R, seq), repeat, number),
    }


def bench_epoch(backend_mod, repeat):
    # swap the kernels the model module calls, then time a full training epoch
    from clha import lm
    from clha.lm import TinyLM
    from clha.oracle import DEFAULT_ORACLE
    from clha.prefdata import SynthConfig, generate_synthetic
    from clha.reward import RewardScorer
    from clha.trainer import TrainConfig, train

    data = generate_synthetic(SynthConfig(records=2000, noise=0.2), 42)
    scorer = RewardScorer.from_oracle(DEFAULT_ORACLE, 16)
    cfg = TrainConfig(epochs=1, threads=1)
    saved = lm._kernels
    try:
        lm._kernels = backend_mod
        return best_of(lambda: train(TinyLM.uniform(16, 2), scorer, data, cfg), repeat, 1)
    finally:
        lm._kernels = saved


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--vocab", type=int, default=16)
    ap.add_argument("--context", type=int, default=2)
    ap.add_argument("--len", type=int, default=13, help="query + response length")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=2000)
    ap.add_argument("--skip-epoch", action="store_true")
    args = ap.parse_args()

    backends = {"python": _pykernels}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    else:
        print("compiled kernels unavailable; timing the numpy fallback only")

    results = {name: bench_kernels(mod, args.vocab, args.context, args.len, args.repeat, args.number)
               for name, mod in backends.items()}
    print(f"V={args.vocab} C={args.context} L={args.len}, best of {args.repeat}")
    print(f"{'kernel':<18}" + "".join(f"{name:>14}" for name in backends) + f"{'speedup':>10}")
    for kernel in results["python"]:
        row = [results[name][kernel] for name in backends]
        speed = f"{row[0] / row[-1]:>9.1f}x" if len(row) > 1 else ""
        print(f"{kernel:<18}" + "".join(f"{t * 1e6:>11.2f} us" for t in row) + speed)

    if not args.skip_epoch:
        epoch = {name: bench_epoch(mod, max(1, args.repeat // 2)) for name, mod in backends.items()}
        row = [epoch[name] for name in backends]
        speed = f"{row[0] / row[-1]:>9.1f}x" if len(row) > 1 else ""
        print(f"{'train epoch':<18}" + "".join(f"{t:>12.3f} s" for t in row) + speed)


if __name__ == "__main__":
    main()
