"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Prints one line per kernel with the best-of-N time for each backend and
the speedup. Inputs mirror the training loop (batch 128, K=2) and an
evaluation pass (2400 sorted scores).
"""
import argparse
import timeit

import numpy as np

from privdistill import kernels


def cases(rng):
    logits = rng.normal(size=(128, 2)) * 3
    teacher = rng.normal(size=(128, 2)) * 3
    labels = rng.integers(0, 2, 128).astype(np.int64)
    alphas = rng.uniform(size=128)
    scores = np.sort(rng.random(2400))[::-1].copy()
    score_labels = (rng.random(2400) < 0.1).astype(np.int64)
    return {
        "ce_loss_grad (128x2)": lambda k: k.ce_loss_grad(logits, labels, 1e-12),
        "distill_loss_grad (128x2)": lambda k: k.distill_loss_grad(logits, teacher, labels, alphas, 2.0, 1e-12),
        "ranking_summary (2400)": lambda k: k.ranking_summary(scores, score_labels),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--number", type=int, default=200)
    args = parser.parse_args(argv)
    backends = kernels.backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<28}" + "".join(f"{name:>14}" for name in backends) + "   speedup")
    for label, fn in cases(rng).items():
        times = {}
        for name, mod in backends.items():
            t = min(timeit.repeat(lambda: fn(mod), number=args.number, repeat=args.repeat))
            times[name] = t / args.number * 1e6
        row = f"{label:<28}" + "".join(f"{times[n]:>11.1f} us" for n in backends)
        if "cython" in times:
            row += f"   {times['python'] / times['cython']:.1f}x"
        print(row)


if __name__ == "__main__":
    main()
