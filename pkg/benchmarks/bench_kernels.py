"""Compare the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--n 20000] [--repeat 5]

Both backends are imported directly, so one process times both. Results must
agree bit for bit; the script checks that before reporting timings.
"""
import argparse
import random
import sys
import timeit

from anfbsim._kernels import _pure
from anfbsim.risk.fuzzy import FuzzyRuleBase

try:
    from anfbsim._kernels import _fast
except ImportError:  # extension not built
    _fast = None


def rule_kernel(mod, rb):
    mf, ante = [], []
    for name in rb.var_order:
        for lab in ("Low", "Medium", "High"):
            m = rb.variables[name].terms[lab]
            mf.extend((m.a, m.b, m.c))
    for r in rb.rules:
        for name in rb.var_order:
            lab = r.antecedents.get(name)
            ante.append(-1 if lab is None else ("Low", "Medium", "High").index(lab))
    return mod.RuleKernel(mf, len(rb.var_order), 3, ante)


def workloads(mod, rb, inputs, fvs, labels):
    k = rule_kernel(mod, rb)
    w0 = list(rb.weights)

    def score():
        for z in inputs:
            k.score(z, w0)

    def adapt():
        w = w0
        for z, y in zip(inputs, labels):
            w, _ = k.adapt(z, w, float(y), 0.05)
        return w

    def sgd():
        w, b = [0.0] * 7, 0.0
        for x, y in zip(fvs, labels):
            w, b = mod.logit_sgd(w, b, x, y, 0.1, 0.0)
        return w, b

    return {"fuzzy score": score, "fuzzy adapt": adapt, "logistic sgd": sgd}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args(argv)
    if _fast is None:
        print("compiled extension not available; build with pip install -e .")
        return 1
    rng = random.Random(args.seed)
    rb = FuzzyRuleBase.default()
    inputs = [[rng.random() for _ in range(3)] for _ in range(args.n)]
    fvs = [[rng.random() for _ in range(7)] for _ in range(args.n)]
    labels = [int(rng.random() < 0.05) for _ in range(args.n)]
    pure = workloads(_pure, rb, inputs, fvs, labels)
    fast = workloads(_fast, rb, inputs, fvs, labels)
    for name in ("fuzzy adapt", "logistic sgd"):
        if pure[name]() != fast[name]():
            print(f"backends disagree on {name}")
            return 1
    print(f"{'kernel':<14}{'pure (ms)':>12}{'compiled (ms)':>15}{'speedup':>10}   n={args.n}")
    for name in pure:
        tp = min(timeit.repeat(pure[name], number=1, repeat=args.repeat)) * 1e3
        tf = min(timeit.repeat(fast[name], number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<14}{tp:>12.1f}{tf:>15.1f}{tp / tf:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
