"""Pure-Python kernels. Reference semantics for the compiled twin in ``_fast.pyx``.

Both implementations must perform the same floating-point operations in the same
order so that risk scores (and therefore ledger hashes) do not depend on which
backend was imported.
"""
from __future__ import annotations

import math
from typing import Sequence

from anfbsim.errors import CoverageError, DimensionError


def logistic(z: float) -> float:
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _dot_bias(w: Sequence[float], b: float, x: Sequence[float]) -> float:
    n = len(w)
    if len(x) != n:
        raise DimensionError(f"feature vector has {len(x)} components, model expects {n}")
    acc = 0.0
    for i in range(n):
        acc = acc + w[i] * x[i]
    return acc + b


def logit_score(w: Sequence[float], b: float, x: Sequence[float]) -> float:
    return logistic(_dot_bias(w, b, x))


def logit_sgd(w: Sequence[float], b: float, x: Sequence[float], y: float,
              lr: float, l2: float = 0.0) -> tuple[list[float], float]:
    """One log-loss SGD step. Returns (new_weights, new_bias)."""
    p = logistic(_dot_bias(w, b, x))
    step = lr * (p - y)
    decay = lr * l2
    out = [0.0] * len(w)
    for i in range(len(w)):
        out[i] = w[i] - step * x[i] - decay * w[i]
    return out, b - step


def logit_sgd_pass(w: Sequence[float], b: float, xs: Sequence[Sequence[float]],
                   ys: Sequence[float], lr: float, l2: float = 0.0) -> tuple[list[float], float]:
    w = list(w)
    for x, y in zip(xs, ys):
        w, b = logit_sgd(w, b, x, y, lr, l2)
    return w, b


def triangular(z: float, a: float, b: float, c: float) -> float:
    # a == b / b == c are shoulders that saturate at 1 beyond the peak
    if z < b:
        if a == b:
            return 1.0
        if z <= a:
            return 0.0
        return (z - a) / (b - a)
    if z > b:
        if b == c:
            return 1.0
        if z >= c:
            return 0.0
        return (c - z) / (c - b)
    return 1.0


class RuleKernel:
    """Packed zero-order Sugeno rule base.

    ``mf_params`` is flat: ``n_vars * n_labels * 3`` triangle parameters.
    ``antecedents`` is flat ``n_rules * n_vars`` label indices, ``-1`` where a
    rule does not test a variable.
    """

    def __init__(self, mf_params: Sequence[float], n_vars: int, n_labels: int,
                 antecedents: Sequence[int]):
        if len(mf_params) != n_vars * n_labels * 3:
            raise ValueError("mf_params has wrong length")
        if n_vars <= 0 or len(antecedents) % n_vars:
            raise ValueError("antecedents has wrong length")
        self.n_vars = n_vars
        self.n_labels = n_labels
        self.n_rules = len(antecedents) // n_vars
        self._mf = [float(v) for v in mf_params]
        self._ante = [int(v) for v in antecedents]

    def memberships(self, z: Sequence[float]) -> list[float]:
        if len(z) != self.n_vars:
            raise DimensionError(f"expected {self.n_vars} fuzzy inputs, got {len(z)}")
        mf = self._mf
        out = [0.0] * (self.n_vars * self.n_labels)
        for v in range(self.n_vars):
            zv = z[v]
            for lab in range(self.n_labels):
                j = v * self.n_labels + lab
                out[j] = triangular(zv, mf[3 * j], mf[3 * j + 1], mf[3 * j + 2])
        return out

    def firing(self, z: Sequence[float]) -> list[float]:
        mu = self.memberships(z)
        nv, nl, ante = self.n_vars, self.n_labels, self._ante
        betas = [0.0] * self.n_rules
        for k in range(self.n_rules):
            beta = 1.0
            for v in range(nv):
                lab = ante[k * nv + v]
                if lab >= 0:
                    beta = beta * mu[v * nl + lab]
            betas[k] = beta
        return betas

    def score(self, z: Sequence[float], weights: Sequence[float]) -> tuple[float, list[float]]:
        if len(weights) != self.n_rules:
            raise DimensionError(f"expected {self.n_rules} rule weights, got {len(weights)}")
        betas = self.firing(z)
        num = 0.0
        den = 0.0
        for k in range(self.n_rules):
            num = num + weights[k] * betas[k]
            den = den + betas[k]
        if den <= 0.0:
            raise CoverageError(f"no rule fires for inputs {list(z)}")
        return num / den, betas

    def adapt(self, z: Sequence[float], weights: Sequence[float], target: float,
              lr: float) -> tuple[list[float], float]:
        """Squared-error gradient step on the rule weights, clamped to [0, 1].

        Returns (new_weights, fuzzy score before the step).
        """
        r_f, betas = self.score(z, weights)
        den = 0.0
        for k in range(self.n_rules):
            den = den + betas[k]
        err = r_f - target
        out = [0.0] * self.n_rules
        for k in range(self.n_rules):
            w = weights[k] - lr * err * (betas[k] / den)
            if w < 0.0:
                w = 0.0
            elif w > 1.0:
                w = 1.0
            out[k] = w
        return out, r_f
