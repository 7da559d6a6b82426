"""Hot per-transaction kernels: fuzzy rule evaluation and logistic SGD.

The compiled extension is used when importable; set ``ANFBSIM_PURE=1`` to force
the pure-Python fallback. ``BACKEND`` names the active implementation.
"""
import os

from . import _pure

if os.environ.get("ANFBSIM_PURE"):
    _impl = _pure
    BACKEND = "pure"
else:
    try:
        from . import _fast as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"

logistic = _impl.logistic
logit_score = _impl.logit_score
logit_sgd = _impl.logit_sgd
logit_sgd_pass = _impl.logit_sgd_pass
triangular = _impl.triangular
RuleKernel = _impl.RuleKernel

__all__ = ["BACKEND", "logistic", "logit_score", "logit_sgd", "logit_sgd_pass",
           "triangular", "RuleKernel"]
