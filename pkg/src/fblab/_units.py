"""Logarithm base handling.

All quantities are computed in nats internally and converted on output.
The base is either 2 (bits, the default) or e (nats).
"""

import math

import numpy as np

INF = math.inf


def ln_base(base=2):
    """Natural log of the information base; accepts 2, e or the string 'e'."""
    if isinstance(base, str):
        if base.lower() in ("e", "nat", "nats"):
            return 1.0
        base = float(base)
    base = float(base)
    if not base > 1.0:
        raise ValueError(f"log base must exceed 1, got {base}")
    return math.log(base)


def log_e(base=2):
    """log_base(e), the factor that appears in Pinsker-type constants."""
    return 1.0 / ln_base(base)


def units(base=2):
    lb = ln_base(base)
    if abs(lb - math.log(2.0)) < 1e-15:
        return "bits"
    if lb == 1.0:
        return "nats"
    return f"log-base-{math.exp(lb):.6g}"


def blog(x, base=2):
    """Logarithm in the configured base (array aware, log 0 = -inf)."""
    with np.errstate(divide="ignore"):
        return np.log(x) / ln_base(base)


def bexp(v, base=2):
    """Inverse of blog: base ** v."""
    return np.exp(np.asarray(v, dtype=float) * ln_base(base))
