"""Scalar helpers used throughout: logistic, softplus, mixing entropy."""

import numpy as np


def sigmoid(x):
    """Logistic function e^x / (1 + e^x), stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def softplus(x):
    """ln(1 + e^x), stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    if out.ndim == 0:
        return float(out)
    return out


def logit(u):
    """ln(u / (1 - u)) for u in (0, 1)."""
    u = np.asarray(u, dtype=np.float64)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ValueError("logit requires arguments strictly inside (0, 1)")
    out = np.log(u) - np.log1p(-u)
    if out.ndim == 0:
        return float(out)
    return out


def mixing_entropy(u):
    """u ln u + (1-u) ln(1-u), extended continuously by 0 at u in {0, 1}.

    Strictly negative on (0, 1) with minimum -ln 2 at u = 1/2.
    """
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < 0.0) or np.any(u > 1.0):
        raise ValueError("mixing_entropy requires arguments in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where((u > 0.0) & (u < 1.0),
                        u * np.log(np.where(u > 0.0, u, 1.0))
                        + (1.0 - u) * np.log(np.where(u < 1.0, 1.0 - u, 1.0)),
                        0.0)
    if term.ndim == 0:
        return float(term)
    return term
