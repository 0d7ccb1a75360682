"""l1 / l2 / elastic-net penalties on a weight vector and the norm
equivalence bounds relating them."""

import math

import numpy as np

from ..errors import ParameterError


def l1_norm(w):
    return float(np.abs(np.asarray(w, dtype=float)).sum())


def l2_norm(w):
    # scaled by the largest entry so tiny or huge weights neither underflow
    # nor overflow in the sum of squares
    w = np.asarray(w, dtype=float).ravel()
    m = float(np.abs(w).max()) if w.size else 0.0
    if m == 0.0 or not math.isfinite(m):
        return m
    z = w / m
    return m * math.sqrt(float(z @ z))


def ridge_penalty(w):
    w = np.asarray(w, dtype=float).ravel()
    return float(w @ w)


def elastic_net(w, l1, l2):
    return l1 * l1_norm(w) + l2 * l2_norm(w)


def elastic_net_bounds(w, l1, l2):
    """(lower, value, upper) with lower = (l1 + l2/sqrt(n)) |w|_1 and
    upper = (l1 + l2) |w|_1."""
    n = np.asarray(w).size
    a = l1_norm(w)
    return (l1 + l2 / math.sqrt(n)) * a, elastic_net(w, l1, l2), (l1 + l2) * a


def norm_chain_check(w, rtol=1e-12):
    """Return (|w|_2, |w|_1, sqrt(n) |w|_2) and assert it is non-decreasing
    up to rounding."""
    w = np.asarray(w, dtype=float).ravel()
    if w.size < 1:
        raise ParameterError("empty weight vector")
    two = l2_norm(w)
    one = l1_norm(w)
    top = math.sqrt(w.size) * two
    slack = rtol * max(top, 1e-300)
    if not (two <= one + slack and one <= top + slack):
        raise AssertionError(f"norm chain violated: {two!r} <= {one!r} <= {top!r}")
    return two, one, top
