"""Ready-made coefficient callables for ``model = custom`` configs.

Configs refer to these as ``sisde.models:<name>``; any importable
``module:attr`` works the same way.
"""

from __future__ import annotations

import numpy as np


def _f(v):
    return np.asarray(v, dtype=float)


def zero(t, y, x=None):
    """Zero coefficient; usable as drift, alpha, beta or scale."""
    return np.zeros_like(_f(y) if x is None else _f(x) + _f(y))


def one(t, y):
    return np.ones_like(_f(y))


def unit_alpha(t, y):
    """alpha = 1: root interval [0, 1] when beta = 0."""
    return np.ones_like(_f(y))


def linear_alpha(t, y):
    """alpha = y, so the roots are 0 and y when beta = 0."""
    return _f(y)


def mean_reverting_drift(t, y, x):
    """Pull x towards y/2."""
    return 0.5 * _f(y) - _f(x)


def linear_drift(t, y, x):
    return -_f(x) + 0.0 * _f(y)


def degenerate_beta(t, y):
    """beta = -alpha^2/4 for alpha = 1, a double root at x = 1/2."""
    return np.full_like(_f(y), -0.25)
