"""Truncated Hölder diffusion and clamped drift coefficients.

The diffusion is built from a concave quadratic in ``x``,

    g(t, y, x)**2 = scale(t, y) * (-x**2 + alpha(t, y) * x + beta(t, y)),

which is nonnegative exactly on the root interval [r1, r2].  ``bar_g`` is the
square root there and zero outside; ``bar_a`` evaluates the drift at ``x``
clamped into [r1, r2].  Both are then defined on the whole real line.

All coefficient callables take ``(t, y)`` or ``(t, y, x)`` and must accept
numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InputDomainError, RootConditionError
from .transition import GreenhalghParams


def _one(t, y):
    return np.ones_like(np.asarray(y, dtype=float))


@dataclass(frozen=True)
class QuadraticDiffusionSpec:
    alpha: Callable
    beta: Callable
    scale: Callable = _one
    M: float = math.inf
    H: float = math.inf

    def coefficients(self, t, y):
        y = np.asarray(y, dtype=float)
        al = np.broadcast_to(np.asarray(self.alpha(t, y), dtype=float), y.shape)
        be = np.broadcast_to(np.asarray(self.beta(t, y), dtype=float), y.shape)
        sc = np.broadcast_to(np.asarray(self.scale(t, y), dtype=float), y.shape)
        return al, be, sc


@dataclass(frozen=True)
class DriftSpec:
    a: Callable
    M: float = math.inf
    L: float = math.inf


def _roots(al, be):
    disc = al * al + 4.0 * be
    if np.any(disc < 0):
        raise RootConditionError(
            f"alpha^2 + 4 beta < 0 (min {float(np.min(disc)):.6g}); the quadratic has no real roots"
        )
    sq = np.sqrt(disc)
    return (al - sq) / 2.0, (al + sq) / 2.0


def roots(spec: QuadraticDiffusionSpec, t, y):
    """Root interval (r1, r2) with r1 <= r2; raises RootConditionError if none exists."""
    al, be, _ = spec.coefficients(t, y)
    r1, r2 = _roots(al, be)
    if r1.ndim == 0:
        return float(r1), float(r2)
    return r1, r2


def bar_g(spec: QuadraticDiffusionSpec, t, y, x):
    x = np.asarray(x, dtype=float)
    al, be, sc = spec.coefficients(t, y)
    r1, r2 = _roots(al, be)
    # factored form so the roots give exactly 0 and the interior is never negative
    q = sc * (x - r1) * (r2 - x)
    inside = (x >= r1) & (x <= r2)
    out = np.where(inside, np.sqrt(np.maximum(q, 0.0)), 0.0)
    return out if out.ndim else float(out)


def bar_a(drift: DriftSpec, spec: QuadraticDiffusionSpec, t, y, x):
    x = np.asarray(x, dtype=float)
    al, be, _ = spec.coefficients(t, y)
    r1, r2 = _roots(al, be)
    xc = np.minimum(np.maximum(x, r1), r2)
    out = np.asarray(drift.a(t, np.asarray(y, dtype=float), xc), dtype=float)
    return out if out.ndim else float(out)


def max_bar_g(spec: QuadraticDiffusionSpec, t, y):
    """Peak of bar_g over x, sqrt(scale * (alpha^2/4 + beta)), reached at x = alpha/2."""
    al, be, sc = spec.coefficients(t, y)
    out = np.sqrt(sc * (al * al / 4.0 + be))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class TruncatedModel:
    """A drift/diffusion pair bundled as the two callables the engine steps with."""

    drift: DriftSpec
    diffusion: QuadraticDiffusionSpec

    def a(self, t, y, x):
        return bar_a(self.drift, self.diffusion, t, y, x)

    def g(self, t, y, x):
        return bar_g(self.diffusion, t, y, x)


# -- Greenhalgh ---------------------------------------------------------------


def greenhalgh_constants(p: GreenhalghParams):
    """Valid (M, H, L) for a constant contact rate; infinite (undeclared) otherwise."""
    if p.contact.kind != "constant" or p.contact.lambda0 <= 0:
        return math.inf, math.inf, math.inf
    lam, k = p.contact.lambda0, p.mu + p.gamma
    s = lam + k
    M = max(s, s / lam, s * s / lam, s / (4.0 * math.sqrt(lam)))
    H = max(math.sqrt(s), s / math.sqrt(lam))
    L = max(lam + 3.0 * k, s * s / lam, 2.0 * k * s / lam)
    return M, H, L


def greenhalgh_coeffs(p: GreenhalghParams, M=None, H=None, L=None):
    """Drift and diffusion specs of the infected-count equation.

    scale = lambda(y)/y, alpha = y (lambda + mu + gamma)/lambda, beta = 0, so the
    root interval is [0, y (1 + (mu + gamma)/lambda)].  For y <= 0 both
    coefficients vanish.
    """
    k = p.mu + p.gamma
    lam = p.contact
    M0, H0, L0 = greenhalgh_constants(p)

    def pos(y):
        y = np.asarray(y, dtype=float)
        ok = y > 0
        lv = np.asarray(lam(np.where(ok, y, 1.0)), dtype=float)
        ok = ok & (lv > 0)
        return y, ok, np.where(ok, y, 1.0), np.where(ok, lv, 1.0)

    def alpha(t, y):
        y, ok, ys, ls = pos(y)
        return np.where(ok, ys * (ls + k) / ls, 0.0)

    def beta(t, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def scale(t, y):
        y, ok, ys, ls = pos(y)
        return np.where(ok, ls / ys, 1.0)

    def a(t, y, x):
        y, ok, ys, ls = pos(y)
        x = np.asarray(x, dtype=float)
        return np.where(ok, ls * x * (ys - x) / ys - k * x, 0.0)

    drift = DriftSpec(a, M=M0 if M is None else M, L=L0 if L is None else L)
    diff = QuadraticDiffusionSpec(alpha, beta, scale, M=M0 if M is None else M, H=H0 if H is None else H)
    return drift, diff


# -- empirical audit of the assumptions ----------------------------------------


@dataclass
class AssumptionReport:
    M_hat: float
    H_hat: float
    L_hat: float
    M_declared: float
    H_declared: float
    L_declared: float
    n_samples: int
    flags: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flags


def validate_assumptions(drift: DriftSpec, spec: QuadraticDiffusionSpec, box, n: int, rng, t: float = 0.0):
    """Estimate growth, Hölder and Lipschitz constants by sampling ``box``.

    ``box`` is ((y_lo, y_hi), (x_lo, x_hi)).  Growth is measured against
    1 + |y| (diffusion peak, |alpha|, |beta|) and 1 + |y| + |x| (drift).
    Exceeded declared constants are listed in ``flags``; nothing is raised.
    """
    if n < 2:
        raise InputDomainError("need at least 2 samples")
    (ylo, yhi), (xlo, xhi) = box
    y1, y2 = rng.uniform(ylo, yhi, n), rng.uniform(ylo, yhi, n)
    x1, x2 = rng.uniform(xlo, xhi, n), rng.uniform(xlo, xhi, n)
    # half the pairs are near neighbours at log-uniform separations; the Hölder
    # ratio is largest for close pairs
    near = np.arange(n) % 2 == 1
    k = int(near.sum())
    sep = 10.0 ** rng.uniform(-8.0, 0.0, (2, k))
    sign = rng.choice([-1.0, 1.0], (2, k))
    y2[near] = np.clip(y1[near] + sign[0] * sep[0] * (yhi - ylo), ylo, yhi)
    x2[near] = np.clip(x1[near] + sign[1] * sep[1] * (xhi - xlo), xlo, xhi)

    al, be, _ = spec.coefficients(t, y1)
    peak = np.asarray(max_bar_g(spec, t, y1))
    a1 = np.asarray(bar_a(drift, spec, t, y1, x1))
    a2 = np.asarray(bar_a(drift, spec, t, y2, x2))
    g1 = np.asarray(bar_g(spec, t, y1, x1))
    g2 = np.asarray(bar_g(spec, t, y2, x2))

    ygrowth = 1.0 + np.abs(y1)
    m_diff = np.max(np.maximum(np.maximum(np.abs(al), np.abs(be)), peak) / ygrowth)
    m_drift = np.max(np.abs(a1) / (ygrowth + np.abs(x1)))
    M_hat = float(max(m_diff, m_drift))

    dist_h = np.sqrt(np.abs(y1 - y2)) + np.sqrt(np.abs(x1 - x2))
    dist_l = np.abs(y1 - y2) + np.abs(x1 - x2)
    pos_h, pos_l = dist_h > 0, dist_l > 0
    H_hat = float(np.max(np.abs(g1 - g2)[pos_h] / dist_h[pos_h], initial=0.0))
    L_hat = float(np.max(np.abs(a1 - a2)[pos_l] / dist_l[pos_l], initial=0.0))

    M_decl = max(drift.M, spec.M)
    flags = []
    if m_diff > spec.M:
        flags.append(f"M: diffusion growth estimate {m_diff:.6g} exceeds declared {spec.M:.6g}")
    if m_drift > drift.M:
        flags.append(f"M: drift growth estimate {m_drift:.6g} exceeds declared {drift.M:.6g}")
    if H_hat > spec.H:
        flags.append(f"H: estimate {H_hat:.6g} exceeds declared {spec.H:.6g}")
    if L_hat > drift.L:
        flags.append(f"L: estimate {L_hat:.6g} exceeds declared {drift.L:.6g}")
    return AssumptionReport(M_hat, H_hat, L_hat, M_decl, spec.H, drift.L, n, flags)
