"""Two-state jump model: drift, covariance, square-root diffusion and a jump-chain oracle.

The model has eight elementary changes of the state (S1, S2), each firing with
probability ``rate * dt`` during a step of length ``dt``:

    index  change      rate
    0      (-1,  0)    d1   death in S1
    1      (+1,  0)    b1   birth in S1
    2      ( 0, -1)    d2   death in S2
    3      ( 0, +1)    b2   birth in S2
    4      (-1, +1)    m12  transfer S1 -> S2
    5      (+1, -1)    m21  transfer S2 -> S1
    6      (-1, -1)    m11  joint loss
    7      (+1, +1)    m22  joint gain

with the residual probability assigned to "no change".  Jump amplitudes
``lam1``/``lam2`` scale the first and second coordinate of every change.
All rate callables take ``(t, s1, s2)`` and must accept numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import AssumptionViolation, DegenerateMatrixError, InputDomainError, StepSizeError

Rate = Callable[[float, np.ndarray, np.ndarray], np.ndarray]

RATE_NAMES = ("d1", "b1", "d2", "b2", "m12", "m21", "m11", "m22")
CHANGES = np.array(
    [[-1, 0], [1, 0], [0, -1], [0, 1], [-1, 1], [1, -1], [-1, -1], [1, 1]],
    dtype=np.int64,
)


def _zero(t, s1, s2):
    return np.zeros(np.broadcast(np.asarray(s1), np.asarray(s2)).shape)


@dataclass(frozen=True)
class TransitionTable:
    d1: Rate = _zero
    b1: Rate = _zero
    d2: Rate = _zero
    b2: Rate = _zero
    m12: Rate = _zero
    m21: Rate = _zero
    m11: Rate = _zero
    m22: Rate = _zero
    lam1: float = 1.0
    lam2: float = 1.0

    def __post_init__(self):
        if not (self.lam1 >= 0 and self.lam2 >= 0):
            raise InputDomainError(f"jump amplitudes must be >= 0, got {self.lam1}, {self.lam2}")

    @property
    def changes(self) -> np.ndarray:
        """Jump vectors scaled by the amplitudes, shape (8, 2)."""
        return CHANGES * np.array([self.lam1, self.lam2])

    def rates(self, t, s1, s2) -> np.ndarray:
        """Evaluate all eight rates; result has shape ``(8,) + broadcast(s1, s2).shape``.

        Raises InputDomainError if a rate callable fails or returns a non-finite value.
        """
        s1 = np.asarray(s1, dtype=float)
        s2 = np.asarray(s2, dtype=float)
        shape = np.broadcast(s1, s2).shape
        out = np.empty((8,) + shape)
        for k, name in enumerate(RATE_NAMES):
            try:
                val = getattr(self, name)(t, s1, s2)
            except (ArithmeticError, ValueError) as exc:
                raise InputDomainError(f"rate {name} failed at t={t}: {exc}") from exc
            out[k] = np.broadcast_to(np.asarray(val, dtype=float), shape)
        if not np.all(np.isfinite(out)):
            raise InputDomainError(f"non-finite rate at t={t}")
        return out


@dataclass(frozen=True)
class CovarianceEntries:
    """Entries of the symmetric 2x2 matrix [[a, b], [b, c]]."""

    a: float
    b: float
    c: float

    @property
    def w(self) -> float:
        return math.sqrt(max(self.a * self.c - self.b * self.b, 0.0))

    @property
    def d(self) -> float:
        return math.sqrt(self.a + self.c + 2.0 * self.w)

    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.b, self.c]])


def drift_vector(table: TransitionTable, t, s1, s2):
    """Mean change per unit time, ``E[dS] / dt``, as a pair (component 1, component 2)."""
    d1, b1, d2, b2, m12, m21, m11, m22 = table.rates(t, s1, s2)
    mu1 = (-d1 + b1 - m12 + m21 + m22 - m11) * table.lam1
    mu2 = (-d2 + b2 + m12 - m21 + m22 - m11) * table.lam2
    if mu1.ndim == 0:
        return float(mu1), float(mu2)
    return mu1, mu2


def covariance_entries(table: TransitionTable, t, s1, s2):
    """Vectorised (a, b, c) of ``E[dS dS^T] / dt``; raises on negative rates."""
    r = table.rates(t, s1, s2)
    if np.any(r < 0):
        k = int(np.argwhere(r < 0)[0][0])
        raise AssumptionViolation(f"rate {RATE_NAMES[k]} is negative at t={t}")
    d1, b1, d2, b2, m12, m21, m11, m22 = r
    ma = m12 + m21 + m11 + m22
    a = (d1 + b1 + ma) * table.lam1**2
    c = (d2 + b2 + ma) * table.lam2**2
    b = (-m12 - m21 + m22 + m11) * table.lam1 * table.lam2
    return a, b, c


def covariance_matrix(table: TransitionTable, t, s1, s2) -> CovarianceEntries:
    a, b, c = covariance_entries(table, t, s1, s2)
    return CovarianceEntries(float(a), float(b), float(c))


def sqrt_entries(a, b, c, rtol: float = 1e-12):
    """Vectorised symmetric square root of [[a, b], [b, c]].

    Returns the entries (p, q, r) of B = [[p, q], [q, r]] with B @ B = V, using
    B = ([[a + w, b], [b, c + w]]) / d, w = sqrt(ac - b^2), d = sqrt(a + c + 2w).
    A discriminant that is negative only by rounding (relative ``rtol``) is
    treated as zero.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(c)), np.abs(b))
    disc = a * c - b * b
    tol = rtol * scale * scale
    if np.any(a < -rtol * scale) or np.any(c < -rtol * scale) or np.any(disc < -tol):
        raise DegenerateMatrixError("matrix is not positive semidefinite")
    w = np.sqrt(np.maximum(disc, 0.0))
    d2 = np.maximum(a, 0.0) + np.maximum(c, 0.0) + 2.0 * w
    zero = scale == 0
    if np.any((d2 <= 0) & ~zero):
        raise DegenerateMatrixError("trace term a + c + 2w vanishes for a nonzero matrix")
    d = np.sqrt(np.where(zero, 1.0, d2))
    p = np.where(zero, 0.0, (a + w) / d)
    q = np.where(zero, 0.0, b / d)
    r = np.where(zero, 0.0, (c + w) / d)
    return p, q, r


def sqrt_matrix(v: CovarianceEntries) -> np.ndarray:
    """Symmetric square root of a PSD 2x2 matrix."""
    p, q, r = sqrt_entries(v.a, v.b, v.c)
    return np.array([[float(p), float(q)], [float(q), float(r)]])


# -- Greenhalgh instantiation -------------------------------------------------


@dataclass(frozen=True)
class ContactRate:
    """Contact-rate function of the total population.

    kind "constant": lambda0; "affine": lambda0 + lambda1*N;
    "saturating": lambda0*N / (c + N).
    """

    kind: str = "constant"
    lambda0: float = 0.2
    lambda1: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "affine", "saturating"):
            raise InputDomainError(f"unknown contact-rate family {self.kind!r}")
        if self.lambda0 < 0 or self.lambda1 < 0:
            raise InputDomainError("contact-rate parameters must be >= 0")
        if self.kind == "saturating" and self.c <= 0:
            raise InputDomainError("saturating contact rate needs c > 0")

    def __call__(self, n):
        n = np.maximum(np.asarray(n, dtype=float), 0.0)
        if self.kind == "constant":
            out = np.full_like(n, self.lambda0)
        elif self.kind == "affine":
            out = self.lambda0 + self.lambda1 * n
        else:
            out = self.lambda0 * n / (self.c + n)
        return out if out.ndim else float(out)

    def check_monotone(self, upper: float = 1e4, n: int = 2001) -> bool:
        grid = np.linspace(0.0, upper, n)
        vals = np.asarray(self(grid))
        return bool(np.all(vals >= 0) and np.all(np.diff(vals) >= 0))


@dataclass(frozen=True)
class GreenhalghParams:
    mu: float = 0.01
    gamma: float = 0.05
    contact: ContactRate = field(default_factory=ContactRate)

    def __post_init__(self):
        if not self.mu > 0:
            raise InputDomainError(f"mu must be > 0, got {self.mu}")
        if not self.gamma >= 0:
            raise InputDomainError(f"gamma must be >= 0, got {self.gamma}")
        if not self.contact.check_monotone():
            raise InputDomainError("contact rate must be nonnegative and non-decreasing")


def infection_rate(p: GreenhalghParams, s1, s2):
    """lambda(N) * S1 * S2 / N, taken as 0 when N = 0."""
    s1 = np.asarray(s1, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    n = s1 + s2
    safe = np.where(n > 0, n, 1.0)
    return np.where(n > 0, np.asarray(p.contact(n)) * s1 * s2 / safe, 0.0)


def greenhalgh_table(p: GreenhalghParams) -> TransitionTable:
    mu, gamma = p.mu, p.gamma
    return TransitionTable(
        d1=lambda t, s1, s2: mu * np.asarray(s1, dtype=float) + 0.0 * np.asarray(s2),
        b1=lambda t, s1, s2: mu * (np.asarray(s1, dtype=float) + s2),
        d2=lambda t, s1, s2: mu * np.asarray(s2, dtype=float) + 0.0 * np.asarray(s1),
        m12=lambda t, s1, s2: infection_rate(p, s1, s2),
        m21=lambda t, s1, s2: gamma * np.asarray(s2, dtype=float) + 0.0 * np.asarray(s1),
        lam1=1.0,
        lam2=1.0,
    )


# -- jump chain ---------------------------------------------------------------


def _select(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Index of the change picked by ``u`` in (0, 1]; 8 means "no change".

    Change j owns the interval (cum[j-1], cum[j]]; a draw on a boundary goes to
    the lower index.
    """
    return np.sum(cum < u[None, ...], axis=0)


def step_probabilities(table: TransitionTable, t, s1, s2, dt: float) -> np.ndarray:
    probs = table.rates(t, s1, s2) * dt
    if np.any(probs < 0):
        raise AssumptionViolation(f"negative transition probability at t={t}")
    total = probs.sum(axis=0)
    if np.any(total > 1.0):
        raise StepSizeError(
            f"step dt={dt} too large: transition probabilities sum to {float(np.max(total)):.6g} > 1"
        )
    return probs


def jump_step_batch(table: TransitionTable, t, s1, s2, dt: float, u):
    """Advance arrays of states by one step given uniforms ``u`` in (0, 1]."""
    s1, s2, u = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (s1, s2, u)))
    probs = step_probabilities(table, t, s1, s2, dt)
    cum = np.cumsum(probs, axis=0)
    idx = _select(cum, u)
    moves = np.vstack([table.changes, [[0.0, 0.0]]])[idx]
    return s1 + moves[..., 0], s2 + moves[..., 1]


def jump_step(table: TransitionTable, state, dt: float, rng: np.random.Generator, t: float = 0.0):
    """Sample one of the nine changes with a single uniform draw and apply it."""
    u = 1.0 - rng.random()
    s1, s2 = jump_step_batch(table, t, float(state[0]), float(state[1]), dt, u)
    return float(s1), float(s2)


def n_steps_for(T: float, dt: float) -> int:
    if T < 0 or dt <= 0:
        raise InputDomainError("need T >= 0 and dt > 0")
    n = int(round(T / dt))
    if not math.isclose(n * dt, T, rel_tol=1e-9, abs_tol=1e-12):
        raise InputDomainError(f"dt={dt} does not divide T={T}")
    return n


def simulate_jump_chain(table: TransitionTable, state0, dt: float, T: float, rng: np.random.Generator):
    """Iterate ``jump_step``; returns an array of shape (T/dt + 1, 2)."""
    n = n_steps_for(T, dt)
    path = np.empty((n + 1, 2))
    path[0] = state0
    s = (float(state0[0]), float(state0[1]))
    for k in range(n):
        s = jump_step(table, s, dt, rng, t=k * dt)
        path[k + 1] = s
    return path


def simulate_jump_chain_batch(table: TransitionTable, state0, dt: float, T: float, uniforms: np.ndarray):
    """Vectorised chains: ``uniforms`` has shape (paths, T/dt) with values in (0, 1].

    Path i with uniforms[i] equals ``simulate_jump_chain`` fed the same draws.
    """
    n = n_steps_for(T, dt)
    uniforms = np.asarray(uniforms)
    if uniforms.shape[-1] != n:
        raise InputDomainError(f"expected {n} uniforms per path, got {uniforms.shape[-1]}")
    m = uniforms.shape[0]
    out = np.empty((m, n + 1, 2))
    s1 = np.full(m, float(state0[0]))
    s2 = np.full(m, float(state0[1]))
    out[:, 0, 0], out[:, 0, 1] = s1, s2
    for k in range(n):
        s1, s2 = jump_step_batch(table, k * dt, s1, s2, dt, uniforms[:, k])
        out[:, k + 1, 0], out[:, k + 1, 1] = s1, s2
    return out
