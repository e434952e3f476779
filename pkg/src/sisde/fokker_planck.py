"""Lattice densities evolved by the master equation and by a Fokker-Planck solver.

``master_step`` is the exact forward recursion of the fixed-step jump chain
on the integer lattice: each cell keeps ``p * (1 - sum_j p_j)`` and sends
``p * p_j`` to the neighbour reached by change j.  Mass that would leave the
lattice is booked in ``DensityField.lost``.

``fp_step`` is an explicit finite-volume update of

    dp/dt = -sum_i d_i(mu_i p) + 1/2 sum_ij d_i d_j(V_ij p)

written as a divergence of face fluxes with zero flux through the outer
faces, so the total mass is conserved up to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import AssumptionViolation, InputDomainError, StepSizeError
from .transition import CHANGES, TransitionTable, covariance_entries, drift_vector


@dataclass(frozen=True)
class DensityField:
    p: np.ndarray
    origin: tuple = (0.0, 0.0)
    spacing: tuple = (1.0, 1.0)
    lost: float = 0.0
    first_negative: tuple | None = None

    def __post_init__(self):
        if np.ndim(self.p) != 2:
            raise InputDomainError("density must be a 2-d array")
        if min(self.spacing) <= 0:
            raise InputDomainError("lattice spacing must be positive")

    @property
    def shape(self):
        return self.p.shape

    @property
    def mass(self) -> float:
        return float(self.p.sum())

    def axes(self):
        n1, n2 = self.p.shape
        return (
            self.origin[0] + self.spacing[0] * np.arange(n1),
            self.origin[1] + self.spacing[1] * np.arange(n2),
        )

    def coords(self):
        a1, a2 = self.axes()
        return np.meshgrid(a1, a2, indexing="ij")

    def same_geometry(self, other: "DensityField") -> bool:
        return (
            self.p.shape == other.p.shape
            and np.allclose(self.origin, other.origin)
            and np.allclose(self.spacing, other.spacing)
        )


def point_mass(shape, at, origin=(0.0, 0.0), spacing=(1.0, 1.0)) -> DensityField:
    """Unit mass in the cell whose coordinates are ``at``."""
    p = np.zeros(shape)
    i = int(round((at[0] - origin[0]) / spacing[0]))
    j = int(round((at[1] - origin[1]) / spacing[1]))
    if not (0 <= i < shape[0] and 0 <= j < shape[1]):
        raise InputDomainError(f"point {at} lies outside the lattice")
    p[i, j] = 1.0
    return DensityField(p, tuple(origin), tuple(spacing))


def _shift_into(out: np.ndarray, flow: np.ndarray, di: int, dj: int) -> float:
    """Add ``flow`` moved by (di, dj) into ``out``; return the mass that fell off."""
    n1, n2 = flow.shape
    src_i = slice(max(0, -di), min(n1, n1 - di))
    src_j = slice(max(0, -dj), min(n2, n2 - dj))
    dst_i = slice(max(0, di), min(n1, n1 + di))
    dst_j = slice(max(0, dj), min(n2, n2 + dj))
    out[dst_i, dst_j] += flow[src_i, src_j]
    keep = np.zeros(flow.shape, dtype=bool)
    keep[src_i, src_j] = True
    return float(flow[~keep].sum())


def master_step(field: DensityField, table: TransitionTable, dt: float, t: float = 0.0) -> DensityField:
    if table.lam1 != 1.0 or table.lam2 != 1.0 or tuple(field.spacing) != (1.0, 1.0):
        raise InputDomainError("master_step supports unit jumps on a unit lattice only")
    p = field.p
    x1, x2 = field.coords()
    probs = table.rates(t, x1, x2) * dt
    occ = p > 0
    if np.any(probs[:, occ] < 0):
        raise AssumptionViolation("negative rate at an occupied cell")
    total = probs.sum(axis=0)
    if np.any(total[occ] > 1.0):
        raise StepSizeError(f"dt={dt} too large: probabilities sum to {float(total[occ].max()):.6g} > 1")
    out = p * (1.0 - total)
    lost = field.lost
    for j, (di, dj) in enumerate(CHANGES):
        lost += _shift_into(out, p * probs[j], int(di), int(dj))
    return replace(field, p=out, lost=lost)


def evolve_master(field: DensityField, table: TransitionTable, dt: float, n_steps: int) -> DensityField:
    for k in range(n_steps):
        field = master_step(field, table, dt, t=k * dt)
    return field


# -- Fokker-Planck ---------------------------------------------------------------


def fields_from_table(table: TransitionTable, field: DensityField, t: float = 0.0):
    """Drift (2, n1, n2) and covariance entries (3, n1, n2) at the cell coordinates.

    Coordinates are clamped to the nonnegative quadrant before evaluation.
    """
    x1, x2 = field.coords()
    x1, x2 = np.maximum(x1, 0.0), np.maximum(x2, 0.0)
    mu = np.stack(drift_vector(table, t, x1, x2))
    cov = np.stack(covariance_entries(table, t, x1, x2))
    return mu, cov


def stable_dt(drift: np.ndarray, cov: np.ndarray, spacing) -> float:
    """Largest dt for which the explicit update is bounded by one in every cell.

    dt * max(V11/h1^2 + V22/h2^2 + |V12|/(h1 h2) + |mu1|/h1 + |mu2|/h2) <= 1.
    This is the 2-d combination of dt <= h^2/(2 D) and dt <= h/|mu|, with the
    cross term counted as well; it guarantees nonnegativity whenever the cross
    stencil does not dominate.
    """
    h1, h2 = spacing
    a, b, c = cov
    rate = a / h1**2 + c / h2**2 + np.abs(b) / (h1 * h2) + np.abs(drift[0]) / h1 + np.abs(drift[1]) / h2
    top = float(np.max(rate))
    return np.inf if top == 0 else 1.0 / top


def _upwind(vel, p, axis):
    lo = [slice(None)] * 2
    hi = [slice(None)] * 2
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    lo, hi = tuple(lo), tuple(hi)
    return np.maximum(vel[lo], 0.0) * p[lo] + np.minimum(vel[hi], 0.0) * p[hi]


def fp_step(field: DensityField, drift: np.ndarray, cov: np.ndarray, dt: float) -> DensityField:
    """One explicit step; zero flux through the outer faces.

    Raises StepSizeError if dt exceeds ``stable_dt``.  If a cell goes negative
    anyway (cross term), its index is stored in ``first_negative``.
    """
    drift = np.asarray(drift, dtype=float)
    cov = np.asarray(cov, dtype=float)
    p = field.p
    if drift.shape != (2,) + p.shape or cov.shape != (3,) + p.shape:
        raise InputDomainError("drift and covariance fields must match the lattice")
    limit = stable_dt(drift, cov, field.spacing)
    if dt > limit:
        raise StepSizeError(f"dt={dt} exceeds the stability bound {limit:.6g}")
    h1, h2 = field.spacing
    q11, q12, q22 = cov[0] * p, cov[1] * p, cov[2] * p

    # centred d/dx2 and d/dx1 of q12, zero outside the lattice
    qp = np.pad(q12, 1)
    d2q12 = (qp[1:-1, 2:] - qp[1:-1, :-2]) / (2.0 * h2)
    d1q12 = (qp[2:, 1:-1] - qp[:-2, 1:-1]) / (2.0 * h1)

    f1 = (
        _upwind(drift[0], p, 0)
        - 0.5 * (q11[1:, :] - q11[:-1, :]) / h1
        - 0.25 * (d2q12[1:, :] + d2q12[:-1, :])
    )
    f2 = (
        _upwind(drift[1], p, 1)
        - 0.5 * (q22[:, 1:] - q22[:, :-1]) / h2
        - 0.25 * (d1q12[:, 1:] + d1q12[:, :-1])
    )
    div = np.zeros_like(p)
    div[:-1, :] += f1 / h1
    div[1:, :] -= f1 / h1
    div[:, :-1] += f2 / h2
    div[:, 1:] -= f2 / h2
    out = p - dt * div
    neg = np.argwhere(out < 0)
    first = field.first_negative
    if first is None and len(neg):
        first = tuple(int(v) for v in neg[0])
    return replace(field, p=out, first_negative=first)


def evolve_fp(field: DensityField, drift, cov, dt: float, n_steps: int) -> DensityField:
    for _ in range(n_steps):
        field = fp_step(field, drift, cov, dt)
    return field


# -- comparison --------------------------------------------------------------------


def histogram_field(s1, s2, like: DensityField) -> DensityField:
    """Empirical distribution of samples on the lattice of ``like``.

    Samples are assigned to the nearest lattice point; those off the lattice
    are counted in ``lost`` (as a fraction of all samples).
    """
    s1 = np.asarray(s1, dtype=float).ravel()
    s2 = np.asarray(s2, dtype=float).ravel()
    n1, n2 = like.shape
    i = np.floor((s1 - like.origin[0]) / like.spacing[0] + 0.5).astype(np.int64)
    j = np.floor((s2 - like.origin[1]) / like.spacing[1] + 0.5).astype(np.int64)
    ok = (i >= 0) & (i < n1) & (j >= 0) & (j < n2)
    counts = np.zeros(like.shape)
    np.add.at(counts, (i[ok], j[ok]), 1.0)
    total = max(len(s1), 1)
    return DensityField(counts / total, like.origin, like.spacing, lost=float((~ok).sum()) / total)


def l1_distance(p, q) -> float:
    """L1 distance after normalising both to unit mass."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise InputDomainError(f"geometry mismatch: {p.shape} vs {q.shape}")
    sp, sq = p.sum(), q.sum()
    if sp <= 0 or sq <= 0:
        raise InputDomainError("cannot normalise an empty distribution")
    return float(np.abs(p / sp - q / sq).sum())


def compare_density(field: DensityField, other) -> float:
    if isinstance(other, DensityField):
        if not field.same_geometry(other):
            raise InputDomainError("geometry mismatch between densities")
        other = other.p
    return l1_distance(field.p, other)


def n_marginal(field: DensityField) -> np.ndarray:
    """Distribution of N = x1 + x2 on a unit lattice with integer origin, indexed by N."""
    if tuple(field.spacing) != (1.0, 1.0):
        raise InputDomainError("N marginal needs a unit lattice")
    o = int(round(field.origin[0] + field.origin[1]))
    n1, n2 = field.shape
    out = np.zeros(o + n1 + n2 - 1)
    idx = o + np.add.outer(np.arange(n1), np.arange(n2))
    np.add.at(out, idx.ravel(), field.p.ravel())
    return out


def unit_bin_histogram(samples, size: int) -> np.ndarray:
    """Fraction of samples in unit bins [k - 1/2, k + 1/2), k = 0..size-1."""
    k = np.floor(np.asarray(samples, dtype=float) + 0.5).astype(np.int64)
    k = k[(k >= 0) & (k < size)]
    return np.bincount(k, minlength=size) / max(np.size(samples), 1)
