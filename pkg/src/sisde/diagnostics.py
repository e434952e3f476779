"""Numerical checks mirroring the convergence argument for the Euler-Peano scheme.

* ``a_seq`` and ``ThetaFamily``: smooth approximations of |u| with the
  second derivative bounded by 2/(h|u|).
* ``cauchy_errors``: inter-level L1-at-T and sup-on-grid differences with one
  shared Brownian path per sample.
* ``uniform_bound_G`` / ``step_bound_check``: the moment bound G e^{MT} and the
  one-step bound M1 sqrt(mesh), assembled from declared constants and
  simulated moments of Y.
* ``pathwise_uniqueness_check``: two executions on one driver must agree
  bitwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .drivers import BrownianGrid, Partition, coarsen, correlate, sample_brownian_grids
from .engine import TriangularRun, ensemble, run_triangular
from .errors import InputDomainError


def a_seq(h: int) -> float:
    """Thresholds a_0 = 1, log(a_{h-1} / a_h) = h, i.e. exp(-h(h+1)/2)."""
    if h < 0:
        raise InputDomainError("h must be >= 0")
    return math.exp(-h * (h + 1) / 2.0)


@dataclass(frozen=True)
class ThetaFamily:
    """theta_h(u) = Phi_h(|u|) with a C^2 profile supported on (a_h, a_{h-1}).

    Phi_h''(u) = 2/(h u) * sin^2(pi * log(u / a_h) / h) on the band, zero
    elsewhere.  In the variable s = log(u / a_h) the weight sin^2 averages to
    1/2 over [0, h], so the integral of Phi_h'' is exactly 1, and it vanishes
    with its slope at both ends, so Phi_h is twice continuously differentiable.
    """

    h: int

    def __post_init__(self):
        if self.h < 1:
            raise InputDomainError("theta family index must be >= 1")

    @property
    def lo(self) -> float:
        return a_seq(self.h)

    @property
    def hi(self) -> float:
        return a_seq(self.h - 1)

    def _s(self, u):
        return np.log(np.clip(u, self.lo, self.hi) / self.lo)

    def _phi(self, u):
        h, k = self.h, 2.0 * math.pi / self.h
        s = self._s(u)
        es = np.exp(s)
        return self.lo * (
            (es * (s - 1.0) + 1.0) / h
            - (es * (np.sin(k * s) - k * np.cos(k * s)) + k) / (2.0 * math.pi * (1.0 + k * k))
        )

    @property
    def phi_top(self) -> float:
        return float(self._phi(np.array(self.hi)))

    def phi(self, u):
        u = np.asarray(u, dtype=float)
        out = np.where(u <= self.lo, 0.0, np.where(u >= self.hi, self.phi_top + (u - self.hi), self._phi(u)))
        return out if out.ndim else float(out)

    def phi_prime(self, u):
        u = np.asarray(u, dtype=float)
        s = self._s(u)
        band = s / self.h - np.sin(2.0 * math.pi * s / self.h) / (2.0 * math.pi)
        out = np.where(u <= self.lo, 0.0, np.where(u >= self.hi, 1.0, band))
        return out if out.ndim else float(out)

    def phi_second(self, u):
        u = np.asarray(u, dtype=float)
        inside = (u > self.lo) & (u < self.hi)
        safe = np.where(inside, u, 1.0)
        val = 2.0 / (self.h * safe) * np.sin(math.pi * self._s(safe) / self.h) ** 2
        out = np.where(inside, val, 0.0)
        return out if out.ndim else float(out)

    def theta(self, u):
        return self.phi(np.abs(u))

    def theta_prime(self, u):
        u = np.asarray(u, dtype=float)
        out = np.sign(u) * self.phi_prime(np.abs(u))
        return out if out.ndim else float(out)

    def theta_second(self, u):
        return self.phi_second(np.abs(u))


def theta(family: ThetaFamily, u):
    return family.theta(u)


def theta_prime(family: ThetaFamily, u):
    return family.theta_prime(u)


def theta_second(family: ThetaFamily, u):
    return family.theta_second(u)


# -- moment bounds --------------------------------------------------------------


def g_constant(x0: float, M: float, T: float, sup_mean_1py: float, sup_mean_1py_sq: float) -> float:
    """G = |x0| + M T sup E[1+|Y|] + M sqrt(T sup E[(1+|Y|)^2])."""
    return abs(x0) + M * T * sup_mean_1py + M * math.sqrt(T * sup_mean_1py_sq)


def uniform_bound_G(x0: float, M: float, T: float, sup_mean_1py: float, sup_mean_1py_sq: float) -> float:
    """The uniform bound G e^{MT} on E|X^n| at grid points."""
    return g_constant(x0, M, T, sup_mean_1py, sup_mean_1py_sq) * math.exp(M * T)


def m1_constant(M: float, bound: float, sup_mean_1py: float, sup_mean_1py_sq: float) -> float:
    """M1 = M (G e^{MT} + sup E[1+|Y|] + sqrt(sup E[(1+|Y|)^2]))."""
    return M * (bound + sup_mean_1py + math.sqrt(sup_mean_1py_sq))


def _declared_M(run: TriangularRun) -> float:
    return max(run.model.drift.M, run.model.diffusion.M)


# -- Cauchy errors across levels --------------------------------------------------


@dataclass
class ConvergenceReport:
    levels: list
    meshes: list
    l1_error: np.ndarray
    l1_se: np.ndarray
    sup_error: np.ndarray
    sup_se: np.ndarray
    l1_slope: float
    sup_slope: float
    max_mean_abs_x: np.ndarray
    max_mean_abs_x_se: np.ndarray
    M: float
    G: float
    bound: float
    M1: float
    gamma1: np.ndarray
    gamma2: float
    C_hat: float
    sup_mean_1py: float
    sup_mean_1py_sq: float
    n_paths: int
    seed: int
    notes: list = field(default_factory=list)

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.l1_error) < 0) and np.all(np.diff(self.sup_error) < 0))

    @property
    def step1_ok(self) -> bool:
        return bool(np.all(self.max_mean_abs_x <= self.bound + 3.0 * self.max_mean_abs_x_se))


class _CauchyBlock:
    """Per-path inter-level differences on one shared Brownian path."""

    def __init__(self, run: TriangularRun, levels):
        self.run = run
        self.levels = list(levels)
        self.times = np.zeros(1)

    def __call__(self, seed, path_ids):
        top = self.levels[-1]
        fine = correlate(sample_brownian_grids(Partition(self.run.T, top), seed, path_ids), self.run.rho)
        xs = {}
        out = {}
        for lev in self.levels:
            jp = run_triangular(self.run.model, self.run.y_process, self.run.x0, self.run.y0, coarsen(fine, lev))
            xs[lev] = jp.x
            out[f"sum:absx_{lev}"] = np.abs(jp.x).sum(axis=0)
            out[f"sum:absx2_{lev}"] = (jp.x * jp.x).sum(axis=0)
            if lev == top:
                y_top = jp.y
        for lo, hi in zip(self.levels[:-1], self.levels[1:]):
            step = 1 << (hi - lo)
            d = np.abs(xs[lo] - xs[hi][:, ::step])
            out[f"l1_{lo}"] = d[:, -1]
            out[f"sup_{lo}"] = d.max(axis=1)
        ay = 1.0 + np.abs(y_top)
        out["sum:y1"] = ay.sum(axis=0)
        out["sum:y2"] = (ay * ay).sum(axis=0)
        # E|Y_t - Y_eta_n(t)| on the finest path, for the constant C
        for lev in self.levels:
            step = 1 << (top - lev)
            left = np.repeat(y_top[:, :-1:step], step, axis=1)
            out[f"sum:ydev_{lev}"] = np.abs(y_top[:, 1:] - left).sum(axis=0)
        return out


def _slope(meshes, errs) -> float:
    errs = np.asarray(errs)
    if len(errs) < 2 or np.any(errs <= 0):
        return float("nan")
    return float(np.polyfit(np.log(meshes), np.log(errs), 1)[0])


def cauchy_errors(run: TriangularRun, levels, n_paths: int, seed: int, workers: int = 1, block: int = 1000):
    """Inter-level errors E|X^k_T - X^{k+1}_T| and E max_grid |X^k - X^{k+1}|.

    The finest level is sampled once per path and coarsened for every other
    level.  Also evaluates the moment bound G e^{MT} against max_t E|X^n_t|.
    """
    levels = sorted(int(v) for v in levels)
    if len(levels) < 2 or len(set(levels)) != len(levels):
        raise InputDomainError("need at least two distinct levels")
    stats = ensemble(_CauchyBlock(run, levels), n_paths, seed, workers=workers, block=block)
    s = stats.samples
    n = n_paths

    def mean_se(a):
        return float(a.mean()), float(a.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    pairs = levels[:-1]
    l1 = np.array([mean_se(s[f"l1_{k}"])[0] for k in pairs])
    l1se = np.array([mean_se(s[f"l1_{k}"])[1] for k in pairs])
    sup = np.array([mean_se(s[f"sup_{k}"])[0] for k in pairs])
    supse = np.array([mean_se(s[f"sup_{k}"])[1] for k in pairs])
    meshes = [run.T / (1 << k) for k in levels]

    mmax, mmax_se = [], []
    for k in levels:
        m = s[f"absx_{k}"] / n
        j = int(m.argmax())
        var = max(s[f"absx2_{k}"][j] / n - m[j] ** 2, 0.0) * n / (n - 1) if n > 1 else 0.0
        mmax.append(float(m[j]))
        mmax_se.append(math.sqrt(var / n))
    mmax, mmax_se = np.array(mmax), np.array(mmax_se)

    M = _declared_M(run)
    m1y, m2y = float((s["y1"] / n).max()), float((s["y2"] / n).max())
    notes = []
    if math.isfinite(M):
        G = g_constant(run.x0, M, run.T, m1y, m2y)
        bound = G * math.exp(M * run.T)
        M1 = m1_constant(M, bound, m1y, m2y)
    else:
        G = bound = M1 = math.inf
        notes.append("growth constant M undeclared; bounds are infinite")
    gamma1 = np.array([1.0 + M * h for h in meshes])
    gamma2 = M / 2.0 * m2y
    c_hat = max(float((s[f"ydev_{k}"] / n).max()) / math.sqrt(run.T / (1 << k)) for k in levels)
    notes.append("C_hat is estimated from the simulated Y path, not a proven constant")

    return ConvergenceReport(
        levels=levels,
        meshes=meshes,
        l1_error=l1,
        l1_se=l1se,
        sup_error=sup,
        sup_se=supse,
        l1_slope=_slope(meshes[:-1], l1),
        sup_slope=_slope(meshes[:-1], sup),
        max_mean_abs_x=mmax,
        max_mean_abs_x_se=mmax_se,
        M=M,
        G=G,
        bound=bound,
        M1=M1,
        gamma1=gamma1,
        gamma2=gamma2,
        C_hat=c_hat,
        sup_mean_1py=m1y,
        sup_mean_1py_sq=m2y,
        n_paths=n_paths,
        seed=seed,
        notes=notes,
    )


# -- one-step bound ---------------------------------------------------------------


@dataclass
class StepBoundReport:
    level: int
    mesh: float
    empirical: float
    se: float
    bound: float
    M1: float
    passed: bool


class _StepBlock:
    def __init__(self, run: TriangularRun, level: int, refine: int):
        self.run, self.level, self.refine = run, level, refine
        self.times = np.zeros(1)

    def __call__(self, seed, path_ids):
        r = self.run
        fine = correlate(
            sample_brownian_grids(Partition(r.T, self.level + self.refine), seed, path_ids), r.rho
        )
        grid = coarsen(fine, self.level)
        jp = run_triangular(r.model, r.y_process, r.x0, r.y0, grid)
        sp = jp.info["scheme"]
        sub = 1 << self.refine
        m = len(path_ids)
        # W2 increments from each left grid point to the fine points inside ]t_k, t_{k+1}]
        w = np.cumsum(fine.dw2.reshape(m, grid.partition.n, sub), axis=2)
        frac = (np.arange(1, sub + 1) * fine.partition.mesh)[None, None, :]
        dev = np.abs(sp.drift[:, :, None] * frac + sp.diffusion[:, :, None] * w).reshape(m, -1)
        ay = 1.0 + np.abs(jp.y)
        return {
            "sum:dev": dev.sum(axis=0),
            "sum:dev2": (dev * dev).sum(axis=0),
            "sum:y1": ay.sum(axis=0),
            "sum:y2": (ay * ay).sum(axis=0),
        }


def step_bound_check(run: TriangularRun, partition: Partition, n_paths: int, seed: int, refine: int = 2, workers: int = 1):
    """Compare max_t E|X^n_t - X^n_eta(t)| with M1 sqrt(mesh).

    The interpolant between grid points is evaluated on a ``2**refine`` times
    finer sub-grid using the actual Brownian increments there.
    """
    run = replace(run, T=partition.T)
    stats = ensemble(_StepBlock(run, partition.level, refine), n_paths, seed, workers=workers)
    s, n = stats.samples, n_paths
    means = s["dev"] / n
    j = int(means.argmax())
    emp = float(means[j])
    var = max(s["dev2"][j] / n - emp * emp, 0.0) * n / (n - 1) if n > 1 else 0.0
    se = math.sqrt(var / n)
    M = _declared_M(run)
    m1y, m2y = float((s["y1"] / n).max()), float((s["y2"] / n).max())
    if math.isfinite(M):
        M1 = m1_constant(M, uniform_bound_G(run.x0, M, run.T, m1y, m2y), m1y, m2y)
    else:
        M1 = math.inf
    bound = M1 * math.sqrt(partition.mesh)
    return StepBoundReport(partition.level, partition.mesh, emp, se, bound, M1, emp <= bound + 3.0 * se)


# -- pathwise uniqueness surrogate -----------------------------------------------


def pathwise_uniqueness_check(run: TriangularRun, grid: BrownianGrid, x0=None, rng=None) -> float:
    """sup over grid and paths of |X - Z| for two executions on the same driver.

    With ``rng`` the second execution processes the paths in a shuffled order
    and is un-shuffled before comparing.
    """
    x0 = run.x0 if x0 is None else x0
    first = run_triangular(run.model, run.y_process, x0, run.y0, grid).x
    if rng is not None and grid.dw.ndim == 3:
        perm = rng.permutation(grid.dw.shape[0])
        shuffled = BrownianGrid(grid.partition, grid.dw[perm], grid.rho)
        second = np.empty_like(first)
        second[perm] = run_triangular(run.model, run.y_process, x0, run.y0, shuffled).x
    else:
        second = run_triangular(run.model, run.y_process, x0, run.y0, grid).x
    return float(np.max(np.abs(first - second)))
