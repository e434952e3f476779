"""Euler-Peano simulation of the triangular and matrix-form SIS systems.

The scheme freezes both the driving process Y and the state X at the left
endpoint of each interval:

    X_{k+1} = X_k + bar_a(t_k, Y_k, X_k) (t_{k+1} - t_k) + bar_g(t_k, Y_k, X_k) dW2_k

All simulators are vectorised over leading "path" axes of the driver arrays.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .coefficients import DriftSpec, QuadraticDiffusionSpec, TruncatedModel, roots
from .drivers import (
    STREAM_JUMP,
    BrownianGrid,
    Partition,
    coarsen,
    correlate,
    path_rng,
    sample_brownian_grid,
    sample_brownian_grids,
)
from .errors import DegenerateMatrixError, InputDomainError, NumericalFailure, SisdeError
from .transition import (
    TransitionTable,
    covariance_entries,
    drift_vector,
    n_steps_for,
    simulate_jump_chain_batch,
    sqrt_entries,
)

# -- driving process Y ---------------------------------------------------------


def simulate_Y(y0, mu: float, partition: Partition, dw1, absorb: bool = True) -> np.ndarray:
    """Full-truncation Euler for dY = sqrt(2 mu Y) dW1.

    With ``absorb`` the path is pinned at 0 from the first step that lands at or
    below 0.  Returns Y at the grid points, shape ``dw1.shape[:-1] + (n+1,)``.
    """
    dw1 = np.asarray(dw1, dtype=float)
    if dw1.shape[-1] != partition.n:
        raise InputDomainError("increments do not match the partition")
    out = np.empty(dw1.shape[:-1] + (partition.n + 1,))
    y = np.broadcast_to(np.asarray(y0, dtype=float), dw1.shape[:-1]).copy()
    if np.any(y < 0):
        raise InputDomainError("y0 must be >= 0")
    dead = y <= 0
    out[..., 0] = y
    for k in range(partition.n):
        y = y + np.sqrt(2.0 * mu * np.maximum(y, 0.0)) * dw1[..., k]
        if absorb:
            dead = dead | (y <= 0)
            y = np.where(dead, 0.0, y)
        out[..., k + 1] = y
    return out


@dataclass(frozen=True)
class SquareRootProcess:
    mu: float
    absorb: bool = True

    def simulate(self, y0, partition, dw1):
        return simulate_Y(y0, self.mu, partition, dw1, self.absorb)


@dataclass(frozen=True)
class EulerYProcess:
    """dY = m(t, Y) dt + sigma(t, Y) dW1, stepped with plain Euler.

    The caller is responsible for E[sup |Y|^2] being finite.
    """

    m: Callable
    sigma: Callable

    def simulate(self, y0, partition, dw1):
        dw1 = np.asarray(dw1, dtype=float)
        out = np.empty(dw1.shape[:-1] + (partition.n + 1,))
        y = np.broadcast_to(np.asarray(y0, dtype=float), dw1.shape[:-1]).copy()
        out[..., 0] = y
        pts = partition.points
        for k in range(partition.n):
            t = pts[k]
            y = y + self.m(t, y) * (pts[k + 1] - t) + self.sigma(t, y) * dw1[..., k]
            out[..., k + 1] = y
        return out


# -- the Euler-Peano scheme ----------------------------------------------------


@dataclass(frozen=True)
class SchemePath:
    partition: Partition
    x0: float
    values: np.ndarray
    drift: np.ndarray
    diffusion: np.ndarray
    dw2: np.ndarray

    def at(self, t: float, dw=None):
        """Continuous interpolant at time ``t``.

        On ]t_k, t_{k+1}] it is X_k + a_k (t - t_k) + g_k (W2_t - W2_{t_k}).
        ``dw`` is the Brownian increment W2_t - W2_{t_k}; when omitted the
        increment is interpolated linearly, which is exact at grid points.
        """
        if not 0.0 <= t <= self.partition.T:
            raise InputDomainError(f"t must lie in [0, {self.partition.T}]")
        if t == 0.0:
            return self.values[..., 0]
        pts = self.partition.points
        k = int(np.clip(np.ceil(t / self.partition.mesh) - 1, 0, self.partition.n - 1))
        h = pts[k + 1] - pts[k]
        if dw is None:
            dw = ((t - pts[k]) / h) * self.dw2[..., k]
        return self.values[..., k] + self.drift[..., k] * (t - pts[k]) + self.diffusion[..., k] * dw


def euler_peano_path(a: Callable, g: Callable, y_path, x0, partition: Partition, dw2) -> SchemePath:
    """Run the scheme against a given Y path; ``a`` and ``g`` take (t, y, x)."""
    dw2 = np.asarray(dw2, dtype=float)
    y_path = np.asarray(y_path, dtype=float)
    n = partition.n
    if dw2.shape[-1] != n or y_path.shape[-1] != n + 1:
        raise InputDomainError("Y path and increments must live on the partition")
    shape = np.broadcast_shapes(dw2.shape[:-1], y_path.shape[:-1])
    x = np.broadcast_to(np.asarray(x0, dtype=float), shape).copy()
    values = np.empty(shape + (n + 1,))
    drift = np.empty(shape + (n,))
    diff = np.empty(shape + (n,))
    values[..., 0] = x
    pts = partition.points
    for k in range(n):
        t = pts[k]
        yk = y_path[..., k]
        ak = a(t, yk, x)
        gk = g(t, yk, x)
        drift[..., k] = ak
        diff[..., k] = gk
        x = x + ak * (pts[k + 1] - t) + gk * dw2[..., k]
        values[..., k + 1] = x
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise NumericalFailure("non-finite scheme value", step=int(bad[-1]))
    return SchemePath(partition, x0, values, drift, diff, dw2)


@dataclass(frozen=True)
class JointPath:
    partition: Partition
    x: np.ndarray
    y: np.ndarray
    info: dict = field(default_factory=dict)


def run_triangular(model: TruncatedModel, y_process, x0, y0, grid: BrownianGrid) -> JointPath:
    """Y from the first driver component, then X against it from the second."""
    part = grid.partition
    y = y_process.simulate(y0, part, grid.dw1)
    sp = euler_peano_path(model.a, model.g, y, x0, part, grid.dw2)
    return JointPath(part, sp.values, y, {"scheme": sp})


def simulate_triangular(
    drift: DriftSpec,
    diffusion: QuadraticDiffusionSpec,
    y_process,
    x0: float,
    y0: float,
    partition: Partition,
    rho: float,
    rng: np.random.Generator,
) -> JointPath:
    grid = correlate(sample_brownian_grid(partition, rng), rho)
    return run_triangular(TruncatedModel(drift, diffusion), y_process, x0, y0, grid)


def exit_fraction(model: TruncatedModel, jp: JointPath) -> float:
    """Fraction of grid states (after the first) outside the root interval [r1, r2]."""
    r1, r2 = roots(model.diffusion, 0.0, jp.y[..., 1:])
    x = jp.x[..., 1:]
    return float(np.mean((x < r1) | (x > r2)))


# -- matrix form of the two-dimensional system -----------------------------------


def run_full_2d(table: TransitionTable, s0, grid: BrownianGrid) -> JointPath:
    """Euler for dS = mu(S) dt + B(S) dW with B the symmetric root of V(S).

    Coefficients are evaluated at the state clamped to the nonnegative
    quadrant; per-path counts of clamped evaluations are in ``info["clamps"]``.
    Returns a JointPath with x = S1 and y = S2.
    """
    part = grid.partition
    n = part.n
    shape = grid.dw.shape[:-2]
    s1 = np.broadcast_to(np.asarray(s0[0], dtype=float), shape).copy()
    s2 = np.broadcast_to(np.asarray(s0[1], dtype=float), shape).copy()
    out1 = np.empty(shape + (n + 1,))
    out2 = np.empty(shape + (n + 1,))
    out1[..., 0], out2[..., 0] = s1, s2
    clamps = np.zeros(shape, dtype=np.int64)
    pts = part.points
    for k in range(n):
        t = pts[k]
        c1, c2 = np.maximum(s1, 0.0), np.maximum(s2, 0.0)
        clamps += (c1 != s1) | (c2 != s2)
        m1, m2 = drift_vector(table, t, c1, c2)
        try:
            p, q, r = sqrt_entries(*covariance_entries(table, t, c1, c2))
        except (DegenerateMatrixError, ArithmeticError) as exc:
            raise NumericalFailure(f"covariance square root failed at step {k}: {exc}", step=k) from exc
        h = pts[k + 1] - t
        w1, w2 = grid.dw[..., k, 0], grid.dw[..., k, 1]
        s1 = s1 + m1 * h + p * w1 + q * w2
        s2 = s2 + m2 * h + q * w1 + r * w2
        out1[..., k + 1], out2[..., k + 1] = s1, s2
    return JointPath(part, out1, out2, {"clamps": clamps})


def simulate_full_2d(table: TransitionTable, s0, partition: Partition, rng: np.random.Generator) -> JointPath:
    return run_full_2d(table, s0, sample_brownian_grid(partition, rng))


def degenerate_solution(a: Callable, alpha: Callable, y_path, x0, partition: Partition) -> np.ndarray:
    """Left-endpoint quadrature of x0 + int_0^t a(s, Y_s, alpha(s, Y_s)/2) ds."""
    y_path = np.asarray(y_path, dtype=float)
    pts = partition.points
    x = np.broadcast_to(np.asarray(x0, dtype=float), y_path.shape[:-1]).copy()
    out = np.empty(y_path.shape)
    out[..., 0] = x
    for k in range(partition.n):
        t = pts[k]
        yk = y_path[..., k]
        x = x + a(t, yk, np.asarray(alpha(t, yk), dtype=float) / 2.0) * (pts[k + 1] - t)
        out[..., k + 1] = x
    return out


# -- seeded ensembles ----------------------------------------------------------


@dataclass(frozen=True)
class TriangularRun:
    """Ensemble scenario for the triangular system (outputs X and Y)."""

    model: TruncatedModel
    y_process: object
    x0: float
    y0: float
    T: float
    level: int
    rho: float = 0.0
    record_every: int = 1

    @property
    def partition(self) -> Partition:
        return Partition(self.T, self.level)

    @property
    def times(self) -> np.ndarray:
        return self.partition.points[:: self.record_every]

    def __call__(self, seed, path_ids):
        grid = correlate(sample_brownian_grids(self.partition, seed, path_ids), self.rho)
        jp = run_triangular(self.model, self.y_process, self.x0, self.y0, grid)
        s = self.record_every
        return {"X": jp.x[:, ::s], "Y": jp.y[:, ::s]}


@dataclass(frozen=True)
class SquareRootRun:
    """Ensemble scenario for Y alone, optionally with a finer control grid.

    Drivers are sampled at ``level + control_levels`` and coarsened, so the
    output "Y" and the control "Y_fine" share one Brownian path.
    """

    mu: float
    y0: float
    T: float
    level: int
    absorb: bool = True
    control_levels: int = 0
    record_every: int = 1

    @property
    def times(self) -> np.ndarray:
        return Partition(self.T, self.level).points[:: self.record_every]

    def __call__(self, seed, path_ids):
        fine = sample_brownian_grids(Partition(self.T, self.level + self.control_levels), seed, path_ids)
        grid = coarsen(fine, self.level)
        y = simulate_Y(self.y0, self.mu, grid.partition, grid.dw1, self.absorb)
        out = {"Y": y[:, :: self.record_every]}
        if self.control_levels:
            yf = simulate_Y(self.y0, self.mu, fine.partition, fine.dw1, self.absorb)
            out["Y_fine_T"] = yf[:, -1]
        return out


@dataclass(frozen=True)
class Full2DRun:
    """Ensemble scenario for the matrix-form system (outputs S1, S2, N).

    Extra per-path outputs: ``qv_N`` (sum of squared N increments),
    ``int_N`` (left Riemann sum of N), ``qv_S2N`` and ``int_S2`` for the
    S2-N covariation.
    """

    table: TransitionTable
    s0: tuple
    T: float
    level: int
    record_every: int = 1

    @property
    def times(self) -> np.ndarray:
        return Partition(self.T, self.level).points[:: self.record_every]

    def __call__(self, seed, path_ids):
        grid = sample_brownian_grids(Partition(self.T, self.level), seed, path_ids)
        jp = run_full_2d(self.table, self.s0, grid)
        s1, s2 = jp.x, jp.y
        n = s1 + s2
        h = grid.partition.steps
        dn, ds2 = np.diff(n, axis=-1), np.diff(s2, axis=-1)
        s = self.record_every
        return {
            "S1": s1[:, ::s],
            "S2": s2[:, ::s],
            "N": n[:, ::s],
            "qv_N": np.sum(dn * dn, axis=-1),
            "int_N": np.sum(np.maximum(n[:, :-1], 0.0) * h, axis=-1),
            "qv_S2N": np.sum(dn * ds2, axis=-1),
            "int_S2": np.sum(np.maximum(s2[:, :-1], 0.0) * h, axis=-1),
            "clamps": jp.info["clamps"],
        }


@dataclass(frozen=True)
class JumpRun:
    """Ensemble scenario for the fixed-step jump chain (outputs S1, S2, N)."""

    table: TransitionTable
    s0: tuple
    dt: float
    T: float
    record_every: int = 1

    @property
    def times(self) -> np.ndarray:
        n = n_steps_for(self.T, self.dt)
        return (np.arange(n + 1) * self.dt)[:: self.record_every]

    def __call__(self, seed, path_ids):
        n = n_steps_for(self.T, self.dt)
        u = np.empty((len(path_ids), n))
        for i, pid in enumerate(path_ids):
            u[i] = 1.0 - path_rng(seed, pid, STREAM_JUMP).random(n)
        paths = simulate_jump_chain_batch(self.table, self.s0, self.dt, self.T, u)
        s = self.record_every
        s1, s2 = paths[:, ::s, 0], paths[:, ::s, 1]
        return {"S1": s1, "S2": s2, "N": s1 + s2}


@dataclass
class EnsembleStats:
    times: np.ndarray
    n_paths: int
    seed: int
    mean: dict
    var: dict
    se: dict
    quantiles: dict
    quantile_levels: tuple
    hist_edges: dict
    hist_counts: dict
    samples: dict

    def series(self):
        return list(self.mean)


def _run_block(run, seed, ids):
    try:
        return run(seed, ids)
    except NumericalFailure as exc:
        if exc.path is None and len(ids) == 1:
            exc.path = ids[0]
        exc.args = (f"{exc.args[0]} (paths {ids[0]}..{ids[-1]})",)
        raise
    except SisdeError as exc:
        raise NumericalFailure(f"{exc} (paths {ids[0]}..{ids[-1]})", path=ids[0]) from exc


def ensemble(
    run,
    n_paths: int,
    seed: int,
    workers: int = 1,
    block: int = 1000,
    quantile_levels=(0.05, 0.25, 0.5, 0.75, 0.95),
    bins: int = 50,
) -> EnsembleStats:
    """Run ``n_paths`` paths of ``run`` and summarise them.

    ``run(seed, path_ids)`` returns a dict of arrays whose first axis indexes
    the paths; arrays shaped (paths, len(run.times)) are summarised per time.
    Keys prefixed ``"sum:"`` hold per-block sums instead and are added up in
    block order (prefix dropped in ``samples``).

    Path i always draws from the stream keyed by (seed, i) and blocks are
    combined in path order, so results never depend on ``workers``; per-path
    outputs do not depend on ``block`` either.
    """
    if n_paths < 1:
        raise InputDomainError("need at least one path")
    if workers < 1 or block < 1:
        raise InputDomainError("workers and block must be >= 1")
    chunks = [list(range(i, min(i + block, n_paths))) for i in range(0, n_paths, block)]
    if workers == 1:
        parts = [_run_block(run, seed, ids) for ids in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ids: _run_block(run, seed, ids), chunks))
    samples = {}
    for k in parts[0]:
        if k.startswith("sum:"):
            total = parts[0][k].copy()
            for p in parts[1:]:
                total += p[k]
            samples[k[4:]] = total
        else:
            samples[k] = np.concatenate([p[k] for p in parts], axis=0)

    sums = {k[4:] for k in parts[0] if k.startswith("sum:")}
    times = np.asarray(run.times)
    mean, var, se, quant, edges, counts = {}, {}, {}, {}, {}, {}
    for name, arr in samples.items():
        if name in sums or arr.ndim != 2 or arr.shape[1] != len(times):
            continue
        mean[name] = arr.mean(axis=0)
        var[name] = arr.var(axis=0, ddof=1) if n_paths > 1 else np.zeros(len(times))
        se[name] = np.sqrt(var[name] / n_paths)
        quant[name] = np.quantile(arr, quantile_levels, axis=0)
        lo, hi = float(arr.min()), float(arr.max())
        if hi <= lo:
            hi = lo + 1.0
        e = np.linspace(lo, hi, bins + 1)
        edges[name] = e
        counts[name] = np.stack([np.histogram(arr[:, j], bins=e)[0] for j in range(arr.shape[1])])
    return EnsembleStats(times, n_paths, seed, mean, var, se, quant, tuple(quantile_levels), edges, counts, samples)
