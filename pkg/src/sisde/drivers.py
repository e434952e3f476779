"""Dyadic time grids and the Brownian increments that live on them.

Every approximation level of a run shares one Brownian path: the finest grid
is sampled once and coarser grids are obtained by summing neighbouring
increments, one halving at a time, so ``coarsen`` is exact and reproducible
to the bit.

Random streams are counter-based (Philox) and keyed by ``(seed, path_id)``,
so a path's draws do not depend on how paths are split across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputDomainError

STREAM_DRIVER = 0
STREAM_JUMP = 1


def path_rng(seed: int, path_id: int, stream: int = STREAM_DRIVER) -> np.random.Generator:
    """Independent generator for one path.

    The Philox key is (seed, path_id); ``stream`` sets the high counter word so
    different uses of the same path never overlap.
    """
    if seed < 0 or path_id < 0 or stream < 0:
        raise InputDomainError("seed, path_id and stream must be nonnegative")
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, path_id], dtype=np.uint64)
    counter = np.array([0, 0, 0, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True)
class Partition:
    T: float
    level: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise InputDomainError(f"horizon must be positive, got {self.T}")
        if self.level < 0 or int(self.level) != self.level:
            raise InputDomainError(f"level must be a nonnegative integer, got {self.level}")

    @property
    def n(self) -> int:
        """Number of intervals."""
        return 1 << self.level

    @property
    def mesh(self) -> float:
        return self.T / self.n

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.mesh

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.points)


def dyadic_partition(T: float, k: int) -> Partition:
    return Partition(float(T), int(k))


def eta(partition: Partition, t):
    """Left endpoint of the interval ]t_k, t_k+1] containing ``t``; eta(0) = 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(t > partition.T):
        raise InputDomainError(f"t must lie in [0, {partition.T}]")
    k = np.ceil(t / partition.mesh).astype(np.int64) - 1
    k = np.clip(k, 0, partition.n - 1)
    out = k * partition.mesh
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class BrownianGrid:
    """Increments of (W1, W2) on a partition.

    ``dw`` has shape ``(..., n, 2)``; leading axes index independent paths.
    """

    partition: Partition
    dw: np.ndarray
    rho: float = 0.0

    def __post_init__(self):
        if self.dw.shape[-2:] != (self.partition.n, 2):
            raise InputDomainError(
                f"increments shape {self.dw.shape} does not match {self.partition.n} intervals"
            )

    @property
    def dw1(self) -> np.ndarray:
        return self.dw[..., 0]

    @property
    def dw2(self) -> np.ndarray:
        return self.dw[..., 1]

    def path(self, component: int) -> np.ndarray:
        """Cumulative values W(t_k), starting at 0."""
        inc = self.dw[..., component]
        out = np.zeros(inc.shape[:-1] + (inc.shape[-1] + 1,))
        np.cumsum(inc, axis=-1, out=out[..., 1:])
        return out


def sample_brownian_grid(partition: Partition, rng: np.random.Generator) -> BrownianGrid:
    z = rng.standard_normal((partition.n, 2))
    return BrownianGrid(partition, z * np.sqrt(partition.steps)[:, None])


def sample_brownian_grids(partition: Partition, seed: int, path_ids) -> BrownianGrid:
    """Stack of grids for several paths, each drawn from its own stream."""
    ids = list(path_ids)
    dw = np.empty((len(ids), partition.n, 2))
    scale = np.sqrt(partition.steps)[:, None]
    for i, pid in enumerate(ids):
        dw[i] = path_rng(seed, pid).standard_normal((partition.n, 2)) * scale
    return BrownianGrid(partition, dw)


def correlate(grid: BrownianGrid, rho: float) -> BrownianGrid:
    """Replace the second component by rho*dW1 + sqrt(1 - rho^2)*dW2."""
    if not -1.0 <= rho <= 1.0:
        raise InputDomainError(f"correlation must lie in [-1, 1], got {rho}")
    if rho == 0.0:
        return BrownianGrid(grid.partition, grid.dw, grid.rho)
    dw = grid.dw.copy()
    dw[..., 1] = rho * grid.dw[..., 0] + math.sqrt(1.0 - rho * rho) * grid.dw[..., 1]
    return BrownianGrid(grid.partition, dw, rho)


def coarsen(grid: BrownianGrid, level: int) -> BrownianGrid:
    """Same Brownian path on a coarser dyadic grid.

    Halves one level at a time, each step adding the left increment to the
    right one, so coarsen(coarsen(g, k), j) equals coarsen(g, j) bitwise.
    """
    own = grid.partition.level
    if level > own or level < 0:
        raise InputDomainError(f"cannot coarsen level {own} grid to level {level}")
    dw = grid.dw
    for _ in range(own - level):
        dw = dw[..., 0::2, :] + dw[..., 1::2, :]
    return BrownianGrid(Partition(grid.partition.T, level), dw, grid.rho)
