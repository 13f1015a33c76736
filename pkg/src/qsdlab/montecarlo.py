"""Trajectory sampling for absorbed chains and the conditioned chain.

Sampling uses a counter-based generator keyed by the seed; all uniforms
for a batch are laid out path-major up front, so path i consumes only
row i of the table and the batch is bit-identical no matter how the
stepping is parallelized.  Absorbed paths are padded with the cemetery
marker, never resampled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import AbsorbedKernel, DiscreteMeasure, StateFunction
from .errors import DimensionMismatch, NoSurvivors
from .qprocess import QProcessKernel

CEMETERY = -1


@dataclass(frozen=True)
class TrajectoryBatch:
    """Sampled trajectories with their absorption times.

    ``paths[i, m]`` is the state index of path i at time m, or the
    cemetery marker -1 from the absorption time on.  ``tau[i]`` is the
    absorption time, or -1 for paths still alive at the horizon.
    """

    seed: int
    horizon: int
    state_labels: tuple[str, ...]
    paths: np.ndarray = field(repr=False)
    tau: np.ndarray = field(repr=False)

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    def alive_at(self, n: int) -> np.ndarray:
        if not 0 <= n <= self.horizon:
            raise DimensionMismatch(f"time {n} outside horizon {self.horizon}")
        return self.paths[:, n] != CEMETERY


def _sample_rows(cum: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized inverse-CDF step: row r of cum, uniform u -> column index.

    Returns len(cum[0]) (= absorption) when u falls above the row sum.
    """
    return (u[:, np.newaxis] >= cum[rows]).sum(axis=1)


def simulate_paths(kernel: AbsorbedKernel, mu: DiscreteMeasure,
                   horizon: int, n_paths: int, seed: int) -> TrajectoryBatch:
    """Draw i.i.d. trajectories of the absorbed chain.

    Each step uses one uniform from the path's own stream; the per-step
    absorption probability is exactly the row-sum deficit.
    """
    if n_paths < 1:
        raise DimensionMismatch("need at least one path")
    if not mu.is_probability(1e-9):
        raise DimensionMismatch("initial law must be a probability measure")
    rng = np.random.Generator(np.random.Philox(key=seed))
    init_u = rng.random(n_paths)
    step_u = rng.random((n_paths, horizon)) if horizon > 0 else np.zeros((n_paths, 0))

    n = kernel.n
    cum_mu = np.cumsum(mu.weights)
    cum = np.cumsum(kernel.matrix, axis=1)
    paths = np.full((n_paths, horizon + 1), CEMETERY, dtype=np.int64)
    paths[:, 0] = np.minimum(np.searchsorted(cum_mu, init_u, side="right"), n - 1)
    alive = np.ones(n_paths, dtype=bool)
    for m in range(1, horizon + 1):
        rows = paths[alive, m - 1]
        nxt = _sample_rows(cum, rows, step_u[alive, m - 1])
        absorbed = nxt >= n
        out = np.where(absorbed, CEMETERY, nxt)
        paths[alive, m] = out
        alive_idx = np.flatnonzero(alive)
        alive[alive_idx[absorbed]] = False
        if not alive.any():
            break
    dead = paths == CEMETERY
    tau = np.where(dead.any(axis=1), dead.argmax(axis=1), -1).astype(np.int64)
    return TrajectoryBatch(
        seed=int(seed), horizon=int(horizon),
        state_labels=kernel.states, paths=paths, tau=tau,
    )


def simulate_q_process(qprocess: QProcessKernel, mu_prime: DiscreteMeasure,
                       horizon: int, n_paths: int, seed: int) -> TrajectoryBatch:
    """Draw trajectories of the never-absorbed chain (no path ever dies)."""
    if n_paths < 1:
        raise DimensionMismatch("need at least one path")
    if mu_prime.weights.shape[0] != qprocess.n:
        raise DimensionMismatch("initial law must live on the surviving domain")
    if not mu_prime.is_probability(1e-9):
        raise DimensionMismatch("initial law must be a probability measure")
    rng = np.random.Generator(np.random.Philox(key=seed))
    init_u = rng.random(n_paths)
    step_u = rng.random((n_paths, horizon)) if horizon > 0 else np.zeros((n_paths, 0))

    n = qprocess.n
    cum_mu = np.cumsum(mu_prime.weights)
    cum = np.cumsum(qprocess.matrix, axis=1)
    paths = np.empty((n_paths, horizon + 1), dtype=np.int64)
    paths[:, 0] = np.minimum(np.searchsorted(cum_mu, init_u, side="right"), n - 1)
    for m in range(1, horizon + 1):
        nxt = _sample_rows(cum, paths[:, m - 1], step_u[:, m - 1])
        # float dust in the cumulative row sums must not absorb anyone
        paths[:, m] = np.minimum(nxt, n - 1)
    tau = np.full(n_paths, -1, dtype=np.int64)
    return TrajectoryBatch(
        seed=int(seed), horizon=int(horizon),
        state_labels=qprocess.states, paths=paths, tau=tau,
    )


def conditional_empirical(batch: TrajectoryBatch,
                          n: int) -> tuple[DiscreteMeasure, int]:
    """Empirical law of the surviving paths at time n, with sample size."""
    alive = batch.alive_at(n)
    ess = int(alive.sum())
    if ess == 0:
        raise NoSurvivors(f"no path survived to time {n}")
    counts = np.bincount(batch.paths[alive, n], minlength=len(batch.state_labels))
    return DiscreteMeasure(counts / ess), ess


def occupation_frequencies(batch: TrajectoryBatch
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Per-state occupation mean and its standard error across paths.

    Intended for non-absorbed batches: every time point of every path
    counts, and path-to-path variation sets the error bars.
    """
    n_states = len(batch.state_labels)
    counted = np.stack([
        np.bincount(row[row != CEMETERY], minlength=n_states)
        / max((row != CEMETERY).sum(), 1)
        for row in batch.paths
    ])
    mean = counted.mean(axis=0)
    spread = counted.std(axis=0, ddof=1) if batch.n_paths > 1 else np.zeros(n_states)
    return mean, spread / np.sqrt(batch.n_paths)


def estimate_time_average_mc(batch: TrajectoryBatch, f: StateFunction,
                             n: int) -> tuple[float, float]:
    """Sample mean and standard error of the running average of f.

    Averages f along each surviving path up to time n, then across the
    survivors; consistent with the exact conditional computation.
    """
    if f.values.shape[0] != len(batch.state_labels):
        raise DimensionMismatch("observable length does not match state count")
    alive = batch.alive_at(n)
    ess = int(alive.sum())
    if ess == 0:
        raise NoSurvivors(f"no path survived to time {n}")
    segs = batch.paths[alive, : n + 1]
    per_path = f.values[segs].mean(axis=1)
    mean = float(per_path.mean())
    stderr = float(per_path.std(ddof=1) / np.sqrt(ess)) if ess > 1 else 0.0
    return mean, stderr


def retry_seed(seed: int) -> int:
    """Deterministic independent sub-seed for the single-retry rule."""
    return (seed * 6364136223846793005 + 1442695040888963407) % 2 ** 64
