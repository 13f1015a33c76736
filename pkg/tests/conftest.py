"""Shared fixtures: canonical chains and a random block-cyclic generator."""

from __future__ import annotations

import numpy as np
import pytest

from qsdlab import AbsorbedKernel, validate_kernel


def two_cycle(p: float, q: float) -> AbsorbedKernel:
    """Two states a <-> b with survival p (a to b) and q (b to a)."""
    return validate_kernel([[0.0, p], [q, 0.0]], ["a", "b"])


def pure_cycle(n: int) -> AbsorbedKernel:
    """Deterministic n-cycle with no absorption."""
    m = np.zeros((n, n))
    for i in range(n):
        m[i, (i + 1) % n] = 1.0
    return validate_kernel(m, [f"s{i}" for i in range(n)])


def random_block_cyclic(rng: np.random.Generator, n: int, t: int,
                        density: float = 1.0,
                        survival: tuple[float, float] = (0.55, 0.98)
                        ) -> AbsorbedKernel:
    """Random substochastic chain with exact period t on n states.

    States are split into t nonempty classes; every surviving edge goes
    class i -> class i+1.  A rotation backbone with a twist keeps the
    support strongly connected at any density; extra edges to the next
    class appear with the given probability.  Row sums land in the
    survival range (use (1.0, 1.0) for a stochastic chain).
    """
    if n < t:
        raise ValueError("need at least one state per class")
    sizes = np.ones(t, dtype=int)
    for _ in range(n - t):
        sizes[rng.integers(t)] += 1
    classes = np.repeat(np.arange(t), sizes)
    perm = rng.permutation(n)
    class_of = np.empty(n, dtype=int)
    class_of[perm] = classes
    members = [np.flatnonzero(class_of == i) for i in range(t)]

    support = np.zeros((n, n), dtype=bool)
    for i in range(t):
        src, dst = members[i], members[(i + 1) % t]
        for k in range(max(len(src), len(dst))):
            shift = 1 if i == t - 1 else 0  # the twist that glues the laps
            support[src[k % len(src)], dst[(k + shift) % len(dst)]] = True
        extra = rng.random((len(src), len(dst))) < density
        support[np.ix_(src, dst)] |= extra

    m = np.zeros((n, n))
    for x in range(n):
        targets = np.flatnonzero(support[x])
        w = rng.uniform(0.1, 1.0, size=len(targets))
        m[x, targets] = w / w.sum() * rng.uniform(*survival)
    labels = [f"x{i:02d}" for i in range(n)]
    return validate_kernel(m, labels)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


@pytest.fixture
def twocycle() -> AbsorbedKernel:
    return two_cycle(0.8, 0.5)


@pytest.fixture
def purecycle3() -> AbsorbedKernel:
    return pure_cycle(3)
