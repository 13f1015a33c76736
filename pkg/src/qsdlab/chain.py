"""Core types for absorbed Markov chains on finite state spaces.

A chain lives on a finite labeled set E plus an implicit cemetery state.
The one-step operator is a substochastic matrix; the per-state absorption
probability is the row-sum deficit.  All types are immutable after
construction and all operations are pure functions, so everything here is
safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    InvalidPartition,
    NegativeEntry,
    RowSumExceedsOne,
)

# Entries in [-NEG_CLAMP_TOL, 0) are treated as serialization round-off and
# clamped to zero; anything more negative is rejected as bad input.
NEG_CLAMP_TOL = 1e-12
ROW_SUM_TOL = 1e-12
PROB_MASS_TOL = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class AbsorbedKernel:
    """Substochastic one-step transition operator on labeled states.

    Attributes
    ----------
    states : tuple of str
        Ordered state labels (the set E).
    matrix : (n, n) ndarray
        Entry (i, j) is the one-step probability from state i to state j.
    absorption : (n,) ndarray
        Entry i is 1 minus row sum i: the probability of jumping to the
        cemetery in one step.
    """

    states: tuple[str, ...]
    matrix: np.ndarray
    absorption: np.ndarray

    @property
    def n(self) -> int:
        return len(self.states)

    def index(self, label: str) -> int:
        try:
            return self.states.index(label)
        except ValueError:
            raise IndexOutOfRange(f"unknown state label {label!r}") from None

    def row_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=1)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Nonnegative weight vector over the states of a kernel."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1:
            raise DimensionMismatch("measure weights must be a vector")
        if np.any(w < -NEG_CLAMP_TOL):
            raise NegativeEntry("measure has a negative weight")
        object.__setattr__(self, "weights", _frozen(np.maximum(w, 0.0)))

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def is_probability(self, tol: float = PROB_MASS_TOL) -> bool:
        return abs(self.total_mass - 1.0) <= tol

    def normalized(self) -> "DiscreteMeasure":
        m = self.total_mass
        if m <= 0.0:
            raise ZeroDivisionError("cannot normalize a zero measure")
        return DiscreteMeasure(self.weights / m)

    def __call__(self, f: "StateFunction | np.ndarray") -> float:
        values = f.values if isinstance(f, StateFunction) else np.asarray(f)
        if values.shape != self.weights.shape:
            raise DimensionMismatch("measure/function length mismatch")
        return float(np.dot(self.weights, values))


@dataclass(frozen=True)
class StateFunction:
    """Real (or complex, for spectral work) vector indexed by states."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 1:
            raise DimensionMismatch("function values must be a vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("function has non-finite entries")
        v = np.array(v, copy=True)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


@dataclass(frozen=True)
class CyclicStructure:
    """Period t and the class assignment of each state.

    States in class i send all surviving one-step mass into class
    (i + 1) mod t.  ``class_index[k]`` is the class of ``states[k]``.
    """

    period: int
    states: tuple[str, ...]
    class_index: np.ndarray = field(repr=False)

    def __post_init__(self):
        idx = np.asarray(self.class_index, dtype=int)
        if idx.shape != (len(self.states),):
            raise DimensionMismatch("class assignment length mismatch")
        if self.period < 1:
            raise InvalidPartition("period must be a positive integer")
        if np.any(idx < 0) or np.any(idx >= self.period):
            raise InvalidPartition("class index out of range")
        for i in range(self.period):
            if not np.any(idx == i):
                raise InvalidPartition(f"cyclic class {i} is empty")
        idx = np.array(idx, copy=True)
        idx.setflags(write=False)
        object.__setattr__(self, "class_index", idx)

    @property
    def class_of(self) -> dict[str, int]:
        return {s: int(c) for s, c in zip(self.states, self.class_index)}

    def members(self, i: int) -> np.ndarray:
        """State indices of class i (in kernel order)."""
        if not 0 <= i < self.period:
            raise IndexOutOfRange(f"class index {i} out of range")
        return np.flatnonzero(self.class_index == i)

    def indicator(self, i: int) -> np.ndarray:
        mask = np.zeros(len(self.states))
        mask[self.members(i)] = 1.0
        return mask


def trivial_cyclic_structure(kernel: AbsorbedKernel) -> CyclicStructure:
    """The single-class structure (period one) over all of E."""
    return CyclicStructure(1, kernel.states, np.zeros(kernel.n, dtype=int))


def validate_kernel(raw_matrix, labels) -> AbsorbedKernel:
    """Validate a raw matrix into an AbsorbedKernel.

    Entries in [-1e-12, 0) are clamped to 0 (serialization round-off);
    larger negatives raise NegativeEntry.  Row sums may exceed 1 by at
    most 1e-12, in which case the absorption entry clamps to 0.
    """
    m = np.asarray(raw_matrix, dtype=float)
    labels = tuple(str(x) for x in labels)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got shape {m.shape}")
    if m.shape[0] != len(labels):
        raise DimensionMismatch(
            f"{len(labels)} labels for a {m.shape[0]}x{m.shape[1]} matrix"
        )
    if len(set(labels)) != len(labels):
        raise DimensionMismatch("state labels must be distinct")
    if m.size == 0:
        raise DimensionMismatch("kernel needs at least one state")
    if not np.all(np.isfinite(m)):
        raise NegativeEntry("matrix has non-finite entries")
    low = m.min()
    if low < -NEG_CLAMP_TOL:
        i, j = np.unravel_index(np.argmin(m), m.shape)
        raise NegativeEntry(
            f"entry ({labels[i]}, {labels[j]}) = {m[i, j]} is negative"
        )
    m = np.maximum(m, 0.0)
    sums = m.sum(axis=1)
    worst = sums.max()
    if worst > 1.0 + ROW_SUM_TOL:
        i = int(np.argmax(sums))
        raise RowSumExceedsOne(f"row {labels[i]} sums to {worst}")
    absorption = np.maximum(1.0 - sums, 0.0)
    return AbsorbedKernel(labels, _frozen(m), _frozen(absorption))


def kernel_power(kernel: AbsorbedKernel, n: int) -> AbsorbedKernel:
    """n-step kernel: the matrix power of the one-step operator."""
    if n < 0:
        raise IndexOutOfRange("kernel power needs n >= 0")
    m = np.linalg.matrix_power(kernel.matrix, n)
    m = np.maximum(m, 0.0)
    absorption = np.maximum(1.0 - m.sum(axis=1), 0.0)
    return AbsorbedKernel(kernel.states, _frozen(m), _frozen(absorption))


def restrict_iterated(kernel: AbsorbedKernel, cyclic: CyclicStructure,
                      tol: float = 1e-10) -> AbsorbedKernel:
    """Restrict the t-step kernel to the class of index 0.

    The result is the substochastic operator driving the chain observed
    only when it returns to its starting class.  For period 1 this is the
    one-step kernel itself.
    """
    from .periodicity import verify_partition

    residual = verify_partition(kernel, cyclic)
    if residual > tol:
        raise InvalidPartition(
            f"cyclic partition residual {residual:.3e} exceeds {tol:.1e}"
        )
    t = cyclic.period
    if t == 1:
        return kernel
    a0 = cyclic.members(0)
    pt = np.linalg.matrix_power(kernel.matrix, t)
    q = np.maximum(pt[np.ix_(a0, a0)], 0.0)
    labels = tuple(kernel.states[i] for i in a0)
    absorption = np.maximum(1.0 - q.sum(axis=1), 0.0)
    return AbsorbedKernel(labels, _frozen(q), _frozen(absorption))


def act_left(measure: DiscreteMeasure, kernel: AbsorbedKernel) -> DiscreteMeasure:
    """Left action of the kernel on a measure (row-vector product)."""
    if measure.weights.shape[0] != kernel.n:
        raise DimensionMismatch("measure length does not match kernel size")
    return DiscreteMeasure(measure.weights @ kernel.matrix)


def act_right(kernel: AbsorbedKernel, f: StateFunction) -> StateFunction:
    """Right action of the kernel on a function (column action)."""
    if f.values.shape[0] != kernel.n:
        raise DimensionMismatch("function length does not match kernel size")
    return StateFunction(kernel.matrix @ f.values)


def survival_probability(kernel: AbsorbedKernel, measure: DiscreteMeasure,
                         n: int) -> float:
    """Probability that the chain started from ``measure`` survives n steps."""
    w = measure.weights
    if w.shape[0] != kernel.n:
        raise DimensionMismatch("measure length does not match kernel size")
    for _ in range(n):
        w = w @ kernel.matrix
    return float(w.sum())


def matrix_powers(kernel: AbsorbedKernel, n_max: int) -> list[np.ndarray]:
    """[P_0, P_1, ..., P_{n_max}] as plain matrices, P_0 the identity."""
    out = [np.eye(kernel.n)]
    for _ in range(n_max):
        out.append(out[-1] @ kernel.matrix)
    return out


def delta(kernel: AbsorbedKernel, label: str) -> DiscreteMeasure:
    """Point mass at a labeled state."""
    w = np.zeros(kernel.n)
    w[kernel.index(label)] = 1.0
    return DiscreteMeasure(w)


def ones(kernel: AbsorbedKernel) -> StateFunction:
    return StateFunction(np.ones(kernel.n))


def embed_class(values, cyclic: CyclicStructure, i: int = 0) -> np.ndarray:
    """Extend a vector living on class i to all of E, zero elsewhere."""
    idx = cyclic.members(i)
    values = np.asarray(values)
    if values.shape != idx.shape:
        raise DimensionMismatch("vector length does not match class size")
    out = np.zeros(len(cyclic.states), dtype=values.dtype)
    out[idx] = values
    return out


def restrict_class(values, cyclic: CyclicStructure, i: int = 0) -> np.ndarray:
    """Keep only the entries of a vector on E that belong to class i."""
    values = np.asarray(values)
    if values.shape != (len(cyclic.states),):
        raise DimensionMismatch("vector length does not match state count")
    return values[cyclic.members(i)]
