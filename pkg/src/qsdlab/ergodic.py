"""Quasi-ergodic limits: conditional time averages and their 1/N rate.

Conditioned on survival up to time N, the empirical time average of a
bounded observable converges to a fixed probability measure: the
quasi-ergodic distribution.  It weights each cyclic class equally and
coincides with the stationary law of the never-absorbed chain.  On a
finite space the conditional expectations are exactly computable by
forward/backward sweeps, so the 1/N rate and the variance decay are
verified without sampling.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .chain import (
    AbsorbedKernel,
    CyclicStructure,
    DiscreteMeasure,
    StateFunction,
    embed_class,
)
from .errors import EtaOrthogonal, Extinct
from .spectral import SpectralCertificate


def _forward_images(kernel: AbsorbedKernel, vec_on_e: np.ndarray,
                    upto: int) -> list[np.ndarray]:
    out = [vec_on_e]
    for _ in range(upto):
        out.append(kernel.matrix @ out[-1])
    return out


def nu_qe(kernel: AbsorbedKernel, cyclic: CyclicStructure,
          certificate: SpectralCertificate) -> DiscreteMeasure:
    """The quasi-ergodic distribution on E.

    Mixes the pushed eigenmeasure over one full period, each push
    reweighted by the surviving window back to the start class; total
    mass is 1 and every cyclic class carries mass exactly 1/t.
    """
    t = cyclic.period
    theta0 = certificate.theta0
    windows = _forward_images(kernel, certificate.eta_on(cyclic), t)
    push = certificate.nu_on(cyclic)
    density = np.zeros(kernel.n)
    for k in range(t):
        density += push * windows[t - k]
        push = push @ kernel.matrix
    return DiscreteMeasure(theta0 ** -t / t * density)


def _sweeps(kernel: AbsorbedKernel, mu: DiscreteMeasure,
            n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Forward measures mu P_m and backward survivals P_r 1, m, r <= n_max."""
    n = kernel.n
    fwd = np.empty((n_max + 1, n))
    fwd[0] = mu.weights
    for m in range(n_max):
        fwd[m + 1] = fwd[m] @ kernel.matrix
    bwd = np.empty((n_max + 1, n))
    bwd[0] = 1.0
    for r in range(n_max):
        bwd[r + 1] = kernel.matrix @ bwd[r]
    return fwd, bwd


def _check_observable(f: StateFunction) -> None:
    if f.sup_norm > 1.0 + 1e-12:
        warnings.warn(
            "observable exceeds 1 in absolute value; the 1/N rate bound "
            "is stated for |f| <= 1 but the average itself is still exact",
            stacklevel=3,
        )


def time_average_exact(kernel: AbsorbedKernel, mu: DiscreteMeasure,
                       f: StateFunction, n_steps: int) -> float:
    """Conditional expectation of the running average of f up to n_steps.

    Computed exactly from one forward sweep of pushed measures and one
    backward sweep of survival windows; no sampling involved.
    """
    _check_observable(f)
    fwd, bwd = _sweeps(kernel, mu, n_steps)
    surv = float(fwd[n_steps].sum())
    if surv <= 0.0:
        raise Extinct(f"no surviving mass at time {n_steps}")
    total = sum(
        float(np.dot(fwd[m] * f.values, bwd[n_steps - m]))
        for m in range(n_steps + 1)
    )
    return total / ((n_steps + 1) * surv)


def time_average_curve(kernel: AbsorbedKernel, mu: DiscreteMeasure,
                       f: StateFunction, n_max: int) -> np.ndarray:
    """time_average_exact for every horizon N = 0..n_max in one pass.

    The cross terms fwd[m] . (f * bwd[r]) form a matrix whose
    anti-diagonal sums are the numerators, so the whole curve costs one
    matrix product instead of n_max quadratic sweeps.
    """
    _check_observable(f)
    fwd, bwd = _sweeps(kernel, mu, n_max)
    surv = fwd.sum(axis=1)
    if np.any(surv <= 0.0):
        first = int(np.argmax(surv <= 0.0))
        raise Extinct(f"no surviving mass at time {first}")
    cross = (fwd * f.values[np.newaxis, :]) @ bwd.T
    flipped = np.fliplr(cross)
    numer = np.array([
        np.trace(flipped, offset=n_max - n) for n in range(n_max + 1)
    ])
    return numer / ((np.arange(n_max + 1) + 1.0) * surv)


@dataclass(frozen=True)
class QedRateReport:
    """Boundedness certificate for (N+1) times the time-average error."""

    n_max: int
    limit_value: float
    errors: np.ndarray = field(repr=False)          # e(N), N = 0..n_max
    weighted: np.ndarray = field(repr=False)        # (N+1) e(N)
    sup_weighted: float
    implied_constant: float
    bounded_ok: bool

    @property
    def all_ok(self) -> bool:
        return self.bounded_ok


def qed_rate_report(kernel: AbsorbedKernel, cyclic: CyclicStructure,
                    certificate: SpectralCertificate, mu: DiscreteMeasure,
                    f: StateFunction, n_max: int = 1000) -> QedRateReport:
    """Verify the 1/N convergence of conditional time averages.

    e(N) is the exact deviation of the conditional running average from
    the quasi-ergodic value; (N+1) e(N) must stay bounded, which is
    checked as the absence of an upward trend over the tail of the
    range.  The implied constant is reported relative to the initial
    law's weighted visibility ratio.
    """
    t = cyclic.period
    theta0 = certificate.theta0
    eta_windows = _forward_images(kernel, certificate.eta_on(cyclic), t)
    v_windows = _forward_images(
        kernel, embed_class(certificate.v.values, cyclic, 0), t
    )
    vis = 0.0
    v_vis = 0.0
    for i in range(t):
        idx = cyclic.members(i)
        # eta_{t-i} = theta0**-(t-i) P_{t-i} eta
        vis += theta0 ** -(t - i) * float(
            np.dot(mu.weights[idx], eta_windows[t - i][idx])
        )
        v_vis += float(np.dot(mu.weights[idx], v_windows[t - i][idx]))
    if vis <= 0.0:
        raise EtaOrthogonal("initial mass is invisible to eta")

    target = nu_qe(kernel, cyclic, certificate)(f)
    curve = time_average_curve(kernel, mu, f, n_max)
    errors = np.abs(curve - target)
    weighted = (np.arange(n_max + 1) + 1.0) * errors

    tail = weighted[n_max // 2:]
    half = len(tail) // 2
    head_max = float(tail[:half].max()) if half else 0.0
    tail_max = float(tail[half:].max()) if half else 0.0
    bounded = tail_max <= head_max * 1.05 + 1e-12

    sup_weighted = float(weighted.max())
    implied = sup_weighted * vis / v_vis if v_vis > 0 else np.inf
    return QedRateReport(
        n_max=n_max,
        limit_value=float(target),
        errors=errors,
        weighted=weighted,
        sup_weighted=sup_weighted,
        implied_constant=implied,
        bounded_ok=bool(bounded),
    )


def second_moment_exact(kernel: AbsorbedKernel, cyclic: CyclicStructure,
                        certificate: SpectralCertificate, mu: DiscreteMeasure,
                        f: StateFunction, n_steps: int) -> float:
    """Conditional second moment of the centered running average.

    The observable is centered by its quasi-ergodic value internally.
    Cached forward measures keep the double time sum at O(N^2 n^2); the
    value tends to zero in N, which upgrades the mean convergence to
    convergence in conditional probability.
    """
    _check_observable(f)
    centered = f.values - nu_qe(kernel, cyclic, certificate)(f)
    fwd, bwd = _sweeps(kernel, mu, n_steps)
    surv = float(fwd[n_steps].sum())
    if surv <= 0.0:
        raise Extinct(f"no surviving mass at time {n_steps}")
    diag = sum(
        float(np.dot(fwd[m] * centered ** 2, bwd[n_steps - m]))
        for m in range(n_steps + 1)
    )
    cross = 0.0
    for m_hi in range(1, n_steps + 1):
        w = centered * bwd[n_steps - m_hi]
        for d in range(1, m_hi + 1):
            w = kernel.matrix @ w
            cross += float(np.dot(fwd[m_hi - d] * centered, w))
    return (diag + 2.0 * cross) / ((n_steps + 1) ** 2 * surv)
