"""Quasi-stationary distributions and their periodic correspondence.

A QSD of a kernel is a probability measure that the chain, conditioned on
survival, leaves fixed after one step; equivalently a nonnegative left
eigenvector whose eigenvalue is the per-step survival rate.  For a chain
of period t the QSDs of the one-step kernel are in bijection with the
QSDs of the t-step kernel restricted to the start class; the t-step
kernel on all of E additionally carries a (t-1)-dimensional family of
QSDs of which exactly one member survives the bijection.
"""

from __future__ import annotations

import numpy as np

from .chain import (
    AbsorbedKernel,
    CyclicStructure,
    DiscreteMeasure,
    embed_class,
    restrict_class,
    restrict_iterated,
)
from .errors import (
    DegenerateWeight,
    DimensionMismatch,
    NotAQSD,
    ThetaZero,
    ZeroMassOnA0,
)

QSD_TOL = 1e-9


def is_qsd(kernel: AbsorbedKernel, mu: DiscreteMeasure,
           tol: float = QSD_TOL) -> tuple[bool, float]:
    """Check the one-step fixed-point property of a candidate QSD.

    Returns ``(flag, theta)`` where theta is the one-step survival mass
    of mu and the flag says whether mu P = theta mu in L1 up to tol.
    """
    w = mu.weights
    if w.shape[0] != kernel.n:
        raise DimensionMismatch("measure length does not match kernel size")
    pushed = w @ kernel.matrix
    theta = float(pushed.sum())
    if theta <= 0.0:
        raise ThetaZero("one-step survival mass is zero; conditioning undefined")
    residual = float(np.abs(pushed - theta * w).sum())
    return residual <= tol, theta


def _nu_pushes(nu_e: np.ndarray, kernel: AbsorbedKernel, t: int) -> list[np.ndarray]:
    out = [nu_e]
    for _ in range(t - 1):
        out.append(out[-1] @ kernel.matrix)
    return out


def qsd_periodic_weights(nu: DiscreteMeasure, theta0: float,
                         kernel: AbsorbedKernel,
                         cyclic: CyclicStructure) -> np.ndarray:
    """Mixture weights that turn the t-step QSD family into a one-step QSD.

    The i-th weight is proportional to theta0**-i times the surviving
    mass of nu pushed i steps.  This is the single source of truth for
    the reconstruction profile; both the reconstruction and its tests
    use it.
    """
    t = cyclic.period
    nu_e = embed_class(nu.weights, cyclic, 0)
    pushes = _nu_pushes(nu_e, kernel, t)
    raw = np.array([theta0 ** -i * pushes[i].sum() for i in range(t)])
    return raw / raw.sum()


def qsd_from_iterated(nu: DiscreteMeasure, theta0: float,
                      kernel: AbsorbedKernel, cyclic: CyclicStructure,
                      tol: float = QSD_TOL) -> DiscreteMeasure:
    """Rebuild the one-step QSD on E from a t-step QSD on the start class.

    The result spreads nu over the cyclic classes with geometric weights
    theta0**-i and renormalizes; it has one-step survival rate theta0.

    Raises
    ------
    NotAQSD
        nu fails the fixed-point check for the iterated kernel.
    """
    q = restrict_iterated(kernel, cyclic)
    ok, theta_q = is_qsd(q, nu, tol)
    if not ok:
        raise NotAQSD("input measure is not a QSD of the iterated kernel")
    t = cyclic.period
    if abs(theta_q - theta0 ** t) > max(tol, 1e-9):
        raise NotAQSD(
            f"measured iterated rate {theta_q} disagrees with theta0**t"
        )
    nu_e = embed_class(nu.weights, cyclic, 0)
    pushes = _nu_pushes(nu_e, kernel, t)
    total = sum(theta0 ** -i * pushes[i] for i in range(t))
    return DiscreteMeasure(total / total.sum())


def iterated_from_qsd(nu_qs: DiscreteMeasure,
                      cyclic: CyclicStructure) -> DiscreteMeasure:
    """Restrict a one-step QSD to the start class and renormalize."""
    if nu_qs.weights.shape[0] != len(cyclic.states):
        raise DimensionMismatch("measure length does not match state count")
    on_a0 = restrict_class(nu_qs.weights, cyclic, 0)
    mass = float(on_a0.sum())
    if mass <= 0.0:
        raise ZeroMassOnA0(
            "no mass on the start class: the input cannot be a one-step QSD"
        )
    return DiscreteMeasure(on_a0 / mass)


def iterated_qsd_family(nu: DiscreteMeasure, kernel: AbsorbedKernel,
                        cyclic: CyclicStructure, weights,
                        tol: float = QSD_TOL) -> DiscreteMeasure:
    """Convex combination of the pushed-and-renormalized copies of nu.

    Every member is a QSD of the t-step kernel on E.  Exactly the
    combination with weights from :func:`qsd_periodic_weights` is also a
    QSD of the one-step kernel.
    """
    t = cyclic.period
    w = np.asarray(weights, dtype=float)
    if w.shape != (t,):
        raise DegenerateWeight(f"need {t} weights, got shape {w.shape}")
    if np.any(w < 0.0) or abs(w.sum() - 1.0) > 1e-12:
        raise DegenerateWeight("weights must be nonnegative and sum to 1")
    q = restrict_iterated(kernel, cyclic)
    ok, _ = is_qsd(q, nu, tol)
    if not ok:
        raise NotAQSD("input measure is not a QSD of the iterated kernel")
    nu_e = embed_class(nu.weights, cyclic, 0)
    pushes = _nu_pushes(nu_e, kernel, t)
    masses = [p.sum() for p in pushes]
    if min(masses) <= 0.0:
        raise DegenerateWeight("a pushed copy of nu has zero surviving mass")
    mix = sum(w[i] * pushes[i] / masses[i] for i in range(t))
    return DiscreteMeasure(mix)
