"""Leading-eigenpair computation and spectral classification.

The t-step kernel restricted to the starting class is an irreducible,
aperiodic substochastic matrix Q.  Its spectral radius equals theta0**t
for a decay rate theta0 in (0, 1], with a nonnegative right eigenvector
eta and a left eigenmeasure nu.  The pair (eta, nu), the subdominant
ratio alpha and the scan constant C_Q together certify the geometric
forgetting of the conditioned chain; everything downstream (limit
profiles, the conditioned-forever chain, time averages) is expressed in
terms of this certificate.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .chain import (
    AbsorbedKernel,
    CyclicStructure,
    DiscreteMeasure,
    StateFunction,
    embed_class,
    matrix_powers,
    restrict_iterated,
)
from .errors import (
    AlphaIsOne,
    DimensionMismatch,
    InconsistentCertificate,
    OracleFailure,
    PeripheralMultiplicity,
    ZeroKernel,
)

# Two eigenvalues closer than this in modulus count as a degenerate peak.
PERIPHERAL_TOL = 1e-9
# Residuals below this are "numerically zero" when alpha == 0 makes the
# geometric envelope vanish identically.
ZERO_RESIDUAL_TOL = 1e-11
# A subdominant modulus measured below this is indistinguishable from zero;
# its t-th root would amplify eigensolver noise into the bulk bound.
ALPHA_RESOLUTION = 1e-13
DENSE_EIG_LIMIT = 512
POWER_ITER_TOL = 1e-13
POWER_ITER_MAX = 10**6


class MixingBounds(NamedTuple):
    c_q: float
    alpha: float
    details: dict


@dataclass(frozen=True)
class SpectralCertificate:
    """Leading spectral data of the iterated kernel on the start class.

    ``theta0`` is the per-step decay rate (the t-th root of the spectral
    radius of the iterated kernel).  ``eta`` and ``nu`` live on the start
    class; when a formula needs them on E they are extended by zero.
    """

    period: int
    theta0: float
    eta: StateFunction
    nu: DiscreteMeasure
    v: StateFunction
    c_q: float
    alpha: float
    c_q_prime: float
    k_max: int
    details: dict = field(default_factory=dict, repr=False)

    @property
    def theta0_pow_t(self) -> float:
        return self.theta0 ** self.period

    def eta_on(self, cyclic: CyclicStructure) -> np.ndarray:
        return embed_class(self.eta.values, cyclic, 0)

    def nu_on(self, cyclic: CyclicStructure) -> np.ndarray:
        return embed_class(self.nu.weights, cyclic, 0)

    def v_on(self, cyclic: CyclicStructure) -> np.ndarray:
        return embed_class(self.v.values, cyclic, 0)


def _leading_pair_dense(q: np.ndarray) -> tuple[float, float, np.ndarray, np.ndarray]:
    """(radius, second modulus, right vec, left vec) by dense decomposition."""
    try:
        vals, vecs = np.linalg.eig(q)
        lvals, lvecs = np.linalg.eig(q.T)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise OracleFailure(f"eigensolver failed: {exc}") from exc
    moduli = np.abs(vals)
    lead = int(np.argmax(moduli))
    radius = float(moduli[lead])
    second = float(np.max(np.delete(moduli, lead))) if len(vals) > 1 else 0.0
    right = vecs[:, lead]
    lidx = int(np.argmin(np.abs(lvals - vals[lead])))
    left = lvecs[:, lidx]
    return radius, second, right, left


def _power_iteration(q: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    n = q.shape[0]
    right = np.ones(n)
    left = np.ones(n)
    lam = 0.0
    for _ in range(POWER_ITER_MAX):
        new_r = q @ right
        new_l = left @ q
        new_lam = float(new_r.max())
        if new_lam <= 0.0:
            raise ZeroKernel("power iteration collapsed to zero")
        new_r /= new_lam
        new_l /= max(new_l.max(), np.finfo(float).tiny)
        done = (
            abs(new_lam - lam) <= POWER_ITER_TOL * max(abs(new_lam), 1e-300)
            and np.max(np.abs(new_r - right)) <= POWER_ITER_TOL
            and np.max(np.abs(new_l - left)) <= POWER_ITER_TOL
        )
        right, left, lam = new_r, new_l, new_lam
        if done:
            return lam, right, left
    raise OracleFailure("power iteration did not converge")


def _as_nonnegative(vec: np.ndarray, what: str) -> np.ndarray:
    v = np.real(vec)
    if v.sum() < 0:
        v = -v
    floor = -1e-9 * max(1.0, float(np.max(np.abs(v))))
    if v.min() < floor:
        raise OracleFailure(f"{what} eigenvector is not sign-definite")
    return np.maximum(v, 0.0)


def compute_perron(q_kernel: AbsorbedKernel,
                   dense_limit: int = DENSE_EIG_LIMIT
                   ) -> tuple[float, StateFunction, DiscreteMeasure]:
    """Leading eigenvalue and eigenpair of an iterated kernel.

    Returns ``(radius, eta, nu)`` with ``nu`` a probability measure and
    ``nu(eta) = 1``.  Dense decomposition is the oracle up to
    ``dense_limit`` states; beyond that a renormalized power iteration
    (relative tolerance 1e-13) is used.

    Raises
    ------
    ZeroKernel
        The kernel has spectral radius zero.
    PeripheralMultiplicity
        A second eigenvalue has modulus within 1e-9 of the radius, so no
        geometric mixing rate below the radius exists.
    """
    q = q_kernel.matrix
    n = q.shape[0]
    if not np.any(q > 0.0):
        raise ZeroKernel("iterated kernel is identically zero")
    if n <= dense_limit:
        radius, second, right, left = _leading_pair_dense(q)
        if radius <= 1e-300:
            raise ZeroKernel("spectral radius is zero")
        if n > 1 and radius - second <= PERIPHERAL_TOL:
            raise PeripheralMultiplicity(
                f"second eigenvalue modulus {second} within 1e-9 of radius {radius}"
            )
    else:
        radius, right, left = _power_iteration(q)
    eta = _as_nonnegative(right, "right")
    nu = _as_nonnegative(left, "left")
    if nu.sum() <= 0.0 or eta.max() <= 0.0:
        raise ZeroKernel("degenerate leading eigenvector")
    nu = nu / nu.sum()
    pairing = float(nu @ eta)
    if pairing <= 0.0:
        raise OracleFailure("left/right eigenvectors are orthogonal")
    eta = eta / pairing
    return float(radius), StateFunction(eta), DiscreteMeasure(nu)


def certify_mixing(q_kernel: AbsorbedKernel, eta: StateFunction,
                   nu: DiscreteMeasure, theta0_pow_t: float,
                   v: StateFunction | None = None,
                   k_max: int = 200) -> MixingBounds:
    """Measure the geometric-forgetting constants (C_Q, alpha) of Q.

    ``alpha`` is the modulus ratio of the subdominant eigenvalue to the
    radius (exact on a finite space; 0 for a one-state class).  ``C_Q``
    makes

        |radius**-k Q^k f(x) - eta(x) nu(f)|  <=  C_Q alpha**k V(x)

    hold for every |f| <= V and every k <= k_max: the scan walks the
    signed scaled basis functions and combines them by the triangle
    inequality, which attains the sup over {|f| <= V} exactly.  Once
    alpha**k drops below float resolution the measured residual is pure
    round-off, so those k are excluded from the max and their worst
    residual is reported separately.  With alpha == 0 the residual must
    vanish (up to round-off) for k >= 1 and the 0/0 convention gives
    C_Q = 0.
    """
    q = q_kernel.matrix
    n = q.shape[0]
    if v is None:
        v = StateFunction(np.ones(n))
    vv = v.values
    if np.any(vv < 1.0 - 1e-12):
        raise DimensionMismatch("weight vector must be >= 1 everywhere")
    if vv.shape[0] != n:
        raise DimensionMismatch("weight vector length mismatch")

    if n == 1:
        alpha = 0.0
    else:
        vals = np.linalg.eigvals(q)
        moduli = np.sort(np.abs(vals))[::-1]
        if moduli[0] - moduli[1] <= PERIPHERAL_TOL:
            raise AlphaIsOne("subdominant modulus equals the radius")
        alpha = float(moduli[1] / theta0_pow_t)

    # Beyond k_eff the true residual sits below float resolution and the
    # measured one is round-off noise; ratios there would be meaningless.
    if 0.0 < alpha < 1.0:
        k_eff = min(k_max, max(1, math.ceil(math.log(1e-12) / math.log(alpha))))
    else:
        k_eff = k_max
    rank_one = np.outer(eta.values, nu.weights)
    step = q / theta0_pow_t
    w = np.eye(n)
    c_q = 0.0
    c_q_basis = 0.0
    k0_ratio = 0.0
    tail_residual = 0.0
    max_zero_residual = 0.0
    for k in range(k_max + 1):
        d = np.abs(w - rank_one)
        weighted = d * vv[np.newaxis, :]
        full = weighted.sum(axis=1) / vv
        basis = weighted.max(axis=1) / vv
        if k == 0:
            k0_ratio = float(full.max())
        if alpha == 0.0 and k >= 1:
            max_zero_residual = max(max_zero_residual, float(d.max()))
        elif k <= k_eff:
            envelope = alpha ** k
            c_q = max(c_q, float(full.max()) / envelope)
            c_q_basis = max(c_q_basis, float(basis.max()) / envelope)
        else:
            tail_residual = max(tail_residual, float(full.max()))
        w = w @ step
    if alpha == 0.0:
        if max_zero_residual > ZERO_RESIDUAL_TOL:
            raise InconsistentCertificate(
                f"alpha = 0 but residual {max_zero_residual:.3e} does not vanish"
            )
        # one-dimensional or exactly rank-one kernels forget in one step
        c_q = 0.0
        c_q_basis = 0.0

    bound = float(np.max(eta.values / vv)) * float(nu(v)) + c_q * alpha
    q1v = q @ vv
    gap = float(np.max(q1v - bound * vv))
    details = {
        "c_q_basis": c_q_basis,
        "k0_residual_ratio": k0_ratio,
        "k_effective": k_eff,
        "tail_residual": tail_residual,
        "one_step_bound": bound,
        "one_step_bound_ok": bool(gap <= 1e-12),
        "one_step_bound_gap": gap,
        "alpha_zero_max_residual": max_zero_residual,
        "k_max": k_max,
    }
    return MixingBounds(c_q, alpha, details)


def build_certificate(kernel: AbsorbedKernel, cyclic: CyclicStructure,
                      v: StateFunction | None = None,
                      k_max: int = 200) -> SpectralCertificate:
    """Assemble the full spectral certificate for a validated chain."""
    q = restrict_iterated(kernel, cyclic)
    radius, eta, nu = compute_perron(q)
    if v is None:
        v = StateFunction(np.ones(q.n))
    c_q, alpha, details = certify_mixing(q, eta, nu, radius, v, k_max)
    t = cyclic.period
    theta0 = radius ** (1.0 / t)
    c_q_prime = (
        c_q * radius ** -2
        * (float(np.max(eta.values / v.values)) * float(nu(v)) + c_q * alpha) ** 2
    )
    return SpectralCertificate(
        period=t, theta0=theta0, eta=eta, nu=nu, v=v,
        c_q=c_q, alpha=alpha, c_q_prime=c_q_prime, k_max=k_max,
        details=details,
    )


def build_extended_kernel(kernel: AbsorbedKernel) -> np.ndarray:
    """Adjoin the cemetery as an explicit absorbing state.

    Returns the (n+1) x (n+1) stochastic matrix whose last row is a unit
    mass on the cemetery and whose last column is the absorption vector.
    """
    n = kernel.n
    out = np.zeros((n + 1, n + 1))
    out[:n, :n] = kernel.matrix
    out[:n, n] = kernel.absorption
    out[n, n] = 1.0
    return out


def ring_eigenfunction(kernel: AbsorbedKernel, cyclic: CyclicStructure,
                       certificate: SpectralCertificate,
                       omega: complex) -> np.ndarray:
    """Explicit eigenfunction of the one-step kernel at eigenvalue theta0*omega.

    For each t-th root of unity omega, the alternating combination
    sum_i omega**-i theta0**-i P_i eta (eta extended by zero off the start
    class) is an exact eigenfunction on E.
    """
    t = cyclic.period
    theta0 = certificate.theta0
    eta_e = certificate.eta_on(cyclic).astype(complex)
    h = np.zeros(kernel.n, dtype=complex)
    vec = eta_e.copy()
    for i in range(t):
        h += vec
        vec = (kernel.matrix @ vec) / (theta0 * omega)
    return h


@dataclass(frozen=True)
class SpectrumReport:
    """Classification of the extended kernel's eigenvalues."""

    theta0: float
    alpha: float
    period: int
    eigenvalues_extended: tuple[complex, ...]
    eigenvalues_restricted: tuple[complex, ...]
    unit: dict
    ring: tuple[dict, ...]
    bulk_moduli: tuple[float, ...]
    bulk_bound: float
    bulk_ok: bool
    eigenfunction_table: tuple[dict, ...]

    @property
    def all_ok(self) -> bool:
        ring_ok = all(r["simple"] and r["h_residual"] <= 1e-8
                      and r["match_residual"] <= 1e-8 for r in self.ring)
        return bool(ring_ok and self.bulk_ok and self.unit["ok"])


def _sorted_spectrum(vals: np.ndarray) -> tuple[complex, ...]:
    order = sorted(
        range(len(vals)),
        key=lambda i: (-abs(vals[i]), -vals[i].real, -vals[i].imag),
    )
    return tuple(complex(vals[i]) for i in order)


def classify_spectrum(kernel: AbsorbedKernel, cyclic: CyclicStructure,
                      certificate: SpectralCertificate,
                      tol: float = 1e-8) -> SpectrumReport:
    """Partition the spectrum into unit / peripheral ring / bulk.

    The peripheral ring of the E-restricted kernel is theta0 times the
    t-th roots of unity, each simple, carried by explicit eigenfunctions
    built from eta.  Every other eigenvalue of the restriction has
    modulus at most theta0 * alpha**(1/t).  The extension adds the
    eigenvalue 1; when theta0 < 1 its eigenfunction is constant.
    """
    t = cyclic.period
    theta0 = certificate.theta0
    alpha = certificate.alpha
    nhat = build_extended_kernel(kernel)
    try:
        vals_ext, vecs_ext = np.linalg.eig(nhat)
        vals_e, vecs_e = np.linalg.eig(kernel.matrix)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise OracleFailure(f"eigensolver failed: {exc}") from exc

    powers = matrix_powers(kernel, max(t - 1, 0))
    nu_e = certificate.nu_on(cyclic)
    nu_pi = [nu_e @ powers[i] for i in range(t)]

    # peripheral ring of the E-restricted kernel
    ring = []
    ring_indices: set[int] = set()
    for ell in range(t):
        omega = cmath.exp(2j * cmath.pi * ell / t)
        target = theta0 * omega
        dists = np.abs(vals_e - target)
        hits = np.flatnonzero(dists <= max(tol, PERIPHERAL_TOL))
        idx = int(np.argmin(dists))
        ring_indices.update(int(i) for i in hits)
        ring_indices.add(idx)
        h = ring_eigenfunction(kernel, cyclic, certificate, omega)
        h_norm = float(np.max(np.abs(h)))
        h_res = float(np.max(np.abs(kernel.matrix @ h - target * h))) / h_norm
        vec = vecs_e[:, idx]
        scale = np.vdot(vec, h) / np.vdot(vec, vec)
        match_res = float(np.max(np.abs(scale * vec - h))) / h_norm
        ring.append({
            "omega": complex(omega),
            "target": complex(target),
            "eigenvalue": complex(vals_e[idx]),
            "distance": float(dists[idx]),
            "simple": bool(len(hits) == 1),
            "h_residual": h_res,
            "match_residual": match_res,
            "nu_P_i_h": tuple(complex(np.dot(nu_pi[i], h)) for i in range(t)),
            "nu_P_i_h_expected": tuple(
                complex(omega ** i * theta0 ** i) for i in range(t)
            ),
        })

    # An alpha at the eigensolver's noise floor cannot be rooted
    # meaningfully, so the bound carries a resolution floor; the power-
    # domain comparison |theta|**t <= theta0**t alpha is checked as well,
    # since there the measurement errors do not amplify.
    bulk_bound = theta0 * max(alpha, ALPHA_RESOLUTION) ** (1.0 / t)
    bulk = sorted(
        (float(abs(vals_e[i])) for i in range(len(vals_e)) if i not in ring_indices),
        reverse=True,
    )
    bulk_ok = all(
        b <= bulk_bound + tol and b ** t <= theta0 ** t * alpha + 1e-12
        for b in bulk
    )

    # the adjoined absorbing state always carries the eigenvalue 1
    unit_hits = np.flatnonzero(np.abs(vals_ext - 1.0) <= max(tol, PERIPHERAL_TOL))
    theta0_below_one = bool(theta0 < 1.0 - PERIPHERAL_TOL)
    unit: dict = {
        "present": bool(len(unit_hits) > 0),
        "multiplicity": int(len(unit_hits)),
        "theta0_less_than_one": theta0_below_one,
        "constant_residual": None,
    }
    if theta0_below_one and len(unit_hits) == 1:
        vec = vecs_ext[:, int(unit_hits[0])]
        vec = vec / vec[np.argmax(np.abs(vec))]
        unit["constant_residual"] = float(np.max(np.abs(vec - vec.mean())))
        unit["ok"] = bool(unit["present"] and unit["constant_residual"] <= tol)
    else:
        # theta0 == 1 merges the ring's unit eigenvalue with the cemetery's:
        # the hypothesis of the constant-eigenfunction statement fails.
        unit["ok"] = unit["present"]

    table = []
    for i in range(len(vals_ext)):
        lam = complex(vals_ext[i])
        vec = vecs_ext[:, i]
        vec = vec / max(np.max(np.abs(vec)), 1e-300)
        h_bound = float(abs(vec[-1]))
        h_e = vec[:-1]
        nu_vals = tuple(complex(np.dot(nu_pi[k], h_e)) for k in range(t))
        if h_bound > tol:
            point = "unit" if abs(lam - 1.0) <= tol else "unclassified"
        elif max(abs(z) for z in nu_vals) > tol:
            point = "ring" if abs(abs(lam) - theta0) <= tol else "unclassified"
        else:
            point = "bulk"
        table.append({
            "eigenvalue": lam,
            "h_at_cemetery": h_bound,
            "nu_P_i_h": nu_vals,
            "point": point,
        })

    return SpectrumReport(
        theta0=theta0,
        alpha=alpha,
        period=t,
        eigenvalues_extended=_sorted_spectrum(vals_ext),
        eigenvalues_restricted=_sorted_spectrum(vals_e),
        unit=unit,
        ring=tuple(ring),
        bulk_moduli=tuple(bulk),
        bulk_bound=bulk_bound,
        bulk_ok=bool(bulk_ok),
        eigenfunction_table=tuple(table),
    )


def bv_membership(f: StateFunction, kernel: AbsorbedKernel,
                  cyclic: CyclicStructure, v: StateFunction | None = None,
                  tol: float = 1e-12) -> bool:
    """Whether f belongs to the weighted test class of the limit theorems.

    Membership requires |P_i(f restricted to class i)| <= V on the start
    class for every i; with the default V == 1 this holds for every f
    bounded by 1.
    """
    if v is None:
        v = StateFunction(np.ones(len(cyclic.members(0))))
    t = cyclic.period
    a0 = cyclic.members(0)
    vec_by_class = {}
    for i in range(t):
        g = f.values * cyclic.indicator(i)
        for _ in range(i):
            g = kernel.matrix @ g
        vec_by_class[i] = g[a0]
    return all(
        bool(np.all(np.abs(vec_by_class[i]) <= v.values + tol)) for i in range(t)
    )
