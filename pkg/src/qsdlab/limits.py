"""Periodic limit profiles of the conditioned chain.

The normalized iterates theta0**-m P_m f do not converge for a periodic
chain: they approach a cycle of t limit objects indexed by the step
residue j.  This module evaluates those limit profiles, certifies the
geometric error envelope numerically, builds the auxiliary Lyapunov
function that controls conditional laws at small times, and decides
whether a given initial law washes out to a single QSD rather than a
genuine cycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chain import (
    AbsorbedKernel,
    CyclicStructure,
    DiscreteMeasure,
    StateFunction,
    embed_class,
    restrict_iterated,
)
from .errors import (
    EtaOrthogonal,
    Extinct,
    IndexOutOfRange,
    KTooSmall,
    NotInBV,
    NoValidTheta2,
)
from .spectral import SpectralCertificate, bv_membership

# Residuals below this count as exactly zero when alpha == 0 kills the
# geometric envelope (0/0 := 0 convention).
ZERO_RATIO_TOL = 1e-11
FIT_FLOOR = 1e-11
RATE_MARGIN = 0.02


def _eta_sweep(kernel: AbsorbedKernel, cyclic: CyclicStructure,
               vec_on_a0: np.ndarray) -> list[np.ndarray]:
    """[g_0, ..., g_t] with g_m the m-step image of the zero-extension."""
    g = embed_class(vec_on_a0, cyclic, 0)
    out = [g]
    for _ in range(cyclic.period):
        out.append(kernel.matrix @ out[-1])
    return out


def _nu_pushes(kernel: AbsorbedKernel, cyclic: CyclicStructure,
               certificate: SpectralCertificate, upto: int) -> list[np.ndarray]:
    nu = certificate.nu_on(cyclic)
    out = [nu]
    for _ in range(upto):
        out.append(out[-1] @ kernel.matrix)
    return out


def class_eta_weights(kernel: AbsorbedKernel, cyclic: CyclicStructure,
                      certificate: SpectralCertificate,
                      mu: DiscreteMeasure) -> np.ndarray:
    """Per-class visibility of mu: mass on class i paired with P_{t-i} eta."""
    t = cyclic.period
    sweep = _eta_sweep(kernel, cyclic, certificate.eta.values)
    w = np.zeros(t)
    for i in range(t):
        idx = cyclic.members(i)
        w[i] = float(np.dot(mu.weights[idx], sweep[t - i][idx]))
    return w


def class_v_weights(kernel: AbsorbedKernel, cyclic: CyclicStructure,
                    certificate: SpectralCertificate,
                    mu: DiscreteMeasure) -> np.ndarray:
    t = cyclic.period
    sweep = _eta_sweep(kernel, cyclic, certificate.v.values)
    w = np.zeros(t)
    for i in range(t):
        idx = cyclic.members(i)
        w[i] = float(np.dot(mu.weights[idx], sweep[t - i][idx]))
    return w


def limit_profile(kernel: AbsorbedKernel, cyclic: CyclicStructure,
                  certificate: SpectralCertificate, j: int,
                  x: str | None = None,
                  mu: DiscreteMeasure | None = None
                  ) -> tuple[float, DiscreteMeasure]:
    """Limit of theta0**-(nt+j) P_{nt+j} as a (coefficient, measure) pair.

    For a point x in class k the limit of theta0**-(nt+j) P_{nt+j} f(x)
    is coefficient * measure(f) with coefficient
    theta0**-(t+j) P_{t-k} eta(x) and measure nu P_{k+j}.  For an initial
    law mu the class contributions are summed into a single measure and
    the coefficient is theta0**-(t+j).
    """
    t = cyclic.period
    if not 0 <= j < t:
        raise IndexOutOfRange(f"step residue {j} outside 0..{t - 1}")
    if (x is None) == (mu is None):
        raise IndexOutOfRange("give exactly one of x or mu")
    theta0 = certificate.theta0
    pushes = _nu_pushes(kernel, cyclic, certificate, 2 * t - 1)
    if x is not None:
        xi = kernel.index(x)
        k = int(cyclic.class_index[xi])
        sweep = _eta_sweep(kernel, cyclic, certificate.eta.values)
        coef = theta0 ** -(t + j) * float(sweep[t - k][xi])
        return coef, DiscreteMeasure(pushes[k + j])
    w = class_eta_weights(kernel, cyclic, certificate, mu)
    mixed = sum(w[i] * pushes[i + j] for i in range(t))
    return theta0 ** -(t + j), DiscreteMeasure(mixed)


@dataclass(frozen=True)
class DecayReport:
    """Measured error envelope of the periodic limit approximation."""

    n_max: int
    period: int
    alpha: float
    c_q_prime: float
    ratios: np.ndarray = field(repr=False)   # (n_max, t): R(n, j) / alpha**n
    residuals: np.ndarray = field(repr=False)  # (n_max, t): raw R(n, j)
    sup_ratio: float
    ratio_ok: bool
    fitted_rate: float
    rate_ok: bool
    zero_denominator_states: tuple[str, ...]

    @property
    def all_ok(self) -> bool:
        return bool(self.ratio_ok and self.rate_ok)


def _fit_rate(r_by_n: np.ndarray) -> float:
    """Geometric rate of a decaying positive sequence via log regression.

    Only the leading stretch above the numerical noise floor enters the
    fit; fewer than three usable points mean the decay is too fast to
    measure and the rate reports as 0.
    """
    floor = max(FIT_FLOOR, FIT_FLOOR * float(r_by_n[:1].max(initial=0.0)))
    usable: list[tuple[int, float]] = []
    for n, r in enumerate(r_by_n, start=1):
        if r <= floor:
            break
        usable.append((n, math.log(r)))
    if len(usable) < 3:
        return 0.0
    ns = np.array([p[0] for p in usable], dtype=float)
    ys = np.array([p[1] for p in usable])
    slope = np.polyfit(ns, ys, 1)[0]
    return float(np.exp(slope))


def _profiles(kernel: AbsorbedKernel, cyclic: CyclicStructure,
              certificate: SpectralCertificate) -> tuple[list[np.ndarray], np.ndarray]:
    """Per-residue limit matrices and the weighted denominator vector."""
    t = cyclic.period
    theta0 = certificate.theta0
    n = kernel.n
    pushes = _nu_pushes(kernel, cyclic, certificate, 2 * t - 1)
    eta_sweep = _eta_sweep(kernel, cyclic, certificate.eta.values)
    v_sweep = _eta_sweep(kernel, cyclic, certificate.v.values)
    den = np.zeros(n)
    coef = np.zeros(n)
    for k in range(t):
        idx = cyclic.members(k)
        den[idx] = v_sweep[t - k][idx]
        coef[idx] = eta_sweep[t - k][idx]
    profiles = []
    for j in range(t):
        prof = np.zeros((n, n))
        for k in range(t):
            idx = cyclic.members(k)
            prof[idx, :] = theta0 ** -(t + j) * np.outer(coef[idx], pushes[k + j])
        profiles.append(prof)
    return profiles, den


def _decay_report(kernel: AbsorbedKernel, cyclic: CyclicStructure,
                  certificate: SpectralCertificate,
                  row_residual, n_max: int) -> DecayReport:
    """Shared driver: row_residual(diff_matrix) -> per-state residual vector."""
    t = cyclic.period
    theta0 = certificate.theta0
    alpha = certificate.alpha
    profiles, den = _profiles(kernel, cyclic, certificate)
    ok = den > 0.0
    if not ok.any():
        raise EtaOrthogonal("weighted denominator vanishes everywhere")
    zero_states = tuple(
        kernel.states[i] for i in np.flatnonzero(~ok)
    )
    residuals = np.zeros((n_max, t))
    current = np.eye(kernel.n)  # theta0**-m P_m
    m = 0
    for n in range(1, n_max + 1):
        for j in range(t):
            target = n * t + j
            while m < target:
                current = kernel.matrix @ current / theta0
                m += 1
            rows = row_residual(current - profiles[j])
            residuals[n - 1, j] = float((rows[ok] / den[ok]).max())
    # Residuals at the round-off floor count as zero: past that point the
    # measured value is accumulated float noise, not signal, and dividing
    # it by alpha**n would certify nothing.
    noise = max(ZERO_RATIO_TOL,
                (n_max * t + t) * 5e-15 / float(den[ok].min()))
    ratios = np.zeros_like(residuals)
    live = residuals > noise
    if alpha > 0.0:
        envelopes = alpha ** np.arange(1, n_max + 1)
        # an envelope that underflows under a live residual is a genuine
        # failure; the resulting inf is wanted, only the warning is not
        with np.errstate(divide="ignore", over="ignore"):
            ratios[live] = (residuals / envelopes[:, None])[live]
        ratio_ok = True
    else:
        ratios[live] = np.inf
        ratio_ok = not bool(live.any())
    sup_ratio = float(ratios.max()) if ratios.size else 0.0
    ratio_ok = bool(ratio_ok and sup_ratio <= certificate.c_q_prime + 1e-12)
    fitted = _fit_rate(residuals.max(axis=1))
    return DecayReport(
        n_max=n_max,
        period=t,
        alpha=alpha,
        c_q_prime=certificate.c_q_prime,
        ratios=ratios,
        residuals=residuals,
        sup_ratio=sup_ratio,
        ratio_ok=ratio_ok,
        fitted_rate=fitted,
        rate_ok=bool(fitted <= alpha + RATE_MARGIN),
        zero_denominator_states=zero_states,
    )


def verify_main_estimate(kernel: AbsorbedKernel, cyclic: CyclicStructure,
                         certificate: SpectralCertificate, f: StateFunction,
                         n_max: int = 40) -> DecayReport:
    """Certify the geometric envelope of the limit profile for one test f.

    For n = 1..n_max and every step residue j, measures the worst
    weighted deviation of theta0**-(nt+j) P_{nt+j} f from its limit
    profile, checks sup_n R(n, j)/alpha**n against the certificate
    constant, and fits the empirical decay rate.
    """
    if not bv_membership(f, kernel, cyclic, certificate.v):
        raise NotInBV("test function exceeds the weighted class bound")
    fv = f.values

    def row_residual(diff: np.ndarray) -> np.ndarray:
        return np.abs(diff @ fv)

    return _decay_report(kernel, cyclic, certificate, row_residual, n_max)


def main_estimate_suite(kernel: AbsorbedKernel, cyclic: CyclicStructure,
                        certificate: SpectralCertificate,
                        n_max: int = 40) -> DecayReport:
    """Envelope certification over the whole signed-basis family at once.

    The residual is linear in f, so the signed indicators +-e_y attain
    the same absolute deviation; scanning the columns of the matrix
    difference covers all of them, and the all-ones function is included
    on top.  Every member is bounded by 1 and hence admissible.
    """

    def row_residual(diff: np.ndarray) -> np.ndarray:
        per_basis = np.abs(diff).max(axis=1)
        ones = np.abs(diff.sum(axis=1))
        return np.maximum(per_basis, ones)

    return _decay_report(kernel, cyclic, certificate, row_residual, n_max)


def conditional_law(kernel: AbsorbedKernel, mu: DiscreteMeasure,
                    n: int) -> DiscreteMeasure:
    """Law of the chain at time n conditioned on survival up to n."""
    w = mu.weights
    for _ in range(n):
        w = w @ kernel.matrix
    mass = float(w.sum())
    if mass <= 0.0:
        raise Extinct(f"no surviving mass at time {n}")
    return DiscreteMeasure(w / mass)


def conditional_limit(kernel: AbsorbedKernel, cyclic: CyclicStructure,
                      certificate: SpectralCertificate, mu: DiscreteMeasure,
                      j: int) -> DiscreteMeasure:
    """The j-th member of the limit cycle of conditional laws."""
    t = cyclic.period
    if not 0 <= j < t:
        raise IndexOutOfRange(f"step residue {j} outside 0..{t - 1}")
    w = class_eta_weights(kernel, cyclic, certificate, mu)
    if w.sum() <= 0.0:
        raise EtaOrthogonal("initial mass is invisible to eta")
    pushes = _nu_pushes(kernel, cyclic, certificate, 2 * t - 1)
    mixed = sum(w[i] * pushes[i + j] for i in range(t))
    mass = float(mixed.sum())
    if mass <= 0.0:
        raise EtaOrthogonal("limit profile has zero mass")
    return DiscreteMeasure(mixed / mass)


@dataclass(frozen=True)
class LyapunovWitness:
    """Certified auxiliary function controlling early conditional laws.

    ``phi2`` lives on the start class, takes values in [0, 1], is
    positive on the core set K, and satisfies the drift inequality
    Q_1 phi2 >= theta2**t phi2 entrywise.
    """

    theta2: float
    epsilon: float
    n0: int
    k_mask: np.ndarray = field(repr=False)
    k_labels: tuple[str, ...]
    phi2: StateFunction
    details: dict = field(default_factory=dict, repr=False)


def build_phi2(kernel: AbsorbedKernel, cyclic: CyclicStructure,
               certificate: SpectralCertificate,
               theta2: float | None = None,
               epsilon: float | None = None,
               literal_step_event: bool = False,
               n0_cap: int = 100_000) -> LyapunovWitness:
    """Construct the Lyapunov witness on the start class.

    Defaults: theta2 sits strictly between theta0 * alpha**(1/t) and
    theta0 (geometric midpoint, floored at theta0/2 when alpha is tiny);
    epsilon is the largest power 2**-m whose core set
    K = {eta >= eps, V <= 1/eps} carries nu-mass at least 1/2; n0 is the
    smallest number of t-step blocks after which the return to K beats
    theta2**(n0 t) uniformly on K.

    ``literal_step_event`` counts n0 in single steps of the chain rather
    than t-step blocks (only multiples of t can then return to K); the
    default block reading is the one whose drift inequality is
    guaranteed.
    """
    t = cyclic.period
    theta0 = certificate.theta0
    alpha = certificate.alpha
    q = restrict_iterated(kernel, cyclic)
    eta = certificate.eta.values
    vv = certificate.v.values
    nu = certificate.nu

    lower = theta0 * alpha ** (1.0 / t) if alpha > 0.0 else 0.0
    if theta2 is None:
        theta2 = theta0 * max(alpha ** (1.0 / (2.0 * t)) if alpha > 0.0 else 0.0, 0.5)
    if not lower < theta2 < 1.0:
        raise NoValidTheta2(
            f"theta2 = {theta2} outside the admissible interval ({lower}, 1)"
        )

    if epsilon is None:
        chosen = None
        for m in range(0, 64):
            eps = 2.0 ** -m
            mask = (eta >= eps) & (vv <= 1.0 / eps)
            if mask.any() and float(nu.weights[mask].sum()) >= 0.5:
                chosen = (eps, mask)
                break
        if chosen is None:
            raise KTooSmall("no dyadic epsilon gives the core set half the nu-mass")
        epsilon, mask = chosen
    else:
        mask = (eta >= epsilon) & (vv <= 1.0 / epsilon)
        if not mask.any() or float(nu.weights[mask].sum()) < 0.5:
            raise KTooSmall(
                f"core set at epsilon = {epsilon} misses half the nu-mass"
            )

    ind_k = mask.astype(float)
    if literal_step_event:
        # one-step chain: only multiples of t can come back to the start class
        ind_e = embed_class(ind_k, cyclic, 0)
        vec = ind_e.copy()
        n0 = None
        for n in range(1, n0_cap + 1):
            vec = kernel.matrix @ vec
            comeback = vec[cyclic.members(0)]
            if float((theta2 ** -(n * t)) * comeback[mask].min()) >= 1.0:
                n0 = n
                break
    else:
        vec = ind_k.copy()
        n0 = None
        for n in range(1, n0_cap + 1):
            vec = q.matrix @ vec
            if float((theta2 ** -(n * t)) * vec[mask].min()) >= 1.0:
                n0 = n
                break
    if n0 is None:
        raise NoValidTheta2(
            f"return to the core set never beats theta2**(n t) "
            f"within {n0_cap} blocks; theta2 = {theta2} is too large"
        )

    scale = (theta2 ** -t - 1.0) / (theta2 ** (-n0 * t) - 1.0)
    acc = np.zeros_like(ind_k)
    vec = ind_k.copy()
    for k in range(n0):
        acc += theta2 ** (-k * t) * vec
        vec = q.matrix @ vec
    phi2 = scale * acc

    drift_slack = float(np.min(q.matrix @ phi2 - theta2 ** t * phi2))
    bound_applies = theta0 < theta2
    bound_const = None
    bound_slack = None
    if bound_applies:
        bound_const = (theta2 ** -t - 1.0) / (
            (theta2 ** (-n0 * t) - 1.0) * (1.0 - theta0 / theta2)
        )
        bound_slack = float(np.min(bound_const * eta - phi2))
    details = {
        "nu_core_mass": float(nu.weights[mask].sum()),
        "drift_slack": drift_slack,
        "range_ok": bool(phi2.min() >= -1e-15 and phi2.max() <= 1.0 + 1e-12),
        "min_on_core": float(phi2[mask].min()),
        "eta_bound_applies": bound_applies,
        "eta_bound_constant": bound_const,
        "eta_bound_slack": bound_slack,
        "literal_step_event": literal_step_event,
    }
    labels = tuple(q.states[i] for i in np.flatnonzero(mask))
    return LyapunovWitness(
        theta2=float(theta2), epsilon=float(epsilon), n0=int(n0),
        k_mask=mask, k_labels=labels, phi2=StateFunction(phi2),
        details=details,
    )


def hyp_main_threshold(kernel: AbsorbedKernel, cyclic: CyclicStructure,
                       certificate: SpectralCertificate,
                       mu: DiscreteMeasure) -> int:
    """Smallest block count after which the uniform small-time guard holds."""
    t = cyclic.period
    theta0 = certificate.theta0
    alpha = certificate.alpha
    w_eta = class_eta_weights(kernel, cyclic, certificate, mu).sum()
    if w_eta <= 0.0:
        raise EtaOrthogonal("initial mass is invisible to eta")
    if alpha == 0.0:
        return 0
    w_v = class_v_weights(kernel, cyclic, certificate, mu).sum()
    base = certificate.c_q_prime * theta0 ** (-4 * t) * w_v / w_eta
    if base <= 0.5:
        return 0
    n = max(0, math.ceil(math.log(2.0 * base) / -math.log(alpha)))
    while base * alpha ** n > 0.5:  # guard against rounding at the edge
        n += 1
    return n


def qsd_convergence_criterion(kernel: AbsorbedKernel, cyclic: CyclicStructure,
                              certificate: SpectralCertificate,
                              mu: DiscreteMeasure,
                              rtol: float = 1e-9) -> bool:
    """Whether the conditional laws of mu converge to a single QSD.

    True exactly when the per-class eta-visibilities of mu follow the
    geometric profile theta0**-i, which makes the limit cycle collapse
    to the reconstructed QSD.  A class carrying no visible mass breaks
    the profile (and indeed produces genuinely j-dependent limits).
    """
    t = cyclic.period
    theta0 = certificate.theta0
    w = class_eta_weights(kernel, cyclic, certificate, mu)
    if w.sum() <= 0.0:
        raise EtaOrthogonal("initial mass is invisible to eta")
    scaled = np.array([theta0 ** i * w[i] for i in range(t)])
    top = float(scaled.max())
    return bool(top > 0.0 and (top - float(scaled.min())) <= rtol * top)
