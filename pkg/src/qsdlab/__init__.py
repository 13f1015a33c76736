"""Quasi-stationary analysis of periodic absorbed Markov chains.

Finite-state toolkit covering the full conditioned-chain picture:
cyclic-class detection, leading spectral data with certified mixing
constants, QSD reconstruction and its non-uniqueness family, periodic
quasi-limiting profiles with geometric error envelopes, the chain
conditioned to never be absorbed, quasi-ergodic averages with their 1/N
rate, and reproducible Monte Carlo cross-checks.
"""

from .chain import (
    AbsorbedKernel,
    CyclicStructure,
    DiscreteMeasure,
    StateFunction,
    act_left,
    act_right,
    delta,
    kernel_power,
    ones,
    restrict_iterated,
    survival_probability,
    trivial_cyclic_structure,
    validate_kernel,
)
from .chainspec import ChainSpec, parse_chain_spec, parse_v_weights
from .ergodic import (
    QedRateReport,
    nu_qe,
    qed_rate_report,
    second_moment_exact,
    time_average_curve,
    time_average_exact,
)
from .limits import (
    DecayReport,
    LyapunovWitness,
    build_phi2,
    conditional_law,
    conditional_limit,
    hyp_main_threshold,
    limit_profile,
    main_estimate_suite,
    qsd_convergence_criterion,
    verify_main_estimate,
)
from .montecarlo import (
    TrajectoryBatch,
    conditional_empirical,
    estimate_time_average_mc,
    occupation_frequencies,
    simulate_paths,
    simulate_q_process,
)
from .periodicity import detect_cyclic_structure, verify_partition
from .qprocess import (
    ContractionReport,
    EtaProfile,
    InvariantReport,
    QProcessKernel,
    build_q_process,
    contraction_report,
    eta_profile,
    invariant_candidates,
    q_semigroup_check,
    surviving_domain,
)
from .qsd import (
    is_qsd,
    iterated_from_qsd,
    iterated_qsd_family,
    qsd_from_iterated,
    qsd_periodic_weights,
)
from .spectral import (
    MixingBounds,
    SpectralCertificate,
    SpectrumReport,
    build_certificate,
    build_extended_kernel,
    bv_membership,
    certify_mixing,
    classify_spectrum,
    compute_perron,
    ring_eigenfunction,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
