import numpy as np
import pytest

from qsdlab import (
    DiscreteMeasure,
    build_certificate,
    build_q_process,
    contraction_report,
    detect_cyclic_structure,
    eta_profile,
    invariant_candidates,
    q_semigroup_check,
    surviving_domain,
    validate_kernel,
)

from conftest import pure_cycle, random_block_cyclic, two_cycle


def paired(kernel):
    cyc = detect_cyclic_structure(kernel)
    return cyc, build_certificate(kernel, cyc)


class TestEtaProfile:
    def test_two_cycle_values(self, twocycle):
        cyc, cert = paired(twocycle)
        profile = eta_profile(twocycle, cyc, cert)
        np.testing.assert_allclose(profile[0], [1.0, 0.0])
        np.testing.assert_allclose(profile[1], [0.0, np.sqrt(0.5 / 0.8)], atol=1e-14)

    def test_pure_cycle_shifts_indicators(self, purecycle3):
        cyc, cert = paired(purecycle3)
        profile = eta_profile(purecycle3, cyc, cert)
        for k in range(3):
            expected = np.zeros(3)
            expected[(3 - k) % 3] = 1.0
            np.testing.assert_allclose(profile[k], expected, atol=1e-12)

    @pytest.mark.parametrize("t", [1, 2, 4])
    def test_period_closes(self, rng, t):
        k = random_block_cyclic(rng, int(rng.integers(max(t, 4), 20)), t)
        cyc, cert = paired(k)
        profile = eta_profile(k, cyc, cert)
        once_more = k.matrix @ profile[t - 1] / cert.theta0
        assert np.max(np.abs(once_more - profile[0])) <= 1e-10


class TestBuildQProcess:
    def test_two_cycle_becomes_alternation(self, twocycle):
        cyc, cert = paired(twocycle)
        qp = build_q_process(twocycle, cyc, cert)
        np.testing.assert_allclose(qp.matrix, [[0.0, 1.0], [1.0, 0.0]], atol=1e-14)

    def test_stochastic_cycle_unchanged(self, purecycle3):
        cyc, cert = paired(purecycle3)
        qp = build_q_process(purecycle3, cyc, cert)
        np.testing.assert_allclose(qp.matrix, purecycle3.matrix, atol=1e-13)

    def test_aperiodic_case_is_plain_transform(self, rng):
        m = rng.uniform(0.1, 1.0, size=(6, 6))
        m /= m.sum(axis=1, keepdims=True) / 0.85
        k = validate_kernel(m, list("abcdef"))
        cyc, cert = paired(k)
        qp = build_q_process(k, cyc, cert)
        eta = cert.eta.values
        expected = k.matrix * eta[np.newaxis, :] / (
            cert.theta0 * eta[:, np.newaxis]
        )
        np.testing.assert_allclose(qp.matrix, expected, atol=1e-13)

    @pytest.mark.parametrize("t", [1, 2, 3, 5])
    def test_rows_and_class_moves(self, rng, t):
        k = random_block_cyclic(rng, int(rng.integers(max(t, 5), 24)), t, 0.5)
        cyc, cert = paired(k)
        qp = build_q_process(k, cyc, cert)
        assert np.max(np.abs(qp.matrix.sum(axis=1) - 1.0)) <= 1e-12
        assert surviving_domain(k, cyc, cert).size == k.n
        for i in range(t):
            rows = qp.members(i)
            allowed = qp.members((i + 1) % t)
            blocked = np.setdiff1d(np.arange(qp.n), allowed)
            if rows.size and blocked.size:
                assert np.max(qp.matrix[np.ix_(rows, blocked)]) == 0.0


class TestSemigroupIdentity:
    def test_alternation_powers(self, twocycle):
        cyc, cert = paired(twocycle)
        qp = build_q_process(twocycle, cyc, cert)
        out = q_semigroup_check(twocycle, cyc, cert, qp, n_max=5)
        assert out["ok"] and out["max_discrepancy"] <= 1e-12

    @pytest.mark.parametrize("t", [1, 2, 3])
    def test_closed_form_matches_powers(self, rng, t):
        k = random_block_cyclic(rng, int(rng.integers(max(t, 5), 18)), t, 0.6)
        cyc, cert = paired(k)
        qp = build_q_process(k, cyc, cert)
        out = q_semigroup_check(k, cyc, cert, qp, n_max=10)
        assert out["horizon"] == 10 * t
        assert out["ok"], out["max_discrepancy"]


class TestInvariantCandidates:
    def test_symmetric_two_cycle_documents_draft_gap(self):
        k = two_cycle(0.5, 0.5)
        cyc, cert = paired(k)
        qp = build_q_process(k, cyc, cert)
        inv = invariant_candidates(k, cyc, cert, qp)
        np.testing.assert_allclose(inv.oracle_measure.weights, [0.5, 0.5], atol=1e-12)
        np.testing.assert_allclose(inv.corrected_measure.weights, [0.5, 0.5], atol=1e-12)
        np.testing.assert_allclose(inv.paper_measure.weights, [2 / 3, 1 / 3], atol=1e-12)
        assert inv.paper_residual_tv == pytest.approx(1 / 3, abs=1e-12)
        assert inv.corrected_residual_l1 <= 1e-14

    def test_unit_rate_degeneracy_uses_limit_prefactor(self, purecycle3):
        cyc, cert = paired(purecycle3)
        qp = build_q_process(purecycle3, cyc, cert)
        inv = invariant_candidates(purecycle3, cyc, cert, qp)
        np.testing.assert_allclose(inv.paper_measure.weights, np.full(3, 1 / 3), atol=1e-12)
        np.testing.assert_allclose(
            inv.corrected_measure.weights, inv.paper_measure.weights, atol=1e-12
        )

    def test_aperiodic_candidates_coincide(self, rng):
        m = rng.uniform(0.1, 1.0, size=(5, 5))
        m /= m.sum(axis=1, keepdims=True) / 0.8
        k = validate_kernel(m, list("abcde"))
        cyc, cert = paired(k)
        qp = build_q_process(k, cyc, cert)
        inv = invariant_candidates(k, cyc, cert, qp)
        expected = cert.nu.weights * cert.eta.values
        np.testing.assert_allclose(inv.paper_measure.weights, expected, atol=1e-12)
        np.testing.assert_allclose(inv.corrected_measure.weights, expected, atol=1e-12)

    @pytest.mark.parametrize("t", [2, 3, 4, 6])
    def test_corrected_is_invariant_and_matches_oracle(self, rng, t):
        k = random_block_cyclic(rng, int(rng.integers(max(t, 6), 30)), t, 0.4)
        cyc, cert = paired(k)
        qp = build_q_process(k, cyc, cert)
        inv = invariant_candidates(k, cyc, cert, qp)
        assert inv.corrected_residual_l1 <= 1e-10
        assert inv.corrected_oracle_distance_l1 <= 1e-8
        np.testing.assert_allclose(inv.class_masses, np.full(t, 1 / t), atol=1e-12)
        assert abs(inv.paper_measure.total_mass - 1.0) <= 1e-12


class TestContraction:
    def test_alternation_is_immediately_periodic(self, twocycle):
        cyc, cert = paired(twocycle)
        qp = build_q_process(twocycle, cyc, cert)
        mu = DiscreteMeasure(np.array([1.0, 0.0]))
        rep = contraction_report(twocycle, cyc, cert, qp, mu, n_max=8)
        assert np.max(rep.distances) <= 1e-13
        assert rep.fitted_rate == 0.0

    @pytest.mark.parametrize("t", [1, 2, 3])
    def test_geometric_approach_to_limit_cycle(self, rng, t):
        k = random_block_cyclic(rng, int(rng.integers(max(t, 6), 24)), t, 0.5)
        cyc, cert = paired(k)
        qp = build_q_process(k, cyc, cert)
        w = rng.random(qp.n)
        mu = DiscreteMeasure(w / w.sum())
        rep = contraction_report(k, cyc, cert, qp, mu, n_max=30)
        assert rep.rate_ok, (rep.fitted_rate, cert.alpha)
        assert rep.limit_consistency <= 1e-8
        assert rep.final_distance <= max(rep.distances[1].max(), 1e-12) * 1e-3 + 1e-10

    def test_invariant_start_stays_put(self, rng):
        k = random_block_cyclic(rng, 12, 3, 0.5)
        cyc, cert = paired(k)
        qp = build_q_process(k, cyc, cert)
        inv = invariant_candidates(k, cyc, cert, qp)
        rep = contraction_report(
            k, cyc, cert, qp, inv.corrected_measure, n_max=12
        )
        for j in range(cyc.period):
            column = rep.distances[:, j]
            assert np.max(np.abs(column - column[0])) <= 1e-11

    def test_limit_coefficients_are_documented(self, rng):
        # the derived class coefficient conserves mass; the draft's comes
        # out as theta0**(t+j), and both numbers stay in the report
        k = random_block_cyclic(rng, 10, 2, 0.6)
        cyc, cert = paired(k)
        qp = build_q_process(k, cyc, cert)
        mu = DiscreteMeasure(np.full(qp.n, 1 / qp.n))
        rep = contraction_report(k, cyc, cert, qp, mu, n_max=10)
        t = cyc.period
        np.testing.assert_allclose(rep.derived_limit_masses, np.ones(t), atol=1e-10)
        np.testing.assert_allclose(
            rep.draft_limit_masses,
            [cert.theta0 ** (t + j) for j in range(t)],
            atol=1e-10,
        )
