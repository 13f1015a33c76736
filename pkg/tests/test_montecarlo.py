import numpy as np
import pytest

from qsdlab import (
    DiscreteMeasure,
    StateFunction,
    build_certificate,
    build_q_process,
    conditional_empirical,
    conditional_law,
    delta,
    detect_cyclic_structure,
    estimate_time_average_mc,
    nu_qe,
    occupation_frequencies,
    simulate_paths,
    simulate_q_process,
    time_average_exact,
    validate_kernel,
)
from qsdlab.errors import NoSurvivors
from qsdlab.montecarlo import CEMETERY, retry_seed

from conftest import pure_cycle, random_block_cyclic, two_cycle


def paired(kernel):
    cyc = detect_cyclic_structure(kernel)
    return cyc, build_certificate(kernel, cyc)


class TestSimulatePaths:
    def test_identical_seed_identical_batch(self, twocycle):
        mu = DiscreteMeasure(np.array([0.5, 0.5]))
        a = simulate_paths(twocycle, mu, 20, 500, seed=99)
        b = simulate_paths(twocycle, mu, 20, 500, seed=99)
        np.testing.assert_array_equal(a.paths, b.paths)
        np.testing.assert_array_equal(a.tau, b.tau)
        c = simulate_paths(twocycle, mu, 20, 500, seed=100)
        assert not np.array_equal(a.paths, c.paths)

    def test_pure_cycle_never_absorbs(self, purecycle3):
        mu = delta(purecycle3, "s0")
        batch = simulate_paths(purecycle3, mu, 30, 64, seed=1)
        assert np.all(batch.tau == -1)
        # deterministic cycling: state at time m is m mod 3
        for m in range(31):
            assert np.all(batch.paths[:, m] == m % 3)

    def test_dead_kernel_absorbs_everyone_at_once(self):
        k = validate_kernel([[0.0, 0.0], [0.0, 0.0]], ["a", "b"])
        mu = DiscreteMeasure(np.array([0.5, 0.5]))
        batch = simulate_paths(k, mu, 5, 200, seed=3)
        assert np.all(batch.tau == 1)
        assert np.all(batch.paths[:, 1:] == CEMETERY)

    def test_cemetery_is_a_trap(self, rng):
        k = random_block_cyclic(rng, 8, 2, survival=(0.3, 0.7))
        mu = DiscreteMeasure(np.full(8, 1 / 8))
        batch = simulate_paths(k, mu, 15, 300, seed=7)
        dead = batch.paths == CEMETERY
        # once dead, always dead
        assert np.all(dead[:, :-1] <= dead[:, 1:])

    def test_survival_within_binomial_band(self, twocycle):
        mu = delta(twocycle, "a")
        batch = simulate_paths(twocycle, mu, 2, 100_000, seed=42)
        alive = batch.alive_at(2).mean()
        sigma = np.sqrt(0.4 * 0.6 / 100_000)
        assert abs(alive - 0.4) <= 4 * sigma


class TestConditionalEmpirical:
    def test_forced_support(self, twocycle):
        batch = simulate_paths(twocycle, delta(twocycle, "a"), 1, 2000, seed=5)
        law, ess = conditional_empirical(batch, 1)
        np.testing.assert_array_equal(law.weights, [0.0, 1.0])
        assert ess == int(batch.alive_at(1).sum())

    def test_time_zero_recovers_initial_draw(self, twocycle):
        mu = DiscreteMeasure(np.array([0.25, 0.75]))
        batch = simulate_paths(twocycle, mu, 0, 50_000, seed=11)
        law, ess = conditional_empirical(batch, 0)
        assert ess == 50_000
        assert np.abs(law.weights - mu.weights).sum() <= 4 * np.sqrt(2 / 50_000)

    def test_matches_exact_conditional_law(self, rng):
        k = random_block_cyclic(rng, 12, 3, 0.5)
        cyc, cert = paired(k)
        mu = DiscreteMeasure(np.full(12, 1 / 12))
        batch = simulate_paths(k, mu, 6, 100_000, seed=13)
        law, ess = conditional_empirical(batch, 6)
        exact = conditional_law(k, mu, 6)
        assert ess >= 10_000
        assert np.abs(law.weights - exact.weights).sum() <= 4 * np.sqrt(k.n / ess)

    def test_no_survivors_raises(self):
        k = validate_kernel([[0.0, 0.0], [0.0, 0.0]], ["a", "b"])
        mu = DiscreteMeasure(np.array([1.0, 0.0]))
        batch = simulate_paths(k, mu, 3, 50, seed=2)
        with pytest.raises(NoSurvivors):
            conditional_empirical(batch, 2)


class TestSimulateQProcess:
    def test_alternation_occupation(self, twocycle):
        cyc, cert = paired(twocycle)
        qp = build_q_process(twocycle, cyc, cert)
        mu = DiscreteMeasure(np.array([1.0, 0.0]))
        batch = simulate_q_process(qp, mu, 99, 32, seed=21)
        assert np.all(batch.tau == -1)
        mean, _ = occupation_frequencies(batch)
        np.testing.assert_allclose(mean, [0.5, 0.5], atol=1e-12)

    def test_occupation_approaches_quasi_ergodic_law(self, rng):
        k = random_block_cyclic(rng, 10, 2, 0.6)
        cyc, cert = paired(k)
        qp = build_q_process(k, cyc, cert)
        mu = DiscreteMeasure(np.full(qp.n, 1 / qp.n))
        batch = simulate_q_process(qp, mu, 10_000, 100, seed=17)
        mean, stderr = occupation_frequencies(batch)
        target = nu_qe(k, cyc, cert).weights[qp.indices]
        slack = 4 * stderr + 1.0 / 10_001
        assert np.all(np.abs(mean - target) <= slack)

    def test_horizon_zero_gives_initial_draws(self, twocycle):
        cyc, cert = paired(twocycle)
        qp = build_q_process(twocycle, cyc, cert)
        mu = DiscreteMeasure(np.array([0.5, 0.5]))
        batch = simulate_q_process(qp, mu, 0, 1000, seed=8)
        assert batch.paths.shape == (1000, 1)


class TestTimeAverageEstimate:
    def test_constant_observable(self, twocycle):
        batch = simulate_paths(twocycle, delta(twocycle, "a"), 4, 500, seed=31)
        mean, stderr = estimate_time_average_mc(batch, StateFunction(np.ones(2)), 4)
        assert mean == 1.0 and stderr == 0.0

    def test_matches_parity_exactly_on_deterministic_chain(self, twocycle):
        batch = simulate_paths(twocycle, delta(twocycle, "a"), 10, 400, seed=37)
        f = StateFunction(np.array([1.0, 0.0]))
        mean, stderr = estimate_time_average_mc(batch, f, 10)
        # conditioned on survival the path is deterministic: 6 visits in 11
        assert mean == pytest.approx(6 / 11, abs=1e-14)
        assert stderr == 0.0

    def test_consistent_with_exact_average(self, rng):
        k = random_block_cyclic(rng, 9, 3, 0.5)
        mu = DiscreteMeasure(np.full(9, 1 / 9))
        f = StateFunction(rng.uniform(-1, 1, size=9))
        batch = simulate_paths(k, mu, 30, 100_000, seed=43)
        mean, stderr = estimate_time_average_mc(batch, f, 30)
        exact = time_average_exact(k, mu, f, 30)
        assert abs(mean - exact) <= 4 * stderr + 1e-12


def test_retry_seed_is_deterministic_and_different():
    assert retry_seed(42) == retry_seed(42)
    assert retry_seed(42) != 42
    assert 0 <= retry_seed(42) < 2 ** 64
