import numpy as np
import pytest

from qsdlab import (
    CyclicStructure,
    detect_cyclic_structure,
    validate_kernel,
    verify_partition,
)
from qsdlab.errors import NoSurvivingTransition, NotStronglyConnected

from conftest import pure_cycle, random_block_cyclic, two_cycle


class TestDetect:
    def test_pure_cycle_has_full_period(self, purecycle3):
        cyc = detect_cyclic_structure(purecycle3)
        assert cyc.period == 3
        assert cyc.class_of == {"s0": 0, "s1": 1, "s2": 2}

    def test_two_cycle(self, twocycle):
        cyc = detect_cyclic_structure(twocycle)
        assert cyc.period == 2
        assert cyc.class_of == {"a": 0, "b": 1}

    def test_self_loop_kills_periodicity(self):
        k = validate_kernel([[0.3, 0.5], [0.4, 0.0]], ["a", "b"])
        cyc = detect_cyclic_structure(k)
        assert cyc.period == 1
        assert set(cyc.class_of.values()) == {0}

    def test_reducible_chain_rejected(self):
        # b is a one-way sink within E: no path back to a
        k = validate_kernel([[0.2, 0.5], [0.0, 0.7]], ["a", "b"])
        with pytest.raises(NotStronglyConnected):
            detect_cyclic_structure(k)

    def test_all_absorbed_rejected(self):
        k = validate_kernel([[0.0, 0.0], [0.0, 0.0]], ["a", "b"])
        with pytest.raises(NoSurvivingTransition):
            detect_cyclic_structure(k)

    def test_start_class_anchored_at_smallest_label(self):
        # same two-cycle but with labels ordered against the matrix order
        k = validate_kernel([[0.0, 0.5], [0.8, 0.0]], ["b", "a"])
        cyc = detect_cyclic_structure(k)
        assert cyc.class_of["a"] == 0
        assert cyc.class_of["b"] == 1


class TestRoundTrip:
    @pytest.mark.parametrize("t", [1, 2, 3, 4, 5, 6])
    def test_random_chains_recover_period(self, rng, t):
        for _ in range(5):
            n = int(rng.integers(t, 25))
            k = random_block_cyclic(rng, n, t, density=float(rng.uniform(0, 1)))
            cyc = detect_cyclic_structure(k)
            assert cyc.period == t
            assert verify_partition(k, cyc) == 0.0

    def test_relabeling_equivariance(self, rng):
        k = random_block_cyclic(rng, 12, 3)
        cyc = detect_cyclic_structure(k)
        perm = rng.permutation(12)
        labels = [k.states[i] for i in perm]
        matrix = k.matrix[np.ix_(perm, perm)]
        k2 = validate_kernel(matrix, labels)
        cyc2 = detect_cyclic_structure(k2)
        assert cyc2.period == cyc.period
        assert cyc2.class_of == cyc.class_of


class TestVerifyPartition:
    def test_correct_partition_has_zero_residual(self, twocycle):
        cyc = detect_cyclic_structure(twocycle)
        assert verify_partition(twocycle, cyc) == 0.0

    def test_swapped_anchor_is_still_exact(self, twocycle):
        # choosing the other class as the start is a valid partition too
        swapped = CyclicStructure(2, twocycle.states, np.array([1, 0]))
        assert verify_partition(twocycle, swapped) == 0.0

    def test_misassigned_state_measures_misplaced_mass(self):
        # true classes {a} and {b, c}; moving c into the start class puts
        # its 0.6 to a (same class) and a's 0.1 to c outside the target
        k = validate_kernel(
            [[0.0, 0.8, 0.1], [0.5, 0.0, 0.0], [0.6, 0.0, 0.0]],
            ["a", "b", "c"],
        )
        bad = CyclicStructure(2, k.states, np.array([0, 1, 0]))
        assert verify_partition(k, bad) == pytest.approx(0.6)

    def test_trivial_partition_always_fits(self, rng):
        k = random_block_cyclic(rng, 10, 2)
        trivial = CyclicStructure(1, k.states, np.zeros(10, dtype=int))
        assert verify_partition(k, trivial) == 0.0
