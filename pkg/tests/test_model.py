import numpy as np
import pytest

from epilock import (COVID, SIR, SIS, CostKind, DiseaseParams, LockdownPolicy,
                     NetworkData, TravelMatrix, apply_lockdown,
                     assemble_linearization, build_flow_matrix, lockdown_cost)
from epilock.errors import DegenerateLocation, DimensionMismatch, InfeasibleAlpha
from epilock.synth import (THREE_NODE_HOME_DWELL, THREE_NODE_POPULATIONS, THREE_NODE_TRIPS,
                           trips_to_tau)

from conftest import random_network


def flow_matrix_triple_sum(tau, N, z=None):
    """Direct evaluation of the infection-flow sum; the independent oracle
    for the C diag(z) B^T factorisation."""
    n = tau.shape[0]
    if z is None:
        z = np.ones(n)
    A = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for l in range(n):
                m_l = sum(N[k] * tau[k, l] for k in range(n))
                acc += z[l] * tau[i, l] * tau[j, l] * N[j] / m_l
            A[i, j] = acc
    return A


def three_node_network():
    tau = trips_to_tau(THREE_NODE_TRIPS, THREE_NODE_HOME_DWELL)
    return NetworkData.from_raw(tau, THREE_NODE_POPULATIONS, THREE_NODE_POPULATIONS,
                                THREE_NODE_HOME_DWELL, location_ids=("A", "B", "C"))


class TestBuildFlowMatrix:
    def test_single_node_collapses(self):
        # one location, half the day at home: a11 = tau * tau * N / (N tau)
        net = NetworkData.from_raw([[0.5]], [100.0], [10.0], [720.0])
        factors = build_flow_matrix(net)
        np.testing.assert_allclose(factors.flow_matrix(), [[0.5]], rtol=1e-15)

    def test_three_node_indirect_flow_is_nonzero(self):
        # no trips between the suburbs, yet infection flows through the city
        factors = build_flow_matrix(three_node_network())
        A = factors.flow_matrix()
        assert THREE_NODE_TRIPS[1, 2] == 0 and THREE_NODE_TRIPS[2, 1] == 0
        assert A[1, 2] > 0 and A[2, 1] > 0

    def test_matches_triple_sum_oracle(self, rng):
        for _ in range(10):
            net, _ = random_network(4, rng)
            factors = build_flow_matrix(net)
            expected = flow_matrix_triple_sum(net.travel.tau, net.populations)
            np.testing.assert_allclose(factors.flow_matrix(), expected, rtol=1e-12)

    def test_factorisation_agrees_on_many_small_instances(self, rng):
        for _ in range(100):
            n = int(rng.integers(2, 21))
            net, _ = random_network(n, rng)
            factors = build_flow_matrix(net)
            z = rng.uniform(0.05, 1.0, size=n)
            expected = flow_matrix_triple_sum(net.travel.tau, net.populations, z)
            np.testing.assert_allclose(apply_lockdown(factors, z), expected, rtol=1e-12)

    def test_degenerate_location_rejected(self):
        # nobody ever visits location 1, so its visit weight vanishes
        net = NetworkData.from_raw(np.array([[0.5, 0.0], [0.5, 0.0]]),
                                   [10.0, 10.0], [1.0, 1.0], [720.0, 720.0])
        with pytest.raises(DegenerateLocation):
            build_flow_matrix(net)


class TestApplyLockdown:
    def test_identity_lockdown(self, rng):
        net, _ = random_network(5, rng)
        factors = build_flow_matrix(net)
        np.testing.assert_allclose(apply_lockdown(factors, np.ones(5)),
                                   factors.flow_matrix(), rtol=0, atol=0)

    def test_uniform_scaling(self, rng):
        net, _ = random_network(5, rng)
        factors = build_flow_matrix(net)
        half = apply_lockdown(factors, np.full(5, 0.5))
        np.testing.assert_allclose(half, 0.5 * factors.flow_matrix(), rtol=1e-15)

    def test_monotone_and_pattern_preserving(self, rng):
        net, _ = random_network(6, rng)
        factors = build_flow_matrix(net)
        A1 = factors.flow_matrix()
        for _ in range(20):
            z = rng.uniform(0.01, 1.0, size=6)
            Az = apply_lockdown(factors, z)
            assert np.all(Az <= A1 + 1e-15)
            np.testing.assert_array_equal(Az != 0, A1 != 0)
        # entrywise monotone in each coordinate
        z = rng.uniform(0.2, 0.8, size=6)
        for l in range(6):
            bumped = z.copy()
            bumped[l] *= 1.1
            assert np.all(apply_lockdown(factors, bumped) >= apply_lockdown(factors, z) - 1e-15)

    def test_dimension_mismatch(self, rng):
        net, _ = random_network(4, rng)
        factors = build_flow_matrix(net)
        with pytest.raises(DimensionMismatch):
            apply_lockdown(factors, np.ones(5))


class TestLockdownCost:
    def test_doing_nothing_is_free(self):
        c = np.array([2.0, 3.0])
        z = np.ones(2)
        for kind in (CostKind.inverse(), CostKind.power(2), CostKind.capped(10)):
            assert lockdown_cost(z, c, kind) == 0.0

    def test_inverse_arithmetic(self):
        assert lockdown_cost([0.5, 0.25], [1.0, 1.0]) == pytest.approx(4.0)

    def test_cap_binds(self):
        assert lockdown_cost([0.05], [1.0], CostKind.capped(10)) == pytest.approx(9.0)

    def test_power_kinds(self):
        z = np.array([0.5])
        for k in (1.5, 2, 3):
            assert lockdown_cost(z, [1.0], CostKind.power(k)) == pytest.approx(2.0 ** k - 1.0)

    def test_zero_activity_rejected(self):
        with pytest.raises(ValueError):
            lockdown_cost([0.0, 0.5], [1.0, 1.0])


class TestDiseaseParams:
    def test_alpha_domain_covid(self):
        with pytest.raises(InfeasibleAlpha):
            DiseaseParams(family=COVID, alpha=0.3, epsilon=0.32, r_a=0.2, r_s=0.2,
                          alpha_hat=0.5)

    def test_alpha_domain_sis(self):
        with pytest.raises(InfeasibleAlpha):
            DiseaseParams(family=SIS, alpha=0.2, gamma=0.2)

    def test_beta_tie(self):
        p = DiseaseParams(family=COVID, alpha=0.01, beta_s=2.0, epsilon=0.3,
                          r_a=0.2, r_s=0.2, alpha_hat=0.5)
        assert p.beta_a == pytest.approx(1.0)

    def test_sir_zeroed_fields(self):
        with pytest.raises(ValueError):
            DiseaseParams(family=SIR, alpha=0.01, r_a=0.2, epsilon=0.1)


class TestAssembleLinearization:
    def test_scalar_assembly(self):
        # n=1, s0=1, A=[1], all rates 1: M = [[beta-2, beta], [1, -1]]
        net = NetworkData.from_raw([[0.5]], [100.0], [10.0], [720.0])
        factors = build_flow_matrix(net)
        params = DiseaseParams(family=COVID, alpha=0.0, beta_s=1.0, beta_a=1.0,
                               epsilon=1.0, r_a=1.0, r_s=1.0)
        M = assemble_linearization(factors, np.array([2.0]), params, np.array([1.0]))
        np.testing.assert_allclose(M, [[-1.0, 1.0], [1.0, -1.0]])

    def test_sir_reduction_matches_top_left_block(self, rng):
        # SIR is the two-class model with the symptomatic side off: its
        # linearisation is the asymptomatic block without the symptom drain
        net, s0 = random_network(3, rng)
        factors = build_flow_matrix(net)
        covid = DiseaseParams(family=COVID, alpha=0.0, beta_s=0.5, beta_a=0.4,
                              epsilon=0.3, r_a=0.2, r_s=0.25)
        sir = DiseaseParams(family=SIR, alpha=0.0, beta_a=0.4, r_a=0.2)
        z = rng.uniform(0.2, 1.0, size=3)
        M_covid = assemble_linearization(factors, z, covid, s0)
        M_sir = assemble_linearization(factors, z, sir, s0)
        np.testing.assert_allclose(M_sir, M_covid[:3, :3] + covid.epsilon * np.eye(3),
                                   atol=1e-14)

    def test_covid_eigenvalue_matches_dense_oracle(self, rng):
        net, s0 = random_network(3, rng)
        factors = build_flow_matrix(net)
        params = DiseaseParams(family=COVID, alpha=0.0231, beta_s=2.9, epsilon=0.32,
                               r_a=0.2, r_s=0.2, alpha_hat=0.6754)
        from epilock import perron
        M = assemble_linearization(factors, np.ones(3), params, s0)
        lam_oracle = np.max(np.linalg.eigvals(M).real)
        assert perron(M).value == pytest.approx(lam_oracle, abs=1e-9)

    def test_sis_linearization(self, rng):
        net, _ = random_network(4, rng)
        factors = build_flow_matrix(net)
        params = DiseaseParams(family=SIS, alpha=0.01, beta_s=1.3, gamma=0.2)
        M = assemble_linearization(factors, np.ones(4), params)
        np.testing.assert_allclose(M, 1.3 * factors.flow_matrix() - 0.2 * np.eye(4))


class TestLockdownPolicy:
    def test_cost_consistency_check(self, rng):
        c = np.array([1.0, 2.0])
        pol = LockdownPolicy.from_z([0.5, 0.8], c)
        assert pol.check_cost(c)
        assert not pol.exceeds_unit

    def test_exceeds_unit_flag(self):
        pol = LockdownPolicy.from_z([1.2, 0.5], np.ones(2))
        assert pol.exceeds_unit
