import numpy as np
import pytest

from cae_sched.chain_analysis import (
    DeterministicPolicy,
    RandomizedPolicy,
    SAPolicyParams,
    check_recurrent_aperiodic,
    closed_classes,
    evaluate_policy,
    evaluate_policy_per_class,
    load_policy,
    occupancy,
    policy_from_dict,
    policy_to_dict,
    policy_transition_matrix,
    sa_policy,
    save_policy,
    stationary_distribution,
)
from cae_sched.errors import MultichainError
from cae_sched.lagrange_search import MixturePolicy
from cae_sched.mdp_core import kernel_for
from cae_sched.scenario import (
    ChannelSpec,
    Scenario,
    SourceSpec,
    symmetric_transition,
    validate_scenario,
)


def one_source_kernel(p=0.4, p_success=0.4, delay=0, f_max=0.5, n=3):
    cae = np.array([[0.0, 10.0, 30.0], [30.0, 0.0, 10.0], [10.0, 30.0, 0.0]])[:n, :n]
    np.fill_diagonal(cae, 0.0)
    src = SourceSpec(transition=symmetric_transition(n, p), cae=cae)
    sc = validate_scenario(
        Scenario(sources=(src,), channel=ChannelSpec(p_success, delay), f_max=f_max)
    )
    return kernel_for(sc)


class TestInducedChain:
    def test_rows_stochastic(self, ref_kernel):
        never = DeterministicPolicy(actions=np.zeros(81, dtype=int))
        rows = np.full((81, 3), [0.5, 0.25, 0.25])
        for policy in (never, RandomizedPolicy(rows=rows)):
            matrix = policy_transition_matrix(ref_kernel, policy)
            assert np.allclose(matrix.sum(axis=1), 1.0, atol=1e-12)

    def test_never_transmit_freezes_estimate(self):
        kernel = one_source_kernel()
        never = DeterministicPolicy(actions=np.zeros(9, dtype=int))
        matrix = policy_transition_matrix(kernel, never)
        space = kernel.space
        for idx, ((x, xhat),) in enumerate(space.states()):
            support = np.flatnonzero(matrix[idx])
            assert all(space.state_of(j)[0][1] == xhat for j in support)

    def test_always_transmit_perfect_channel_syncs(self):
        kernel = one_source_kernel(p_success=1.0)
        always = DeterministicPolicy(actions=np.ones(9, dtype=int))
        matrix = policy_transition_matrix(kernel, always)
        space = kernel.space
        for idx, ((x, xhat),) in enumerate(space.states()):
            for j in np.flatnonzero(matrix[idx]):
                x2, xhat2 = space.state_of(j)[0]
                assert xhat2 == x  # estimate adopts the pre-slot source state

    def test_randomized_rows_must_normalize(self):
        with pytest.raises(ValueError):
            RandomizedPolicy(rows=np.array([[0.5, 0.4]]))


class TestStationaryDistribution:
    def test_symmetric_two_state(self):
        nu = stationary_distribution(np.array([[0.6, 0.4], [0.4, 0.6]]))
        assert np.allclose(nu, [0.5, 0.5])

    def test_asymmetric_two_state(self):
        nu = stationary_distribution(np.array([[0.9, 0.1], [0.3, 0.7]]))
        assert np.allclose(nu, [0.75, 0.25])

    def test_transient_states_get_zero_mass(self):
        matrix = np.array(
            [
                [0.5, 0.5, 0.0],
                [0.2, 0.8, 0.0],
                [0.3, 0.3, 0.4],  # transient: leaks into {0, 1}
            ]
        )
        nu = stationary_distribution(matrix)
        assert nu[2] == 0.0
        assert nu.sum() == pytest.approx(1.0)

    def test_never_transmit_is_multichain(self):
        kernel = one_source_kernel()
        never = DeterministicPolicy(actions=np.zeros(9, dtype=int))
        matrix = policy_transition_matrix(kernel, never)
        with pytest.raises(MultichainError) as excinfo:
            stationary_distribution(matrix)
        assert len(excinfo.value.classes) == 3  # one closed class per frozen estimate

    def test_closed_classes_of_identity(self):
        closed, _ = closed_classes(np.eye(3))
        assert len(closed) == 3


class TestEvaluatePolicy:
    def test_never_transmit_tied_classes(self):
        """All frozen-estimate classes share the same averages here (the cost
        columns have equal means under the uniform stationary law), so the
        evaluation is initial-state independent and must succeed."""
        kernel = one_source_kernel(p=0.4)
        never = DeterministicPolicy(actions=np.zeros(9, dtype=int))
        ev = evaluate_policy(kernel, never)
        assert ev.avg_cae == pytest.approx(40.0 / 3.0, abs=1e-9)
        assert ev.avg_freq == 0.0

    def test_genuinely_multichain_still_raises(self):
        src = SourceSpec(
            transition=symmetric_transition(2, 0.3),
            cae=np.array([[0.0, 5.0], [50.0, 0.0]]),  # class averages differ
        )
        sc = validate_scenario(
            Scenario(sources=(src,), channel=ChannelSpec(0.5, 0), f_max=0.5)
        )
        kernel = kernel_for(sc)
        never = DeterministicPolicy(actions=np.zeros(4, dtype=int))
        with pytest.raises(MultichainError):
            evaluate_policy(kernel, never)
        evals = evaluate_policy_per_class(kernel, never)
        assert len(evals) == 2
        assert evals[0].avg_cae != pytest.approx(evals[1].avg_cae)

    def test_sa_policy_frequency_is_sum_of_rates(self, ref_kernel):
        policy = sa_policy(ref_kernel, SAPolicyParams(probs=(0.2, 0.2)))
        ev = evaluate_policy(ref_kernel, policy)
        assert ev.avg_freq == pytest.approx(0.4, abs=1e-12)

    def test_lagrangian_affine_in_multiplier(self, ref_kernel):
        policy = sa_policy(ref_kernel, SAPolicyParams(probs=(0.1, 0.3)))
        evals = [evaluate_policy(ref_kernel, policy, lam) for lam in (0.0, 5.0, 10.0)]
        assert evals[0].avg_lagrangian == evals[0].avg_cae
        diffs = np.diff([e.avg_lagrangian for e in evals])
        assert diffs[0] == pytest.approx(diffs[1], abs=1e-9)
        for e, lam in zip(evals, (0.0, 5.0, 10.0)):
            assert e.avg_lagrangian == pytest.approx(e.avg_cae + lam * e.avg_freq, abs=1e-9)

    def test_mixture_is_weight_combination(self, ref_kernel):
        det_hi = DeterministicPolicy(actions=np.ones(81, dtype=int))
        det_lo = DeterministicPolicy(actions=np.zeros(81, dtype=int))
        mix = MixturePolicy(pi_minus=det_hi, pi_plus=det_lo, mu=0.25)
        ev = evaluate_policy(ref_kernel, mix, lam=2.0)
        ev_hi = evaluate_policy(ref_kernel, det_hi, lam=2.0)
        ev_lo = evaluate_policy(ref_kernel, det_lo, lam=2.0)
        assert ev.avg_cae == pytest.approx(0.25 * ev_hi.avg_cae + 0.75 * ev_lo.avg_cae)
        assert ev.avg_freq == pytest.approx(0.25 * ev_hi.avg_freq + 0.75 * ev_lo.avg_freq)

    def test_stationary_is_distribution(self, ref_kernel):
        policy = sa_policy(ref_kernel, SAPolicyParams(probs=(0.2, 0.2)))
        ev = evaluate_policy(ref_kernel, policy)
        assert np.all(ev.stationary >= 0.0)
        assert ev.stationary.sum() == pytest.approx(1.0, abs=1e-12)


class TestSAPolicy:
    def test_rows_constant_with_idle_mass(self, ref_kernel):
        policy = sa_policy(ref_kernel, SAPolicyParams(probs=(0.2, 0.2)))
        assert np.allclose(policy.rows, [0.6, 0.2, 0.2])

    def test_single_source_always_transmit(self):
        kernel = one_source_kernel(f_max=1.0)
        policy = sa_policy(kernel, SAPolicyParams(probs=(1.0,)))
        assert np.allclose(policy.rows, [0.0, 1.0])

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            SAPolicyParams(probs=(0.0, 0.2))
        with pytest.raises(ValueError):
            SAPolicyParams(probs=(0.7, 0.7))

    def test_wrong_arity_rejected(self, ref_kernel):
        with pytest.raises(ValueError):
            sa_policy(ref_kernel, SAPolicyParams(probs=(0.2,)))


class TestRecurrenceChecks:
    def test_sa_chain_recurrent_aperiodic(self, ref_kernel):
        policy = sa_policy(ref_kernel, SAPolicyParams(probs=(0.2, 0.2)))
        matrix = policy_transition_matrix(ref_kernel, policy)
        assert check_recurrent_aperiodic(matrix) == "recurrent_aperiodic"

    def test_never_transmit_not_irreducible(self):
        kernel = one_source_kernel()
        never = DeterministicPolicy(actions=np.zeros(9, dtype=int))
        matrix = policy_transition_matrix(kernel, never)
        assert check_recurrent_aperiodic(matrix) == "not_irreducible"

    def test_identity_not_irreducible(self):
        assert check_recurrent_aperiodic(np.eye(4)) == "not_irreducible"

    def test_two_cycle_periodic(self):
        assert check_recurrent_aperiodic(np.array([[0.0, 1.0], [1.0, 0.0]])) == "periodic"


class TestOccupancy:
    def test_sums_to_one(self, ref_kernel):
        policy = sa_policy(ref_kernel, SAPolicyParams(probs=(0.2, 0.2)))
        occ = occupancy(ref_kernel, policy)
        assert occ.sum() == pytest.approx(1.0, abs=1e-12)

    def test_action_marginal_matches_frequency(self, ref_kernel):
        policy = sa_policy(ref_kernel, SAPolicyParams(probs=(0.15, 0.25)))
        occ = occupancy(ref_kernel, policy)
        ev = evaluate_policy(ref_kernel, policy)
        assert occ[:, 1:].sum() == pytest.approx(ev.avg_freq, abs=1e-12)


class TestPolicyDocuments:
    def test_round_trip_all_kinds(self, tmp_path, ref_kernel):
        det = DeterministicPolicy(actions=np.arange(81) % 3)
        rand = sa_policy(ref_kernel, SAPolicyParams(probs=(0.2, 0.2)))
        mix = MixturePolicy(
            pi_minus=DeterministicPolicy(actions=np.ones(81, dtype=int)),
            pi_plus=DeterministicPolicy(actions=np.zeros(81, dtype=int)),
            mu=0.3,
        )
        for i, policy in enumerate((det, rand, mix)):
            path = tmp_path / f"policy_{i}.json"
            save_policy(policy, path)
            loaded = load_policy(path)
            assert policy_to_dict(loaded) == policy_to_dict(policy)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            policy_from_dict({"kind": "oracular"})
