import numpy as np
import pytest
from hypothesis import given, strategies as st

from cae_sched.errors import ScenarioValidationError
from cae_sched.scenario import (
    REFERENCE_CAE,
    ChannelSpec,
    Scenario,
    SourceSpec,
    load_scenario,
    reference_example_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    symmetric_transition,
    validate_scenario,
)


def codes(excinfo):
    return {v.code for v in excinfo.value.violations}


class TestValidation:
    def test_reference_instance_is_valid(self, ref_scenario):
        assert validate_scenario(ref_scenario) is ref_scenario

    def test_row_sum_violation(self):
        src = SourceSpec(
            transition=np.array([[0.8, 0.1], [0.5, 0.5]]),  # first row sums to 0.9
            cae=np.array([[0.0, 1.0], [1.0, 0.0]]),
        )
        bad = Scenario(sources=(src,), channel=ChannelSpec(0.5, 0), f_max=0.4)
        with pytest.raises(ScenarioValidationError) as excinfo:
            validate_scenario(bad)
        assert "RowSumError" in codes(excinfo)

    def test_zero_budget_rejected(self):
        src = SourceSpec(
            transition=symmetric_transition(2, 0.3),
            cae=np.array([[0.0, 1.0], [1.0, 0.0]]),
        )
        bad = Scenario(sources=(src,), channel=ChannelSpec(0.5, 0), f_max=0.0)
        with pytest.raises(ScenarioValidationError) as excinfo:
            validate_scenario(bad)
        assert "BadBudget" in codes(excinfo)

    def test_all_violations_reported_together(self):
        src = SourceSpec(
            transition=np.array([[0.8, 0.1], [0.5, 0.5]]),
            cae=np.array([[1.0, -2.0], [1.0, 0.0]]),  # nonzero diagonal and negative
        )
        bad = Scenario(sources=(src,), channel=ChannelSpec(1.5, 2), f_max=0.0)
        with pytest.raises(ScenarioValidationError) as excinfo:
            validate_scenario(bad)
        assert codes(excinfo) >= {
            "RowSumError",
            "NegativeCost",
            "NonzeroDiagonal",
            "BadProbability",
            "BadDelay",
            "BadBudget",
        }

    def test_no_sources_rejected(self):
        bad = Scenario(sources=(), channel=ChannelSpec(0.5, 0), f_max=0.4)
        with pytest.raises(ScenarioValidationError) as excinfo:
            validate_scenario(bad)
        assert "NoSources" in codes(excinfo)

    def test_malformed_rows_are_not_renormalized(self):
        src = SourceSpec(
            transition=np.array([[0.45, 0.45], [0.5, 0.5]]),
            cae=np.array([[0.0, 1.0], [1.0, 0.0]]),
        )
        bad = Scenario(sources=(src,), channel=ChannelSpec(0.5, 0), f_max=0.4)
        with pytest.raises(ScenarioValidationError):
            validate_scenario(bad)
        assert float(src.transition[0].sum()) == pytest.approx(0.9)


class TestReferenceInstance:
    def test_transition_diagonals(self):
        sc = reference_example_scenario(0.4, 0, 0.4)
        assert np.allclose(np.diagonal(sc.sources[0].transition), 0.8)
        assert np.allclose(np.diagonal(sc.sources[1].transition), 0.2)

    def test_cost_matrices(self):
        sc = reference_example_scenario(0.7, 1, 0.6)
        expected = np.array([[0.0, 10.0, 30.0], [30.0, 0.0, 10.0], [10.0, 30.0, 0.0]])
        assert np.array_equal(sc.sources[0].cae, expected)
        assert np.array_equal(sc.sources[1].cae, expected)
        assert np.array_equal(REFERENCE_CAE, expected)

    def test_unit_weights(self):
        sc = reference_example_scenario(0.2, 0, 0.1)
        assert [src.weight for src in sc.sources] == [1.0, 1.0]

    @pytest.mark.parametrize("p_s,delay,f_max", [(0.2, 0, 0.4), (1.0, 1, 1.0), (0.5, 0, 0.01)])
    def test_always_validates(self, p_s, delay, f_max):
        validate_scenario(reference_example_scenario(p_s, delay, f_max))


class TestSerialization:
    def test_json_round_trip(self, tmp_path, ref_scenario):
        path = tmp_path / "scenario.json"
        save_scenario(ref_scenario, path)
        loaded = load_scenario(path)
        assert loaded.f_max == ref_scenario.f_max
        assert loaded.channel == ref_scenario.channel
        for a, b in zip(loaded.sources, ref_scenario.sources):
            assert np.array_equal(a.transition, b.transition)
            assert np.array_equal(a.cae, b.cae)
            assert a.weight == b.weight

    def test_dict_round_trip_revalidates(self, ref_scenario):
        doc = scenario_to_dict(ref_scenario)
        doc["f_max"] = 0.0
        with pytest.raises(ScenarioValidationError):
            scenario_from_dict(doc)

    def test_weight_defaults_to_one(self, ref_scenario):
        doc = scenario_to_dict(ref_scenario)
        for s in doc["sources"]:
            del s["weight"]
        loaded = scenario_from_dict(doc)
        assert all(src.weight == 1.0 for src in loaded.sources)


class TestHelpers:
    def test_with_params_sweep_copy(self, ref_scenario):
        other = ref_scenario.with_params(p_success=0.9, delay=1, f_max=0.7)
        assert other.channel.p_success == 0.9
        assert other.channel.delay == 1
        assert other.f_max == 0.7
        assert ref_scenario.channel.p_success == 0.4  # original untouched
        assert np.array_equal(other.sources[0].transition, ref_scenario.sources[0].transition)

    def test_arrays_frozen(self, ref_scenario):
        with pytest.raises(ValueError):
            ref_scenario.sources[0].transition[0, 0] = 0.5

    @given(
        n=st.integers(min_value=2, max_value=6),
        p=st.floats(min_value=0.0, max_value=0.2),
    )
    def test_symmetric_transition_is_stochastic(self, n, p):
        q = symmetric_transition(n, p)
        assert np.allclose(q.sum(axis=1), 1.0)
        assert np.all(q >= 0.0)
        assert np.allclose(q[np.triu_indices(n, 1)], p)
