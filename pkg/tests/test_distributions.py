import numpy as np
import pytest

from entroshap.core import Instance, PartialInstance
from entroshap.distributions import (
    Dataset,
    TabularJointModel,
    conditional_probability,
    draw_random_donor,
    load_dataset_csv,
    load_dataset_jsonl,
    marginal_label,
    sample_conditional,
)
from entroshap.errors import CompositionError, ConditioningError, SamplingError
from entroshap.worlds import ConstantModel, LookupModel, matched_pair_joint, uniform_binary_joint

PAD = "_"


def inst(*values, pad=PAD):
    return Instance(tuple(values), pad)


class TestDrawRandomDonor:
    def test_singleton_dataset_always_returned(self):
        data = Dataset((inst("a", "b"),))
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert draw_random_donor(data, 2, rng).values == ("a", "b")

    def test_right_padding(self):
        data = Dataset((inst("a"),))
        donor = draw_random_donor(data, 3, np.random.default_rng(0))
        assert donor.values == ("a", PAD, PAD)

    def test_truncation(self):
        data = Dataset((inst("a", "b", "c"),))
        donor = draw_random_donor(data, 2, np.random.default_rng(0))
        assert donor.values == ("a", "b")

    def test_two_instance_split_is_uniform(self):
        # frequency check against the uniform draw, 10000 seeded draws
        data = Dataset((inst("a"), inst("b")))
        rng = np.random.default_rng(123)
        draws = [draw_random_donor(data, 1, rng).values[0] for _ in range(10000)]
        freq = draws.count("a") / 10000
        assert abs(freq - 0.5) <= 0.02

    def test_empty_dataset_rejected(self):
        with pytest.raises(SamplingError):
            Dataset(())

    def test_donor_length_always_n(self):
        data = Dataset((inst("a"), inst("a", "b", "c", "d"), inst("x", "y")))
        rng = np.random.default_rng(7)
        for n in (1, 2, 3, 5):
            for _ in range(50):
                assert draw_random_donor(data, n, rng).n == n


class TestSampleConditional:
    def test_matched_pair_forces_completion(self):
        joint = matched_pair_joint()
        rng = np.random.default_rng(5)
        for _ in range(50):
            out = sample_conditional(joint, PartialInstance({0: 1}, 2), rng)
            assert out.values == (1, 1)

    def test_fully_observed_returned_unchanged(self):
        joint = matched_pair_joint()
        out = sample_conditional(joint, PartialInstance({0: 1, 1: 0}, 2), np.random.default_rng(0))
        assert out.values == (1, 0)

    def test_independent_pair_frequency_matches_conditional(self):
        joint = uniform_binary_joint(2)
        rng = np.random.default_rng(99)
        draws = [
            sample_conditional(joint, PartialInstance({0: 0}, 2), rng).values[1]
            for _ in range(10000)
        ]
        freq = sum(draws) / 10000
        exact = conditional_probability(
            joint, PartialInstance({1: 1}, 2), PartialInstance({0: 0}, 2)
        )
        assert abs(freq - exact) <= 0.02

    def test_zero_probability_condition_raises(self):
        joint = matched_pair_joint()
        with pytest.raises(ConditioningError):
            sample_conditional(joint, PartialInstance({0: 2}, 2), np.random.default_rng(0))


class TestConditionalProbability:
    def test_matched_pair_is_deterministic(self):
        joint = matched_pair_joint()
        p = conditional_probability(joint, PartialInstance({1: 1}, 2), PartialInstance({0: 1}, 2))
        assert p == pytest.approx(1.0, abs=1e-15)

    def test_empty_target_is_one(self):
        joint = matched_pair_joint()
        p = conditional_probability(joint, PartialInstance({}, 2), PartialInstance({0: 1}, 2))
        assert p == pytest.approx(1.0, abs=1e-15)

    def test_independent_pair_by_enumeration(self):
        joint = uniform_binary_joint(2)
        # independent oracle: sum the support by hand
        num = sum(p for inst_, p in joint.support if inst_.values == (0, 1))
        den = sum(p for inst_, p in joint.support if inst_.values[0] == 0)
        p = conditional_probability(joint, PartialInstance({1: 1}, 2), PartialInstance({0: 0}, 2))
        assert p == pytest.approx(num / den, abs=1e-12)
        assert p == pytest.approx(0.5, abs=1e-12)

    def test_conflicting_positions_raise(self):
        joint = matched_pair_joint()
        with pytest.raises(ConditioningError):
            conditional_probability(
                joint, PartialInstance({0: 0}, 2), PartialInstance({0: 1}, 2)
            )

    def test_zero_probability_given_raises(self):
        joint = matched_pair_joint()
        with pytest.raises(ConditioningError):
            conditional_probability(
                joint, PartialInstance({1: 1}, 2), PartialInstance({0: 7}, 2)
            )


class TestMarginalLabel:
    def test_fully_observed_equals_model_output(self):
        joint = matched_pair_joint()
        model = LookupModel({(1, 1): [0.9, 0.1], (0, 0): [0.2, 0.8]}, 2)
        out = marginal_label(joint, model, PartialInstance({0: 1, 1: 1}, 2))
        assert np.allclose(out.probs, [0.9, 0.1], atol=1e-15)

    def test_constant_model_any_observation(self):
        joint = uniform_binary_joint(3)
        model = ConstantModel([0.25, 0.75])
        for observed in (PartialInstance({}, 3), PartialInstance({1: 0}, 3)):
            out = marginal_label(joint, model, observed)
            assert np.allclose(out.probs, [0.25, 0.75], atol=1e-15)

    def test_two_term_mixture_by_enumeration(self):
        joint = matched_pair_joint()
        model = LookupModel({(1, 1): [0.9, 0.1], (0, 0): [0.2, 0.8]}, 2)
        # brute force over the support: both points survive an empty observation
        expected = 0.5 * np.array([0.9, 0.1]) + 0.5 * np.array([0.2, 0.8])
        out = marginal_label(joint, model, PartialInstance({}, 2))
        assert np.allclose(out.probs, expected, atol=1e-12)

    def test_output_sums_to_one(self):
        joint = uniform_binary_joint(3)
        rng = np.random.default_rng(3)
        table = {}
        for inst_, _ in joint.support:
            p = rng.uniform(0.1, 0.9)
            table[inst_.values] = [p, 1 - p]
        model = LookupModel(table, 2)
        for observed in (PartialInstance({0: 1}, 3), PartialInstance({0: 0, 2: 1}, 3)):
            out = marginal_label(joint, model, observed)
            assert abs(out.probs.sum() - 1.0) < 1e-9


class TestTabularJointModel:
    def test_probabilities_must_sum_to_one(self):
        with pytest.raises(SamplingError):
            TabularJointModel(((Instance((0,), 0), 0.5),))

    def test_lengths_must_match(self):
        with pytest.raises(CompositionError):
            TabularJointModel(((Instance((0,), 0), 0.5), (Instance((0, 1), 0), 0.5)))

    def test_fit_empirical_counts(self):
        data = Dataset((inst("a", "b"), inst("a", "b"), inst("c", "d")))
        joint = TabularJointModel.fit_empirical(data)
        probs = {i.values: p for i, p in joint.support}
        assert probs[("a", "b")] == pytest.approx(2 / 3)
        assert probs[("c", "d")] == pytest.approx(1 / 3)

    def test_empirical_conditional_frequencies_converge(self):
        data = Dataset((inst("a", "x"), inst("a", "y"), inst("a", "y"), inst("b", "x")))
        joint = TabularJointModel.fit_empirical(data)
        exact = conditional_probability(
            joint, PartialInstance({1: "y"}, 2), PartialInstance({0: "a"}, 2)
        )
        rng = np.random.default_rng(11)
        draws = [
            sample_conditional(joint, PartialInstance({0: "a"}, 2), rng).values[1]
            for _ in range(10000)
        ]
        freq = draws.count("y") / 10000
        assert exact == pytest.approx(2 / 3, abs=1e-12)
        assert abs(freq - exact) <= 0.02


class TestIngestion:
    def test_jsonl_round_trip(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text('{"tokens": ["a", "b"], "label": 1}\n{"tokens": ["c"], "label": 0}\n')
        data = load_dataset_jsonl(path, PAD)
        assert [i.values for i in data.instances] == [("a", "b"), ("c",)]
        assert data.labels == (1, 0)

    def test_jsonl_without_labels(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text('{"tokens": ["a"]}\n')
        data = load_dataset_jsonl(path, PAD)
        assert data.labels is None

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "data.csv"
        path.write_text("a,b,1\nc,d,0\n")
        data = load_dataset_csv(path, PAD)
        assert [i.values for i in data.instances] == [("a", "b"), ("c", "d")]
        assert data.labels == (1, 0)

    def test_joint_csv(self, tmp_path):
        path = tmp_path / "joint.csv"
        path.write_text("a,b,0.25\nc,d,0.75\n")
        joint = TabularJointModel.load_csv(path, PAD)
        assert joint.consistent_mass(PartialInstance({0: "c"}, 2)) == pytest.approx(0.75)
