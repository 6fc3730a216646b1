import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entroshap.core import AttributionVector, Instance
from entroshap.errors import ConfigError, MetricError
from entroshap.evaluation import (
    EvalConfig,
    EvalReport,
    MetricRow,
    Ranking,
    comprehensiveness,
    log_odds,
    metric_grid,
    overlap_rate,
    perturb,
    rank_features,
    spearman,
    sufficiency,
    top_count,
)
from entroshap.worlds import ConstantModel, LookupModel, TokenWeightModel

PAD = "_"


def inst(*values):
    return Instance(tuple(values), PAD)


def ranking(order, scores=None):
    if scores is None:
        n = len(order)
        scores = [0.0] * n
        for rank, f in enumerate(order):
            scores[f] = float(n - rank)
    return Ranking(tuple(order), np.asarray(scores, dtype=float))


class TestRankFeatures:
    def test_descending_sort(self):
        r = rank_features(AttributionVector(np.array([0.3, 0.1, 0.5])))
        assert r.order == (2, 0, 1)

    def test_tie_broken_by_index(self):
        r = rank_features(AttributionVector(np.array([0.2, 0.2])))
        assert r.order == (0, 1)

    def test_absolute_vs_signed_rule(self):
        attr = AttributionVector(np.array([-0.9, 0.1]))
        assert rank_features(attr, "absolute").order == (0, 1)
        assert rank_features(attr, "signed").order == (1, 0)

    def test_scores_non_increasing_along_order(self):
        attr = AttributionVector(np.array([0.1, -0.4, 0.9, 0.0]))
        r = rank_features(attr)
        along = [r.scores[i] for i in r.order]
        assert all(a >= b for a, b in zip(along, along[1:]))


class TestPerturb:
    def test_k20_of_five_perturbs_one(self):
        x = inst("a", "b", "c", "d", "e")
        out = perturb(x, ranking([0, 1, 2, 3, 4]), 20, "top", "pad")
        assert out.values == (PAD, "b", "c", "d", "e")

    def test_k30_of_five_perturbs_two(self):
        assert top_count(5, 30) == 2
        x = inst("a", "b", "c", "d", "e")
        out = perturb(x, ranking([4, 3, 2, 1, 0]), 30, "top", "pad")
        assert out.values == ("a", "b", "c", PAD, PAD)

    def test_delete_mode_preserves_order_of_rest(self):
        x = inst("a", "b", "c")
        out = perturb(x, ranking([1, 0, 2]), 33, "top", "delete")  # top-1 is index 1
        assert out.values == ("a", "c")

    def test_non_top_perturbs_complement(self):
        x = inst("a", "b", "c", "d", "e")
        out = perturb(x, ranking([0, 1, 2, 3, 4]), 20, "non-top", "pad")
        assert out.values == ("a", PAD, PAD, PAD, PAD)

    @given(
        st.integers(min_value=1, max_value=8).flatmap(
            lambda n: st.tuples(
                st.just(n),
                st.permutations(list(range(n))),
                st.floats(min_value=0.5, max_value=100.0),
            )
        )
    )
    @settings(deadline=None)
    def test_pad_partition_property(self, case):
        n, order, k = case
        x = Instance(tuple(f"t{i}" for i in range(n)), PAD)
        r = ranking(order)
        top = perturb(x, r, k, "top", "pad")
        non_top = perturb(x, r, k, "non-top", "pad")
        for i in range(n):
            padded_in_top = top.values[i] == PAD
            padded_in_non_top = non_top.values[i] == PAD
            assert padded_in_top != padded_in_non_top  # exactly one side pads each index


class TestLogOdds:
    def test_identity_perturbation_is_zero(self):
        model = ConstantModel([0.8, 0.2])
        data = [(inst("a", "b"), ranking([0, 1]))]
        assert log_odds(model, data, 50) == pytest.approx(0.0, abs=1e-12)

    def test_single_instance_formula(self):
        model = LookupModel(
            {("a", "b"): [0.8, 0.2], (PAD, "b"): [0.08, 0.92]}, 2
        )
        data = [(inst("a", "b"), ranking([0, 1]))]
        assert log_odds(model, data, 50) == pytest.approx(math.log(0.1), abs=1e-9)

    def test_two_instance_mean(self):
        model = LookupModel(
            {
                ("a", "b"): [0.8, 0.2],
                (PAD, "b"): [0.08, 0.92],
                ("c", "d"): [0.7, 0.3],
                (PAD, "d"): [0.7, 0.3],
            },
            2,
        )
        data = [(inst("a", "b"), ranking([0, 1])), (inst("c", "d"), ranking([0, 1]))]
        assert log_odds(model, data, 50) == pytest.approx(math.log(0.1) / 2, abs=1e-9)

    def test_zero_probability_identified(self):
        model = LookupModel({("a", "b"): [1.0, 0.0], (PAD, "b"): [0.0, 1.0]}, 2)
        data = [(inst("a", "b"), ranking([0, 1]))]
        with pytest.raises(MetricError, match="instance 0"):
            log_odds(model, data, 50)


class TestSufficiencyComprehensiveness:
    def test_constant_model_zero_for_any_k(self):
        model = ConstantModel([0.6, 0.4])
        data = [(inst("a", "b", "c"), ranking([0, 1, 2]))]
        for k in (10, 20, 50, 100):
            assert sufficiency(model, data, k) == pytest.approx(0.0, abs=1e-12)
            assert comprehensiveness(model, data, k) == pytest.approx(0.0, abs=1e-12)

    def test_sufficiency_single_term(self):
        model = LookupModel(
            {("a", "b"): [0.9, 0.1], ("a", PAD): [0.7, 0.3]}, 2
        )
        data = [(inst("a", "b"), ranking([0, 1]))]
        assert sufficiency(model, data, 50) == pytest.approx(0.2, abs=1e-12)

    def test_comprehensiveness_single_term(self):
        model = LookupModel(
            {("a", "b"): [0.9, 0.1], (PAD, "b"): [0.3, 0.7]}, 2
        )
        data = [(inst("a", "b"), ranking([0, 1]))]
        assert comprehensiveness(model, data, 50) == pytest.approx(0.6, abs=1e-12)

    def test_decisive_feature_first_scores_at_least_reversed(self):
        model = TokenWeightModel({"k": (2.0, -2.0)}, 2)
        x = inst("k", "a", "b")
        good = ranking([0, 1, 2])
        bad = ranking([2, 1, 0])
        assert comprehensiveness(model, [(x, good)], 33) >= comprehensiveness(
            model, [(x, bad)], 33
        )

    def test_metrics_are_means_of_per_instance_terms(self):
        model = TokenWeightModel({"k": (1.5, -1.5), "z": (-0.7, 0.7)}, 2)
        data = [
            (inst("k", "a", "b"), ranking([0, 1, 2])),
            (inst("z", "k", "a"), ranking([1, 0, 2])),
            (inst("a", "z", "k"), ranking([2, 0, 1])),
        ]
        for metric in (log_odds, sufficiency, comprehensiveness):
            whole = metric(model, data, 40)
            singles = [metric(model, [pair], 40) for pair in data]
            assert whole == pytest.approx(float(np.mean(singles)), abs=1e-12)


class TestSpearman:
    def test_identical_rankings(self):
        r = ranking([2, 0, 1, 3])
        assert spearman(r, r) == pytest.approx(1.0, abs=1e-12)

    def test_reversed_rankings(self):
        a = ranking([0, 1, 2, 3])
        b = ranking([3, 2, 1, 0])
        assert spearman(a, b) == pytest.approx(-1.0, abs=1e-12)

    def test_adjacent_swap_value(self):
        # orders [0,1,2,3] vs [1,0,2,3]: sum of squared rank differences is 2
        a = ranking([0, 1, 2, 3])
        b = ranking([1, 0, 2, 3])
        assert spearman(a, b) == pytest.approx(1 - 12 / 60, abs=1e-12)
        assert spearman(a, b) == pytest.approx(0.8, abs=1e-9)

    def test_symmetry_and_relabel_invariance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = int(rng.integers(2, 8))
            a = ranking(list(rng.permutation(n)))
            b = ranking(list(rng.permutation(n)))
            assert spearman(a, b) == pytest.approx(spearman(b, a), abs=1e-12)
            relabel = list(rng.permutation(n))
            a2 = ranking([relabel[i] for i in a.order])
            b2 = ranking([relabel[i] for i in b.order])
            assert spearman(a2, b2) == pytest.approx(spearman(a, b), abs=1e-12)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            spearman(ranking([0, 1]), ranking([0, 1, 2]))


class TestOverlapRate:
    def test_identical_rankings_full_overlap(self):
        r = ranking([3, 1, 0, 2])
        for k in (10, 25, 50, 100):
            assert overlap_rate(r, r, k) == pytest.approx(1.0)

    def test_half_overlap(self):
        a = ranking([0, 1, 2, 3])
        b = ranking([1, 2, 0, 3])
        assert overlap_rate(a, b, 50) == pytest.approx(0.5)

    def test_disjoint_top_sets(self):
        a = ranking([0, 1, 2, 3])
        b = ranking([2, 3, 0, 1])
        assert overlap_rate(a, b, 50) == pytest.approx(0.0)

    def test_bounds_and_equality_condition(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            n = int(rng.integers(2, 9))
            a = ranking(list(rng.permutation(n)))
            b = ranking(list(rng.permutation(n)))
            k = float(rng.uniform(5, 100))
            rate = overlap_rate(a, b, k)
            assert 0.0 <= rate <= 1.0
            count = top_count(n, k)
            if rate == 1.0:
                assert set(a.order[:count]) == set(b.order[:count])


class TestReportSerialization:
    def make_report(self):
        rows = (
            MetricRow("random", 10, "lor", (-1.0, -1.2)),
            MetricRow("random", 10, "sf", (0.1, 0.12)),
            MetricRow("random", 10, "cm", (0.4, 0.38)),
        )
        return EvalReport(rows, 3)

    def test_json_round_trip(self):
        report = self.make_report()
        payload = report.to_json_dict()
        assert payload["n_instances"] == 3
        lor = next(r for r in payload["rows"] if r["metric"] == "lor")
        assert lor["mean"] == pytest.approx(-1.1)
        assert lor["std"] == pytest.approx(np.std([-1.0, -1.2], ddof=1))

    def test_csv_headers(self):
        text = self.make_report().to_csv_text()
        head = text.splitlines()[0]
        assert head == "method,k,lor_mean,lor_std,sf_mean,sf_std,cm_mean,cm_std"

    def test_long_csv_has_one_row_per_seed(self):
        text = self.make_report().to_long_csv_text()
        lines = text.strip().splitlines()
        assert lines[0] == "method,k,metric,seed_index,value"
        assert len(lines) == 1 + 3 * 2


class TestMetricGrid:
    def test_constant_model_grid_is_all_zero(self):
        model = ConstantModel([0.7, 0.3])
        data = [(inst("a", "b", "c"), ranking([0, 1, 2]))]
        grid = metric_grid(model, data, EvalConfig())
        assert set(k for k, _ in grid) == {10, 20, 30, 40, 50}
        assert all(v == pytest.approx(0.0, abs=1e-12) for v in grid.values())

    def test_bad_k_rejected(self):
        with pytest.raises(ConfigError):
            EvalConfig(k_grid=(0,))
        with pytest.raises(ConfigError):
            EvalConfig(k_grid=(101,))
