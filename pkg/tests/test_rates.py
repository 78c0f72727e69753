import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multilabel_imbalance.rates import (
    apply_hierarchy_rule,
    estimate_rates,
    hierarchy_pairs,
    load_rates,
    save_rates,
    top_confused_pairs,
    validate_rates,
)
from multilabel_imbalance.taxonomy import Taxonomy, annotations_from_labels

# 0 cup, 1 mug, 2 hawk, 3 falcon, 4 rock
FLAT = Taxonomy((-1,) * 5, ("cup", "mug", "hawk", "falcon", "rock"))
FRUIT = Taxonomy((-1, 0, 0), ("fruit", "apple", "banana"))


def paired_annotations(co_labeled=65, total=100):
    labels = [{0, 1}] * co_labeled + [{0}] * (total - co_labeled) + [{4}] * 10
    return annotations_from_labels(labels, 5)


class TestEstimateRates:
    def test_cup_mug(self):
        r = estimate_rates(paired_annotations(), FLAT, min_rate=0.1)
        assert r[0, 1] == pytest.approx(0.65)
        # 65 mugs, all on cups
        assert r[1, 0] == pytest.approx(1.0)

    def test_isolated_class_row_is_zero(self):
        r = estimate_rates(paired_annotations(), FLAT)
        assert not r[4].any()
        assert not r[:, 4].any()

    def test_floor(self):
        r = estimate_rates(paired_annotations(8, 100), FLAT, min_rate=0.1)
        assert r[0, 1] == 0.0
        r = estimate_rates(paired_annotations(8, 100), FLAT, min_rate=0.0)
        assert r[0, 1] == pytest.approx(0.08)

    def test_empty_set(self):
        with pytest.raises(ValueError, match="empty"):
            estimate_rates(annotations_from_labels([], 5), FLAT)

    def test_bad_min_rate(self):
        with pytest.raises(ValueError):
            estimate_rates(paired_annotations(), FLAT, min_rate=1.0)

    def test_reference_join(self):
        # clean labels say cup; observed labels say mug on 3 of 4
        truth = annotations_from_labels([{0}] * 4, 5)
        observed = annotations_from_labels([{1}] * 3 + [{0}], 5)
        r = estimate_rates(observed, FLAT, min_rate=0.0, reference=truth)
        assert r[0, 1] == pytest.approx(0.75)

    def test_image_level_union(self):
        a = annotations_from_labels([{0}, {1}, {0}], 5, ["a", "a", "b"])
        inst = estimate_rates(a, FLAT, min_rate=0.0)
        img = estimate_rates(a, FLAT, min_rate=0.0, image_level=True)
        assert inst[0, 1] == 0.0
        assert img[0, 1] == pytest.approx(0.5)

    def test_hierarchy_default(self):
        a = annotations_from_labels([{0, 1}, {0, 2}, {0}], 3)
        r = estimate_rates(a, FRUIT)
        assert r[1, 0] == r[0, 1] == 1.0
        assert r[2, 0] == r[0, 2] == 1.0


class TestHierarchyRule:
    def test_remove_suppression(self):
        r = apply_hierarchy_rule(np.zeros((3, 3)), FRUIT, "remove_suppression")
        assert r[1, 0] == r[0, 1] == 1.0
        assert r[1, 2] == 0.0

    def test_literal_zero(self):
        r = apply_hierarchy_rule(np.full((3, 3), 0.4), FRUIT, "literal_zero")
        assert r[1, 0] == r[0, 1] == 0.0
        assert r[1, 2] == 0.4

    @pytest.mark.parametrize("mode", ["remove_suppression", "literal_zero"])
    def test_flat_unchanged(self, mode):
        m = np.random.default_rng(0).uniform(size=(5, 5))
        np.testing.assert_array_equal(apply_hierarchy_rule(m, FLAT, mode), m)

    def test_deep_pairs_include_grandparent(self):
        t = Taxonomy((-1, 0, 1))
        assert hierarchy_pairs(t) == [(2, 1), (2, 0)]

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            apply_hierarchy_rule(np.zeros((3, 3)), FRUIT, "half")


class TestTopConfusedPairs:
    def test_largest_first(self):
        r = np.zeros((5, 5))
        r[2, 3] = 0.5
        r[0, 1] = 0.3
        assert top_confused_pairs(r, 55)[0] == (2, 3, 0.5)

    def test_all_zero(self):
        assert top_confused_pairs(np.zeros((4, 4)), 5) == []

    def test_tie_break(self):
        r = np.zeros((4, 4))
        r[1, 2] = 0.3
        r[0, 3] = 0.3
        assert top_confused_pairs(r, 2) == [(0, 3, 0.3), (1, 2, 0.3)]

    def test_skips_hierarchy(self):
        r = apply_hierarchy_rule(np.zeros((3, 3)), FRUIT)
        r[1, 2] = 0.2
        assert top_confused_pairs(r, 5, FRUIT) == [(1, 2, 0.2)]

    def test_skips_parent_grandparent(self):
        t = Taxonomy((-1, 0, 1, -1))
        r = np.zeros((4, 4))
        r[1, 0] = r[2, 0] = r[2, 1] = 1.0
        r[2, 3] = 0.4
        assert top_confused_pairs(r, 5, t) == [(2, 3, 0.4)]


class TestRateFile:
    def test_round_trip(self, tmp_path):
        r = np.zeros((4, 4))
        r[0, 1] = 0.65
        r[3, 2] = 1 / 3
        save_rates(r, tmp_path / "r.tsv")
        assert (tmp_path / "r.tsv").read_text().splitlines() == ["0\t1\t0.65", "3\t2\t0.3333333333333333"]
        np.testing.assert_array_equal(load_rates(tmp_path / "r.tsv", 4), r)

    def test_bad_line(self, tmp_path):
        (tmp_path / "r.tsv").write_text("0\t1\n")
        with pytest.raises(ValueError, match="r.tsv:1"):
            load_rates(tmp_path / "r.tsv", 4)

    @pytest.mark.parametrize("row", ["0\t9\t0.5\n", "-1\t0\t0.5\n"])
    def test_index_out_of_range(self, tmp_path, row):
        (tmp_path / "r.tsv").write_text(row)
        with pytest.raises(ValueError, match="range"):
            load_rates(tmp_path / "r.tsv", 4)

    def test_rate_out_of_range(self, tmp_path):
        (tmp_path / "r.tsv").write_text("0\t1\t1.5\n")
        with pytest.raises(ValueError):
            load_rates(tmp_path / "r.tsv", 4)


label_sets = st.lists(
    st.sets(st.integers(0, 4), min_size=1, max_size=3), min_size=1, max_size=40
)


class TestProperties:
    @given(label_sets, st.floats(0, 0.9))
    @settings(max_examples=60, deadline=None)
    def test_entries_valid(self, labels, min_rate):
        r = estimate_rates(annotations_from_labels(labels, 5), FLAT, min_rate=min_rate)
        validate_rates(r, 5)
        assert not np.diag(r).any()
        nz = r[r > 0]
        assert np.all(nz >= min_rate)

    @given(label_sets, st.randoms(use_true_random=False))
    @settings(max_examples=60, deadline=None)
    def test_order_invariant(self, labels, rnd):
        shuffled = list(labels)
        rnd.shuffle(shuffled)
        a = estimate_rates(annotations_from_labels(labels, 5), FLAT, 0.0)
        b = estimate_rates(annotations_from_labels(shuffled, 5), FLAT, 0.0)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-15)

    @given(label_sets)
    @settings(max_examples=60, deadline=None)
    def test_matches_pair_counting(self, labels):
        r = estimate_rates(annotations_from_labels(labels, 5), FLAT, 0.0)
        for i in range(5):
            n_i = sum(i in s for s in labels)
            for j in range(5):
                if i == j:
                    continue
                both = sum(i in s and j in s for s in labels)
                expect = both / n_i if n_i else 0.0
                assert r[i, j] == pytest.approx(expect, abs=1e-15)

    @given(label_sets)
    @settings(max_examples=60, deadline=None)
    def test_duplication_invariant(self, labels):
        a = estimate_rates(annotations_from_labels(labels, 5), FLAT, 0.1)
        b = estimate_rates(annotations_from_labels(labels + labels, 5), FLAT, 0.1)
        np.testing.assert_allclose(a, b, rtol=1e-14)

    @given(label_sets)
    @settings(max_examples=60, deadline=None)
    def test_entries_are_count_ratios(self, labels):
        r = estimate_rates(annotations_from_labels(labels, 5), FLAT, 0.0)
        n = np.array([sum(i in s for s in labels) for i in range(5)])
        scaled = r * n[:, None]
        np.testing.assert_allclose(scaled, np.round(scaled), atol=1e-9)

    @given(label_sets)
    @settings(max_examples=60, deadline=None)
    def test_modes_differ_only_on_hierarchy(self, labels):
        a = annotations_from_labels([{0} | {x % 3 for x in s} for s in labels], 3)
        rs = estimate_rates(a, FRUIT, 0.0, "remove_suppression")
        lz = estimate_rates(a, FRUIT, 0.0, "literal_zero")
        differ = set(zip(*np.nonzero(rs != lz)))
        assert differ <= {(1, 0), (0, 1), (2, 0), (0, 2)}
