import random

import numpy as np
import pytest

from multilabel_imbalance.taxonomy import (
    AnnotationError,
    AnnotationSet,
    Instance,
    Taxonomy,
    TaxonomyError,
    ancestors,
    annotations_from_labels,
    compute_counts,
    imbalance_magnitude,
    instance_counts,
    load_annotations,
    load_taxonomy,
    save_annotations,
    save_taxonomy,
)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestLoadTaxonomy:
    def test_minimal_hierarchy(self, tmp_path):
        p = write(tmp_path, "classes.tsv", "0\tfruit\t-1\n1\tapple\t0\n2\tbanana\t0\n")
        t = load_taxonomy(p)
        assert t.num_classes == 3
        assert t.leaves == {1, 2}
        assert t.parents == {0}
        assert t.names == ("fruit", "apple", "banana")

    def test_single_root_is_leaf(self, tmp_path):
        t = load_taxonomy(write(tmp_path, "c.tsv", "0\tthing\t-1\n"))
        assert t.num_classes == 1
        assert t.leaves == {0}
        assert t.parents == frozenset()

    def test_header_detected(self, tmp_path):
        t = load_taxonomy(write(tmp_path, "c.tsv", "index\tname\tparent_index\n0\ta\t-1\n1\tb\t0\n"))
        assert t.parent == (-1, 0)

    def test_chain_of_six_is_too_deep(self, tmp_path):
        # six classes, each parenting the next: six levels
        rows = "".join(f"{i}\tc{i}\t{i - 1}\n" for i in range(6))
        with pytest.raises(TaxonomyError, match="levels"):
            load_taxonomy(write(tmp_path, "c.tsv", rows))

    def test_chain_of_five_is_allowed(self, tmp_path):
        rows = "".join(f"{i}\tc{i}\t{i - 1}\n" for i in range(5))
        t = load_taxonomy(write(tmp_path, "c.tsv", rows))
        assert max(t.depth) == 4

    def test_cycle(self, tmp_path):
        with pytest.raises(TaxonomyError, match="cycle"):
            load_taxonomy(write(tmp_path, "c.tsv", "0\ta\t1\n1\tb\t0\n"))

    def test_self_loop(self):
        with pytest.raises(TaxonomyError, match="cycle"):
            Taxonomy((0,))

    def test_dangling_parent(self, tmp_path):
        with pytest.raises(TaxonomyError, match="dangling"):
            load_taxonomy(write(tmp_path, "c.tsv", "0\ta\t-1\n1\tb\t7\n"))

    def test_non_dense_indices(self, tmp_path):
        with pytest.raises(TaxonomyError, match="dense"):
            load_taxonomy(write(tmp_path, "c.tsv", "0\ta\t-1\n2\tb\t0\n"))

    def test_round_trip(self, tmp_path):
        t = Taxonomy((-1, 0, 0, 1, -1), ("a", "b", "c", "d", "e"))
        save_taxonomy(t, tmp_path / "c.tsv")
        assert load_taxonomy(tmp_path / "c.tsv") == t


class TestAncestors:
    t = Taxonomy((-1, 0, 1, 0), ("fruit", "citrus", "lemon", "apple"))

    def test_parent(self):
        assert ancestors(self.t, 3) == [0]

    def test_root(self):
        assert ancestors(self.t, 0) == []

    def test_depth_three_leaf(self):
        assert ancestors(self.t, 2) == [1, 0]

    def test_depth_consistency(self):
        for c, p in enumerate(self.t.parent):
            if p != -1:
                assert self.t.depth[c] == self.t.depth[p] + 1

    def test_closure(self):
        assert self.t.closure([2]) == {0, 1, 2}


class TestCounts:
    def test_two_images(self):
        # 0 = apple, 1 = fruit
        a = annotations_from_labels([{0}, {0, 1}], 2, ["img1", "img2"])
        n, total = compute_counts(a)
        assert n.tolist() == [2, 1]
        assert total == 2

    def test_empty(self):
        n, total = compute_counts(AnnotationSet(3, ()))
        assert n.tolist() == [0, 0, 0]
        assert total == 0

    def test_same_class_three_times_on_one_image(self):
        a = annotations_from_labels([{1}, {1}, {1}], 2, ["x", "x", "x"])
        n, total = compute_counts(a)
        assert n.tolist() == [0, 1]
        assert total == 1
        assert instance_counts(a).tolist() == [0, 3]

    def test_permutation_invariant_and_idempotent(self):
        rng = random.Random(3)
        labels = [set(rng.sample(range(6), rng.randint(1, 3))) for _ in range(50)]
        ids = [f"i{rng.randint(0, 19)}" for _ in labels]
        a = annotations_from_labels(labels, 6, ids)
        order = list(range(50))
        rng.shuffle(order)
        b = annotations_from_labels([labels[i] for i in order], 6, [ids[i] for i in order])
        assert compute_counts(a)[0].tolist() == compute_counts(b)[0].tolist()
        assert compute_counts(a)[0].tolist() == compute_counts(a)[0].tolist()
        assert compute_counts(a)[1] == compute_counts(b)[1]


class TestImbalanceMagnitude:
    def test_open_images_scale(self):
        assert imbalance_magnitude([30000, 1]) == 30000

    def test_uniform(self):
        assert imbalance_magnitude([5, 5, 5]) == 1

    def test_zero_class_excluded(self):
        assert imbalance_magnitude([9, 1, 0]) == 9

    def test_all_zero(self):
        with pytest.raises(ValueError):
            imbalance_magnitude([0, 0])


class TestAnnotations:
    def test_empty_label_set_rejected(self):
        with pytest.raises(AnnotationError):
            Instance("a", frozenset())

    def test_out_of_range_label(self):
        with pytest.raises(AnnotationError):
            annotations_from_labels([{3}], 3)

    def test_verified_lists_disjoint(self):
        with pytest.raises(AnnotationError, match="both"):
            AnnotationSet(3, (Instance("a", {0}),), {"a": {0, 1}}, {"a": {1}})

    def test_round_trip(self, tmp_path):
        a = AnnotationSet(
            4,
            (Instance("a", {0, 1}), Instance("a", {2}), Instance("b", {3}), Instance("c", {1})),
            {"a": {0, 1, 2}, "c": set()},
            {"a": {3}, "c": set()},
        )
        save_annotations(a, tmp_path / "ann.jsonl")
        b = load_annotations(tmp_path / "ann.jsonl", 4)
        assert b == a
        assert not b.has_image_labels("b")
        assert b.has_image_labels("c")

    def test_optional_lists(self, tmp_path):
        p = write(tmp_path, "a.jsonl", '{"image_id": "x", "labels": [1]}\n'
                  '{"image_id": "y", "labels": [0], "verified_not_exist": [1]}\n')
        a = load_annotations(p, 2)
        assert not a.has_image_labels("x")
        assert a.verified_not_exist["y"] == {1}
        assert a.verified_exist["y"] == frozenset()

    def test_bad_line_reports_location(self, tmp_path):
        p = write(tmp_path, "a.jsonl", '{"image_id": "x", "labels": [1]}\n{"labels": [0]}\n')
        with pytest.raises(AnnotationError, match=r"a\.jsonl:2"):
            load_annotations(p, 2)

    def test_label_matrix(self):
        a = annotations_from_labels([{0, 2}, {1}], 3)
        np.testing.assert_array_equal(a.label_matrix(), [[1, 0, 1], [0, 1, 0]])
