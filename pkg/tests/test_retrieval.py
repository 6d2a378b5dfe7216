import math

import numpy as np
import pytest

from hrgenet.data import FeatureDataset, ShapeRecord
from hrgenet.errors import ConfigError, EmptyInputError
from hrgenet.graph import HrgeModel
from hrgenet.retrieval import (
    DescriptorIndex,
    MetricsReport,
    aggregate,
    average_precision,
    build_index,
    evaluate_retrieval,
    extract_descriptor,
    ndcg,
    precision_recall_f1_at_n,
    retrieve,
)


def brute_force_metrics(vectors, labels):
    """Independent retrieval evaluator: explicit loops throughout."""
    m = len(labels)
    per_query, query_labels = [], []
    for q in range(m):
        total_relevant = sum(1 for j in range(m)
                             if j != q and labels[j] == labels[q])
        if total_relevant == 0:
            continue
        dists = [(float(np.linalg.norm(vectors[j] - vectors[q])), j)
                 for j in range(m) if j != q]
        dists.sort(key=lambda t: (t[0], t[1]))
        flags = [labels[j] == labels[q] for _, j in dists]
        hits, ap = 0, 0.0
        for rank, flag in enumerate(flags, start=1):
            if flag:
                hits += 1
                ap += hits / rank
        ap /= total_relevant
        n = total_relevant
        tp = sum(flags[:n])
        p = tp / n
        r = tp / total_relevant
        f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
        dcg = sum(1.0 / math.log2(1 + rank)
                  for rank, f in enumerate(flags, start=1) if f)
        idcg = sum(1.0 / math.log2(1 + rank)
                   for rank in range(1, total_relevant + 1))
        per_query.append({"p_at_n": p, "r_at_n": r, "f1_at_n": f1,
                          "map": ap, "ndcg": dcg / idcg})
        query_labels.append(labels[q])
    micro = {k: sum(q[k] for q in per_query) / len(per_query)
             for k in per_query[0]}
    macro = {}
    classes = sorted(set(query_labels))
    for k in per_query[0]:
        means = []
        for c in classes:
            vals = [q[k] for q, lab in zip(per_query, query_labels)
                    if lab == c]
            means.append(sum(vals) / len(vals))
        macro[k] = sum(means) / len(means)
    return micro, macro


class TestAveragePrecision:
    def test_all_relevant(self):
        assert average_precision([1, 1, 1], 3) == 1.0

    def test_hand_case_five_sixths(self):
        assert average_precision([1, 0, 1], 2) == pytest.approx(5.0 / 6.0)

    def test_nothing_retrieved(self):
        assert average_precision([0, 0], 1) == 0.0

    def test_missing_relevant_counts_against(self):
        # one relevant retrieved at rank 1, but two exist in the corpus
        assert average_precision([1, 0], 2) == pytest.approx(0.5)


class TestPrecisionRecallF1:
    def test_perfect_ranking(self):
        assert precision_recall_f1_at_n([1, 1, 1], 3, 3) == (1.0, 1.0, 1.0)

    def test_hand_case(self):
        p, r, f1 = precision_recall_f1_at_n([1, 0], 2, 2)
        assert (p, r, f1) == (0.5, 0.5, 0.5)

    def test_nothing_relevant(self):
        assert precision_recall_f1_at_n([0, 0, 0], 3, 2) == (0.0, 0.0, 0.0)


class TestNdcg:
    def test_ideal_ordering(self):
        assert ndcg([1, 1, 0, 0], 2) == pytest.approx(1.0)

    def test_hand_case_log2_3(self):
        assert ndcg([0, 1], 1) == pytest.approx(1.0 / math.log2(3))

    def test_empty_list_rejected(self):
        with pytest.raises(EmptyInputError):
            ndcg([], 1)


class TestAggregate:
    def test_single_class_micro_equals_macro(self):
        per_query = [{k: v for k in
                      ("p_at_n", "r_at_n", "f1_at_n", "map", "ndcg")}
                     for v in (0.5, 1.0, 0.25)]
        report = aggregate(per_query, [0, 0, 0])
        assert report.micro == report.macro

    def test_unbalanced_hand_case(self):
        keys = ("p_at_n", "r_at_n", "f1_at_n", "map", "ndcg")
        per_query = [dict.fromkeys(keys, 1.0) for _ in range(3)]
        per_query.append(dict.fromkeys(keys, 0.0))
        report = aggregate(per_query, [0, 0, 0, 1])
        assert report.micro["map"] == pytest.approx(0.75)
        assert report.macro["map"] == pytest.approx(0.5)


class TestRetrieve:
    def make_index(self):
        vectors = np.eye(4)
        return DescriptorIndex(ids=["a", "b", "c", "d"],
                               labels=np.array([0, 0, 1, 1]),
                               vectors=vectors)

    def test_pure_distance_ranking(self):
        index = self.make_index()
        query = np.array([1.0, 0.1, 0.0, 0.0])
        ranked = retrieve(index, "q", query)
        assert ranked.ids[0] == "a"
        assert ranked.distances == sorted(ranked.distances)

    def test_query_excluded_from_results(self):
        index = self.make_index()
        ranked = retrieve(index, "a", index.vectors[0])
        assert "a" not in ranked.ids

    def test_threshold_drops_far_items(self):
        index = self.make_index()
        query = np.array([1.0, 0.0, 0.0, 0.0])
        ranked = retrieve(index, "q", query, threshold=1.0)
        assert ranked.ids == ["a"]

    def test_invalid_threshold_rejected(self):
        with pytest.raises(ConfigError):
            retrieve(self.make_index(), "q", np.zeros(4), threshold=0.0)

    def test_empty_index_rejected(self):
        index = DescriptorIndex(ids=[], labels=np.array([]),
                                vectors=np.zeros((0, 4)))
        with pytest.raises(EmptyInputError):
            retrieve(index, "q", np.zeros(4))

    def test_rerank_identity_when_all_share_fine_label(self):
        index = self.make_index()
        query = np.array([0.2, 0.3, 0.1, 0.4])
        plain = retrieve(index, "q", query)
        reranked = retrieve(index, "q", query,
                            predict_fine=lambda _id: 7)
        assert reranked.ids == plain.ids

    def test_rerank_stable_partition_hand_case(self):
        # five items at hand-placed distances with mixed fine labels
        vectors = np.zeros((5, 1))
        vectors[:, 0] = [1.0, 2.0, 3.0, 4.0, 5.0]
        index = DescriptorIndex(ids=list("abcde"),
                                labels=np.zeros(5, dtype=int),
                                vectors=vectors)
        fine = {"q": 1, "a": 0, "b": 1, "c": 0, "d": 1, "e": 0}
        ranked = retrieve(index, "q", np.array([0.0]),
                          predict_fine=fine.__getitem__)
        # same-fine items (b, d) promoted, order inside partitions kept
        assert ranked.ids == ["b", "d", "a", "c", "e"]


class TestExtractDescriptor:
    def test_unit_norm(self, rng):
        model = HrgeModel(num_views=12, width=4, variant="full", seed=1)
        desc = extract_descriptor(model, rng.normal(size=(12, 4)))
        assert abs(np.linalg.norm(desc) - 1.0) < 1e-9

    def test_identical_shapes_distance_zero(self, rng):
        model = HrgeModel(num_views=12, width=4, variant="full", seed=1)
        views = rng.normal(size=(12, 4))
        a = extract_descriptor(model, views)
        b = extract_descriptor(model, views.copy())
        assert np.linalg.norm(a - b) == 0.0

    def test_cyclic_shift_by_four_gives_distance_zero(self, rng):
        model = HrgeModel(num_views=12, width=4, variant="full", seed=1)
        views = rng.normal(size=(12, 4))
        a = extract_descriptor(model, views)
        b = extract_descriptor(model, np.roll(views, 4, axis=0))
        assert np.linalg.norm(a - b) < 1e-9


class TestEvaluateRetrieval:
    def test_matches_brute_force_on_random_corpora(self):
        for seed in range(10):
            r = np.random.default_rng(seed)
            vectors = r.normal(size=(20, 6))
            vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
            labels = r.integers(0, 4, size=20)
            index = DescriptorIndex(ids=[f"s{k}" for k in range(20)],
                                    labels=labels, vectors=vectors)
            report, _ = evaluate_retrieval(index)
            micro, macro = brute_force_metrics(vectors, labels)
            for key in micro:
                assert report.micro[key] == pytest.approx(micro[key],
                                                          abs=1e-12)
                assert report.macro[key] == pytest.approx(macro[key],
                                                          abs=1e-12)

    def test_singleton_class_queries_skipped(self, rng):
        vectors = rng.normal(size=(5, 3))
        labels = np.array([0, 0, 0, 0, 1])
        index = DescriptorIndex(ids=[f"s{k}" for k in range(5)],
                                labels=labels, vectors=vectors)
        report, _ = evaluate_retrieval(index)
        assert report.skipped_queries == ["s4"]

    def test_build_index_from_dataset(self, rng):
        model = HrgeModel(num_views=6, width=3, variant="full", seed=0)
        records = [ShapeRecord(id=f"s{k}", views=rng.normal(size=(6, 3)),
                               coarse_label=k % 2) for k in range(6)]
        dataset = FeatureDataset(records=records, num_classes=2)
        index = build_index(model, dataset)
        assert len(index) == 6
        norms = np.linalg.norm(index.vectors, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-9)


class TestMetricsReport:
    def test_round_trips_through_parser(self):
        keys = ("p_at_n", "r_at_n", "f1_at_n", "map", "ndcg")
        report = MetricsReport(
            micro=dict(zip(keys, (0.5, 0.25, 1 / 3, 0.125, 0.99))),
            macro=dict(zip(keys, (0.4, 0.3, 0.2, 0.1, 0.05))))
        parsed = MetricsReport.parse("\n".join(report.to_lines()))
        for key in keys:
            assert parsed.micro[key] == pytest.approx(report.micro[key])
            assert parsed.macro[key] == pytest.approx(report.macro[key])

    def test_table_has_both_blocks(self):
        keys = ("p_at_n", "r_at_n", "f1_at_n", "map", "ndcg")
        report = MetricsReport(micro=dict.fromkeys(keys, 0.5),
                               macro=dict.fromkeys(keys, 0.25))
        table = report.render_table()
        assert "micro" in table and "macro" in table
