"""Task embeddings, ranking, and the recall/median-rank protocol."""

import numpy as np
import pytest

from ccax import cca, io, retrieval, synthetic
from oracles import rank_by_cosine_loops, recall_and_median_loops


@pytest.fixture(scope="module")
def model():
    rng = np.random.default_rng(0)
    x = io.FeatureMatrix(rng.standard_normal((60, 6)))
    y = io.FeatureMatrix(rng.standard_normal((60, 5)))
    return cca.cca_fit(x, y)


class TestTaskEmbedding:
    def test_asymmetric_search_projections(self, model):
        emb = retrieval.make_task_embedding(model, "search", "asymmetric")
        np.testing.assert_array_equal(emb.image_proj,
                                      model.sigma[:, None] * model.u.T)
        np.testing.assert_array_equal(emb.text_proj, model.v.T)

    def test_asymmetric_annotation_projections(self, model):
        emb = retrieval.make_task_embedding(model, "annotation", "asymmetric")
        np.testing.assert_array_equal(emb.image_proj, model.u.T)
        np.testing.assert_array_equal(emb.text_proj,
                                      model.sigma[:, None] * model.v.T)

    def test_symmetric_zero_is_plain_cca(self, model):
        emb = retrieval.make_task_embedding(model, "search", "symmetric",
                                            alpha=0.0)
        np.testing.assert_array_equal(emb.image_proj, model.u.T)
        np.testing.assert_array_equal(emb.text_proj, model.v.T)

    def test_sweep_endpoints_match_asymmetric(self, model):
        sweep1 = retrieval.make_task_embedding(model, "search", "sweep",
                                               alpha=1.0)
        asym_s = retrieval.make_task_embedding(model, "search", "asymmetric")
        np.testing.assert_allclose(sweep1.image_proj, asym_s.image_proj)
        np.testing.assert_allclose(sweep1.text_proj, asym_s.text_proj)
        sweep0 = retrieval.make_task_embedding(model, "annotation", "sweep",
                                               alpha=0.0)
        asym_a = retrieval.make_task_embedding(model, "annotation",
                                               "asymmetric")
        np.testing.assert_allclose(sweep0.image_proj, asym_a.image_proj)
        np.testing.assert_allclose(sweep0.text_proj, asym_a.text_proj)

    def test_sigma_power_zero_convention(self, model):
        # sigma^0 must be exactly 1 even for zero correlations
        sigma = np.array([0.9, 0.0])
        np.testing.assert_array_equal(retrieval._sigma_power(sigma, 0.0),
                                      [1.0, 1.0])
        np.testing.assert_array_equal(retrieval._sigma_power(sigma, 0.5),
                                      [np.sqrt(0.9), 0.0])

    def test_centering_uses_training_means(self, model):
        emb = retrieval.make_task_embedding(model, "search", "asymmetric")
        x = np.outer(np.ones(3), model.mean_x)  # rows equal to the mean
        np.testing.assert_allclose(emb.embed_images(x), 0.0, atol=1e-14)

    def test_invalid_alpha_rejected(self, model):
        with pytest.raises(ValueError):
            retrieval.make_task_embedding(model, "search", "symmetric",
                                          alpha=-1.0)
        with pytest.raises(ValueError):
            retrieval.make_task_embedding(model, "search", "sweep", alpha=1.5)


class TestRank:
    def test_scaled_copy_ranks_first_under_cosine(self):
        rng = np.random.default_rng(1)
        items = rng.standard_normal((5, 4))
        queries = (7.0 * items[3])[None, :]
        order = retrieval.rank(queries, items, "cosine")
        assert order[0, 0] == 3

    def test_global_item_scaling_invariance(self):
        rng = np.random.default_rng(2)
        items = rng.standard_normal((8, 4))
        queries = rng.standard_normal((3, 4))
        base = retrieval.rank(queries, items, "cosine")
        scaled = retrieval.rank(queries, 0.37 * items, "cosine")
        np.testing.assert_array_equal(base, scaled)

    def test_matches_brute_force_loops(self):
        rng = np.random.default_rng(3)
        items = rng.standard_normal((5, 3))
        queries = rng.standard_normal((2, 3))
        order = retrieval.rank(queries, items, "cosine")
        expected = rank_by_cosine_loops(queries, items)
        np.testing.assert_array_equal(order, expected)

    def test_tie_break_ascending_index(self):
        items = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        queries = np.array([[2.0, 0.0]])
        order = retrieval.rank(queries, items, "cosine")
        np.testing.assert_array_equal(order[0], [0, 2, 1])

    def test_l2_ordering(self):
        items = np.array([[0.0], [2.0], [4.0]])
        queries = np.array([[2.5]])
        order = retrieval.rank(queries, items, "l2")
        np.testing.assert_array_equal(order[0], [1, 2, 0])

    def test_zero_norm_reported_with_index(self):
        items = np.array([[1.0, 0.0], [0.0, 0.0]])
        queries = np.array([[1.0, 1.0]])
        with pytest.raises(ValueError, match="item vector at index 1"):
            retrieval.rank(queries, items, "cosine")

    def test_rows_are_permutations(self):
        rng = np.random.default_rng(4)
        order = retrieval.rank(rng.standard_normal((6, 3)),
                               rng.standard_normal((9, 3)))
        for row in order:
            assert sorted(row) == list(range(9))


class TestEvaluate:
    def test_all_first(self):
        ranked = np.tile(np.arange(4), (4, 1))
        gt = [[0], [0], [0], [0]]
        report = retrieval.evaluate(ranked, gt)
        assert report.recalls == {1: 100.0, 5: 100.0, 10: 100.0}
        assert report.median_rank == 1.0

    def test_hand_computed_ranks(self):
        # best ground-truth ranks 1, 2, 7, 11
        n_items = 12
        ranked = np.tile(np.arange(n_items), (4, 1))
        gt = [[0], [1], [6], [10]]
        report = retrieval.evaluate(ranked, gt)
        assert report.recalls[1] == 25.0
        assert report.recalls[5] == 50.0
        assert report.recalls[10] == 75.0
        assert report.median_rank == 4.5

    def test_annotation_style_set_of_five(self):
        # five ground-truth captions, best at rank 3
        ranked = np.arange(20)[None, :]
        gt = [[2, 7, 11, 15, 19]]
        report = retrieval.evaluate(ranked, gt)
        assert report.recalls[1] == 0.0
        assert report.recalls[5] == 100.0
        assert report.recalls[10] == 100.0
        assert report.median_rank == 3.0

    def test_monotone_recall(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n_items = int(rng.integers(3, 30))
            n_queries = int(rng.integers(1, 10))
            ranked = np.stack([rng.permutation(n_items)
                               for _ in range(n_queries)])
            gt = [
                list(rng.choice(n_items, size=rng.integers(1, 4),
                                replace=False))
                for _ in range(n_queries)
            ]
            rep = retrieval.evaluate(ranked, gt)
            assert rep.recalls[1] <= rep.recalls[5] <= rep.recalls[10]

    def test_depends_only_on_order(self):
        ranked = np.array([[2, 0, 1]])
        gt = [[0]]
        assert retrieval.evaluate(ranked, gt).recalls[1] == 0.0
        assert retrieval.evaluate(ranked, gt).median_rank == 2.0

    def test_out_of_range_ground_truth(self):
        ranked = np.array([[0, 1]])
        with pytest.raises(ValueError, match="out of range"):
            retrieval.evaluate(ranked, [[5]])

    def test_empty_ground_truth(self):
        ranked = np.array([[0, 1]])
        with pytest.raises(ValueError, match="no ground-truth"):
            retrieval.evaluate(ranked, [[]])


class TestProtocolOracle:
    """Full pipeline vs an independently written evaluator, exactly."""

    def test_six_images_thirty_captions(self):
        rng = np.random.default_rng(99)
        cfg = synthetic.LatentModelConfig(
            n_train=80, n_val=6, n_test=6, latent_dim=3,
            image_dim=10, text_dim=8, noise_x=0.4, noise_y=0.4, seed=17,
        )
        data = synthetic.generate_caption_like(cfg, 5)
        train_x, train_y = data.paired_training_views()
        model = cca.cca_fit(train_x, train_y)
        images, captions, pair_index = data.split_views("test")
        assert images.rows == 6 and captions.rows == 30

        search, annotation = retrieval.evaluate_bidirectional(
            model, images, captions, pair_index)

        # independent path: loops all the way down
        emb_s = retrieval.make_task_embedding(model, "search", "asymmetric")
        order = rank_by_cosine_loops(emb_s.embed_texts(captions),
                                     emb_s.embed_images(images))
        gt = [[int(i)] for i in pair_index]
        recalls, median = recall_and_median_loops(order, gt)
        assert search.recalls == recalls
        assert search.median_rank == median

        emb_a = retrieval.make_task_embedding(model, "annotation",
                                              "asymmetric")
        order = rank_by_cosine_loops(emb_a.embed_images(images),
                                     emb_a.embed_texts(captions))
        gt = [
            [j for j in range(captions.rows) if pair_index[j] == i]
            for i in range(images.rows)
        ]
        recalls, median = recall_and_median_loops(order, gt)
        assert annotation.recalls == recalls
        assert annotation.median_rank == median


class TestAlphaSweep:
    def test_endpoints_equal_asymmetric_evaluations(self):
        cfg = synthetic.LatentModelConfig(
            n_train=150, n_val=40, n_test=40, latent_dim=4,
            image_dim=16, text_dim=12, noise_x=0.5, noise_y=0.5, seed=2,
        )
        data = synthetic.generate_caption_like(cfg, 3)
        train_x, train_y = data.paired_training_views()
        model = cca.cca_fit(train_x, train_y)
        images, captions, pairs = data.split_views("val")
        curve = retrieval.alpha_sweep(model, images, captions, [0.0, 1.0],
                                      pair_index=pairs)
        search, annotation = retrieval.evaluate_bidirectional(
            model, images, captions, pairs, ks=(10,))
        assert curve.search_scores[1] == search.recalls[10]
        assert curve.annotation_scores[0] == annotation.recalls[10]

    def test_single_point_shares_embeddings(self, model):
        rng = np.random.default_rng(6)
        images = io.FeatureMatrix(rng.standard_normal((7, model.m_x)))
        captions = io.FeatureMatrix(rng.standard_normal((7, model.m_y)))
        curve = retrieval.alpha_sweep(model, images, captions, [0.5])
        assert curve.alphas.shape == (1,)
        emb = retrieval.make_task_embedding(model, "search", "sweep",
                                            alpha=0.5)
        half = np.sqrt(model.sigma)
        np.testing.assert_allclose(emb.image_proj, half[:, None] * model.u.T)
        np.testing.assert_allclose(emb.text_proj, half[:, None] * model.v.T)

    def test_grid_outside_unit_interval_rejected(self, model):
        rng = np.random.default_rng(7)
        images = io.FeatureMatrix(rng.standard_normal((4, model.m_x)))
        captions = io.FeatureMatrix(rng.standard_normal((4, model.m_y)))
        with pytest.raises(ValueError):
            retrieval.alpha_sweep(model, images, captions, [0.0, 1.2])


class TestTsvFormats:
    def test_report_columns(self):
        rep = retrieval.EvalReport(task="search",
                                   recalls={1: 25.0, 5: 50.0, 10: 75.0},
                                   median_rank=4.5, n_queries=4, n_items=12)
        text = retrieval.reports_to_tsv([rep])
        lines = text.strip().split("\n")
        assert lines[0] == "task\tr1\tr5\tr10\tmedr\tn_queries\tn_items"
        assert lines[1] == "search\t25\t50\t75\t4.5\t4\t12"

    def test_sweep_columns(self):
        curve = retrieval.SweepCurve(np.array([0.0, 1.0]),
                                     np.array([10.0, 20.0]),
                                     np.array([30.0, 40.0]), k=10)
        lines = retrieval.sweep_to_tsv(curve).strip().split("\n")
        assert lines[0] == "alpha\tr10_search\tr10_annotation"
        assert lines[1] == "0\t10\t30"
