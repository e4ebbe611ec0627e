import numpy as np
import pytest
from scipy.special import softmax

from src.errors import (DivergenceError, EmbeddingLookupError, EmptyCache, FormatError, KindError, RangeError,
                        ShapeError, TaxonomyError)
from src.models import ClassTaxonomy, Image
from src.skills.classify_skill import (ClassEmbeddings, ClassifySkill, Embedding, FewShotCache, LinearProbe,
                                       PrecomputedExtractor, TrainConfig, loss_and_gradients)

from .helpers import scores, solid


@pytest.fixture
def classify():
    return ClassifySkill()


def _random_embedding(rng, d):
    return Embedding.normalized(rng.standard_normal(d))


def _random_cache(rng, n, d, k, alpha=1.0, beta=5.5):
    keys = [_random_embedding(rng, d) for _ in range(n)]
    return FewShotCache.build(keys, rng.integers(0, k, size=n).tolist(), k, alpha=alpha, beta=beta)


def _relative_error(analytic, numeric):
    scale = max(float(np.max(np.abs(analytic) + np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric))) / scale


class TestEmbed:
    def test_deterministic_and_unit_norm(self, classify, rng):
        img = Image(pixels=rng.integers(0, 256, size=(40, 30, 3), dtype=np.uint8))
        a, b = classify.embed(img), classify.embed(img)
        np.testing.assert_array_equal(a.values, b.values)
        assert a.dim == 88
        assert abs(np.linalg.norm(a.values) - 1.0) < 1e-6

    def test_red_and_blue_differ(self, classify):
        red = classify.embed(solid(32, 32, (255, 0, 0)))
        blue = classify.embed(solid(32, 32, (0, 0, 255)))
        assert float(red.values @ blue.values) < 0.9

    def test_tiny_image(self, classify):
        e = classify.embed(solid(1, 1, (10, 200, 30)))
        assert abs(np.linalg.norm(e.values) - 1.0) < 1e-6

    def test_precomputed_lookup(self, tmp_path):
        path = tmp_path / "emb.csv"
        path.write_text("0,3,4\n7,0,2\n")
        extractor = PrecomputedExtractor(path)
        assert extractor.dim == 2
        np.testing.assert_allclose(extractor.embed(solid(1, 1, (0, 0, 0)), "0").values, [0.6, 0.8])
        with pytest.raises(EmbeddingLookupError):
            extractor.embed(solid(1, 1, (0, 0, 0)), "3")
        with pytest.raises(LookupError):
            extractor.embed(solid(1, 1, (0, 0, 0)), None)

    def test_precomputed_bad_row(self, tmp_path):
        path = tmp_path / "emb.csv"
        path.write_text("0,1,x\n")
        with pytest.raises(FormatError):
            PrecomputedExtractor(path)


class TestZeroShot:
    def test_self_similarity_dominates(self, classify):
        ce = ClassEmbeddings(matrix=np.eye(7), temperature=0.01)
        s = classify.zero_shot_scores(Embedding(values=np.eye(7)[4]), ce)
        assert s.top1() == 4
        assert s.probs[4] > 0.99

    def test_identical_classes_give_uniform(self, classify, rng):
        row = _random_embedding(rng, 16).values
        ce = ClassEmbeddings(matrix=np.tile(row, (7, 1)))
        s = classify.zero_shot_scores(_random_embedding(rng, 16), ce)
        np.testing.assert_allclose(s.probs, np.full(7, 1 / 7), atol=1e-12)

    def test_matches_softmax_of_cosines(self, classify, rng):
        for _ in range(20):
            ce = ClassEmbeddings.random(7, 16, seed=int(rng.integers(1000)))
            e = _random_embedding(rng, 16)
            logits = np.array([float(np.dot(row, e.values)) for row in ce.matrix]) / 0.01
            expected = np.exp(logits - logits.max())
            expected /= expected.sum()
            s = classify.zero_shot_scores(e, ce)
            np.testing.assert_allclose(s.probs, expected, atol=1e-12)
            assert abs(s.probs.sum() - 1) < 1e-9
            assert np.all(s.probs > 0)

    def test_argmax_invariant_to_temperature(self, classify, rng):
        ce = ClassEmbeddings.random(7, 16, seed=5)
        e = _random_embedding(rng, 16)
        hot = classify.zero_shot_scores(e, ce)
        cold = classify.zero_shot_scores(e, ce.model_copy(update={"temperature": 5.0}))
        assert hot.top1() == cold.top1()

    def test_dimension_mismatch(self, classify, rng):
        with pytest.raises(ShapeError):
            classify.zero_shot_scores(_random_embedding(rng, 8), ClassEmbeddings.random(7, 16, seed=0))

    def test_load_orders_by_taxonomy(self, tmp_path):
        taxonomy = ClassTaxonomy(labels=("a", "b"))
        path = tmp_path / "ce.csv"
        path.write_text("b,0,2\na,3,0\n")
        ce = ClassEmbeddings.load(path, taxonomy)
        np.testing.assert_allclose(ce.matrix, [[1, 0], [0, 1]])

    def test_load_missing_class(self, tmp_path):
        path = tmp_path / "ce.csv"
        path.write_text("a,1,0\n")
        with pytest.raises(TaxonomyError):
            ClassEmbeddings.load(path, ClassTaxonomy(labels=("a", "b")))


class TestAdapter:
    def test_alpha_zero_reduces_to_zero_shot(self, classify, rng):
        for _ in range(1000):
            ce = ClassEmbeddings.random(7, 16, seed=int(rng.integers(2**31)))
            e = _random_embedding(rng, 16)
            cache = _random_cache(rng, 16, 16, 7, alpha=0.0)
            np.testing.assert_allclose(classify.adapter_scores(e, cache, ce).probs,
                                       classify.zero_shot_scores(e, ce).probs, rtol=0, atol=1e-12)

    def test_cached_query_wins(self, classify, rng):
        for _ in range(1000):
            ce = ClassEmbeddings.random(7, 64, seed=int(rng.integers(2**31)), temperature=1.0)
            e = _random_embedding(rng, 64)
            label = int(rng.integers(7))
            others = [_random_embedding(rng, 64) for _ in range(15)]
            cache = FewShotCache.build([e] + others, [label] + rng.integers(0, 7, size=15).tolist(), 7,
                                       alpha=10.0)
            assert classify.adapter_scores(e, cache, ce).top1() == label

    def test_single_entry_cache(self, classify):
        ce = ClassEmbeddings(matrix=np.eye(3), temperature=1.0)
        e = Embedding(values=np.eye(3)[0])
        cache = FewShotCache.build([e], [2], 3, alpha=50.0)
        assert classify.adapter_scores(e, cache, ce).top1() == 2

    def test_matches_dense_evaluation(self, classify, rng):
        for _ in range(20):
            ce = ClassEmbeddings.random(7, 16, seed=int(rng.integers(1000)))
            e = _random_embedding(rng, 16)
            cache = _random_cache(rng, 16, 16, 7, alpha=float(rng.uniform(0.1, 3)), beta=float(rng.uniform(1, 9)))
            affinity = np.array([np.exp(-cache.beta * (1 - float(np.dot(k, e.values)))) for k in cache.keys])
            logits = cache.alpha * affinity @ cache.values + ce.matrix @ e.values / ce.temperature
            np.testing.assert_allclose(classify.adapter_scores(e, cache, ce).probs, softmax(logits), atol=1e-10)

    def test_affinity_range(self, classify, rng):
        e = _random_embedding(rng, 16)
        cache = FewShotCache.build([e] + [_random_embedding(rng, 16) for _ in range(9)], list(range(7)) + [0, 1, 2], 7)
        affinity = classify.affinities(e, cache)
        assert np.all((affinity > 0) & (affinity <= 1 + 1e-12))
        assert affinity[0] == pytest.approx(1.0)
        assert np.all(affinity[1:] < 1)

    def test_empty_cache(self, classify, rng):
        cache = FewShotCache.build([], [], 7)
        with pytest.raises(EmptyCache):
            classify.adapter_scores(_random_embedding(rng, 16), cache, ClassEmbeddings.random(7, 16, seed=0))

    def test_cache_file_round_trip(self, tmp_path, rng):
        cache = _random_cache(rng, 5, 16, 7, alpha=2.5, beta=4.0)
        cache.save(tmp_path / "c.bin")
        loaded = FewShotCache.load(tmp_path / "c.bin")
        assert (loaded.alpha, loaded.beta, loaded.size) == (2.5, 4.0, 5)
        np.testing.assert_allclose(loaded.keys, cache.keys, atol=1e-6)
        np.testing.assert_array_equal(loaded.values, cache.values)

    def test_truncated_cache_file(self, tmp_path, rng):
        path = tmp_path / "c.bin"
        _random_cache(rng, 5, 16, 7).save(path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatError):
            FewShotCache.load(path)


class TestFuse:
    def test_idempotent(self, classify):
        a = scores([0.2, 0.3, 0.5])
        np.testing.assert_allclose(classify.fuse_scores(a, a).probs, a.probs, atol=1e-15)

    def test_symmetric_pair(self, classify):
        fused = classify.fuse_scores(scores([1.0, 0.0]), scores([0.0, 1.0]))
        np.testing.assert_array_equal(fused.probs, [0.5, 0.5])

    def test_commutative(self, classify, rng):
        for _ in range(50):
            a = scores(rng.dirichlet(np.ones(7)))
            b = scores(rng.dirichlet(np.ones(7)))
            np.testing.assert_array_equal(classify.fuse_scores(a, b).probs, classify.fuse_scores(b, a).probs)

    def test_multi_label_mean(self, classify):
        fused = classify.fuse_scores(scores([0.2, 1.0], "multi"), scores([0.4, 0.0], "multi"))
        assert fused.kind == "multi"
        np.testing.assert_allclose(fused.probs, [0.3, 0.5])

    def test_logit_mode(self, classify):
        a = scores([0.2, 0.8])
        np.testing.assert_allclose(classify.fuse_scores(a, a, mode="logit").probs, a.probs)
        fused = classify.fuse_scores(scores([0.9], "multi"), scores([0.1], "multi"), mode="logit")
        np.testing.assert_allclose(fused.probs, [0.5])

    def test_kind_mismatch(self, classify):
        with pytest.raises(KindError):
            classify.fuse_scores(scores([0.5, 0.5]), scores([0.5, 0.5], "multi"))

    def test_class_count_mismatch(self, classify):
        with pytest.raises(ShapeError):
            classify.fuse_scores(scores([0.5, 0.5]), scores([0.2, 0.3, 0.5]))


class TestProbe:
    def test_zero_probe(self, classify, rng):
        e = _random_embedding(rng, 8)
        single = LinearProbe(W=np.zeros((7, 8)), b=np.zeros(7))
        multi = LinearProbe(W=np.zeros((7, 8)), b=np.zeros(7), head_mode="multi")
        np.testing.assert_allclose(classify.probe_scores(e, single).probs, np.full(7, 1 / 7))
        np.testing.assert_allclose(classify.probe_scores(e, multi).probs, np.full(7, 0.5))

    def test_matches_affine_oracle(self, classify, rng):
        W, b = rng.standard_normal((7, 8)), rng.standard_normal(7)
        e = _random_embedding(rng, 8)
        z = W @ e.values + b
        np.testing.assert_allclose(classify.probe_scores(e, LinearProbe(W=W, b=b)).probs,
                                   np.exp(z) / np.exp(z).sum(), atol=1e-12)
        np.testing.assert_allclose(classify.probe_scores(e, LinearProbe(W=W, b=b, head_mode="multi")).probs,
                                   1 / (1 + np.exp(-z)), atol=1e-12)

    def test_dimension_mismatch(self, classify, rng):
        with pytest.raises(ShapeError):
            classify.probe_scores(_random_embedding(rng, 4), LinearProbe(W=np.zeros((2, 8)), b=np.zeros(2)))

    @pytest.mark.parametrize("head_mode", ["single", "multi"])
    def test_gradients_match_finite_differences(self, rng, head_mode):
        h = 1e-5
        for _ in range(100):
            n, d, k = 5, 4, 3
            X = rng.standard_normal((n, d))
            if head_mode == "single":
                Y = np.eye(k)[rng.integers(0, k, size=n)]
            else:
                Y = (rng.random((n, k)) < 0.5).astype(float)
            W, b = rng.standard_normal((k, d)), rng.standard_normal(k)
            _, gW, gb = loss_and_gradients(W, b, X, Y, head_mode)

            nW = np.zeros_like(W)
            for idx in np.ndindex(*W.shape):
                step = np.zeros_like(W)
                step[idx] = h
                plus = loss_and_gradients(W + step, b, X, Y, head_mode)[0]
                minus = loss_and_gradients(W - step, b, X, Y, head_mode)[0]
                nW[idx] = (plus - minus) / (2 * h)
            nb = np.zeros_like(b)
            for i in range(k):
                step = np.zeros_like(b)
                step[i] = h
                plus = loss_and_gradients(W, b + step, X, Y, head_mode)[0]
                minus = loss_and_gradients(W, b - step, X, Y, head_mode)[0]
                nb[i] = (plus - minus) / (2 * h)

            assert _relative_error(gW, nW) < 1e-4
            assert _relative_error(gb, nb) < 1e-4

    def test_separable_toy_reaches_full_accuracy(self, classify):
        rng = np.random.default_rng(42)
        X = np.vstack([rng.uniform([-3, -1], [-1, 1], size=(10, 2)), rng.uniform([1, -1], [3, 1], size=(10, 2))])
        y = np.array([0] * 10 + [1] * 10)
        cfg = TrainConfig(lr=0.1, momentum=0.9, weight_decay=1e-4, epochs=100, seed=3)

        first = classify.train_probe(X, y, cfg, n_classes=2)
        second = classify.train_probe(X, y, cfg, n_classes=2)

        predictions = np.argmax(X @ first.probe.W.T + first.probe.b, axis=1)
        assert np.all(predictions == y)
        assert len(first.losses) == 100
        assert all(np.isfinite(first.losses))
        np.testing.assert_array_equal(first.probe.W, second.probe.W)
        assert first.losses == second.losses

    def test_multi_label_training(self, classify):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((40, 3))
        Y = np.stack([(X[:, 0] > 0), (X[:, 1] > 0)], axis=1).astype(int)
        result = classify.train_probe(X, Y, TrainConfig(epochs=200, batch_size=8), n_classes=2, head_mode="multi")
        assert result.probe.head_mode == "multi"
        assert result.losses[-1] < result.losses[0]

    def test_zero_epochs_keeps_initialization(self, classify, rng):
        X = rng.standard_normal((6, 4))
        cfg = TrainConfig(epochs=0, seed=9)
        result = classify.train_probe(X, np.arange(6) % 3, cfg, n_classes=3)
        init = np.random.default_rng(9)
        bound = 1 / np.sqrt(4)
        np.testing.assert_array_equal(result.probe.W, init.uniform(-bound, bound, size=(3, 4)))
        np.testing.assert_array_equal(result.probe.b, init.uniform(-bound, bound, size=3))
        assert result.losses == ()

    def test_divergence(self, classify):
        X = np.array([[np.inf, 1.0], [1.0, 2.0]])
        with pytest.raises(DivergenceError) as err:
            classify.train_probe(X, np.array([0, 1]), TrainConfig(epochs=5), n_classes=2)
        assert err.value.epoch == 0

    def test_multistep_and_cosine_schedules(self):
        step = TrainConfig(lr=0.1, milestones=(2, 4), gamma=0.5)
        assert [step.lr_at(e) for e in range(5)] == pytest.approx([0.1, 0.1, 0.05, 0.05, 0.025])
        cosine = TrainConfig(lr=1.0, schedule="cosine", epochs=10, warmup_epochs=2)
        assert cosine.lr_at(0) == pytest.approx(0.5)
        assert cosine.lr_at(2) == pytest.approx(1.0)
        assert cosine.lr_at(9) < cosine.lr_at(5)

    def test_probe_file_round_trip(self, tmp_path, rng):
        probe = LinearProbe(W=rng.standard_normal((7, 5)), b=rng.standard_normal(7), head_mode="multi")
        probe.save(tmp_path / "p.bin")
        loaded = LinearProbe.load(tmp_path / "p.bin")
        assert loaded.head_mode == "multi"
        np.testing.assert_allclose(loaded.W, probe.W, rtol=1e-6)
        np.testing.assert_allclose(loaded.b, probe.b, rtol=1e-6)


class TestTopK:
    def test_top1(self, classify):
        assert classify.predict_topk(scores([0.1, 0.7, 0.2]), 1) == [1]

    def test_ties_by_index(self, classify):
        assert classify.predict_topk(scores(np.full(7, 1 / 7)), 3) == [0, 1, 2]

    def test_nesting(self, classify, rng):
        for _ in range(50):
            s = scores(rng.dirichlet(np.ones(7)))
            assert classify.predict_topk(s, 1)[0] in classify.predict_topk(s, 3)

    def test_out_of_range(self, classify):
        with pytest.raises(RangeError):
            classify.predict_topk(scores([0.5, 0.5]), 3)
        with pytest.raises(RangeError):
            classify.predict_topk(scores([0.5, 0.5]), 0)
