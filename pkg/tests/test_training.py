import numpy as np
import pytest

from chartag.data import Sentence
from chartag.encoders import EncoderConfig
from chartag.model import ModelConfig
from chartag.tensor import ParamStore
from chartag.training import (
    TrainConfig,
    clip_gradients,
    fit,
    lr_at_epoch,
    rmsprop_update,
    train_model,
)


def rmsprop_scalar_ref(w, g, acc, lr, rho, eps):
    """Scalar oracle for one update."""
    acc = rho * acc + (1 - rho) * g * g
    return w - lr * g / np.sqrt(acc + eps), acc


class TestLrSchedule:
    def test_first_decade_constant(self):
        for epoch in range(10):
            assert lr_at_epoch(0.5, epoch) == 0.5

    def test_halves_at_ten(self):
        assert lr_at_epoch(0.5, 10) == 0.25

    def test_quarter_at_25(self):
        assert lr_at_epoch(1.0, 25) == 0.25

    @pytest.mark.parametrize("epoch", [10, 20, 30])
    def test_halving_boundaries(self, epoch):
        assert lr_at_epoch(1.0, epoch) == lr_at_epoch(1.0, epoch - 1) / 2

    def test_negative_epoch(self):
        with pytest.raises(ValueError):
            lr_at_epoch(1.0, -1)


class TestRmsprop:
    def test_zero_gradient_leaves_weights(self):
        ps = ParamStore(np.float64)
        t = ps.add("w", np.array([1.0, -2.0]))
        t.grad = np.zeros(2)
        rmsprop_update(ps, 0.1, 0.9, 1e-8)
        np.testing.assert_array_equal(t.data, [1.0, -2.0])

    def test_missing_gradient_counts_as_zero(self):
        ps = ParamStore(np.float64)
        t = ps.add("w", np.array([3.0]))
        rmsprop_update(ps, 0.1, 0.9, 1e-8)
        np.testing.assert_array_equal(t.data, [3.0])

    def test_scalar_oracle(self):
        ps = ParamStore(np.float64)
        t = ps.add("w", np.array([1.0]))
        t.grad = np.array([1.0])
        rmsprop_update(ps, 0.1, 0.9, 1e-8)
        assert ps.rms["w"][0] == pytest.approx(0.1, rel=1e-12)
        assert t.data[0] == pytest.approx(1.0 - 0.1 / np.sqrt(0.1 + 1e-8), rel=1e-9)
        assert t.data[0] == pytest.approx(0.68377, abs=5e-6)

    def test_second_identical_step_smaller(self):
        ps = ParamStore(np.float64)
        t = ps.add("w", np.array([0.0]))
        t.grad = np.array([1.0])
        rmsprop_update(ps, 0.1, 0.9, 1e-8)
        first = abs(t.data[0])
        prev = t.data[0]
        t.grad = np.array([1.0])
        rmsprop_update(ps, 0.1, 0.9, 1e-8)
        second = abs(t.data[0] - prev)
        assert second < first

    def test_matches_oracle_on_random_problems(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            w = rng.normal()
            g = rng.normal()
            acc0 = abs(rng.normal())
            lr, rho, eps = 0.05, 0.9, 1e-8
            ps = ParamStore(np.float64)
            t = ps.add("w", np.array([w]))
            ps.rms["w"][0] = acc0
            t.grad = np.array([g])
            rmsprop_update(ps, lr, rho, eps)
            want_w, want_acc = rmsprop_scalar_ref(w, g, acc0, lr, rho, eps)
            assert t.data[0] == pytest.approx(want_w, rel=1e-6, abs=1e-12)
            assert ps.rms["w"][0] == pytest.approx(want_acc, rel=1e-12)

    def test_gradients_zeroed_afterwards(self):
        ps = ParamStore(np.float64)
        t = ps.add("w", np.array([1.0]))
        t.grad = np.array([1.0])
        rmsprop_update(ps, 0.1, 0.9, 1e-8)
        assert t.grad is None

    def test_frozen_params_untouched(self):
        ps = ParamStore(np.float64)
        frozen = ps.add("f", np.array([5.0]), trainable=False)
        rmsprop_update(ps, 0.1, 0.9, 1e-8)
        np.testing.assert_array_equal(frozen.data, [5.0])


class TestClipGradients:
    def test_norm_reported_and_scaled(self):
        ps = ParamStore(np.float64)
        a = ps.add("a", np.zeros(2))
        a.grad = np.array([3.0, 4.0])
        norm = clip_gradients(ps, 1.0)
        assert norm == pytest.approx(5.0)
        np.testing.assert_allclose(a.grad, [0.6, 0.8])

    def test_below_threshold_unchanged(self):
        ps = ParamStore(np.float64)
        a = ps.add("a", np.zeros(2))
        a.grad = np.array([0.3, 0.4])
        clip_gradients(ps, 5.0)
        np.testing.assert_allclose(a.grad, [0.3, 0.4])


def toy_sentences(n, seed=0):
    rng = np.random.default_rng(seed)
    vocab = [("koru", "A"), ("patu", "B"), ("somi", "C"), ("remu", "A")]
    sents = []
    for _ in range(n):
        picks = [vocab[int(rng.integers(len(vocab)))]
                 for _ in range(int(rng.integers(2, 5)))]
        sents.append(Sentence([w for w, _ in picks], [t for _, t in picks]))
    return sents


def tiny_configs(seed=0, **train_kw):
    model = ModelConfig(
        encoder=EncoderConfig(kind="cnn", char_dim=8, conv_filters=8,
                              conv_layers=1, conv_width=3),
        context_layers=1, context_hidden=8, tagset="pos", keep_prob=1.0)
    defaults = dict(base_lr=5e-3, batch_size=8, max_epochs=6, patience=50,
                    seed=seed)
    defaults.update(train_kw)
    return model, TrainConfig(**defaults)


class TestFit:
    def test_patience_zero_stops_one_epoch_after_plateau(self):
        sents = toy_sentences(12)
        model_cfg, train_cfg = tiny_configs(base_lr=1e-9, max_epochs=30,
                                            patience=0)
        _, result = train_model(model_cfg, train_cfg, sents, sents)
        # epoch 0 sets the best; epoch 1 fails to improve (lr ~ 0) and stops
        assert result.n_epochs == 2

    def test_metrics_log_deterministic(self, tmp_path):
        sents = toy_sentences(16)
        runs = []
        for _ in range(2):
            model_cfg, train_cfg = tiny_configs(seed=3, max_epochs=3)
            _, result = train_model(model_cfg, train_cfg, sents, sents)
            runs.append([(m.epoch, m.train_loss, m.dev_error)
                         for m in result.history])
        assert runs[0] == runs[1]

    def test_overfits_small_corpus(self):
        sents = toy_sentences(20, seed=1)
        model_cfg, train_cfg = tiny_configs(seed=1, max_epochs=40)
        _, result = train_model(model_cfg, train_cfg, sents, sents,
                                target_dev_error=0.5)
        assert result.best_dev_error < 0.5

    def test_requires_dev(self):
        sents = toy_sentences(4)
        model_cfg, train_cfg = tiny_configs()
        from chartag.data import build_vocabularies
        from chartag.model import TaggerNetwork
        vocabs = build_vocabularies(sents, "pos")
        network = TaggerNetwork(model_cfg, vocabs, np.random.default_rng(0))
        with pytest.raises(ValueError):
            fit(network, sents, [], train_cfg, np.random.default_rng(0))

    def test_metrics_csv_format(self, tmp_path):
        sents = toy_sentences(10)
        model_cfg, train_cfg = tiny_configs(max_epochs=2)
        log = tmp_path / "metrics.csv"
        train_model(model_cfg, train_cfg, sents, sents, log_path=str(log))
        lines = log.read_text().splitlines()
        comments = [l for l in lines if l.startswith("# ")]
        assert any(l.startswith("# encoder.kind=") for l in comments)
        assert any(l.startswith("# train.seed=") for l in comments)
        body = [l for l in lines if not l.startswith("#")]
        assert body[0] == "epoch,train_loss,dev_error,seconds"
        assert len(body) == 3

    def test_best_weights_restored(self):
        # with a huge lr the model can get worse after its best epoch; the
        # returned network must still score at best_dev_error
        from chartag.training import evaluate_network
        sents = toy_sentences(16, seed=2)
        model_cfg, train_cfg = tiny_configs(seed=2, base_lr=0.5, max_epochs=8)
        network, result = train_model(model_cfg, train_cfg, sents, sents)
        final = evaluate_network(network, sents).error_rate
        assert final == pytest.approx(result.best_dev_error, abs=1e-9)


class TestGradcheckModel:
    def test_excludes_frozen_pretrained_rows(self):
        from chartag.data import EmbeddingTable
        from chartag.training import gradcheck_model
        # frozen embeddings are not in the checked set at all
        rng = np.random.default_rng(4)
        table = EmbeddingTable(["koru", "patu"],
                               rng.normal(size=(2, 3)).astype(np.float32), "fixed")
        model = ModelConfig(
            encoder=EncoderConfig(kind="cnn", char_dim=4, conv_filters=3,
                                  conv_layers=1, conv_width=2,
                                  pretrained_mode="fixed", pretrained_dim=3),
            context_layers=1, context_hidden=3, tagset="pos", keep_prob=1.0)
        sents = toy_sentences(2, seed=5)

        import chartag.training as training_mod
        from chartag.data import build_vocabularies, prepare_batch
        from chartag.model import TaggerNetwork
        from chartag.tensor import grad_check
        vocabs = build_vocabularies(sents, "pos")
        network = TaggerNetwork(model, vocabs, np.random.default_rng(0),
                                dtype=np.float64, pretrained=table)
        batch = prepare_batch(sents, vocabs, pretrained=table)
        _, details = grad_check(
            lambda p: network.forward_batch(batch).loss, network.params,
            details=True)
        assert "enc.pretrained" not in details
