import numpy as np
import pytest

from chartag import layers
from chartag.tensor import ParamStore, Tensor, concat, sumall

# ---------------------------------------------------------------------------
# independent scalar/loop oracles


def sigmoid_ref(x):
    return 1.0 / (1.0 + np.exp(-x))


def affine_ref(x, w, b, act):
    out = np.empty((x.shape[0], w.shape[1]))
    for i in range(x.shape[0]):
        for j in range(w.shape[1]):
            acc = b[j]
            for k in range(x.shape[1]):
                acc += x[i, k] * w[k, j]
            out[i, j] = acc
    if act == "tanh":
        return np.tanh(out)
    if act == "relu":
        return np.maximum(out, 0.0)
    if act == "sigmoid":
        return sigmoid_ref(out)
    return out


def conv1d_ref(seq, weight, bias, act):
    """Direct sliding-window evaluation over one (T, din) sequence."""
    t_len, din = seq.shape
    width = weight.shape[0] // din
    n_out = t_len - width + 1
    out = np.empty((n_out, weight.shape[1]))
    for t in range(n_out):
        window = seq[t:t + width].reshape(-1)
        out[t] = bias + window @ weight
    if act == "tanh":
        return np.tanh(out)
    return np.maximum(out, 0.0)


def lstm_step_ref(x, h, c, w_x, w_h, b):
    """Hand-rolled gate equations for a single item."""
    hidden = h.shape[0]
    z = x @ w_x + h @ w_h + b
    i = sigmoid_ref(z[:hidden])
    f = sigmoid_ref(z[hidden:2 * hidden])
    g = np.tanh(z[2 * hidden:3 * hidden])
    o = sigmoid_ref(z[3 * hidden:])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def highway_ref(x, w_t, b_t, w_h, b_h):
    t = sigmoid_ref(x @ w_t + b_t)
    return t * np.maximum(x @ w_h + b_h, 0.0) + (1.0 - t) * x


# ---------------------------------------------------------------------------


class TestEmbed:
    def test_identity_table(self):
        out = layers.embed(Tensor(np.eye(3)), [1])
        np.testing.assert_allclose(out.data, [[0.0, 1.0, 0.0]])

    def test_last_row(self):
        rng = np.random.default_rng(0)
        table = rng.normal(size=(5, 2))
        out = layers.embed(Tensor(table), [4])
        np.testing.assert_allclose(out.data[0], table[4])

    def test_repeated_index_accumulates_gradient(self):
        table = Tensor(np.zeros((4, 2)), requires_grad=True)
        out = layers.embed(table, [2, 2, 1])
        sumall(out).backward()
        np.testing.assert_allclose(table.grad[2], [2.0, 2.0])
        np.testing.assert_allclose(table.grad[1], [1.0, 1.0])

    def test_out_of_range(self):
        with pytest.raises(IndexError):
            layers.embed(Tensor(np.eye(3)), [3])


class TestAffine:
    def test_identity(self):
        x = Tensor(np.array([[1.0, -2.0]]))
        out = layers.affine(x, Tensor(np.eye(2)), Tensor(np.zeros(2)))
        np.testing.assert_allclose(out.data, x.data)

    def test_constant_tanh(self):
        x = Tensor(np.array([[5.0, 5.0]]))
        w = Tensor(np.zeros((2, 3)))
        b = Tensor(np.array([0.5, -0.5, 2.0]))
        out = layers.affine(x, w, b, "tanh")
        np.testing.assert_allclose(out.data[0], np.tanh([0.5, -0.5, 2.0]))

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(2, 4))
        w = rng.normal(size=(4, 3))
        b = rng.normal(size=3)
        for act in (None, "tanh", "relu", "sigmoid"):
            got = layers.affine(Tensor(x), Tensor(w), Tensor(b), act).data
            np.testing.assert_allclose(got, affine_ref(x, w, b, act), rtol=1e-10)

    def test_unknown_activation(self):
        with pytest.raises(ValueError):
            layers.affine(Tensor(np.zeros((1, 2))), Tensor(np.eye(2)),
                          Tensor(np.zeros(2)), "gelu")


def _steps_from(seq):
    return [Tensor(seq[t][None, :]) for t in range(seq.shape[0])]


class TestConv1d:
    def test_width_one_identity_filters(self):
        din = 3
        weight = Tensor(np.eye(din))
        bias = Tensor(np.zeros(din))
        rng = np.random.default_rng(2)
        seq = rng.normal(size=(4, din))
        out = layers.conv1d(_steps_from(seq), weight, bias, "none")
        got = np.vstack([o.data for o in out])
        np.testing.assert_allclose(got, seq)

    def test_minimum_length_output(self):
        # T equal to the width forces a single output position
        rng = np.random.default_rng(3)
        seq = rng.normal(size=(5, 2))
        weight = Tensor(rng.normal(size=(10, 3)))
        out = layers.conv1d(_steps_from(seq), weight, Tensor(np.zeros(3)), "tanh")
        assert len(out) == 1

    def test_too_short_sequence_raises(self):
        rng = np.random.default_rng(4)
        weight = Tensor(rng.normal(size=(6, 2)))
        with pytest.raises(ValueError):
            layers.conv1d(_steps_from(rng.normal(size=(2, 2))), weight,
                          Tensor(np.zeros(2)), "relu")

    def test_matches_sliding_window_oracle(self):
        rng = np.random.default_rng(5)
        seq = rng.normal(size=(7, 4))
        weight = rng.normal(size=(3 * 4, 2))
        bias = rng.normal(size=2)
        out = layers.conv1d(_steps_from(seq), Tensor(weight), Tensor(bias), "relu")
        got = np.vstack([o.data for o in out])
        np.testing.assert_allclose(got, conv1d_ref(seq, weight, bias, "relu"),
                                   rtol=1e-10)


class TestMaxPoolOverTime:
    def test_single_step_is_identity(self):
        x = np.array([[1.0, -2.0, 3.0]])
        out = layers.max_pool_over_time([Tensor(x)])
        np.testing.assert_allclose(out.data, x)

    def test_direct_max(self):
        steps = [Tensor(np.array([[1.0, 5.0]])), Tensor(np.array([[3.0, 2.0]]))]
        out = layers.max_pool_over_time(steps)
        np.testing.assert_allclose(out.data, [[3.0, 5.0]])

    def test_tie_gradient_goes_to_first_step(self):
        a = Tensor(np.array([[2.0, 2.0]]), requires_grad=True)
        b = Tensor(np.array([[2.0, 2.0]]), requires_grad=True)
        sumall(layers.max_pool_over_time([a, b])).backward()
        np.testing.assert_allclose(a.grad, 1.0)
        np.testing.assert_allclose(b.grad, 0.0)

    def test_empty_sequence_raises(self):
        with pytest.raises(ValueError):
            layers.max_pool_over_time([])

    def test_n_valid_restricts_pool(self):
        steps = [Tensor(np.array([[1.0], [1.0]])),
                 Tensor(np.array([[9.0], [2.0]]))]
        out = layers.max_pool_over_time(steps, n_valid=np.array([1, 2]))
        np.testing.assert_allclose(out.data, [[1.0], [2.0]])

    def test_masked_positions_get_no_gradient(self):
        a = Tensor(np.array([[1.0], [1.0]]), requires_grad=True)
        b = Tensor(np.array([[9.0], [2.0]]), requires_grad=True)
        sumall(layers.max_pool_over_time([a, b], n_valid=np.array([1, 2]))).backward()
        np.testing.assert_allclose(a.grad, [[1.0], [0.0]])
        np.testing.assert_allclose(b.grad, [[0.0], [1.0]])


class TestLstmStep:
    def _weights(self, rng, din, hidden):
        return (Tensor(rng.normal(size=(din, 4 * hidden))),
                Tensor(rng.normal(size=(hidden, 4 * hidden))),
                Tensor(rng.normal(size=4 * hidden)))

    def test_zero_weights_zero_state(self):
        din, hidden = 3, 2
        x = Tensor(np.ones((1, din)))
        h = Tensor(np.zeros((1, hidden)))
        c = Tensor(np.zeros((1, hidden)))
        zeros = (Tensor(np.zeros((din, 4 * hidden))),
                 Tensor(np.zeros((hidden, 4 * hidden))),
                 Tensor(np.zeros(4 * hidden)))
        h2, c2 = layers.lstm_step(x, h, c, *zeros)
        np.testing.assert_allclose(h2.data, 0.0)
        np.testing.assert_allclose(c2.data, 0.0)

    def test_saturated_forget_gate_preserves_cell(self):
        rng = np.random.default_rng(6)
        din, hidden = 2, 3
        w_x = np.zeros((din, 4 * hidden))
        w_h = np.zeros((hidden, 4 * hidden))
        b = np.zeros(4 * hidden)
        b[:hidden] = -50.0          # input gate ~ 0
        b[hidden:2 * hidden] = 50.0  # forget gate ~ 1
        c0 = rng.normal(size=(1, hidden))
        _, c2 = layers.lstm_step(Tensor(rng.normal(size=(1, din))),
                                 Tensor(np.zeros((1, hidden))), Tensor(c0),
                                 Tensor(w_x), Tensor(w_h), Tensor(b))
        np.testing.assert_allclose(c2.data, c0, atol=1e-12)

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(7)
        din, hidden = 3, 2
        w_x, w_h, b = self._weights(rng, din, hidden)
        x = rng.normal(size=din)
        h = rng.normal(size=hidden)
        c = rng.normal(size=hidden)
        h2, c2 = layers.lstm_step(Tensor(x[None, :]), Tensor(h[None, :]),
                                  Tensor(c[None, :]), w_x, w_h, b)
        want_h, want_c = lstm_step_ref(x, h, c, w_x.data, w_h.data, b.data)
        np.testing.assert_allclose(h2.data[0], want_h, rtol=1e-10)
        np.testing.assert_allclose(c2.data[0], want_c, rtol=1e-10)

    def test_sequence_equals_composed_steps(self):
        rng = np.random.default_rng(8)
        din, hidden, t_len = 2, 3, 5
        w_x, w_h, b = self._weights(rng, din, hidden)
        seq = rng.normal(size=(t_len, din))
        outs = layers.run_lstm(_steps_from(seq), w_x, w_h, b)
        h = np.zeros(hidden)
        c = np.zeros(hidden)
        for t in range(t_len):
            h, c = lstm_step_ref(seq[t], h, c, w_x.data, w_h.data, b.data)
            np.testing.assert_allclose(outs[t].data[0], h, rtol=1e-9)


class TestHighway:
    def _params(self, rng, d):
        return (Tensor(rng.normal(size=(d, d))), Tensor(rng.normal(size=d)),
                Tensor(rng.normal(size=(d, d))), Tensor(rng.normal(size=d)))

    def test_pure_carry_limit(self):
        rng = np.random.default_rng(9)
        d = 4
        w_t, _, w_h, b_h = self._params(rng, d)
        b_t = Tensor(np.full(d, -60.0))
        x = rng.normal(size=(2, d))
        out = layers.highway(Tensor(x), mul_zero(w_t), b_t, w_h, b_h)
        np.testing.assert_allclose(out.data, x, atol=1e-12)

    def test_pure_transform_limit(self):
        rng = np.random.default_rng(10)
        d = 4
        _, _, w_h, b_h = self._params(rng, d)
        b_t = Tensor(np.full(d, 60.0))
        x = rng.normal(size=(2, d))
        out = layers.highway(Tensor(x), Tensor(np.zeros((d, d))), b_t, w_h, b_h)
        want = np.maximum(x @ w_h.data + b_h.data, 0.0)
        np.testing.assert_allclose(out.data, want, atol=1e-12)

    def test_matches_formula_oracle(self):
        rng = np.random.default_rng(11)
        d = 4
        w_t, b_t, w_h, b_h = self._params(rng, d)
        x = rng.normal(size=(3, d))
        out = layers.highway(Tensor(x), w_t, b_t, w_h, b_h)
        np.testing.assert_allclose(
            out.data, highway_ref(x, w_t.data, b_t.data, w_h.data, b_h.data),
            rtol=1e-10)

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            layers.highway(Tensor(np.zeros((1, 3))), Tensor(np.zeros((3, 2))),
                           Tensor(np.zeros(2)), Tensor(np.zeros((3, 3))),
                           Tensor(np.zeros(3)))


def mul_zero(t):
    return Tensor(np.zeros_like(t.data))


class TestDropout:
    def test_keep_prob_one_is_identity(self):
        x = Tensor(np.ones((3, 3)))
        rng = np.random.default_rng(0)
        assert layers.dropout(x, 1.0, True, rng) is x
        assert layers.dropout(x, 1.0, False, rng) is x

    def test_eval_mode_is_identity(self):
        x = Tensor(np.ones((3, 3)))
        assert layers.dropout(x, 0.3, False) is x

    def test_invalid_keep_prob(self):
        for bad in (0.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                layers.dropout(Tensor(np.ones(2)), bad, True,
                               np.random.default_rng(0))

    def test_inverted_scaling_mean(self):
        # Monte-Carlo: mean of the mask applied to ones should be ~1
        rng = np.random.default_rng(12)
        keep = 0.7
        n = 100_000
        out = layers.dropout(Tensor(np.ones((1, n))), keep, True, rng)
        mean = out.data.mean()
        sigma = np.sqrt((1.0 - keep) / keep / n)
        assert abs(mean - 1.0) < 3 * sigma

    def test_values_are_zero_or_scaled(self):
        rng = np.random.default_rng(13)
        out = layers.dropout(Tensor(np.ones((4, 4))), 0.5, True, rng)
        assert set(np.unique(out.data)) <= {0.0, 2.0}


class TestGradChecks:
    """Every layer's backward against central differences (64-bit)."""

    def _check(self, build, n_params, seed=0):
        from chartag.tensor import grad_check
        rng = np.random.default_rng(seed)
        ps = ParamStore(np.float64)
        f = build(rng, ps)
        assert len(ps) == n_params
        assert grad_check(f, ps, eps=1e-4) < 1e-4

    def test_affine(self):
        def build(rng, ps):
            w = ps.add("w", rng.normal(size=(4, 3)))
            b = ps.add("b", rng.normal(size=3))
            x = Tensor(rng.normal(size=(2, 4)))
            return lambda p: sumall(layers.affine(x, w, b, "tanh"))
        self._check(build, 2)

    def test_conv_and_pool(self):
        def build(rng, ps):
            w = ps.add("w", rng.normal(size=(6, 3)) * 0.5)
            b = ps.add("b", rng.normal(size=3))
            steps = [Tensor(rng.normal(size=(2, 2))) for _ in range(5)]

            def f(p):
                out = layers.conv1d(steps, w, b, "tanh")
                return sumall(layers.max_pool_over_time(out, n_valid=np.array([2, 3])))
            return f
        self._check(build, 2)

    def test_lstm_masked(self):
        def build(rng, ps):
            w_x = ps.add("w_x", rng.normal(size=(2, 12)) * 0.5)
            w_h = ps.add("w_h", rng.normal(size=(3, 12)) * 0.5)
            b = ps.add("b", rng.normal(size=12) * 0.5)
            steps = [Tensor(rng.normal(size=(2, 2))) for _ in range(4)]
            masks = np.array([[1, 1], [1, 1], [0, 1], [0, 1]], dtype=np.float64)

            def f(p):
                outs = layers.run_lstm(steps, w_x, w_h, b, step_masks=masks)
                return sumall(concat(outs, axis=1))
            return f
        self._check(build, 3)

    def test_highway(self):
        def build(rng, ps):
            w_t = ps.add("w_t", rng.normal(size=(3, 3)))
            b_t = ps.add("b_t", rng.normal(size=3))
            w_h = ps.add("w_h", rng.normal(size=(3, 3)))
            b_h = ps.add("b_h", rng.normal(size=3))
            x = Tensor(rng.normal(size=(2, 3)))
            return lambda p: sumall(layers.highway(x, w_t, b_t, w_h, b_h))
        self._check(build, 4)

    def test_embedding(self):
        def build(rng, ps):
            table = ps.add("t", rng.normal(size=(5, 3)))
            return lambda p: sumall(tanh_of(layers.embed(table, [0, 2, 2, 4])))
        self._check(build, 1)


def tanh_of(t):
    from chartag.tensor import tanh
    return tanh(t)
