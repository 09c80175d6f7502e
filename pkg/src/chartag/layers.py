"""Neural building blocks: lookup, affine, temporal convolution, max pool
over time, LSTM, highway and dropout.

All ops are expressed over batches of rows: a batch of B items with feature
size d travels as a (B, d) tensor, and sequences travel as Python lists of
such tensors, one per time step.  Variable lengths inside a batch are
handled with per-step 0/1 masks so that every item's result is identical to
processing it alone.
"""

from __future__ import annotations

import numpy as np

from .tensor import (
    Tensor,
    add,
    concat,
    const,
    matmul,
    maximum,
    mul,
    relu,
    sigmoid,
    slice_cols,
    sub,
    take_rows,
    tanh,
)

# Large negative filler for masked positions in max pooling; avoids the
# 0 * inf = nan trap that -inf would create.
_NEG_FILL = -1e30

ACTIVATIONS = {
    None: lambda t: t,
    "none": lambda t: t,
    "tanh": tanh,
    "relu": relu,
    "sigmoid": sigmoid,
}


def glorot_uniform(rng, fan_in, fan_out, shape=None, dtype=np.float32):
    """Uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def embed(table, indices):
    """Look up rows of an embedding table.

    ``indices`` must already be mapped in-vocabulary (unknowns to UNK);
    out-of-range ids raise IndexError.  Backward accumulates sparse row
    gradients, so a repeated index collects every contribution.
    """
    return take_rows(table, np.asarray(indices))


def affine(x, weight, bias, activation=None):
    """activation(x @ weight + bias) for x of shape (B, din)."""
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    return ACTIVATIONS[activation](add(matmul(x, weight), bias))


def conv1d(steps, weight, bias, activation="relu"):
    """Narrow 1-D convolution over a sequence of (B, din) tensors.

    ``weight`` has shape (w * din, F): the rows are the filter taps for
    window offsets 0..w-1, each a (din, F) block, so output position t is
    activation(bias + [x_t ; x_{t+1} ; ... ; x_{t+w-1}] @ weight).

    Args:
        steps: list of T tensors (B, din), T >= filter width. Callers pad
            shorter sequences first (chars with the PAD symbol, deeper
            layers with zeros).
        weight: (w * din, F) filter tensor.
        bias: (F,) tensor.
        activation: name from ACTIVATIONS.

    Returns:
        list of T - w + 1 tensors of shape (B, F).
    """
    if not steps:
        raise ValueError("conv1d on empty sequence")
    din = steps[0].data.shape[1]
    if weight.data.shape[0] % din != 0:
        raise ValueError("filter width not derivable from weight shape")
    width = weight.data.shape[0] // din
    if len(steps) < width:
        raise ValueError(f"sequence length {len(steps)} < filter width {width}")
    out = []
    for t in range(len(steps) - width + 1):
        window = steps[t] if width == 1 else concat(steps[t:t + width], axis=1)
        out.append(affine(window, weight, bias, activation))
    return out


def max_pool_over_time(steps, n_valid=None):
    """Per-feature max over time; ties route gradient to the earliest step.

    ``n_valid`` (an int array of shape (B,)) restricts the pool for each
    batch item to its first n_valid steps; invalid positions are filled
    with a large negative constant and can never win.
    """
    if not steps:
        raise ValueError("max pool over empty sequence")
    dtype = steps[0].dtype
    if n_valid is not None:
        n_valid = np.asarray(n_valid)
        if n_valid.min() < 1:
            raise ValueError("every item needs at least one valid step")
        masked = []
        for t, s in enumerate(steps):
            keep = (n_valid > t).astype(dtype)[:, None]
            fill = ((1.0 - keep) * _NEG_FILL).astype(dtype)
            masked.append(add(mul(s, const(keep)), const(fill)))
        steps = masked
    pooled = steps[0]
    for s in steps[1:]:
        pooled = maximum(pooled, s)
    return pooled


def dropout(x, keep_prob, train, rng=None):
    """Inverted dropout: train-time mask of {0, 1/keep_prob}, eval no-op."""
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if not train or keep_prob == 1.0:
        return x
    mask = (rng.random(x.data.shape) < keep_prob).astype(x.dtype) / x.dtype.type(keep_prob)
    return mul(x, const(mask))


def lstm_step(x, h, c, w_x, w_h, bias):
    """One LSTM cell step (Graves cell, no peepholes).

    Gate pre-activations are x @ w_x + h @ w_h + bias, split into four
    blocks [i, f, g, o].  i, f, o pass through sigmoid, candidate g through
    tanh; then c' = f*c + i*g and h' = o*tanh(c').

    Returns (h', c'), each (B, H).
    """
    hidden = w_h.data.shape[0]
    if w_x.data.shape[1] != 4 * hidden or w_h.data.shape[1] != 4 * hidden:
        raise ValueError("LSTM weight shapes disagree with hidden size")
    z = add(add(matmul(x, w_x), matmul(h, w_h)), bias)
    i = sigmoid(slice_cols(z, 0, hidden))
    f = sigmoid(slice_cols(z, hidden, 2 * hidden))
    g = tanh(slice_cols(z, 2 * hidden, 3 * hidden))
    o = sigmoid(slice_cols(z, 3 * hidden, 4 * hidden))
    c_new = add(mul(f, c), mul(i, g))
    h_new = mul(o, tanh(c_new))
    return h_new, c_new


def _blend(new, old, keep_col):
    """keep_col * new + (1 - keep_col) * old, with keep_col a (B, 1) array."""
    return add(mul(new, const(keep_col)), mul(old, const(1.0 - keep_col)))


def run_lstm(steps, w_x, w_h, bias, step_masks=None, reverse=False,
             keep_prob=1.0, train=False, rng=None, recurrent_mode="per_step"):
    """Run an LSTM over a masked sequence.

    For each item, steps where its mask is 0 leave (h, c) untouched, so
    the final state equals the state after the item's own last real step
    and every output is identical to running the item alone.

    Args:
        steps: list of T input tensors (B, din).
        step_masks: optional (T, B) 0/1 float array; None means all valid.
        reverse: process the sequence right to left (outputs stay aligned
            with the input order).
        keep_prob/train/rng: dropout on the hidden state fed into each
            step ("recurrent" dropout); the cell state is never dropped.
        recurrent_mode: "per_step" resamples the hidden-state mask every
            step, "per_sequence" samples one mask and reuses it.

    Returns:
        list of T hidden-state tensors (B, H), index-aligned with steps.
    """
    n_steps = len(steps)
    batch = steps[0].data.shape[0]
    hidden = w_h.data.shape[0]
    dtype = steps[0].dtype
    zeros = const(np.zeros((batch, hidden), dtype=dtype))
    h, c = zeros, zeros
    outputs = [None] * n_steps
    order = range(n_steps - 1, -1, -1) if reverse else range(n_steps)

    seq_mask = None
    if train and keep_prob < 1.0 and recurrent_mode == "per_sequence":
        seq_mask = const(
            (rng.random((batch, hidden)) < keep_prob).astype(dtype) / dtype.type(keep_prob)
        )

    for t in order:
        if train and keep_prob < 1.0:
            h_in = mul(h, seq_mask) if seq_mask is not None else dropout(h, keep_prob, train, rng)
        else:
            h_in = h
        h_new, c_new = lstm_step(steps[t], h_in, c, w_x, w_h, bias)
        if step_masks is not None:
            keep = step_masks[t].astype(dtype)[:, None]
            h = _blend(h_new, h, keep)
            c = _blend(c_new, c, keep)
        else:
            h, c = h_new, c_new
        outputs[t] = h
    return outputs


def highway(x, w_t, b_t, w_h, b_h):
    """Highway layer: t*relu(x @ w_h + b_h) + (1-t)*x with t = sigmoid gate."""
    d = x.data.shape[1]
    if w_t.data.shape != (d, d) or w_h.data.shape != (d, d):
        raise ValueError("highway weights must be square in the input dim")
    t = sigmoid(add(matmul(x, w_t), b_t))
    transform = relu(add(matmul(x, w_h), b_h))
    carry = sub(const(np.ones((1, 1), dtype=x.dtype)), t)
    return add(mul(t, transform), mul(carry, x))


class LstmParams:
    """Weights of one LSTM direction, registered in a ParamStore."""

    def __init__(self, params, prefix, input_dim, hidden, rng, forget_bias=1.0):
        dtype = params.dtype
        self.w_x = params.add(
            f"{prefix}.w_x", glorot_uniform(rng, input_dim, 4 * hidden, dtype=dtype))
        self.w_h = params.add(
            f"{prefix}.w_h", glorot_uniform(rng, hidden, 4 * hidden, dtype=dtype))
        b = np.zeros(4 * hidden, dtype=dtype)
        b[hidden:2 * hidden] = forget_bias
        self.bias = params.add(f"{prefix}.b", b)
        self.hidden = hidden

    def run(self, steps, step_masks=None, reverse=False, keep_prob=1.0,
            train=False, rng=None, recurrent_mode="per_step"):
        return run_lstm(steps, self.w_x, self.w_h, self.bias,
                        step_masks=step_masks, reverse=reverse,
                        keep_prob=keep_prob, train=train, rng=rng,
                        recurrent_mode=recurrent_mode)


class LstmStack:
    """Stacked unidirectional LSTM with inter-layer dropout."""

    def __init__(self, params, prefix, input_dim, sizes, rng):
        self.layers = []
        dim = input_dim
        for i, hidden in enumerate(sizes):
            self.layers.append(LstmParams(params, f"{prefix}.l{i}", dim, hidden, rng))
            dim = hidden
        self.output_dim = dim

    def run(self, steps, step_masks=None, keep_prob=1.0, train=False,
            rng=None, recurrent_mode="per_step"):
        """Returns the top layer's outputs, one (B, H) tensor per step."""
        for i, layer in enumerate(self.layers):
            if i > 0:
                steps = [dropout(s, keep_prob, train, rng) for s in steps]
            steps = layer.run(steps, step_masks=step_masks, keep_prob=keep_prob,
                              train=train, rng=rng, recurrent_mode=recurrent_mode)
        return steps


class BlstmStack:
    """Stacked bidirectional LSTM; layer inputs are the concatenated
    forward/backward outputs of the layer below."""

    def __init__(self, params, prefix, input_dim, sizes, rng):
        self.layers = []
        dim = input_dim
        for i, hidden in enumerate(sizes):
            fwd = LstmParams(params, f"{prefix}.l{i}.fwd", dim, hidden, rng)
            bwd = LstmParams(params, f"{prefix}.l{i}.bwd", dim, hidden, rng)
            self.layers.append((fwd, bwd))
            dim = 2 * hidden
        self.output_dim = dim

    def run(self, steps, step_masks=None, keep_prob=1.0, train=False,
            rng=None, recurrent_mode="per_step"):
        """Returns (fwd_outputs, bwd_outputs) of the top layer, each a list
        of (B, H) tensors aligned with the input steps."""
        fwd_out = bwd_out = None
        for i, (fwd, bwd) in enumerate(self.layers):
            if i > 0:
                steps = [concat([f, b], axis=1)
                         for f, b in zip(fwd_out, bwd_out)]
                steps = [dropout(s, keep_prob, train, rng) for s in steps]
            fwd_out = fwd.run(steps, step_masks=step_masks, keep_prob=keep_prob,
                              train=train, rng=rng, recurrent_mode=recurrent_mode)
            bwd_out = bwd.run(steps, step_masks=step_masks, reverse=True,
                              keep_prob=keep_prob, train=train, rng=rng,
                              recurrent_mode=recurrent_mode)
        return fwd_out, bwd_out
