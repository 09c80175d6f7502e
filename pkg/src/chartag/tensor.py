"""Dense tensors with reverse-mode gradients.

The graph machinery is deliberately minimal: every operation wires a
backward closure onto its output tensor, and ``Tensor.backward`` replays
the closures in reverse topological order.  Only the operations needed by
the tagger's layers exist; there is no general autodiff beyond that.

Training code runs in float32.  Gradient checking rebuilds the model in
float64 and compares analytic gradients against central differences.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "ParamStore",
    "const",
    "add",
    "sub",
    "mul",
    "matmul",
    "tanh",
    "sigmoid",
    "relu",
    "concat",
    "take_rows",
    "slice_cols",
    "reshape",
    "maximum",
    "sumall",
    "softmax_cross_entropy",
    "grad_check",
]

# When enabled, every op output is scanned for NaN/Inf. Off by default to
# keep kernels fast; tests and debugging turn it on.
CHECK_FINITE = False


def set_debug_checks(enabled):
    global CHECK_FINITE
    CHECK_FINITE = bool(enabled)


class Tensor:
    """An ndarray plus an accumulated gradient and a backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False, _parents=(), _backward_fn=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward_fn = _backward_fn
        if CHECK_FINITE and not np.all(np.isfinite(self.data)):
            raise FloatingPointError("non-finite values in tensor")

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Backpropagate from a scalar output through the recorded graph."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        # Iterative post-order DFS: recursion would overflow on long
        # BPTT chains.
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


def const(data, dtype=None):
    """Wrap an array as a non-trainable tensor (masks, zero rows, ...)."""
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr)


def _coerce(x, like):
    """Turn scalars/arrays into constants matching ``like``'s float dtype."""
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _binary(a, b, out_data, da_fn, db_fn):
    req = a.requires_grad or b.requires_grad

    def backward(g):
        if a.requires_grad:
            a.accumulate(da_fn(g))
        if b.requires_grad:
            b.accumulate(db_fn(g))

    return Tensor(out_data, req, (a, b), backward if req else None)


def add(a, b):
    a = a if isinstance(a, Tensor) else _coerce(a, b)
    b = _coerce(b, a)
    return _binary(
        a, b, a.data + b.data,
        lambda g: _unbroadcast(g, a.data.shape),
        lambda g: _unbroadcast(g, b.data.shape),
    )


def sub(a, b):
    a = a if isinstance(a, Tensor) else _coerce(a, b)
    b = _coerce(b, a)
    return _binary(
        a, b, a.data - b.data,
        lambda g: _unbroadcast(g, a.data.shape),
        lambda g: _unbroadcast(-g, b.data.shape),
    )


def mul(a, b):
    a = a if isinstance(a, Tensor) else _coerce(a, b)
    b = _coerce(b, a)
    return _binary(
        a, b, a.data * b.data,
        lambda g: _unbroadcast(g * b.data, a.data.shape),
        lambda g: _unbroadcast(g * a.data, b.data.shape),
    )


def matmul(a, b):
    """Matrix product of two 2-D tensors.

    Backward accumulates dA = dC @ B^T and dB = A^T @ dC.
    """
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D tensors")
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: {a.data.shape} x {b.data.shape}"
        )
    return _binary(
        a, b, a.data @ b.data,
        lambda g: g @ b.data.T,
        lambda g: a.data.T @ g,
    )


def _unary(a, out_data, da_fn):
    def backward(g):
        a.accumulate(da_fn(g))

    return Tensor(out_data, a.requires_grad, (a,), backward if a.requires_grad else None)


def tanh(a):
    out = np.tanh(a.data)
    return _unary(a, out, lambda g: g * (1.0 - out * out))


def sigmoid(a):
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _unary(a, out, lambda g: g * out * (1.0 - out))


def relu(a):
    out = np.maximum(a.data, 0.0)
    return _unary(a, out, lambda g: g * (a.data > 0))


def concat(tensors, axis):
    """Concatenate tensors along ``axis``; backward splits the gradient."""
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    req = any(t.requires_grad for t in tensors)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate(g[tuple(idx)])

    return Tensor(out, req, tuple(tensors), backward if req else None)


def take_rows(a, indices):
    """Gather rows of a 2-D tensor; backward scatter-adds into the rows."""
    indices = np.asarray(indices)
    if indices.min(initial=0) < 0 or (indices.size and indices.max() >= a.data.shape[0]):
        raise IndexError(f"row index out of range for shape {a.data.shape}")
    out = a.data[indices]

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        np.add.at(a.grad, indices, g)

    return Tensor(out, a.requires_grad, (a,), backward if a.requires_grad else None)


def slice_cols(a, start, stop):
    out = a.data[:, start:stop].copy()

    def da(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return full

    return _unary(a, out, da)


def reshape(a, shape):
    out = a.data.reshape(shape)
    return _unary(a, out, lambda g: g.reshape(a.data.shape))


def maximum(a, b):
    """Elementwise max; ties route the gradient to the first argument."""
    b = _coerce(b, a)
    pick_a = a.data >= b.data
    return _binary(
        a, b, np.where(pick_a, a.data, b.data),
        lambda g: _unbroadcast(g * pick_a, a.data.shape),
        lambda g: _unbroadcast(g * ~pick_a, b.data.shape),
    )


def sumall(a):
    out = np.asarray(a.data.sum(), dtype=a.dtype)
    return _unary(a, out, lambda g: np.broadcast_to(g, a.data.shape).copy())


def softmax_cross_entropy(logits, gold, mask=None):
    """Softmax + negative log-likelihood, fused for stability.

    Args:
        logits: Tensor of shape (K,) or (B, K).
        gold: gold class index, or an int array of shape (B,).
        mask: optional float array of shape (B,); rows with mask 0
            contribute neither loss nor gradient.

    Returns:
        (loss, probs) where loss is a scalar tensor summing the masked
        per-row negative log-probabilities and probs is a plain ndarray
        of the softmax values (same leading shape as logits).
    """
    squeeze = logits.data.ndim == 1
    x = logits.data[None, :] if squeeze else logits.data
    gold_arr = np.atleast_1d(np.asarray(gold, dtype=np.intp))
    if x.ndim != 2 or gold_arr.shape != (x.shape[0],):
        raise ValueError("logits/gold shape mismatch")
    if gold_arr.min() < 0 or gold_arr.max() >= x.shape[1]:
        raise IndexError("gold index out of range")
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite logits")

    z = x - x.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    probs = np.exp(log_probs)

    rows = np.arange(x.shape[0])
    nll = -log_probs[rows, gold_arr]
    m = None if mask is None else np.asarray(mask, dtype=x.dtype)
    loss_val = np.asarray((nll if m is None else nll * m).sum(), dtype=x.dtype)

    def backward(g):
        d = probs.copy()
        d[rows, gold_arr] -= 1.0
        if m is not None:
            d *= m[:, None]
        d *= g
        logits.accumulate(d[0] if squeeze else d)

    loss = Tensor(loss_val, logits.requires_grad, (logits,),
                  backward if logits.requires_grad else None)
    return loss, (probs[0] if squeeze else probs)


class ParamStore:
    """Ordered mapping name -> parameter tensor with RMSProp accumulators.

    Iteration follows insertion order, which fixes the checkpoint layout
    and makes gradient reductions deterministic.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._entries = {}
        self.rms = {}

    def add(self, name, value, trainable=True):
        if name in self._entries:
            raise ValueError(f"duplicate parameter {name!r}")
        arr = np.ascontiguousarray(value, dtype=self.dtype)
        t = Tensor(arr, requires_grad=trainable)
        self._entries[name] = t
        self.rms[name] = np.zeros_like(arr)
        return t

    def __getitem__(self, name):
        return self._entries[name]

    def __contains__(self, name):
        return name in self._entries

    def __len__(self):
        return len(self._entries)

    def items(self):
        return self._entries.items()

    def names(self):
        return list(self._entries)

    def trainable(self):
        return [(n, t) for n, t in self._entries.items() if t.requires_grad]

    def zero_grads(self):
        for t in self._entries.values():
            t.grad = None

    def num_values(self):
        return sum(t.data.size for t in self._entries.values())


def grad_check(f, params, eps=1e-4, rng=None, max_coords_per_tensor=64,
               details=False):
    """Compare analytic gradients of ``f(params)`` against central differences.

    ``f`` must be deterministic (dropout off, fixed inputs). Coordinates of
    tensors larger than ``max_coords_per_tensor`` are subsampled with ``rng``.

    Returns the max over checked coordinates of
    |analytic - numeric| / max(1e-12, |analytic| + |numeric|),
    or (max_err, {name: err}) when ``details`` is set.
    """
    if rng is None:
        rng = np.random.default_rng(0)

    params.zero_grads()
    out = f(params)
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError("non-finite objective in grad_check")
    out.backward()
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.trainable()
    }

    worst = 0.0
    per_tensor = {}
    for name, t in params.trainable():
        flat = t.data.reshape(-1)
        n = flat.size
        if n <= max_coords_per_tensor:
            coords = np.arange(n)
        else:
            coords = np.sort(rng.choice(n, size=max_coords_per_tensor, replace=False))
        a_flat = analytic[name].reshape(-1)
        t_worst = 0.0
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(f(params).data)
            flat[i] = orig - eps
            f_minus = float(f(params).data)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise FloatingPointError(f"non-finite objective perturbing {name}")
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = a_flat[i]
            rel = abs(a - numeric) / max(1e-12, abs(a) + abs(numeric))
            t_worst = max(t_worst, rel)
        per_tensor[name] = t_worst
        worst = max(worst, t_worst)
    if details:
        return worst, per_tensor
    return worst
