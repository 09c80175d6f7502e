"""Word-vector encoders: direct lookup plus five character-based networks
(DNN, CNN, CNN with multi-width highway head, LSTM, BLSTM).

Every encoder consumes a prepared :class:`~chartag.data.Batch` and returns
one (n_words, dim) tensor.  The character encoders are written so that a
word's vector does not depend on the other words in the batch: CNN-style
encoders restrict max pooling to each word's own windows, and recurrent
encoders freeze their state past each word's last character.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers
from .tensor import concat, const, mul, reshape, take_rows

KINDS = ("lut", "dnn", "cnn", "cnnhighway", "lstm", "blstm")
PRETRAINED_MODES = ("none", "fixed", "finetuned")


def num_filters(width, max_width=7):
    """Filter count for a multi-width convolution branch: min(200, 50*w)."""
    if not 1 <= width <= max_width:
        raise ValueError(f"filter width {width} outside 1..{max_width}")
    return min(200, 50 * width)


@dataclass
class EncoderConfig:
    """Hyperparameters of one word-vector architecture.

    The defaults are the tuned setups: DNN with one 256 layer over 128-dim
    characters, CNN with two 256-filter width-5 layers, the multi-width
    highway CNN with 15-dim characters and widths 1..7, LSTM with 1024+256
    layers, BLSTM with two 256 layers.

    ``pretrained_mode``: for kind "lut" it selects how the word table is
    obtained (none = trained from scratch, fixed/finetuned = loaded); for
    character kinds, fixed/finetuned appends the pre-trained word vector
    to the character vector.
    """

    kind: str = "cnn"
    char_dim: int | None = None
    # dnn
    dnn_hidden: int = 256
    max_word_len: int = 20
    # cnn
    conv_layers: int = 2
    conv_filters: int = 256
    conv_width: int = 5
    # cnnhighway
    highway_widths: tuple = (1, 2, 3, 4, 5, 6, 7)
    highway_filters: tuple | None = None
    highway_layers: int = 2
    # lstm / blstm
    lstm_sizes: tuple = (1024, 256)
    blstm_sizes: tuple = (256, 256)
    # lut (ignored when a pretrained table is used)
    word_dim: int = 128
    pretrained_mode: str = "none"
    pretrained_dim: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.pretrained_mode not in PRETRAINED_MODES:
            raise ValueError(f"unknown pretrained mode {self.pretrained_mode!r}")
        if self.conv_layers < 1 or self.highway_layers < 0:
            raise ValueError("layer counts must be positive")
        if self.pretrained_mode != "none" and self.pretrained_dim is None:
            raise ValueError("pretrained_mode set but pretrained_dim unknown")

    @property
    def resolved_char_dim(self):
        if self.char_dim is not None:
            return self.char_dim
        return 15 if self.kind == "cnnhighway" else 128

    @property
    def resolved_highway_filters(self):
        if self.highway_filters is not None:
            return tuple(self.highway_filters)
        return tuple(num_filters(w, max(self.highway_widths))
                     for w in self.highway_widths)

    def char_vector_dim(self):
        """Output size of the character-based part (0 for kind "lut")."""
        if self.kind == "lut":
            return 0
        if self.kind == "dnn":
            return self.dnn_hidden
        if self.kind == "cnn":
            return self.conv_filters
        if self.kind == "cnnhighway":
            return sum(self.resolved_highway_filters)
        if self.kind == "lstm":
            return self.lstm_sizes[-1]
        return 2 * self.blstm_sizes[-1]

    def word_vector_dim(self):
        """Final word-vector size, derivable from the config alone."""
        if self.kind == "lut":
            if self.pretrained_mode != "none":
                return self.pretrained_dim
            return self.word_dim
        dim = self.char_vector_dim()
        if self.pretrained_mode != "none":
            dim += self.pretrained_dim
        return dim


def compose_word_vector(char_vec=None, word_vec=None):
    """Concatenate character-level and word-level vectors, char part first."""
    if char_vec is None and word_vec is None:
        raise ValueError("need at least one of char_vec and word_vec")
    if char_vec is None:
        return word_vec
    if word_vec is None:
        return char_vec
    return concat([char_vec, word_vec], axis=1)


def _pad_grid(char_ids, min_len, pad_id):
    """Right-pad char id lists into a (n_words, T) grid, T >= min_len."""
    t_max = max(max(len(ids) for ids in char_ids), min_len)
    grid = np.full((len(char_ids), t_max), pad_id, dtype=np.intp)
    for i, ids in enumerate(char_ids):
        grid[i, :len(ids)] = ids
    return grid


class _EncoderBase:
    """Shared wiring: the character table and the pretrained word table."""

    def __init__(self, config, vocabs, params, rng, pretrained=None):
        self.config = config
        self.vocabs = vocabs
        self.output_dim = config.word_vector_dim()
        self.pretrained_table = None
        if config.kind != "lut":
            dim = config.resolved_char_dim
            n_chars = len(vocabs.chars)
            self.char_table = params.add(
                "enc.chars", layers.glorot_uniform(rng, n_chars, dim, dtype=params.dtype))
        if config.pretrained_mode != "none":
            if pretrained is None:
                raise ValueError("config requests pretrained embeddings but none given")
            if pretrained.dim != config.pretrained_dim:
                raise ValueError("pretrained dimension disagrees with config")
            self.pretrained_table = params.add(
                "enc.pretrained", pretrained.matrix,
                trainable=config.pretrained_mode == "finetuned")

    def _char_steps(self, grid):
        return [layers.embed(self.char_table, grid[:, t])
                for t in range(grid.shape[1])]

    def _compose(self, char_vec, batch):
        if self.pretrained_table is None:
            return char_vec
        word_vec = take_rows(self.pretrained_table, batch.pre_ids)
        return compose_word_vector(char_vec, word_vec)

    def encode(self, batch, train=False, rng=None, keep_prob=1.0,
               recurrent_mode="per_step"):
        raise NotImplementedError


class LutEncoder(_EncoderBase):
    """Word-level lookup table, trained from scratch or pre-trained."""

    def __init__(self, config, vocabs, params, rng, pretrained=None):
        super().__init__(config, vocabs, params, rng, pretrained)
        if config.pretrained_mode == "none":
            self.word_table = params.add(
                "enc.words",
                layers.glorot_uniform(rng, len(vocabs.words), config.word_dim,
                                      dtype=params.dtype))
        else:
            self.word_table = self.pretrained_table

    def encode(self, batch, train=False, rng=None, keep_prob=1.0,
               recurrent_mode="per_step"):
        ids = batch.word_ids if self.config.pretrained_mode == "none" else batch.pre_ids
        return take_rows(self.word_table, ids)


class DnnEncoder(_EncoderBase):
    """Fixed-length character window into one fully-connected tanh layer.

    Words longer than ``max_word_len`` keep their rightmost characters so
    suffixes survive truncation; shorter words are padded with PAD.
    """

    def __init__(self, config, vocabs, params, rng, pretrained=None):
        super().__init__(config, vocabs, params, rng, pretrained)
        din = config.max_word_len * config.resolved_char_dim
        self.weight = params.add(
            "enc.dnn.w", layers.glorot_uniform(rng, din, config.dnn_hidden,
                                               dtype=params.dtype))
        self.bias = params.add("enc.dnn.b", np.zeros(config.dnn_hidden, dtype=params.dtype))

    def window_ids(self, ids):
        length = self.config.max_word_len
        if len(ids) > length:
            return list(ids[-length:])
        return list(ids) + [self.vocabs.pad_char_id] * (length - len(ids))

    def encode(self, batch, train=False, rng=None, keep_prob=1.0,
               recurrent_mode="per_step"):
        grid = np.array([self.window_ids(ids) for ids in batch.char_ids], dtype=np.intp)
        n_words, length = grid.shape
        flat = layers.embed(self.char_table, grid.reshape(-1))
        stacked = reshape(flat, (n_words, length * self.config.resolved_char_dim))
        out = layers.affine(stacked, self.weight, self.bias, "tanh")
        return self._compose(out, batch)


class CnnEncoder(_EncoderBase):
    """Stacked narrow convolutions over characters with max pooling.

    Each word is padded with PAD up to the filter width; deeper layers pad
    with zeros.  Pooling only considers a word's own windows, so the vector
    is independent of the rest of the batch.
    """

    def __init__(self, config, vocabs, params, rng, pretrained=None):
        super().__init__(config, vocabs, params, rng, pretrained)
        self.conv = []
        din = config.resolved_char_dim
        for i in range(config.conv_layers):
            w = params.add(
                f"enc.cnn.l{i}.w",
                layers.glorot_uniform(rng, config.conv_width * din, config.conv_filters,
                                      dtype=params.dtype))
            b = params.add(f"enc.cnn.l{i}.b",
                           np.zeros(config.conv_filters, dtype=params.dtype))
            self.conv.append((w, b))
            din = config.conv_filters

    def encode(self, batch, train=False, rng=None, keep_prob=1.0,
               recurrent_mode="per_step"):
        width = self.config.conv_width
        grid = _pad_grid(batch.char_ids, width, self.vocabs.pad_char_id)
        steps = self._char_steps(grid)
        n_words = grid.shape[0]
        lens = np.array([len(ids) for ids in batch.char_ids], dtype=np.intp)
        valid = np.maximum(lens, width)
        dtype = self.char_table.dtype
        for i, (w, b) in enumerate(self.conv):
            steps = layers.conv1d(steps, w, b, "relu")
            valid = np.maximum(valid, width) - width + 1
            if i + 1 < len(self.conv):
                # zero everything past each word's own windows so the next
                # layer sees the same zero padding as a solo pass
                steps = [mul(s, const((valid > t).astype(dtype)[:, None]))
                         for t, s in enumerate(steps)]
                steps = [layers.dropout(s, keep_prob, train, rng) for s in steps]
                while len(steps) < width:
                    steps.append(const(np.zeros((n_words, self.config.conv_filters),
                                                dtype=dtype)))
        pooled = layers.max_pool_over_time(steps, n_valid=valid)
        return self._compose(pooled, batch)


class CnnHighwayEncoder(_EncoderBase):
    """Parallel single-layer convolutions of several widths, each max
    pooled, concatenated and mixed by highway layers."""

    def __init__(self, config, vocabs, params, rng, pretrained=None):
        super().__init__(config, vocabs, params, rng, pretrained)
        din = config.resolved_char_dim
        self.branches = []
        for w, n_filt in zip(config.highway_widths, config.resolved_highway_filters):
            weight = params.add(
                f"enc.hw.conv{w}.w",
                layers.glorot_uniform(rng, w * din, n_filt, dtype=params.dtype))
            bias = params.add(f"enc.hw.conv{w}.b", np.zeros(n_filt, dtype=params.dtype))
            self.branches.append((w, weight, bias))
        total = sum(config.resolved_highway_filters)
        self.highways = []
        for i in range(config.highway_layers):
            w_t = params.add(f"enc.hw.h{i}.wt",
                             layers.glorot_uniform(rng, total, total, dtype=params.dtype))
            # gate bias starts negative so layers begin as carries
            b_t = params.add(f"enc.hw.h{i}.bt",
                             np.full(total, -2.0, dtype=params.dtype))
            w_h = params.add(f"enc.hw.h{i}.wh",
                             layers.glorot_uniform(rng, total, total, dtype=params.dtype))
            b_h = params.add(f"enc.hw.h{i}.bh", np.zeros(total, dtype=params.dtype))
            self.highways.append((w_t, b_t, w_h, b_h))

    def encode(self, batch, train=False, rng=None, keep_prob=1.0,
               recurrent_mode="per_step"):
        widths = self.config.highway_widths
        grid = _pad_grid(batch.char_ids, max(widths), self.vocabs.pad_char_id)
        steps = self._char_steps(grid)
        lens = np.array([len(ids) for ids in batch.char_ids], dtype=np.intp)
        pooled = []
        for w, weight, bias in self.branches:
            out = layers.conv1d(steps[:grid.shape[1]], weight, bias, "tanh")
            n_valid = np.maximum(lens, w) - w + 1
            pooled.append(layers.max_pool_over_time(out, n_valid=n_valid))
        x = concat(pooled, axis=1)
        for i, (w_t, b_t, w_h, b_h) in enumerate(self.highways):
            if i > 0:
                x = layers.dropout(x, keep_prob, train, rng)
            x = layers.highway(x, w_t, b_t, w_h, b_h)
        return self._compose(x, batch)


class LstmEncoder(_EncoderBase):
    """Deep unidirectional LSTM over characters; the word vector is the top
    hidden state after each word's last character."""

    def __init__(self, config, vocabs, params, rng, pretrained=None):
        super().__init__(config, vocabs, params, rng, pretrained)
        self.stack = layers.LstmStack(params, "enc.lstm",
                                      config.resolved_char_dim,
                                      config.lstm_sizes, rng)

    def encode(self, batch, train=False, rng=None, keep_prob=1.0,
               recurrent_mode="per_step"):
        grid = _pad_grid(batch.char_ids, 1, self.vocabs.pad_char_id)
        lens = np.array([len(ids) for ids in batch.char_ids], dtype=np.intp)
        masks = (np.arange(grid.shape[1])[:, None] < lens[None, :]).astype(np.float32)
        steps = self._char_steps(grid)
        outs = self.stack.run(steps, step_masks=masks, keep_prob=keep_prob,
                              train=train, rng=rng, recurrent_mode=recurrent_mode)
        return self._compose(outs[-1], batch)


class BlstmEncoder(_EncoderBase):
    """Deep bidirectional LSTM over characters; the word vector is the
    concatenation of the top forward state at the last character and the
    top backward state at the first."""

    def __init__(self, config, vocabs, params, rng, pretrained=None):
        super().__init__(config, vocabs, params, rng, pretrained)
        self.stack = layers.BlstmStack(params, "enc.blstm",
                                       config.resolved_char_dim,
                                       config.blstm_sizes, rng)

    def encode(self, batch, train=False, rng=None, keep_prob=1.0,
               recurrent_mode="per_step"):
        grid = _pad_grid(batch.char_ids, 1, self.vocabs.pad_char_id)
        lens = np.array([len(ids) for ids in batch.char_ids], dtype=np.intp)
        masks = (np.arange(grid.shape[1])[:, None] < lens[None, :]).astype(np.float32)
        steps = self._char_steps(grid)
        fwd, bwd = self.stack.run(steps, step_masks=masks, keep_prob=keep_prob,
                                  train=train, rng=rng, recurrent_mode=recurrent_mode)
        return self._compose(concat([fwd[-1], bwd[0]], axis=1), batch)


_ENCODERS = {
    "lut": LutEncoder,
    "dnn": DnnEncoder,
    "cnn": CnnEncoder,
    "cnnhighway": CnnHighwayEncoder,
    "lstm": LstmEncoder,
    "blstm": BlstmEncoder,
}


def build_encoder(config, vocabs, params, rng, pretrained=None):
    return _ENCODERS[config.kind](config, vocabs, params, rng, pretrained)
