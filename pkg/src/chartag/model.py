"""Sentence-level tagging model.

Word vectors feed a stacked bidirectional LSTM over sentence positions;
each position gets a softmax classifier over the tag inventory, optionally
with the word vector concatenated back in (skip connection).  Because the
tag sequence probability factorizes over positions, decoding is a
position-wise argmax.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import layers
from .data import prepare_batch, Sentence
from .encoders import EncoderConfig, build_encoder
from .tensor import ParamStore, add, concat, const, softmax_cross_entropy, take_rows


@dataclass
class ModelConfig:
    """Context model plus its encoder; defaults follow the tuned setup
    (two context layers of 256 per direction)."""

    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    context_layers: int = 2
    context_hidden: int = 256
    skip_connections: bool = False
    tagset: str = "pos"
    keep_prob: float = 0.7
    # "per_step" resamples recurrent dropout masks every time step,
    # "per_sequence" keeps one mask per sequence
    recurrent_dropout: str = "per_step"

    def __post_init__(self):
        if not 0.0 < self.keep_prob <= 1.0:
            raise ValueError("keep_prob must be in (0, 1]")
        if self.recurrent_dropout not in ("per_step", "per_sequence"):
            raise ValueError(f"unknown recurrent dropout mode {self.recurrent_dropout!r}")

    def to_dict(self):
        from dataclasses import asdict
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        enc = dict(d.pop("encoder"))
        for key in ("highway_widths", "highway_filters", "lstm_sizes", "blstm_sizes"):
            if enc.get(key) is not None:
                enc[key] = tuple(enc[key])
        return cls(encoder=EncoderConfig(**enc), **d)


@dataclass
class ForwardResult:
    loss: object                # scalar Tensor or None
    probs: np.ndarray           # (S, N, K) softmax rows; padding rows are 0
    token_count: int


def _np_softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_tags(dist):
    """Position-wise argmax over a (N, K) distribution; ties take the
    lowest tag id."""
    return [int(i) for i in np.argmax(dist, axis=-1)]


def sentence_loss(dist, gold_ids):
    """Negative log-likelihood of a gold tag sequence under a (N, K)
    distribution."""
    dist = np.asarray(dist)
    if len(gold_ids) != dist.shape[0]:
        raise ValueError("gold length disagrees with distribution")
    rows = np.arange(dist.shape[0])
    return float(-np.log(dist[rows, np.asarray(gold_ids)]).sum())


class TaggerNetwork:
    """Encoder + context BLSTM + per-position classifiers over one
    ParamStore."""

    def __init__(self, config, vocabs, rng, dtype=np.float32, pretrained=None):
        if config.tagset != vocabs.tagset:
            raise ValueError("model tag set disagrees with vocabularies")
        self.config = config
        self.vocabs = vocabs
        self.pretrained = pretrained
        self.params = ParamStore(dtype)
        self.encoder = build_encoder(config.encoder, vocabs, self.params, rng,
                                     pretrained)
        dv = self.encoder.output_dim
        self.context = layers.BlstmStack(
            self.params, "ctx", dv,
            (config.context_hidden,) * config.context_layers, rng)
        clf_in = 2 * config.context_hidden + (dv if config.skip_connections else 0)
        n_tags = len(vocabs.tags)
        self.clf_w = self.params.add(
            "clf.w", layers.glorot_uniform(rng, clf_in, n_tags, dtype=dtype))
        self.clf_b = self.params.add("clf.b", np.zeros(n_tags, dtype=dtype))

    @property
    def n_tags(self):
        return len(self.vocabs.tags)

    def forward_batch(self, batch, train=False, rng=None, with_loss=True):
        """One pass over a prepared batch.

        Masked (padding) positions contribute zero loss and zero gradient.
        With ``with_loss`` the batch's gold ids must all be in the tag
        inventory.
        """
        cfg = self.config
        kp = cfg.keep_prob
        dtype = self.params.dtype
        word_vecs = self.encoder.encode(batch, train=train, rng=rng, keep_prob=kp,
                                        recurrent_mode=cfg.recurrent_dropout)
        dv = word_vecs.data.shape[1]
        padded = concat([word_vecs, const(np.zeros((1, dv), dtype=dtype))], axis=0)

        n_pos = batch.max_len
        v_steps = [take_rows(padded, batch.word_slots[:, t]) for t in range(n_pos)]
        ctx_in = [layers.dropout(v, kp, train, rng) for v in v_steps]
        step_masks = batch.mask.T
        fwd, bwd = self.context.run(ctx_in, step_masks=step_masks, keep_prob=kp,
                                    train=train, rng=rng,
                                    recurrent_mode=cfg.recurrent_dropout)

        loss = None
        probs = np.zeros((batch.size, n_pos, self.n_tags), dtype=dtype)
        for t in range(n_pos):
            ctx_t = concat([fwd[t], bwd[t]], axis=1)
            if cfg.skip_connections:
                ctx_t = concat([ctx_t, v_steps[t]], axis=1)
            logits = layers.affine(layers.dropout(ctx_t, kp, train, rng),
                                   self.clf_w, self.clf_b)
            if with_loss:
                gold_col = batch.gold[:, t]
                mask_col = batch.mask[:, t]
                if np.any((gold_col < 0) & (mask_col > 0)):
                    raise ValueError("gold tag missing from the training inventory")
                step_loss, step_probs = softmax_cross_entropy(
                    logits, np.where(gold_col < 0, 0, gold_col), mask_col)
                loss = step_loss if loss is None else add(loss, step_loss)
            else:
                step_probs = _np_softmax(logits.data)
            probs[:, t, :] = step_probs
        probs *= batch.mask[:, :, None]
        return ForwardResult(loss=loss, probs=probs, token_count=batch.token_count)

    def distributions(self, batch):
        """Per-sentence (N, K) tag distributions in eval mode."""
        result = self.forward_batch(batch, train=False, with_loss=False)
        return [result.probs[s, :length] for s, length in enumerate(batch.lengths)]

    def forward_sentence(self, sentence):
        """Tag distribution for a single sentence (eval mode)."""
        batch = prepare_batch([self._as_sentence(sentence)], self.vocabs,
                              pretrained=self._pretrained_lookup())
        return self.distributions(batch)[0]

    def tag_probabilities(self, sentences, batch_size=16):
        """Distributions for many sentences, batched in input order."""
        sentences = [self._as_sentence(s) for s in sentences]
        out = []
        for lo in range(0, len(sentences), batch_size):
            batch = prepare_batch(sentences[lo:lo + batch_size], self.vocabs,
                                  pretrained=self._pretrained_lookup())
            out.extend(self.distributions(batch))
        return out

    def predict(self, sentences, batch_size=16):
        """Predicted tag ids per sentence (position-wise argmax)."""
        return [predict_tags(dist)
                for dist in self.tag_probabilities(sentences, batch_size)]

    def predict_strings(self, sentences, batch_size=16):
        symbols = self.vocabs.tags.symbols
        return [[symbols[i] for i in ids]
                for ids in self.predict(sentences, batch_size)]

    def _pretrained_lookup(self):
        # prepare_batch only needs row_id(); the encoder's table tensor
        # already holds the vectors
        return self.pretrained if self.config.encoder.pretrained_mode != "none" else None

    def _as_sentence(self, sentence):
        if isinstance(sentence, Sentence):
            return sentence
        words = [str(w).lower() for w in sentence]
        return Sentence(words, ["?"] * len(words))
