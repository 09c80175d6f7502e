"""Scikit-learn style front end.

``MorphTagger`` wraps vocabulary building, network construction and the
training loop behind the usual ``fit`` / ``predict`` / ``score`` surface,
so the tagger composes with pipelines, ``clone`` and grid search.  X is a
list of token sequences and y a parallel list of tag-string sequences, as
in other sequence estimators.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .checkpoint import load_checkpoint, restore_network, save_checkpoint
from .data import Sentence, build_vocabularies, load_embeddings
from .encoders import EncoderConfig
from .model import ModelConfig, TaggerNetwork
from .training import TrainConfig, evaluate_network, fit
from .validation import check_aligned_tags, check_token_sequences


class MorphTagger(BaseEstimator):
    """Character-based neural sequence tagger.

    Parameters mirror the underlying configs; anything left at None keeps
    the architecture default.  ``embeddings`` may be a path to a word2vec
    text file or an already loaded :class:`~chartag.data.EmbeddingTable`;
    ``pretrained_mode`` selects fixed or finetuned use.
    """

    def __init__(self, encoder="cnn", char_dim=None, word_dim=128,
                 conv_layers=2, conv_filters=256, conv_width=5,
                 highway_layers=2, dnn_hidden=256, max_word_len=20,
                 lstm_sizes=(1024, 256), blstm_sizes=(256, 256),
                 context_layers=2, context_hidden=256, skip_connections=False,
                 keep_prob=0.7, learning_rate=1e-3, batch_size=16,
                 max_epochs=100, patience=7, grad_clip_norm=5.0,
                 validation_fraction=0.1, embeddings=None,
                 pretrained_mode="none", tagset="pos", seed=0, verbose=False):
        self.encoder = encoder
        self.char_dim = char_dim
        self.word_dim = word_dim
        self.conv_layers = conv_layers
        self.conv_filters = conv_filters
        self.conv_width = conv_width
        self.highway_layers = highway_layers
        self.dnn_hidden = dnn_hidden
        self.max_word_len = max_word_len
        self.lstm_sizes = lstm_sizes
        self.blstm_sizes = blstm_sizes
        self.context_layers = context_layers
        self.context_hidden = context_hidden
        self.skip_connections = skip_connections
        self.keep_prob = keep_prob
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.grad_clip_norm = grad_clip_norm
        self.validation_fraction = validation_fraction
        self.embeddings = embeddings
        self.pretrained_mode = pretrained_mode
        self.tagset = tagset
        self.seed = seed
        self.verbose = verbose

    def _load_pretrained(self):
        if self.pretrained_mode == "none":
            return None
        table = self.embeddings
        if table is None:
            raise ValueError("pretrained_mode set but no embeddings given")
        if isinstance(table, str):
            table = load_embeddings(table, self.pretrained_mode)
        return table

    def _build_configs(self, pretrained):
        encoder = EncoderConfig(
            kind=self.encoder, char_dim=self.char_dim, word_dim=self.word_dim,
            conv_layers=self.conv_layers, conv_filters=self.conv_filters,
            conv_width=self.conv_width, highway_layers=self.highway_layers,
            dnn_hidden=self.dnn_hidden, max_word_len=self.max_word_len,
            lstm_sizes=tuple(self.lstm_sizes), blstm_sizes=tuple(self.blstm_sizes),
            pretrained_mode=self.pretrained_mode,
            pretrained_dim=None if pretrained is None else pretrained.dim)
        model = ModelConfig(
            encoder=encoder, context_layers=self.context_layers,
            context_hidden=self.context_hidden,
            skip_connections=self.skip_connections, tagset=self.tagset,
            keep_prob=self.keep_prob)
        train = TrainConfig(
            base_lr=self.learning_rate, batch_size=self.batch_size,
            max_epochs=self.max_epochs, patience=self.patience,
            grad_clip_norm=self.grad_clip_norm, seed=self.seed)
        return model, train

    def fit(self, X, y, X_dev=None, y_dev=None):
        """Train on tokenized sentences X with per-token tag strings y.

        Without an explicit dev set, the last ``validation_fraction`` of
        the training sentences is held out for early stopping.
        """
        X = check_token_sequences(X)
        y = check_aligned_tags(X, y)
        train_sents = [Sentence([w.lower() for w in ws], list(ts))
                       for ws, ts in zip(X, y)]
        if X_dev is not None:
            X_dev = check_token_sequences(X_dev, name="X_dev")
            y_dev = check_aligned_tags(X_dev, y_dev)
            dev_sents = [Sentence([w.lower() for w in ws], list(ts))
                         for ws, ts in zip(X_dev, y_dev)]
        else:
            n_dev = max(1, int(round(len(train_sents) * self.validation_fraction)))
            if n_dev >= len(train_sents):
                raise ValueError("not enough sentences to hold out a dev split")
            dev_sents = train_sents[-n_dev:]
            train_sents = train_sents[:-n_dev]

        pretrained = self._load_pretrained()
        model_config, train_config = self._build_configs(pretrained)
        rng = np.random.default_rng(train_config.seed)
        vocabs = build_vocabularies(train_sents, self.tagset)
        network = TaggerNetwork(model_config, vocabs, rng, pretrained=pretrained)
        result = fit(network, train_sents, dev_sents, train_config, rng,
                     verbose=self.verbose)

        self.network_ = network
        self.vocabs_ = vocabs
        self.train_config_ = train_config
        self.classes_ = list(vocabs.tags.symbols)
        self.history_ = result.history
        self.best_dev_error_ = result.best_dev_error
        self.n_epochs_ = result.n_epochs
        return self

    def _check_fitted(self):
        if not hasattr(self, "network_"):
            raise RuntimeError("this MorphTagger instance is not fitted yet")

    def predict(self, X):
        """Predicted tag strings, one list per sentence."""
        self._check_fitted()
        X = check_token_sequences(X)
        return self.network_.predict_strings(X, batch_size=self.batch_size)

    def predict_proba(self, X):
        """Per-position distributions over ``classes_`` as (N, K) arrays."""
        self._check_fitted()
        X = check_token_sequences(X)
        return self.network_.tag_probabilities(X, batch_size=self.batch_size)

    def score(self, X, y):
        """Token-level tagging accuracy in [0, 1]."""
        self._check_fitted()
        X = check_token_sequences(X)
        y = check_aligned_tags(X, y)
        sents = [Sentence([w.lower() for w in ws], list(ts))
                 for ws, ts in zip(X, y)]
        report = evaluate_network(self.network_, sents,
                                  batch_size=self.batch_size)
        return 1.0 - report.error_rate / 100.0

    def save(self, path):
        """Write the fitted model as a checkpoint directory."""
        self._check_fitted()
        save_checkpoint(path, self.network_, self.train_config_)

    @classmethod
    def load(cls, path):
        """Restore a fitted tagger from a checkpoint directory."""
        loaded = load_checkpoint(path)
        network = restore_network(loaded)
        est = cls(encoder=loaded.model_config.encoder.kind,
                  tagset=loaded.model_config.tagset)
        est.network_ = network
        est.vocabs_ = network.vocabs
        est.train_config_ = loaded.train_config or TrainConfig()
        est.classes_ = list(network.vocabs.tags.symbols)
        est.history_ = []
        est.best_dev_error_ = float("nan")
        est.n_epochs_ = 0
        return est
