"""Training loop: RMSProp with a halving learning-rate schedule, gradient
clipping, early stopping on dev error, and a per-epoch metrics log."""

from __future__ import annotations

import time
from dataclasses import dataclass, asdict

import numpy as np

from .data import build_vocabularies, make_batches, prepare_batch
from .evaluation import error_rate
from .model import TaggerNetwork
from .tensor import grad_check, mul


@dataclass
class TrainConfig:
    base_lr: float = 1e-3
    rms_decay: float = 0.9
    rms_eps: float = 1e-8
    batch_size: int = 16
    lr_halving_period: int = 10
    max_epochs: int = 100
    patience: int = 7
    grad_clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if min(self.base_lr, self.rms_eps, self.grad_clip_norm) <= 0:
            raise ValueError("learning rate, epsilon and clip norm must be positive")
        if not 0.0 < self.rms_decay < 1.0:
            raise ValueError("rms_decay must be in (0, 1)")
        if min(self.batch_size, self.lr_halving_period, self.max_epochs) < 1:
            raise ValueError("batch size, halving period and max epochs must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def lr_at_epoch(base_lr, epoch, halving_period=10):
    """Learning rate halves every ``halving_period`` epochs (0-based)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return base_lr / (2 ** (epoch // halving_period))


def clip_gradients(params, max_norm):
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the pre-clip norm."""
    total = 0.0
    grads = []
    for _, t in params.trainable():
        if t.grad is not None:
            total += float((t.grad.astype(np.float64) ** 2).sum())
            grads.append(t.grad)
    total = np.sqrt(total)
    if total > max_norm:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


def rmsprop_update(params, lr, rho, eps):
    """acc <- rho*acc + (1-rho)*g^2 ; w <- w - lr*g/sqrt(acc+eps).

    Applies to every trainable entry (a missing gradient counts as zero)
    and zeroes the gradients afterwards."""
    for name, t in params.trainable():
        g = t.grad
        if g is None:
            g = np.zeros_like(t.data)
        assert np.all(np.isfinite(g)), f"non-finite gradient in {name}"
        acc = params.rms[name]
        acc *= rho
        acc += (1.0 - rho) * g * g
        t.data -= (lr * g / np.sqrt(acc + eps)).astype(t.data.dtype)
    params.zero_grads()


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float   # mean negative log-likelihood per token
    dev_error: float    # percent
    seconds: float


@dataclass
class FitResult:
    history: list
    best_epoch: int
    best_dev_error: float
    diverged: bool = False

    @property
    def n_epochs(self):
        return len(self.history)


def evaluate_network(network, sentences, batch_size=16):
    preds = network.predict(sentences, batch_size=batch_size)
    golds = [s.tags for s in sentences]
    return error_rate(preds, golds, network.vocabs.tags, network.config.tagset)


def write_metrics_csv(path, history, config_echo=None):
    """Metrics CSV with the effective configuration echoed as comments."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in (config_echo or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write("epoch,train_loss,dev_error,seconds\n")
        for row in history:
            fh.write(f"{row.epoch},{row.train_loss:.6f},{row.dev_error:.4f},"
                     f"{row.seconds:.3f}\n")


def fit(network, train_sentences, dev_sentences, cfg, rng, log_path=None,
        config_echo=None, verbose=False, target_dev_error=None):
    """Train until dev error stops improving or ``max_epochs`` is reached.

    The network is left holding the best-epoch weights.  A non-finite loss
    aborts the epoch loop and also restores the best weights seen so far.
    ``target_dev_error`` optionally stops as soon as the dev error falls
    below a threshold (useful for overfitting checks and demos).
    """
    if not dev_sentences:
        raise ValueError("early stopping needs a nonempty dev set")
    params = network.params
    pretrained = network._pretrained_lookup()

    history = []
    best_error = np.inf
    best_epoch = -1
    best_weights = None
    wait = 0
    diverged = False

    for epoch in range(cfg.max_epochs):
        start = time.monotonic()
        lr = lr_at_epoch(cfg.base_lr, epoch, cfg.lr_halving_period)
        loss_sum = 0.0
        token_sum = 0
        for sents in make_batches(train_sentences, cfg.batch_size, rng):
            batch = prepare_batch(sents, network.vocabs, pretrained=pretrained,
                                  train=True, rng=rng)
            out = network.forward_batch(batch, train=True, rng=rng)
            loss_val = out.loss.item()
            if not np.isfinite(loss_val):
                diverged = True
                break
            params.zero_grads()
            mul(out.loss, 1.0 / out.token_count).backward()
            clip_gradients(params, cfg.grad_clip_norm)
            rmsprop_update(params, lr, cfg.rms_decay, cfg.rms_eps)
            loss_sum += loss_val
            token_sum += out.token_count
        if diverged:
            break

        dev_error = evaluate_network(network, dev_sentences, cfg.batch_size).error_rate
        metrics = EpochMetrics(epoch=epoch, train_loss=loss_sum / token_sum,
                               dev_error=dev_error,
                               seconds=time.monotonic() - start)
        history.append(metrics)
        if verbose:
            print(f"epoch {epoch}: lr {lr:g} train_loss {metrics.train_loss:.4f} "
                  f"dev_error {dev_error:.2f}%")

        if dev_error < best_error:
            best_error = dev_error
            best_epoch = epoch
            best_weights = {name: t.data.copy() for name, t in params.items()}
            wait = 0
        else:
            wait += 1
            if wait > cfg.patience:
                break
        if target_dev_error is not None and dev_error < target_dev_error:
            break

    if best_weights is not None:
        for name, t in params.items():
            t.data[...] = best_weights[name]
    if log_path is not None:
        write_metrics_csv(log_path, history, config_echo)
    return FitResult(history=history, best_epoch=best_epoch,
                     best_dev_error=float(best_error), diverged=diverged)


def train_model(model_config, train_config, train_sentences, dev_sentences,
                pretrained=None, log_path=None, verbose=False,
                target_dev_error=None):
    """Build vocabularies and a network from the seed, then fit.

    Returns (network, fit_result); determinism is complete given
    (seed, data, configs)."""
    rng = np.random.default_rng(train_config.seed)
    vocabs = build_vocabularies(train_sentences, model_config.tagset)
    network = TaggerNetwork(model_config, vocabs, rng, pretrained=pretrained)
    echo = _config_echo(model_config, train_config)
    result = fit(network, train_sentences, dev_sentences, train_config, rng,
                 log_path=log_path, config_echo=echo, verbose=verbose,
                 target_dev_error=target_dev_error)
    return network, result


def _config_echo(model_config, train_config):
    echo = {}
    for key, value in model_config.to_dict().items():
        if key == "encoder":
            for ek, ev in value.items():
                echo[f"encoder.{ek}"] = ev
        else:
            echo[key] = value
    for key, value in train_config.to_dict().items():
        echo[f"train.{key}"] = value
    return echo


def gradcheck_model(model_config, sentences, eps=1e-4, seed=0,
                    max_coords_per_tensor=8, param_scale=0.5):
    """Finite-difference check of the full loss in float64.

    Dropout is disabled (eval-mode forward).  Parameters are re-randomized
    uniformly in +-param_scale: production-scale init leaves some deep
    gradients below what central differences can resolve, while healthy
    magnitudes exercise every nonlinearity.  Returns (max_rel_err,
    {param_name: err}) so failures can name the worst parameter."""
    rng = np.random.default_rng(seed)
    vocabs = build_vocabularies(sentences, model_config.tagset)
    network = TaggerNetwork(model_config, vocabs, rng, dtype=np.float64)
    for _, tensor in network.params.items():
        tensor.data[...] = rng.uniform(-param_scale, param_scale,
                                       size=tensor.data.shape)
    batch = prepare_batch(sentences, vocabs)

    def objective(_params):
        return network.forward_batch(batch, train=False).loss

    return grad_check(objective, network.params, eps=eps,
                      rng=np.random.default_rng(seed + 1),
                      max_coords_per_tensor=max_coords_per_tensor, details=True)
