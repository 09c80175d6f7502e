"""Checkpoint directory format.

A checkpoint is a directory holding:

* ``manifest.json`` - format version, model and train configs, vocab file
  names, and a tensor index (name, shape, element offset) into the blob;
* ``weights.bin`` - all parameter tensors as little-endian float32,
  concatenated in parameter-store order;
* ``chars.tsv`` / ``words.tsv`` / ``tags.tsv`` - vocabularies as
  ``id<TAB>symbol`` lines;
* ``pretrained_words.tsv`` - only when the model uses pre-trained
  embeddings (their vectors live in the blob like any other tensor).

Saving a freshly loaded checkpoint reproduces every byte.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .data import EmbeddingTable, Vocab, Vocabularies
from .model import ModelConfig, TaggerNetwork
from .training import TrainConfig

FORMAT_VERSION = 1

_VOCAB_FILES = {"chars": "chars.tsv", "words": "words.tsv", "tags": "tags.tsv"}
_PRETRAINED_FILE = "pretrained_words.tsv"


class CheckpointError(ValueError):
    pass


def _write_vocab(path, symbols):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for i, symbol in enumerate(symbols):
            fh.write(f"{i}\t{symbol}\n")


def _read_vocab(path):
    symbols = []
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh):
            idx, _, symbol = line.rstrip("\n").partition("\t")
            if int(idx) != lineno:
                raise CheckpointError(f"{path}: non-contiguous ids")
            symbols.append(symbol)
    return symbols


def save_checkpoint(path, network, train_config=None):
    """Serialize a network (and optionally its training recipe) to ``path``."""
    os.makedirs(path, exist_ok=True)
    index = []
    offset = 0
    chunks = []
    for name, tensor in network.params.items():
        arr = np.ascontiguousarray(tensor.data, dtype="<f4")
        index.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
        chunks.append(arr.tobytes())

    uses_pretrained = network.config.encoder.pretrained_mode != "none"
    manifest = {
        "format_version": FORMAT_VERSION,
        "model_config": network.config.to_dict(),
        "train_config": None if train_config is None else train_config.to_dict(),
        "vocab_files": dict(_VOCAB_FILES),
        "pretrained_words_file": _PRETRAINED_FILE if uses_pretrained else None,
        "tensors": index,
    }
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2, ensure_ascii=False)
        fh.write("\n")
    with open(os.path.join(path, "weights.bin"), "wb") as fh:
        fh.write(b"".join(chunks))
    vocabs = network.vocabs
    _write_vocab(os.path.join(path, _VOCAB_FILES["chars"]), vocabs.chars.symbols)
    _write_vocab(os.path.join(path, _VOCAB_FILES["words"]), vocabs.words.symbols)
    _write_vocab(os.path.join(path, _VOCAB_FILES["tags"]), vocabs.tags.symbols)
    if uses_pretrained:
        _write_vocab(os.path.join(path, _PRETRAINED_FILE),
                     network.pretrained.words)


@dataclass
class LoadedCheckpoint:
    model_config: ModelConfig
    train_config: TrainConfig | None
    vocabs: Vocabularies
    tensors: dict
    pretrained: EmbeddingTable | None


def load_checkpoint(path):
    manifest_path = os.path.join(path, "manifest.json")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version!r}")

    model_config = ModelConfig.from_dict(manifest["model_config"])
    train_config = (None if manifest["train_config"] is None
                    else TrainConfig.from_dict(manifest["train_config"]))

    blob = np.fromfile(os.path.join(path, "weights.bin"), dtype="<f4")
    tensors = {}
    total = 0
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape))
        if entry["offset"] != total:
            raise CheckpointError("tensor offsets are not contiguous")
        if total + size > blob.size:
            raise CheckpointError("weights blob is shorter than the manifest")
        tensors[entry["name"]] = blob[total:total + size].reshape(shape).copy()
        total += size
    if total != blob.size:
        raise CheckpointError("weights blob length disagrees with manifest")

    files = manifest["vocab_files"]
    vocabs = Vocabularies(
        chars=Vocab(_read_vocab(os.path.join(path, files["chars"]))),
        words=Vocab(_read_vocab(os.path.join(path, files["words"]))),
        tags=Vocab(_read_vocab(os.path.join(path, files["tags"]))),
        tagset=model_config.tagset,
    )

    pretrained = None
    if manifest["pretrained_words_file"] is not None:
        words = _read_vocab(os.path.join(path, manifest["pretrained_words_file"]))
        mode = ("finetuned" if model_config.encoder.pretrained_mode == "finetuned"
                else "fixed")
        pretrained = EmbeddingTable(words, tensors["enc.pretrained"], mode)
    return LoadedCheckpoint(model_config=model_config, train_config=train_config,
                            vocabs=vocabs, tensors=tensors, pretrained=pretrained)


def restore_network(loaded, dtype=np.float32):
    """Rebuild a TaggerNetwork and overwrite its weights from a checkpoint."""
    rng = np.random.default_rng(0)
    network = TaggerNetwork(loaded.model_config, loaded.vocabs, rng,
                            dtype=dtype, pretrained=loaded.pretrained)
    names = network.params.names()
    if names != [e for e in loaded.tensors]:
        raise CheckpointError("checkpoint tensors do not match the architecture")
    for name in names:
        arr = loaded.tensors[name]
        tensor = network.params[name]
        if tuple(arr.shape) != tensor.data.shape:
            raise CheckpointError(f"shape mismatch for {name}")
        tensor.data[...] = arr.astype(dtype)
    return network
