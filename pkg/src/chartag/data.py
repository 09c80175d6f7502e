"""Corpus and embedding ingestion, vocabularies, batching.

Corpus files are UTF-8 TSV, one token per line as ``form<TAB>POS<TAB>MORPH``
with blank lines separating sentences.  A MORPH field of ``_`` means no
morphological features.  All forms are lowercased on load.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

TAGSETS = ("pos", "morph", "posmorph")

PAD_CHAR = "<pad>"
UNK_CHAR = "<unk>"
UNK_WORD = "<unk>"


class CorpusError(ValueError):
    """Malformed corpus or embedding file; message carries the line number."""


@dataclass
class Sentence:
    words: list
    tags: list

    def __post_init__(self):
        if len(self.words) != len(self.tags) or not self.words:
            raise CorpusError("sentence needs equal, nonzero words and tags")

    def __len__(self):
        return len(self.words)


def _project_tag(pos, morph, tagset):
    if tagset == "pos":
        return pos
    if tagset == "morph":
        return morph
    return pos + "|" + morph


def load_corpus(path, tagset):
    """Read a TSV corpus for one tag set; forms are lowercased."""
    if tagset not in TAGSETS:
        raise CorpusError(f"unknown tag set {tagset!r}, expected one of {TAGSETS}")
    sentences = []
    words, tags = [], []
    with open(path, encoding="utf-8") as fh:
        lineno = 0
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                if not words:
                    raise CorpusError(f"{path}:{lineno}: empty sentence")
                sentences.append(Sentence(words, tags))
                words, tags = [], []
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise CorpusError(
                    f"{path}:{lineno}: expected 3 tab-separated columns, got {len(cols)}")
            form, pos, morph = cols
            if not form:
                raise CorpusError(f"{path}:{lineno}: empty token form")
            words.append(form.lower())
            tags.append(_project_tag(pos, morph, tagset))
    if words:
        sentences.append(Sentence(words, tags))
    return sentences


def write_corpus(sentences, path, tagset):
    """Write sentences back to TSV; unknown columns are filled with ``_``."""
    if tagset not in TAGSETS:
        raise CorpusError(f"unknown tag set {tagset!r}, expected one of {TAGSETS}")
    with open(path, "w", encoding="utf-8") as fh:
        for sent in sentences:
            for form, tag in zip(sent.words, sent.tags):
                if tagset == "pos":
                    pos, morph = tag, "_"
                elif tagset == "morph":
                    pos, morph = "_", tag
                else:
                    pos, _, morph = tag.partition("|")
                fh.write(f"{form}\t{pos}\t{morph}\n")
            fh.write("\n")


class Vocab:
    """Immutable symbol <-> id mapping with deterministic ordering."""

    def __init__(self, symbols):
        self.symbols = list(symbols)
        self._index = {s: i for i, s in enumerate(self.symbols)}
        if len(self._index) != len(self.symbols):
            raise ValueError("duplicate symbols in vocabulary")

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, symbol):
        return symbol in self._index

    def id(self, symbol):
        return self._index[symbol]

    def get(self, symbol, default):
        return self._index.get(symbol, default)

    def symbol(self, idx):
        return self.symbols[idx]


@dataclass
class Vocabularies:
    chars: Vocab
    words: Vocab
    tags: Vocab
    tagset: str
    # char ids occurring exactly once in training; stochastically replaced
    # by UNK during training so the UNK embedding gets trained
    singleton_chars: frozenset = field(default_factory=frozenset)

    @property
    def pad_char_id(self):
        return self.chars.id(PAD_CHAR)

    @property
    def unk_char_id(self):
        return self.chars.id(UNK_CHAR)

    @property
    def unk_word_id(self):
        return self.words.id(UNK_WORD)

    def char_ids(self, word):
        unk = self.unk_char_id
        return [self.chars.get(ch, unk) for ch in word]


def build_vocabularies(train, tagset):
    """Derive char/word/tag vocabularies from the training split only.

    Ids are deterministic: reserved symbols first, the rest sorted.
    Tags seen only at test time are never added; evaluation scores them
    as errors.
    """
    if not train:
        raise ValueError("empty training set")
    char_counts = {}
    word_set = set()
    tag_set = set()
    for sent in train:
        for word, tag in zip(sent.words, sent.tags):
            word_set.add(word)
            tag_set.add(tag)
            for ch in word:
                char_counts[ch] = char_counts.get(ch, 0) + 1
    chars = Vocab([PAD_CHAR, UNK_CHAR] + sorted(set(char_counts) - {PAD_CHAR, UNK_CHAR}))
    words = Vocab([UNK_WORD] + sorted(word_set - {UNK_WORD}))
    tags = Vocab(sorted(tag_set))
    singletons = frozenset(
        chars.id(ch) for ch, n in char_counts.items() if n == 1 and ch in chars)
    return Vocabularies(chars=chars, words=words, tags=tags, tagset=tagset,
                        singleton_chars=singletons)


@dataclass
class CoverageReport:
    """Fraction of test tokens by training-occurrence bucket."""
    unseen: float
    rare: float       # 1-4 training occurrences
    frequent: float   # >= 5

    def as_csv(self):
        return "bucket,fraction\n0,%.6f\n1-4,%.6f\n>=5,%.6f\n" % (
            self.unseen, self.rare, self.frequent)


def coverage_report(train, test):
    """Bucket test tokens by how often their form occurred in training."""
    counts = {}
    for sent in train:
        for w in sent.words:
            counts[w] = counts.get(w, 0) + 1
    total = unseen = rare = 0
    for sent in test:
        for w in sent.words:
            total += 1
            n = counts.get(w, 0)
            if n == 0:
                unseen += 1
            elif n < 5:
                rare += 1
    if total == 0:
        raise ValueError("empty test split")
    frequent = total - unseen - rare
    return CoverageReport(unseen / total, rare / total, frequent / total)


class EmbeddingTable:
    """Pre-trained word vectors with a mean-vector UNK fallback row."""

    def __init__(self, words, matrix, mode):
        if mode not in ("fixed", "finetuned"):
            raise ValueError(f"unknown embedding mode {mode!r}")
        self.words = list(words)
        self.dim = matrix.shape[1]
        self.mode = mode
        # row len(words) is the UNK vector (mean of all loaded rows)
        if matrix.shape[0] == len(self.words):
            unk = matrix.mean(axis=0, keepdims=True)
            matrix = np.concatenate([matrix, unk], axis=0)
        elif matrix.shape[0] != len(self.words) + 1:
            raise ValueError("embedding matrix rows disagree with word list")
        self.matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        self._index = {w: i for i, w in enumerate(self.words)}

    @property
    def unk_id(self):
        return len(self.words)

    def __len__(self):
        return len(self.words)

    def row_id(self, word):
        return self._index.get(word, self.unk_id)

    def vector(self, word):
        return self.matrix[self.row_id(word)]


def load_embeddings(path, mode):
    """Load word2vec text format: header "V d", then "word v1 ... vd" lines.

    Duplicate words keep the first occurrence (with a warning).
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise CorpusError(f"{path}:1: expected header 'V d'")
        try:
            count, dim = int(header[0]), int(header[1])
        except ValueError as exc:
            raise CorpusError(f"{path}:1: non-integer header fields") from exc
        if count < 1 or dim < 1:
            raise CorpusError(f"{path}:1: header values must be positive")
        words = []
        rows = []
        seen = set()
        for lineno in range(2, count + 2):
            line = fh.readline()
            if not line:
                raise CorpusError(f"{path}:{lineno}: fewer vectors than header declares")
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise CorpusError(
                    f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            word = parts[0]
            if word in seen:
                warnings.warn(f"{path}:{lineno}: duplicate word {word!r}, keeping first")
                continue
            try:
                vec = np.array([float(v) for v in parts[1:]], dtype=np.float32)
            except ValueError as exc:
                raise CorpusError(f"{path}:{lineno}: non-numeric value") from exc
            seen.add(word)
            words.append(word)
            rows.append(vec)
    return EmbeddingTable(words, np.stack(rows), mode)


@dataclass
class Batch:
    """Sentences prepared for one network pass.

    The flat word list visits real (sentence, position) slots in row-major
    order; ``word_slots[s, n]`` indexes into it, with padding slots pointing
    one past the end (the network appends a zero row there).
    """
    sentences: list
    lengths: np.ndarray         # (S,)
    mask: np.ndarray            # (S, N) float32, 1 for real tokens
    gold: np.ndarray            # (S, N) int, -1 for padding/unknown tags
    word_slots: np.ndarray      # (S, N) int into the flat word list
    char_ids: list              # per flat word: list of char ids
    word_ids: np.ndarray        # (W,) train-vocab word ids
    pre_ids: np.ndarray | None  # (W,) pretrained-table row ids

    @property
    def size(self):
        return len(self.sentences)

    @property
    def max_len(self):
        return int(self.lengths.max())

    @property
    def n_words(self):
        return len(self.char_ids)

    @property
    def token_count(self):
        return int(self.lengths.sum())


def prepare_batch(sentences, vocabs, pretrained=None, train=False, rng=None):
    """Map sentences to id arrays for the network.

    In training mode, singleton characters are replaced by UNK with
    probability 0.5 per occurrence so the UNK row sees gradients.
    """
    n_sent = len(sentences)
    max_len = max(len(s) for s in sentences)
    lengths = np.array([len(s) for s in sentences], dtype=np.intp)
    mask = np.zeros((n_sent, max_len), dtype=np.float32)
    gold = np.full((n_sent, max_len), -1, dtype=np.intp)
    word_slots = np.full((n_sent, max_len), 0, dtype=np.intp)

    char_ids = []
    word_ids = []
    pre_ids = [] if pretrained is not None else None
    unk_char = vocabs.unk_char_id
    singles = vocabs.singleton_chars
    replace = train and rng is not None and singles

    slot = 0
    for s, sent in enumerate(sentences):
        for n, (word, tag) in enumerate(zip(sent.words, sent.tags)):
            mask[s, n] = 1.0
            gold[s, n] = vocabs.tags.get(tag, -1)
            word_slots[s, n] = slot
            ids = vocabs.char_ids(word)
            if replace:
                ids = [unk_char if c in singles and rng.random() < 0.5 else c
                       for c in ids]
            char_ids.append(ids)
            word_ids.append(vocabs.words.get(word, vocabs.unk_word_id))
            if pre_ids is not None:
                pre_ids.append(pretrained.row_id(word))
            slot += 1
    # padding slots point at the appended zero row
    word_slots[mask == 0.0] = slot
    return Batch(
        sentences=list(sentences),
        lengths=lengths,
        mask=mask,
        gold=gold,
        word_slots=word_slots,
        char_ids=char_ids,
        word_ids=np.array(word_ids, dtype=np.intp),
        pre_ids=None if pre_ids is None else np.array(pre_ids, dtype=np.intp),
    )


def make_batches(sentences, batch_size, rng=None):
    """Shuffle (when an rng is given) and split into batches; the final
    short batch is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    order = np.arange(len(sentences))
    if rng is not None:
        rng.shuffle(order)
    return [[sentences[i] for i in order[lo:lo + batch_size]]
            for lo in range(0, len(order), batch_size)]
