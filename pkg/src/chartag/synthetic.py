"""Synthetic agglutinative corpus for end-to-end checks and demos.

Words are stem + suffix chains: nominals take a number suffix then a case
suffix, verbs a tense suffix then a person suffix.  Stems only use
consonants {k,m,p,r,s,v} and vowels {o,u} while suffixes only use
{a,e,i,l,n,t}, so segmentation is unambiguous and every tag is fully
determined by the suffix and the sentence position.  Character-level
models can therefore generalize to unseen stems, while word-level lookup
cannot - the property the test split (drawn mostly from held-out stems)
probes.

The tag inventory is exactly 40 POSMORPH tags: 8 noun, 8 adjective and
8 determiner case/number combinations, 6 verb tense/person combinations,
6 pronoun number/person combinations, and 4 featureless tags (ADV, CONJ,
NUM, PUNCT).
"""

from __future__ import annotations

import zlib

import numpy as np

from .data import Sentence, _project_tag

_CASES = (("nom", ""), ("acc", "ta"), ("dat", "lle"), ("gen", "n"))
_NUMBERS = (("sg", ""), ("pl", "it"))
_TENSES = (("pres", "a"), ("past", "i"))
_PERSONS = (("1", "n"), ("2", "t"), ("3", ""))

_STEM_CONSONANTS = "kmprsv"
_STEM_VOWELS = "ou"

_DET_STEMS = ("ku", "mo")
_PRONOUNS = {("sg", "1"): "ma", ("pl", "1"): "me",
             ("sg", "2"): "sa", ("pl", "2"): "se",
             ("sg", "3"): "ha", ("pl", "3"): "he"}
_ADVERBS = ("heti", "aina", "pian")
_CONJ = "ja"
_NUMERALS = ("3", "7", "12")
_PUNCT = (".", "!")


def _nominal(stem, case, number):
    return stem + dict(_NUMBERS)[number] + dict(_CASES)[case]


def _verb(stem, tense, person):
    return stem + dict(_TENSES)[tense] + dict(_PERSONS)[person]


def _morph_nominal(case, number):
    return f"case={case}|num={number}"


def _morph_verb(tense, person):
    return f"tense={tense}|person={person}"


def _make_stems(rng, count, used):
    stems = []
    while len(stems) < count:
        n_syl = int(rng.integers(2, 4))
        stem = "".join(rng.choice(list(_STEM_CONSONANTS)) + rng.choice(list(_STEM_VOWELS))
                       for _ in range(n_syl))
        if stem not in used:
            used.add(stem)
            stems.append(stem)
    return stems


class _Grammar:
    def __init__(self, rng):
        used = set()
        self.noun_train = _make_stems(rng, 30, used)
        self.noun_test = _make_stems(rng, 20, used)
        self.adj_train = _make_stems(rng, 12, used)
        self.adj_test = _make_stems(rng, 8, used)
        self.verb_train = _make_stems(rng, 15, used)
        self.verb_test = _make_stems(rng, 10, used)

    def pick(self, rng, train_pool, test_pool, oov_prob):
        if oov_prob > 0 and rng.random() < oov_prob:
            return test_pool[int(rng.integers(len(test_pool)))]
        return train_pool[int(rng.integers(len(train_pool)))]


def _sentence(rng, grammar, oov_prob):
    """One raw sentence: a list of (form, pos, morph) triples."""
    def case():
        return _CASES[int(rng.integers(len(_CASES)))][0]

    def number():
        return _NUMBERS[int(rng.integers(len(_NUMBERS)))][0]

    def tense():
        return _TENSES[int(rng.integers(len(_TENSES)))][0]

    def noun(c, n):
        stem = grammar.pick(rng, grammar.noun_train, grammar.noun_test, oov_prob)
        return (_nominal(stem, c, n), "NOUN", _morph_nominal(c, n))

    def adj(c, n):
        stem = grammar.pick(rng, grammar.adj_train, grammar.adj_test, oov_prob)
        return (_nominal(stem, c, n), "ADJ", _morph_nominal(c, n))

    def det(c, n):
        stem = _DET_STEMS[int(rng.integers(len(_DET_STEMS)))]
        return (_nominal(stem, c, n), "DET", _morph_nominal(c, n))

    def verb(t, p):
        stem = grammar.pick(rng, grammar.verb_train, grammar.verb_test, oov_prob)
        return (_verb(stem, t, p), "VERB", _morph_verb(t, p))

    def punct():
        return (_PUNCT[int(rng.integers(len(_PUNCT)))], "PUNCT", "_")

    template = int(rng.integers(4))
    tokens = []
    if template == 0:
        c1, n1, c2, n2 = case(), number(), case(), number()
        tokens.append(det(c1, n1))
        if rng.random() < 0.5:
            tokens.append(adj(c1, n1))
        tokens.append(noun(c1, n1))
        tokens.append(verb(tense(), "3"))
        tokens.append(det(c2, n2))
        tokens.append(noun(c2, n2))
    elif template == 1:
        n1, p = number(), _PERSONS[int(rng.integers(len(_PERSONS)))][0]
        tokens.append((_PRONOUNS[(n1, p)], "PRON", f"num={n1}|person={p}"))
        tokens.append(verb(tense(), p))
        tokens.append((_ADVERBS[int(rng.integers(len(_ADVERBS)))], "ADV", "_"))
        tokens.append(noun(case(), number()))
    elif template == 2:
        n1, n2, n3 = number(), number(), number()
        tokens.append(noun("nom", n1))
        tokens.append((_CONJ, "CONJ", "_"))
        tokens.append(noun("nom", n2))
        tokens.append(verb(tense(), "3"))
        tokens.append((_NUMERALS[int(rng.integers(len(_NUMERALS)))], "NUM", "_"))
        tokens.append(noun(case(), n3))
    else:
        c1, n1 = case(), number()
        tokens.append((_ADVERBS[int(rng.integers(len(_ADVERBS)))], "ADV", "_"))
        tokens.append(verb(tense(), "3"))
        tokens.append(det(c1, n1))
        tokens.append(noun(c1, n1))
    tokens.append(punct())
    return tokens


def generate_corpus(n_train=500, n_dev=100, n_test=200, seed=0,
                    test_oov_stem_prob=0.9):
    """Raw (train, dev, test) splits; test draws open-class stems from a
    held-out pool with the given probability."""
    rng = np.random.default_rng(seed)
    grammar = _Grammar(rng)
    train = [_sentence(rng, grammar, 0.0) for _ in range(n_train)]
    dev = [_sentence(rng, grammar, 0.0) for _ in range(n_dev)]
    test = [_sentence(rng, grammar, test_oov_stem_prob) for _ in range(n_test)]
    return train, dev, test


def to_sentences(raw_sentences, tagset):
    return [Sentence([form for form, _, _ in sent],
                     [_project_tag(pos, morph, tagset) for _, pos, morph in sent])
            for sent in raw_sentences]


def write_tsv(raw_sentences, path):
    with open(path, "w", encoding="utf-8") as fh:
        for sent in raw_sentences:
            for form, pos, morph in sent:
                fh.write(f"{form}\t{pos}\t{morph}\n")
            fh.write("\n")


def write_embeddings(path, raw_corpora, dim=16, seed=0):
    """Write informative word2vec-text vectors for every form seen in the
    given raw corpora: a shared pattern per tag plus stem-specific noise."""
    rng = np.random.default_rng(seed)
    form_tag = {}
    for corpus in raw_corpora:
        for sent in corpus:
            for form, pos, morph in sent:
                form_tag.setdefault(form, f"{pos}|{morph}")
    tag_vecs = {}
    for tag in sorted(set(form_tag.values())):
        tag_vecs[tag] = rng.normal(0.0, 1.0, size=dim)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(form_tag)} {dim}\n")
        for form in sorted(form_tag):
            noise_rng = np.random.default_rng(zlib.crc32(form.encode("utf-8")))
            vec = tag_vecs[form_tag[form]] + 0.1 * noise_rng.normal(0.0, 1.0, size=dim)
            values = " ".join(f"{v:.5f}" for v in vec)
            fh.write(f"{form} {values}\n")
