"""Interpolated n-gram language models and per-sentence cross-entropy.

The scoring primitive behind cross-entropy-difference data selection: a
3-gram model with fixed-weight linear interpolation of trigram/bigram/unigram
maximum-likelihood estimates and an additive-one unigram floor over the
vocabulary plus one unknown slot.  All logs are base 2; the per-token
normalization includes the end-of-sentence event.
"""

from __future__ import annotations

import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigError, DataError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

LM_FILE_HEADER = "nmtpipe-lm 1"


@dataclass(frozen=True)
class SentenceScore:
    """Cross-entropy pair for one sentence, in bits per token."""

    h_in: float
    h_out: float

    @property
    def delta(self) -> float:
        return self.h_in - self.h_out


class NGramLanguageModel(BaseEstimator):
    """Fixed-interpolation n-gram model over token sequences.

    ``lambdas`` weight the maximum-likelihood estimates from highest order
    down to unigram.  When a higher-order context is unseen its weight is
    redistributed proportionally over the remaining levels, and the unigram
    level uses the additive-one floor, so probabilities over
    vocab + {<unk>} sum to one for every context and never vanish.
    """

    def __init__(self, order: int = 3, lambdas: Sequence[float] = (0.5, 0.3, 0.2)):
        self.order = order
        self.lambdas = lambdas

    def _validate(self):
        if self.order < 1:
            raise ConfigError("order must be >= 1")
        if len(self.lambdas) != self.order:
            raise ConfigError(
                f"need {self.order} interpolation weights, got {len(self.lambdas)}"
            )
        if any(l < 0 for l in self.lambdas) or abs(sum(self.lambdas) - 1.0) > 1e-9:
            raise ConfigError("interpolation weights must be >= 0 and sum to 1")

    def fit(self, corpus: Iterable[Sequence[str]], y=None):
        self._validate()
        corpus = list(corpus)
        if not corpus:
            raise DataError("cannot train a language model on an empty corpus")
        # counts_[k] maps a length-k context tuple to a Counter of next words;
        # events are the sentence tokens plus one </s> per sentence.
        counts = [defaultdict(Counter) for _ in range(self.order)]
        for sent in corpus:
            padded = [BOS] * (self.order - 1) + list(sent) + [EOS]
            for i in range(self.order - 1, len(padded)):
                word = padded[i]
                for k in range(self.order):
                    ctx = tuple(padded[i - k : i])
                    counts[k][ctx][word] += 1
        self.counts_ = [dict(level) for level in counts]
        self.context_totals_ = [
            {ctx: sum(c.values()) for ctx, c in level.items()} for level in self.counts_
        ]
        self.vocab_ = set(self.counts_[0][()].keys())
        self.n_events_ = self.context_totals_[0][()]
        # Additive-one floor denominator: every vocab word plus one <unk> slot.
        self.floor_denom_ = self.n_events_ + len(self.vocab_) + 1
        return self

    # --- probabilities ----------------------------------------------------

    def _floor_prob(self, word: str) -> float:
        count = self.counts_[0][()].get(word, 0)
        return (count + 1) / self.floor_denom_

    def prob(self, word: str, context: Sequence[str]) -> float:
        """Interpolated probability of `word` after `context`."""
        check_is_fitted(self, "counts_")
        word = self._map(word)
        ctx = [self._map(w) for w in context][-max(self.order - 1, 0) :]
        ctx = [BOS] * (self.order - 1 - len(ctx)) + ctx
        weights = []
        probs = []
        for k in range(self.order - 1, 0, -1):
            key = tuple(ctx[len(ctx) - k :])
            total = self.context_totals_[k].get(key, 0)
            if total > 0:
                weights.append(self.lambdas[self.order - 1 - k])
                probs.append(self.counts_[k][key].get(word, 0) / total)
        weights.append(self.lambdas[-1])
        probs.append(self._floor_prob(word))
        total_weight = sum(weights)
        if total_weight <= 0:
            return self._floor_prob(word)
        return sum(w * p for w, p in zip(weights, probs)) / total_weight

    def _map(self, word: str) -> str:
        # <s> is context-only: it never occurs as an event, so it must not
        # collapse to <unk> when it appears in a query context.
        if word == BOS or word in self.vocab_:
            return word
        return UNK

    def cross_entropy(self, sentence: Sequence[str]) -> float:
        """Bits per token, including the end-of-sentence event."""
        check_is_fitted(self, "counts_")
        if not sentence:
            raise DataError("cannot score an empty sentence")
        padded = [BOS] * (self.order - 1) + [self._map(w) for w in sentence] + [EOS]
        total = 0.0
        for i in range(self.order - 1, len(padded)):
            p = self.prob(padded[i], padded[max(0, i - self.order + 1) : i])
            total -= math.log2(p)
        return total / (len(sentence) + 1)

    def perplexity(self, corpus: Iterable[Sequence[str]]) -> float:
        sents = list(corpus)
        if not sents:
            raise DataError("empty corpus")
        bits = sum(self.cross_entropy(s) * (len(s) + 1) for s in sents)
        events = sum(len(s) + 1 for s in sents)
        return 2.0 ** (bits / events)

    # --- persistence --------------------------------------------------------

    def save(self, path) -> None:
        check_is_fitted(self, "counts_")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(LM_FILE_HEADER + "\n")
            fh.write(f"order\t{self.order}\n")
            fh.write("lambdas\t" + " ".join(repr(float(l)) for l in self.lambdas) + "\n")
            fh.write(f"vocab\t{len(self.vocab_)}\n")
            rows = []
            for k, level in enumerate(self.counts_):
                for ctx, words in level.items():
                    for word, count in words.items():
                        rows.append((k + 1, ctx + (word,), count))
            rows.sort(key=lambda r: (r[0], r[1]))
            for _, ngram, count in rows:
                fh.write(" ".join(ngram) + "\t" + str(count) + "\n")

    @classmethod
    def load(cls, path) -> "NGramLanguageModel":
        with open(path, encoding="utf-8") as fh:
            if fh.readline().rstrip("\n") != LM_FILE_HEADER:
                raise DataError("unrecognized language model file header")
            order = int(fh.readline().split("\t")[1])
            lambdas = tuple(float(x) for x in fh.readline().split("\t")[1].split())
            vocab_size = int(fh.readline().split("\t")[1])
            model = cls(order=order, lambdas=lambdas)
            counts = [defaultdict(Counter) for _ in range(order)]
            for line in fh:
                ngram_text, count_text = line.rstrip("\n").split("\t")
                ngram = tuple(ngram_text.split(" "))
                counts[len(ngram) - 1][ngram[:-1]][ngram[-1]] += int(count_text)
        model.counts_ = [dict(level) for level in counts]
        model.context_totals_ = [
            {ctx: sum(c.values()) for ctx, c in level.items()} for level in model.counts_
        ]
        model.vocab_ = set(model.counts_[0][()].keys())
        model.n_events_ = model.context_totals_[0][()]
        model.floor_denom_ = model.n_events_ + len(model.vocab_) + 1
        if len(model.vocab_) != vocab_size:
            raise DataError("vocabulary size in header does not match stored counts")
        return model


def train_lm(corpus: Iterable[Sequence[str]], order: int = 3, **kwargs) -> NGramLanguageModel:
    """Train an interpolated n-gram model (see :class:`NGramLanguageModel`)."""
    return NGramLanguageModel(order=order, **kwargs).fit(corpus)


def cross_entropy(model: NGramLanguageModel, sentence: Sequence[str]) -> float:
    return model.cross_entropy(sentence)


def sample_corpus(corpus: Sequence, n: int, seed: int) -> list:
    """Uniform sample of n sentences without replacement, seed-reproducible."""
    if n > len(corpus):
        raise DataError(f"cannot sample {n} sentences from a corpus of {len(corpus)}")
    return random.Random(seed).sample(list(corpus), n)
