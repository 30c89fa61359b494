"""Byte-pair-encoding subwords: learn merges, apply them, build vocabularies.

Merges are learned once over the union of source and target corpora so both
languages share a single segmentation. Non-final pieces of a word carry a
continuation marker ("@@" by default); stripping markers and concatenating
pieces always reproduces the original word.
"""

from __future__ import annotations

import logging
from collections import Counter, defaultdict
from typing import Iterable, Mapping, Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)

MERGE_FILE_HEADER = "nmtpipe-bpe 1"
BPE_MARKER = "@@"

SPECIALS = ("<pad>", "<unk>", "<s>", "<eos>")
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3


def count_words(corpus: Iterable[Sequence[str]]) -> Counter:
    """Word-frequency map over a tokenized corpus."""
    freqs: Counter = Counter()
    for sent in corpus:
        freqs.update(sent)
    return freqs


def _pair_stats(words: list[tuple[list[str], int]]):
    pairs: Counter = Counter()
    where: defaultdict = defaultdict(set)
    for idx, (symbols, freq) in enumerate(words):
        for a, b in zip(symbols, symbols[1:]):
            pairs[(a, b)] += freq
            where[(a, b)].add(idx)
    return pairs, where


def _merge_word(symbols: list[str], pair: tuple[str, str]) -> list[str]:
    # Merge all non-overlapping occurrences, left to right.
    a, b = pair
    out: list[str] = []
    i = 0
    while i < len(symbols):
        if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(symbols[i])
            i += 1
    return out


def learn_bpe(word_freqs: Mapping[str, int], num_merges: int) -> list[tuple[str, str]]:
    """Learn a merge table from a word-frequency map.

    At every step the globally most frequent adjacent symbol pair is merged,
    frequency weighted by word counts; ties break lexicographically on
    (left, right). Words start as plain character sequences. Stops early when
    no adjacent pair is left.
    """
    if num_merges < 0:
        raise ConfigError("num_merges must be >= 0")
    for w in word_freqs:
        if not w:
            raise DataError("empty word in frequency map")

    words = [(list(word), int(freq)) for word, freq in word_freqs.items() if freq > 0]
    pairs, where = _pair_stats(words)
    merges: list[tuple[str, str]] = []
    for _ in range(num_merges):
        if not pairs:
            break
        best = min(pairs.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        if pairs[best] < 1:
            break
        merges.append(best)
        # Incremental update: rewrite only the words containing the pair.
        for idx in list(where[best]):
            symbols, freq = words[idx]
            for a, b in zip(symbols, symbols[1:]):
                pairs[(a, b)] -= freq
                if pairs[(a, b)] <= 0:
                    del pairs[(a, b)]
                where[(a, b)].discard(idx)
            merged = _merge_word(symbols, best)
            words[idx] = (merged, freq)
            for a, b in zip(merged, merged[1:]):
                pairs[(a, b)] += freq
                where[(a, b)].add(idx)
    return merges


def apply_bpe(
    token: str,
    merges: Sequence[tuple[str, str]],
    marker: str = BPE_MARKER,
    _ranks: Mapping[tuple[str, str], int] | None = None,
) -> list[str]:
    """Segment one token with a learned merge table.

    Merges apply in table order until none applies. All pieces except the
    last carry the continuation marker. The marker string is reserved: it
    must not occur inside tokens.
    """
    if marker in token:
        raise DataError(f"token {token!r} contains the reserved marker {marker!r}")
    ranks = _ranks if _ranks is not None else {p: i for i, p in enumerate(merges)}
    symbols = list(token)
    while len(symbols) > 1:
        candidates = [
            (ranks[p], p)
            for p in set(zip(symbols, symbols[1:]))
            if p in ranks
        ]
        if not candidates:
            break
        _, pair = min(candidates)
        symbols = _merge_word(symbols, pair)
    return [s + marker for s in symbols[:-1]] + symbols[-1:]


def revert_bpe(pieces: Sequence[str], marker: str = BPE_MARKER) -> list[str]:
    """Join subword pieces back into tokens (inverse of :func:`apply_bpe`).

    A dangling continuation marker at the end of the sequence is flagged via
    a warning; the accumulated content is emitted without it.
    """
    out: list[str] = []
    buffer = ""
    open_word = False
    for piece in pieces:
        if piece.endswith(marker):
            buffer += piece[: -len(marker)]
            open_word = True
        else:
            out.append(buffer + piece)
            buffer = ""
            open_word = False
    if open_word:
        log.warning("dangling continuation marker at sequence end")
        if buffer:
            out.append(buffer)
    return out


def save_merges(merges: Sequence[tuple[str, str]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MERGE_FILE_HEADER + "\n")
        for left, right in merges:
            fh.write(f"{left} {right}\n")


def load_merges(path) -> list[tuple[str, str]]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != MERGE_FILE_HEADER:
            raise DataError(f"unrecognized merge file header: {header!r}")
        merges = []
        for lineno, line in enumerate(fh, start=2):
            fields = line.rstrip("\n").split(" ")
            if len(fields) != 2:
                raise DataError(f"malformed merge at line {lineno}")
            merges.append((fields[0], fields[1]))
    return merges


class Vocabulary:
    """Dense symbol <-> id mapping with reserved specials at ids 0..3."""

    def __init__(self, symbols: Sequence[str]):
        self._itos = list(SPECIALS) + [s for s in symbols if s not in SPECIALS]
        self._stoi = {s: i for i, s in enumerate(self._itos)}
        if len(self._stoi) != len(self._itos):
            raise DataError("duplicate symbol in vocabulary")

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._stoi

    def id(self, symbol: str) -> int:
        return self._stoi.get(symbol, UNK_ID)

    def symbol(self, idx: int) -> str:
        return self._itos[idx]

    def encode(self, pieces: Sequence[str]) -> list[int]:
        return [self.id(p) for p in pieces]

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self._itos[i] for i in ids]

    def symbols(self) -> list[str]:
        return list(self._itos)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for s in self._itos:
                fh.write(s + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            symbols = [line.rstrip("\n") for line in fh]
        if symbols[: len(SPECIALS)] != list(SPECIALS):
            raise DataError("vocabulary file does not start with the reserved specials")
        return cls(symbols[len(SPECIALS) :])


def build_vocab(bpe_corpus: Iterable[Sequence[str]], size: int) -> Vocabulary:
    """Top-`size` symbols by frequency plus the reserved specials.

    Ties break lexicographically (smaller symbol gets the lower id). Symbols
    colliding with a reserved special are skipped.
    """
    if size < len(SPECIALS):
        raise ConfigError(
            f"vocabulary size {size} is smaller than the {len(SPECIALS)} reserved specials"
        )
    freqs: Counter = Counter()
    for pieces in bpe_corpus:
        freqs.update(pieces)
    for special in SPECIALS:
        freqs.pop(special, None)
    ranked = sorted(freqs.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([s for s, _ in ranked[:size]])


class BpeEncoder(BaseEstimator, TransformerMixin):
    """Sklearn-style wrapper around merge learning and application.

    ``fit`` learns the merge table from a tokenized corpus (or a word
    frequency map), ``transform`` segments sentences into marked pieces, and
    ``inverse_transform`` restores the original tokens.
    """

    def __init__(self, num_merges=30000, marker=BPE_MARKER):
        self.num_merges = num_merges
        self.marker = marker

    def fit(self, X, y=None):
        if isinstance(X, Mapping):
            freqs = X
        else:
            freqs = count_words(X)
        self.merges_ = learn_bpe(freqs, self.num_merges)
        self._ranks = {p: i for i, p in enumerate(self.merges_)}
        self._cache: dict[str, list[str]] = {}
        return self

    def segment(self, token: str) -> list[str]:
        check_is_fitted(self, "merges_")
        pieces = self._cache.get(token)
        if pieces is None:
            pieces = apply_bpe(token, self.merges_, self.marker, self._ranks)
            self._cache[token] = pieces
        return pieces

    def transform(self, X: Iterable[Sequence[str]]) -> list[list[str]]:
        out = []
        for sent in X:
            pieces: list[str] = []
            for tok in sent:
                pieces.extend(self.segment(tok))
            out.append(pieces)
        return out

    def inverse_transform(self, X: Iterable[Sequence[str]]) -> list[list[str]]:
        return [revert_bpe(sent, self.marker) for sent in X]

    def save(self, path) -> None:
        check_is_fitted(self, "merges_")
        save_merges(self.merges_, path)

    @classmethod
    def from_file(cls, path, marker=BPE_MARKER) -> "BpeEncoder":
        enc = cls(marker=marker)
        enc.merges_ = load_merges(path)
        enc.num_merges = len(enc.merges_)
        enc._ranks = {p: i for i, p in enumerate(enc.merges_)}
        enc._cache = {}
        return enc
