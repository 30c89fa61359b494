"""Tokenization, compound splitting, and case-factor handling.

The network trains on a lowercased vocabulary.  Every token therefore carries
a 5-way case factor (L lowercase, C capitalized, U uppercase, M mixed, N no
letters) so casing can be restored after translation, and German-style
compounds may be split into frequent parts with a reserved join marker so the
split is lossless.
"""

from __future__ import annotations

import logging
import math
import unicodedata
from collections import Counter
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DataError

log = logging.getLogger(__name__)

# Tokenization rule table. Bump the version whenever the splitting behaviour
# changes; tests pin behaviour against it.
TOKENIZER_RULESET = "v1"

CASE_TAGS = ("L", "C", "U", "M", "N")
CASE_TO_ID = {tag: i for i, tag in enumerate(CASE_TAGS)}
ID_TO_CASE = {i: tag for i, tag in enumerate(CASE_TAGS)}

# Suffix marking every non-final part of a split compound. U+2581 cannot occur
# in whitespace-tokenized natural text, which makes joining lossless.
COMPOUND_MARKER = "▁+"


def decode_line(raw: bytes) -> str:
    """Decode one line of UTF-8 bytes, reporting the byte offset on failure."""
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DataError(f"invalid UTF-8 at byte offset {exc.start}") from None


def _is_separable(ch: str) -> bool:
    # Punctuation (P*) and symbols (S*) detach from words; everything else
    # (letters, digits, marks) stays attached.
    return unicodedata.category(ch)[0] in ("P", "S")


def tokenize(text: str) -> list[str]:
    """Split one line into tokens (ruleset v1).

    Splits on whitespace, then repeatedly detaches leading and trailing
    punctuation/symbol characters as their own tokens.  Internal punctuation
    (hyphens, apostrophes, abbreviation dots) is kept, which makes the rules
    idempotent on re-joined output.
    """
    tokens: list[str] = []
    for chunk in text.split():
        lead: list[str] = []
        trail: list[str] = []
        while chunk and _is_separable(chunk[0]):
            lead.append(chunk[0])
            chunk = chunk[1:]
        while chunk and _is_separable(chunk[-1]):
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(lead)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trail))
    return tokens


# --- case factors ---------------------------------------------------------


def _apply_case(lowered: str, tag: str) -> str:
    if tag in ("L", "N", "M"):
        return lowered
    if tag == "U":
        return lowered.upper()
    if tag == "C":
        for i, ch in enumerate(lowered):
            if ch.isalpha():
                return lowered[:i] + ch.upper() + lowered[i + 1 :]
        return lowered
    raise ValueError(f"unknown case tag {tag!r}")


def case_factor(token: str) -> str:
    """Classify a token's casing. Total: every token gets exactly one tag.

    Tokens whose surface cannot be recovered from (lowercase, tag) — e.g.
    exotic Unicode case mappings — are classified M so the L/C/U/N round-trip
    stays exact by construction.
    """
    letters = [ch for ch in token if ch.isalpha()]
    if not letters:
        return "N"
    if all(ch.islower() or not (ch.isupper() or ch.islower()) for ch in letters):
        tag = "L"
    elif all(ch.isupper() for ch in letters) and len(letters) > 1:
        tag = "U"
    elif letters[0].isupper() and all(ch.islower() for ch in letters[1:]):
        tag = "C"
    else:
        return "M"
    if _apply_case(token.lower(), tag) != token:
        return "M"
    return tag


def encode_case(tokens: Sequence[str]) -> tuple[list[str], list[str]]:
    """Lowercase tokens and return the parallel case-factor sequence."""
    factors = [case_factor(tok) for tok in tokens]
    return [tok.lower() for tok in tokens], factors


def decode_case(
    tokens: Sequence[str],
    factors: Sequence[str],
    mixed_surfaces: Iterable[str] | None = None,
) -> list[str]:
    """Invert :func:`encode_case`.

    M tags fall back to lowercase unless the original surfaces are supplied
    via ``mixed_surfaces`` (consumed one per M tag, in order).
    """
    if len(tokens) != len(factors):
        raise ValueError(
            f"case factor length mismatch: {len(tokens)} tokens vs {len(factors)} factors"
        )
    mixed = iter(mixed_surfaces) if mixed_surfaces is not None else None
    out = []
    for tok, tag in zip(tokens, factors):
        if tag == "M" and mixed is not None:
            out.append(next(mixed))
        else:
            out.append(_apply_case(tok, tag))
    return out


# --- compound splitting ----------------------------------------------------


def build_lexicon(corpus: Iterable[Sequence[str]]) -> Counter:
    """Count lowercased word frequencies over a tokenized corpus."""
    lex: Counter = Counter()
    for sent in corpus:
        for tok in sent:
            lex[tok.lower()] += 1
    return lex


def _segmentations(token: str, min_len: int, max_parts: int):
    # All ways to cut `token` into 2..max_parts parts, each at least min_len
    # long, in deterministic order (fewer parts first, then leftmost cuts).
    def cuts(s: str, parts_left: int):
        if parts_left == 1:
            if len(s) >= min_len:
                yield [s]
            return
        for i in range(min_len, len(s) - min_len + 1):
            head = s[:i]
            for rest in cuts(s[i:], parts_left - 1):
                yield [head] + rest

    for n_parts in range(2, max_parts + 1):
        for seg in cuts(token, n_parts):
            if len(seg) == n_parts:
                yield seg


def split_compound(
    token: str,
    lexicon: Counter,
    min_part_len: int = 4,
    max_parts: int = 2,
    marker: str = COMPOUND_MARKER,
) -> list[str]:
    """Split a token into frequent parts when the evidence beats the whole.

    Chooses the segmentation whose geometric-mean lexicon frequency is
    maximal and strictly exceeds the whole-token frequency; otherwise the
    token passes through unsplit.  Non-final parts get the join marker.
    Lookup is lowercased; the surface parts keep their original casing.
    """
    if marker in token:
        return [token]
    whole_freq = lexicon.get(token.lower(), 0)
    best_score = float(whole_freq)
    best_parts: list[str] | None = None
    for parts in _segmentations(token, min_part_len, max_parts):
        freqs = [lexicon.get(p.lower(), 0) for p in parts]
        if any(f < 1 for f in freqs):
            continue
        score = math.exp(sum(math.log(f) for f in freqs) / len(parts))
        if score > best_score:
            best_score = score
            best_parts = parts
    if best_parts is None:
        return [token]
    return [p + marker for p in best_parts[:-1]] + [best_parts[-1]]


def join_compounds(tokens: Sequence[str], marker: str = COMPOUND_MARKER) -> list[str]:
    """Fuse marker-bearing tokens with their successors (inverse of splitting).

    A dangling marker at the end of the sequence is flagged via a warning and
    stripped.
    """
    out: list[str] = []
    buffer = ""
    for tok in tokens:
        if tok.endswith(marker):
            buffer += tok[: -len(marker)]
        else:
            out.append(buffer + tok)
            buffer = ""
    if buffer:
        log.warning("dangling compound marker at sentence end; marker stripped")
        out.append(buffer)
    return out


class CompoundSplitter(BaseEstimator, TransformerMixin):
    """Frequency-driven compound splitter with a lossless join marker.

    ``fit`` builds the frequency lexicon from a tokenized corpus; ``transform``
    splits every token of every sentence. ``inverse_transform`` re-joins.
    """

    def __init__(self, min_part_len=4, max_parts=2, marker=COMPOUND_MARKER):
        self.min_part_len = min_part_len
        self.max_parts = max_parts
        self.marker = marker

    def fit(self, X: Iterable[Sequence[str]], y=None):
        self.lexicon_ = build_lexicon(X)
        return self

    def split(self, token: str) -> list[str]:
        return split_compound(
            token, self.lexicon_, self.min_part_len, self.max_parts, self.marker
        )

    def transform(self, X: Iterable[Sequence[str]]) -> list[list[str]]:
        out = []
        for sent in X:
            parts: list[str] = []
            for tok in sent:
                parts.extend(self.split(tok))
            out.append(parts)
        return out

    def inverse_transform(self, X: Iterable[Sequence[str]]) -> list[list[str]]:
        return [join_compounds(sent, self.marker) for sent in X]
