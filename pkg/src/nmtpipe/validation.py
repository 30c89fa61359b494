"""Input validation helpers for the estimator-facing API."""

from __future__ import annotations

from typing import Iterable, Sequence

from .errors import DataError


def as_token_lists(X: Iterable) -> list[list[str]]:
    """Accept raw strings (whitespace-tokenized) or token sequences."""
    out = []
    for row in X:
        if isinstance(row, str):
            out.append(row.split())
        else:
            out.append([str(t) for t in row])
    return out


def check_aligned(X: Sequence, y: Sequence, what="corpora") -> None:
    if len(X) != len(y):
        raise DataError(f"misaligned {what}: {len(X)} vs {len(y)} sentences")


def require_nonempty(X: Sequence, what="corpus") -> None:
    if len(X) == 0:
        raise DataError(f"empty {what}")
