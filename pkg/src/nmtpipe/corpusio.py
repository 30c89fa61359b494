"""Line-oriented corpus I/O: token files, case-factor sidecars, hashing."""

from __future__ import annotations

import hashlib
from typing import Iterable, Sequence

from .errors import DataError
from .textnorm import CASE_TAGS


def read_lines(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def write_lines(path, lines: Iterable[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")


def read_tokens(path) -> list[list[str]]:
    return [line.split() for line in read_lines(path)]


def write_tokens(path, sentences: Iterable[Sequence[str]]) -> None:
    write_lines(path, (" ".join(sent) for sent in sentences))


def read_case(path) -> list[list[str]]:
    """Case-factor sidecar: one space-separated tag sequence per line."""
    factors = []
    for lineno, line in enumerate(read_lines(path), start=1):
        tags = line.split()
        for tag in tags:
            if tag not in CASE_TAGS:
                raise DataError(f"{path}:{lineno}: unknown case tag {tag!r}")
        factors.append(tags)
    return factors


def write_case(path, factors: Iterable[Sequence[str]]) -> None:
    write_tokens(path, factors)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()
