"""Corpus-level BLEU with multi-bleu semantics.

Modified 4-gram precision with per-sentence clipping, geometric mean with
uniform weights, and the brevity penalty exp(1 - ref_len/hyp_len) applied
when the hypothesis side is shorter. Input is pre-tokenized: no internal
retokenization happens, and any zero n-gram precision yields BLEU 0.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .errors import DataError

MAX_ORDER = 4


@dataclass(frozen=True)
class BleuReport:
    bleu: float  # percentage in [0, 100]
    precisions: tuple[float, ...]  # p1..p4
    brevity_penalty: float
    hyp_len: int
    ref_len: int

    @property
    def ratio(self) -> float:
        return self.hyp_len / self.ref_len if self.ref_len else 0.0

    def format(self) -> str:
        """The multi-bleu output line."""
        ps = "/".join(f"{100 * p:.1f}" for p in self.precisions)
        return (
            f"BLEU = {self.bleu:.2f}, {ps} "
            f"(BP={self.brevity_penalty:.3f}, ratio={self.ratio:.3f}, "
            f"hyp_len={self.hyp_len}, ref_len={self.ref_len})"
        )


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    hypotheses: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    lowercase: bool = False,
) -> BleuReport:
    """Corpus BLEU over aligned tokenized segments (single reference each)."""
    if len(hypotheses) != len(references):
        raise DataError(
            f"line count mismatch: {len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if not hypotheses:
        raise DataError("empty corpus")

    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        if lowercase:
            hyp = [t.lower() for t in hyp]
            ref = [t.lower() for t in ref]
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, MAX_ORDER + 1):
            hyp_counts = _ngrams(hyp, n)
            if not hyp_counts:
                continue
            ref_counts = _ngrams(ref, n)
            totals[n - 1] += sum(hyp_counts.values())
            matches[n - 1] += sum(
                min(count, ref_counts.get(ng, 0)) for ng, count in hyp_counts.items()
            )
    if hyp_len == 0:
        raise DataError("hypothesis corpus contains no tokens")

    precisions = tuple(
        matches[n] / totals[n] if totals[n] > 0 else 0.0 for n in range(MAX_ORDER)
    )
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    if min(precisions) > 0.0:
        score = bp * math.exp(sum(math.log(p) for p in precisions) / MAX_ORDER)
    else:
        score = 0.0
    return BleuReport(100.0 * score, precisions, bp, hyp_len, ref_len)


def average_bleu(reports: Sequence[BleuReport | float]) -> float:
    """Arithmetic mean of per-set BLEU scores."""
    if not reports:
        raise DataError("no BLEU reports to average")
    values = [r.bleu if isinstance(r, BleuReport) else float(r) for r in reports]
    return sum(values) / len(values)
