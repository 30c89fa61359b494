"""Cross-entropy-difference data selection.

Generic-corpus sentences are scored by delta = H_in(s) - H_out(s), where
H_in comes from a 3-gram model on the domain-specific data and H_out from a
3-gram model on a random sample of the generic corpus. Low deltas mean close
to the domain; selection keeps the best `quota` sentences per labeled
sub-corpus, preserving the source/target pairing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigError, DataError
from .lm import NGramLanguageModel, SentenceScore, sample_corpus

Pair = tuple[Sequence[str], Sequence[str]]


@dataclass
class SelectionJob:
    """Labeled generic corpora, their quotas, and the in-domain data.

    ``corpora`` maps a label (e.g. "P", "M") to a list of aligned
    (source, target) pairs; ``quotas`` gives the number of pairs to keep per
    label. Scoring uses the source side only.
    """

    corpora: Mapping[str, list[Pair]]
    in_domain: list[Sequence[str]]
    quotas: Mapping[str, int]
    seed: int = 0
    lambdas: Sequence[float] = (0.5, 0.3, 0.2)
    order: int = 3

    def validate(self) -> None:
        if not self.in_domain:
            raise DataError("in-domain corpus is empty")
        for label, quota in self.quotas.items():
            if label not in self.corpora:
                raise ConfigError(f"quota given for unknown label {label!r}")
            if quota < 0:
                raise ConfigError(f"negative quota for label {label!r}")
            if quota > len(self.corpora[label]):
                raise DataError(
                    f"quota {quota} exceeds corpus {label!r} size {len(self.corpora[label])}"
                )


class MooreLewisSelector(BaseEstimator):
    """Scores sentences by in-domain vs generic cross-entropy difference.

    ``fit`` trains the in-domain model; scoring a generic corpus trains the
    generic-side model on a seeded random sample of that corpus (sample size
    defaults to the in-domain size, clamped to the corpus size).
    """

    def __init__(self, order=3, lambdas=(0.5, 0.3, 0.2), sample_size=None, seed=0):
        self.order = order
        self.lambdas = lambdas
        self.sample_size = sample_size
        self.seed = seed

    def fit(self, in_domain: Sequence[Sequence[str]], y=None):
        in_domain = list(in_domain)
        if not in_domain:
            raise DataError("in-domain corpus is empty")
        self.lm_in_ = NGramLanguageModel(self.order, self.lambdas).fit(in_domain)
        self.in_domain_size_ = len(in_domain)
        return self

    def _out_model(self, generic: Sequence[Sequence[str]]) -> NGramLanguageModel:
        n = self.sample_size if self.sample_size is not None else self.in_domain_size_
        n = min(n, len(generic))
        # sample from a canonically ordered view so scores depend only on the
        # corpus content, never on its on-disk order
        ordered = sorted(list(s) for s in generic)
        sample = sample_corpus(ordered, n, self.seed)
        return NGramLanguageModel(self.order, self.lambdas).fit(sample)

    def score(self, generic: Sequence[Sequence[str]]) -> list[SentenceScore]:
        """Per-sentence (h_in, h_out) against an out-model sampled from `generic`."""
        check_is_fitted(self, "lm_in_")
        generic = list(generic)
        if not generic:
            raise DataError("generic corpus is empty")
        lm_out = self._out_model(generic)
        return [
            SentenceScore(self.lm_in_.cross_entropy(s), lm_out.cross_entropy(s))
            for s in generic
        ]


def score_and_sort(
    generic: Sequence[Sequence[str]],
    in_domain: Sequence[Sequence[str]],
    seed: int = 0,
    **lm_kwargs,
) -> list[tuple[int, float]]:
    """(sentence index, delta) ascending by delta; ties keep original order."""
    selector = MooreLewisSelector(seed=seed, **lm_kwargs).fit(in_domain)
    scores = selector.score(generic)
    ranked = [(i, s.delta) for i, s in enumerate(scores)]
    ranked.sort(key=lambda r: (r[1], r[0]))
    return ranked


@dataclass
class SelectionResult:
    pairs: list[Pair]
    # (label, original index, h_in, h_out, delta) per selected pair, in output order
    records: list[tuple[str, int, float, float, float]] = field(default_factory=list)


def select_top(job: SelectionJob) -> SelectionResult:
    """Keep the `quota` lowest-delta pairs per label, each group ordered by delta.

    A single generic-side model is trained on a sample of the union of all
    labeled corpora, so every sentence is scored against the same pair of
    models; quotas are applied per label.
    """
    job.validate()
    selector = MooreLewisSelector(
        order=job.order, lambdas=job.lambdas, seed=job.seed
    ).fit(job.in_domain)
    union_sources = [src for pairs in job.corpora.values() for src, _ in pairs]
    if not union_sources:
        raise DataError("no generic data to select from")
    lm_out = selector._out_model(union_sources)

    result = SelectionResult(pairs=[])
    for label, pairs in job.corpora.items():
        quota = job.quotas.get(label, 0)
        scored = []
        for idx, (src, tgt) in enumerate(pairs):
            h_in = selector.lm_in_.cross_entropy(src)
            h_out = lm_out.cross_entropy(src)
            scored.append((h_in - h_out, idx, h_in, h_out))
        scored.sort(key=lambda r: (r[0], r[1]))
        for delta, idx, h_in, h_out in scored[:quota]:
            result.pairs.append(pairs[idx])
            result.records.append((label, idx, h_in, h_out, delta))
    return result
