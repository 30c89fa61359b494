import pytest

from nmtpipe.errors import ConfigError, DataError
from nmtpipe.select import MooreLewisSelector, SelectionJob, score_and_sort, select_top
from nmtpipe.toydata import make_two_grammar_mixture


def _pairs(sources):
    return [(s, ["t"] * len(s)) for s in sources]


class TestScoreAndSort:
    def test_identity_corpus_gives_zero_delta(self):
        corpus = [["a", "b"], ["b", "c"], ["c", "a"], ["a"]]
        ranked = score_and_sort(corpus, corpus, seed=3)
        assert [delta for _, delta in ranked] == [0.0] * len(corpus)
        # ties keep original order
        assert [i for i, _ in ranked] == list(range(len(corpus)))

    def test_disjoint_grammars_separate_perfectly(self):
        sentences, labels = make_two_grammar_mixture(60, 60, seed=1)
        in_domain = [s for s, l in zip(sentences, labels) if l == "A"]
        ranked = score_and_sort(sentences, in_domain, seed=7)
        ranked_labels = [labels[i] for i, _ in ranked]
        split = ranked_labels.index("B")
        assert all(l == "A" for l in ranked_labels[:split])
        assert all(l == "B" for l in ranked_labels[split:])
        assert split == len(in_domain)

    def test_ascending_by_delta(self):
        sentences, labels = make_two_grammar_mixture(20, 20, seed=2)
        in_domain = [s for s, l in zip(sentences, labels) if l == "A"]
        deltas = [d for _, d in score_and_sort(sentences, in_domain, seed=0)]
        assert deltas == sorted(deltas)

    def test_empty_corpus_is_error(self):
        with pytest.raises(DataError):
            score_and_sort([], [["a"]], seed=0)
        with pytest.raises(DataError):
            score_and_sort([["a"]], [], seed=0)

    def test_antisymmetry_under_lm_swap(self):
        sentences, labels = make_two_grammar_mixture(30, 30, seed=4)
        in_domain = [s for s, l in zip(sentences, labels) if l == "A"][:20]
        out_domain = [s for s, l in zip(sentences, labels) if l == "B"][:20]
        sel_fwd = MooreLewisSelector(seed=5, sample_size=len(out_domain)).fit(in_domain)
        sel_rev = MooreLewisSelector(seed=5, sample_size=len(out_domain)).fit(out_domain)
        # score the same probe sentences with the two models swapped: the
        # generic-side model must be held fixed for exact antisymmetry, so
        # train both directions on the full probe corpora
        lm_in = sel_fwd.lm_in_
        lm_out = sel_rev.lm_in_
        for probe in sentences[:10]:
            fwd = lm_in.cross_entropy(probe) - lm_out.cross_entropy(probe)
            rev = lm_out.cross_entropy(probe) - lm_in.cross_entropy(probe)
            assert fwd == -rev

    def test_order_invariance(self):
        sentences, labels = make_two_grammar_mixture(15, 15, seed=8)
        in_domain = [s for s, l in zip(sentences, labels) if l == "A"]
        base = score_and_sort(sentences, in_domain, seed=2)
        permuted = list(reversed(sentences))
        moved = score_and_sort(permuted, in_domain, seed=2)
        # same sentence set selected regardless of input order; the sampled
        # out-domain model sees the same multiset, so scores match per content
        base_scores = sorted(round(d, 12) for _, d in base)
        moved_scores = sorted(round(d, 12) for _, d in moved)
        assert base_scores == moved_scores


class TestSelectTop:
    def test_zero_quotas(self):
        job = SelectionJob(
            corpora={"P": _pairs([["a"], ["b"]])},
            in_domain=[["a"]],
            quotas={"P": 0},
        )
        assert select_top(job).pairs == []

    def test_full_quota_reorders_by_delta(self):
        sentences, labels = make_two_grammar_mixture(10, 10, seed=3)
        in_domain = [s for s, l in zip(sentences, labels) if l == "A"]
        job = SelectionJob(
            corpora={"P": _pairs(sentences)},
            in_domain=in_domain,
            quotas={"P": len(sentences)},
        )
        result = select_top(job)
        assert len(result.pairs) == len(sentences)
        assert sorted(map(str, (s for s, _ in result.pairs))) == sorted(
            map(str, sentences)
        )
        deltas = [rec[4] for rec in result.records]
        assert deltas == sorted(deltas)

    def test_quota_exactness_per_label(self):
        sentences, labels = make_two_grammar_mixture(40, 40, seed=6)
        in_domain = [s for s, l in zip(sentences, labels) if l == "A"]
        job = SelectionJob(
            corpora={"P": _pairs(sentences[:40]), "M": _pairs(sentences[40:])},
            in_domain=in_domain,
            quotas={"P": 7, "M": 11},
        )
        result = select_top(job)
        by_label = {"P": 0, "M": 0}
        for rec in result.records:
            by_label[rec[0]] += 1
        assert by_label == {"P": 7, "M": 11}

    def test_alignment_preserved(self):
        sources = [["x", str(i)] for i in range(10)]
        pairs = [(s, ["tgt", str(i)]) for i, s in enumerate(sources)]
        job = SelectionJob(
            corpora={"P": pairs}, in_domain=sources[:3], quotas={"P": 5}
        )
        for src, tgt in select_top(job).pairs:
            assert src[1] == tgt[1]

    def test_selection_uses_source_side_only(self):
        sentences, labels = make_two_grammar_mixture(20, 20, seed=9)
        in_domain = [s for s, l in zip(sentences, labels) if l == "A"]
        pairs_a = [(s, ["t1"]) for s in sentences]
        pairs_b = [(s, ["completely", "different"]) for s in sentences]
        job_a = SelectionJob(corpora={"P": pairs_a}, in_domain=in_domain,
                             quotas={"P": 10}, seed=3)
        job_b = SelectionJob(corpora={"P": pairs_b}, in_domain=in_domain,
                             quotas={"P": 10}, seed=3)
        srcs_a = [src for src, _ in select_top(job_a).pairs]
        srcs_b = [src for src, _ in select_top(job_b).pairs]
        assert srcs_a == srcs_b

    def test_quota_exceeding_corpus_is_error(self):
        job = SelectionJob(
            corpora={"P": _pairs([["a"]])}, in_domain=[["a"]], quotas={"P": 2}
        )
        with pytest.raises(DataError):
            select_top(job)

    def test_unknown_label_quota_is_error(self):
        job = SelectionJob(
            corpora={"P": _pairs([["a"]])}, in_domain=[["a"]], quotas={"X": 1}
        )
        with pytest.raises(ConfigError):
            select_top(job)

    def test_recovery_on_two_grammar_mixture(self):
        sentences, labels = make_two_grammar_mixture(100, 100, seed=11)
        in_domain = [s for s, l in zip(sentences, labels) if l == "A"]
        job = SelectionJob(
            corpora={"P": _pairs(sentences)}, in_domain=in_domain,
            quotas={"P": len(sentences) // 2}, seed=1,
        )
        picked = select_top(job).records
        indices = [rec[1] for rec in picked]
        recovered = sum(1 for i in indices if labels[i] == "A") / 100
        assert recovered >= 0.99
