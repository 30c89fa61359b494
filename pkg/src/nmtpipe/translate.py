"""Inference and the two corpus-synthesis drivers.

Greedy and beam decoding over the trained network, back-translation of
monolingual target text into synthetic parallel data (sharded), and
hyper-specialisation: a short continuation of training on in-domain data,
by default on the model's own single-best hypotheses.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .model import (
    CASE_NONE_ID,
    BOS_ID,
    EOS_ID,
    PAD_ID,
    DecoderState,
    EncoderOutput,
    Seq2SeqModel,
)
from .subword import UNK_ID
from .train import TrainState, run_epoch


@dataclass
class Hypothesis:
    """One decoded translation: ids, predicted case ids, cumulative score.

    `log_prob` accumulates every scored event, including the terminating
    <eos> when the hypothesis ends on one; `tokens` never includes <eos>.
    """

    tokens: list[int] = field(default_factory=list)
    case_ids: list[int] = field(default_factory=list)
    log_prob: float = 0.0
    finished: bool = False


def _pad_sources(sources, cases=None):
    B = len(sources)
    if B == 0:
        raise DataError("no source sentences")
    J = max(len(s) for s in sources) + 1  # room for <eos>
    src = np.full((B, J), PAD_ID, dtype=np.int64)
    src_case = np.full((B, J), CASE_NONE_ID, dtype=np.int64)
    src_len = np.zeros(B, dtype=np.int64)
    for b, s in enumerate(sources):
        if not s:
            raise DataError("empty source sentence")
        src[b, : len(s)] = s
        src[b, len(s)] = EOS_ID
        src_len[b] = len(s) + 1
        if cases is not None:
            src_case[b, : len(s)] = cases[b]
    return src, src_case, src_len


def greedy_decode_batch(model: Seq2SeqModel, sources, cases=None, max_len=None):
    """Argmax decoding for a batch of source id sequences."""
    max_len = model.config.max_len if max_len is None else max_len
    src, src_case, src_len = _pad_sources(sources, cases)
    enc = model.encode(src, src_case, src_len)
    state = model.init_decoder(enc)
    B = src.shape[0]
    hyps = [Hypothesis(finished=True) for _ in range(B)]
    prev = np.full(B, BOS_ID, dtype=np.int64)
    prev_case = np.full(B, CASE_NONE_ID, dtype=np.int64)
    alive = np.ones(B, dtype=bool)
    for _ in range(max_len):
        if not alive.any():
            break
        probs_w, probs_c, state = model.decode_step(prev, prev_case, state)
        next_ids = probs_w.argmax(axis=1)
        next_case = probs_c.argmax(axis=1)
        for b in range(B):
            if not alive[b]:
                continue
            hyps[b].log_prob += float(np.log(max(probs_w[b, next_ids[b]], 1e-300)))
            if next_ids[b] == EOS_ID:
                alive[b] = False
            else:
                hyps[b].tokens.append(int(next_ids[b]))
                hyps[b].case_ids.append(int(next_case[b]))
                if len(hyps[b].tokens) >= max_len:
                    alive[b] = False
        prev = np.where(alive, next_ids, EOS_ID)
        prev_case = np.where(alive, next_case, CASE_NONE_ID)
    return hyps


def greedy_decode(model: Seq2SeqModel, source, case=None, max_len=None) -> Hypothesis:
    """Argmax decoding for one sentence; halts on <eos> or at max_len tokens."""
    cases = [case] if case is not None else None
    return greedy_decode_batch(model, [source], cases, max_len)[0]


def _norm_score(hyp: Hypothesis, length_norm: bool) -> float:
    if not length_norm:
        return hyp.log_prob
    # normalize by the number of scored events (tokens, plus <eos> if taken)
    events = len(hyp.tokens) + (1 if hyp.finished else 0)
    return hyp.log_prob / max(1, events)


def _tile_enc(enc: EncoderOutput, k: int) -> EncoderOutput:
    # The beam decodes a single sentence: broadcast its encoder states to the
    # k live rows (read-only views are fine, attention only reads them).
    hbar = np.broadcast_to(enc.hbar[:1], (k,) + enc.hbar.shape[1:])
    mask = np.broadcast_to(enc.mask[:1], (k,) + enc.mask.shape[1:])
    return EncoderOutput(hbar, mask, enc.init_h, enc.init_c)


def beam_decode(
    model: Seq2SeqModel,
    source,
    case=None,
    beam_size: int = 5,
    max_len: int | None = None,
    length_norm: bool = True,
    n_best: int | None = None,
):
    """Length-bounded beam search over cumulative log-probability.

    Hypotheses retire on <eos>; whatever is still alive after max_len steps
    retires as-is. Final ranking optionally divides the score by the number
    of scored events. Ties break toward the lower live-row index, then the
    lower token id, which makes beam_size=1 reproduce greedy decoding token
    for token. Returns the best hypothesis, or the top `n_best` list.
    """
    if beam_size < 1:
        raise ConfigError("beam size must be >= 1")
    max_len = model.config.max_len if max_len is None else max_len
    cases = [case] if case is not None else None
    src, src_case, src_len = _pad_sources([source], cases)
    enc = model.encode(src, src_case, src_len)

    V = model.config.tgt_vocab
    live = [Hypothesis()]
    state = model.init_decoder(enc)
    finished: list[Hypothesis] = []
    prev = np.array([BOS_ID], dtype=np.int64)
    prev_case = np.array([CASE_NONE_ID], dtype=np.int64)

    for _ in range(max_len):
        if not live:
            break
        probs_w, probs_c, new_state = model.decode_step(prev, prev_case, state)
        logp = np.log(np.maximum(probs_w, 1e-300))
        cand = np.array([h.log_prob for h in live])[:, None] + logp  # (K, V)
        flat = cand.reshape(-1)
        k = min(beam_size, flat.size)
        idx = np.lexsort((np.arange(flat.size), -flat))[:k]
        next_live: list[Hypothesis] = []
        next_rows: list[int] = []
        for fi in idx:
            row, tok = divmod(int(fi), V)
            h = live[row]
            new = Hypothesis(list(h.tokens), list(h.case_ids), float(flat[fi]))
            if tok == EOS_ID:
                new.finished = True
                finished.append(new)
            else:
                new.tokens.append(tok)
                new.case_ids.append(int(probs_c[row].argmax()))
                next_live.append(new)
                next_rows.append(row)
        live = next_live
        if not live:
            break
        rows = np.array(next_rows)
        state = DecoderState(
            new_state.h[:, rows],
            new_state.c[:, rows],
            new_state.htilde[rows],
            _tile_enc(enc, len(rows)),
        )
        prev = np.array([h.tokens[-1] for h in live], dtype=np.int64)
        prev_case = np.array([h.case_ids[-1] for h in live], dtype=np.int64)

    pool = finished + live  # leftovers hit the length bound
    ranked = sorted(enumerate(pool), key=lambda kv: (-_norm_score(kv[1], length_norm), kv[0]))
    hyps = [h for _, h in ranked]
    for h in hyps:
        h.finished = True
    if n_best is None:
        return hyps[0]
    return hyps[:n_best]


@dataclass
class SyntheticCorpus:
    """Machine-translated sources paired with their original targets."""

    pairs: list  # (src_ids, src_case, tgt_ids, tgt_case) tuples
    shard_size: int

    def shards(self) -> list[list]:
        return [
            self.pairs[i : i + self.shard_size]
            for i in range(0, len(self.pairs), self.shard_size)
        ]


def back_translate(model: Seq2SeqModel, mono_corpus, shard_size, batch_size=64, max_len=None):
    """Pair every monolingual target sentence with its machine translation.

    `model` must translate from the monolingual corpus's language (the
    reverse direction); `mono_corpus` holds (ids, case_ids) tuples. Order is
    preserved, and the corpus is partitioned into shards of `shard_size`
    pairs, only the last one smaller.
    """
    if shard_size < 1:
        raise ConfigError("shard size must be >= 1")
    pairs = []
    for start in range(0, len(mono_corpus), batch_size):
        chunk = mono_corpus[start : start + batch_size]
        hyps = greedy_decode_batch(
            model, [c[0] for c in chunk], [c[1] for c in chunk], max_len
        )
        for (tgt_ids, tgt_case), hyp in zip(chunk, hyps):
            # an (unlikely) empty translation still needs a non-empty source
            src_ids = hyp.tokens if hyp.tokens else [UNK_ID]
            src_case = hyp.case_ids if hyp.tokens else [CASE_NONE_ID]
            pairs.append((src_ids, src_case, list(tgt_ids), list(tgt_case)))
    return SyntheticCorpus(pairs, shard_size)


def hyper_specialize(
    state: TrainState,
    in_domain,
    targets=None,
    lr: float = 0.7,
    epochs: int = 1,
    batch_size: int = 64,
    clip_norm: float = 5.0,
    beam_size: int = 5,
    max_len: int | None = None,
    seed: int = 0,
) -> TrainState:
    """Fine-tune a copy of the model on in-domain data at a fixed LR.

    `in_domain` holds (src_ids, src_case) tuples. When `targets` is None the
    training targets are the model's own single-best hypotheses for the
    in-domain sources (self-training); otherwise `targets` supplies
    (tgt_ids, tgt_case) references. Runs exactly `epochs` passes with no LR
    decay; the input state is left untouched.
    """
    if not in_domain:
        raise DataError("hyper-specialisation requires in-domain data")
    new_state = TrainState(
        model=Seq2SeqModel(state.model.config, params=copy.deepcopy(state.model.params)),
        epoch=state.epoch,
        lr=lr,
        decay=state.decay,
        decay_mode=False,
        ppl_history=list(state.ppl_history),
        rng=np.random.Generator(np.random.PCG64(seed)),
        metadata=dict(state.metadata),
    )
    if epochs == 0:
        return new_state
    if targets is None:
        targets = []
        for src_ids, src_case in in_domain:
            hyp = beam_decode(
                new_state.model, src_ids, src_case, beam_size=beam_size, max_len=max_len
            )
            targets.append((hyp.tokens, hyp.case_ids))
    if len(targets) != len(in_domain):
        raise DataError("in-domain source and target counts differ")
    pairs = [
        (list(s), list(sc), list(t), list(tc))
        for (s, sc), (t, tc) in zip(in_domain, targets)
    ]
    for _ in range(epochs):
        run_epoch(new_state, pairs, batch_size, clip_norm)
        new_state.epoch += 1
    return new_state
