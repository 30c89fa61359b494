"""Sklearn-style translation estimator tying the pieces together.

``LstmTranslator.fit(X, y)`` builds a joint vocabulary over the given token
sequences, case-encodes them, and trains the attention model with the
plateau-then-decay schedule; ``predict`` beam-decodes and restores casing.
Inputs may be whitespace-tokenized strings or token lists. Subword
segmentation is deliberately external: compose with ``BpeEncoder`` upstream
when open-vocabulary behaviour is needed.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bleu import bleu as corpus_bleu
from .model import ModelConfig
from .subword import build_vocab
from .textnorm import CASE_TO_ID, ID_TO_CASE, decode_case, encode_case
from .train import build_schedule, evaluate_ppl, new_train_state, run_schedule
from .translate import beam_decode
from .validation import as_token_lists, check_aligned, require_nonempty


class LstmTranslator(BaseEstimator):
    """Bidirectional LSTM encoder-decoder with attention, as an estimator.

    Defaults mirror the full-scale configuration (4x1000 LSTM, 500-dim
    embeddings, dropout 0.3, batch 64, max length 80); shrink them for
    desk-scale experiments.
    """

    def __init__(
        self,
        layers=4,
        hidden=1000,
        embed=500,
        case_embed=8,
        dropout=0.3,
        input_feed=True,
        batch_size=64,
        max_len=80,
        vocab_size=30000,
        lr=1.0,
        decay=0.7,
        plateau_threshold=0.01,
        max_epochs=15,
        decay_epochs=4,
        clip_norm=5.0,
        beam=5,
        length_norm=True,
        init_scale=0.1,
        seed=0,
    ):
        self.layers = layers
        self.hidden = hidden
        self.embed = embed
        self.case_embed = case_embed
        self.dropout = dropout
        self.input_feed = input_feed
        self.batch_size = batch_size
        self.max_len = max_len
        self.vocab_size = vocab_size
        self.lr = lr
        self.decay = decay
        self.plateau_threshold = plateau_threshold
        self.max_epochs = max_epochs
        self.decay_epochs = decay_epochs
        self.clip_norm = clip_norm
        self.beam = beam
        self.length_norm = length_norm
        self.init_scale = init_scale
        self.seed = seed

    # -- data preparation ----------------------------------------------------

    def _encode_side(self, sentences, vocab):
        ids, case_ids = [], []
        for sent in sentences:
            lowered, factors = encode_case(sent)
            ids.append(vocab.encode(lowered))
            case_ids.append([CASE_TO_ID[f] for f in factors])
        return ids, case_ids

    def _prepare(self, X, y, vocab):
        src_ids, src_case = self._encode_side(X, vocab)
        tgt_ids, tgt_case = self._encode_side(y, vocab)
        pairs = []
        skipped = 0
        for s, sc, t, tc in zip(src_ids, src_case, tgt_ids, tgt_case):
            if not s or len(s) > self.max_len or len(t) > self.max_len:
                skipped += 1
                continue
            pairs.append((s, sc, t, tc))
        return pairs, skipped

    # -- estimator API ---------------------------------------------------------

    def fit(self, X, y, validation=None):
        X = as_token_lists(X)
        y = as_token_lists(y)
        check_aligned(X, y)
        require_nonempty(X, "training corpus")

        lowered = [encode_case(sent)[0] for sent in X + y]
        self.vocab_ = build_vocab(lowered, self.vocab_size)

        pairs, skipped = self._prepare(X, y, self.vocab_)
        require_nonempty(pairs, "training corpus after length filtering")
        if validation is not None:
            Xv = as_token_lists(validation[0])
            yv = as_token_lists(validation[1])
            check_aligned(Xv, yv, "validation corpora")
            valid_pairs, _ = self._prepare(Xv, yv, self.vocab_)
        else:
            # deterministic 10% tail split (at least one pair)
            n_valid = max(1, len(pairs) // 10)
            valid_pairs = pairs[-n_valid:]
            pairs = pairs[: -n_valid] or valid_pairs
        require_nonempty(valid_pairs, "validation corpus")

        config = ModelConfig(
            src_vocab=len(self.vocab_),
            tgt_vocab=len(self.vocab_),
            layers=self.layers,
            hidden=self.hidden,
            embed=self.embed,
            case_embed=self.case_embed,
            dropout=self.dropout,
            input_feed=self.input_feed,
            max_len=self.max_len,
            init_scale=self.init_scale,
        )
        state = new_train_state(config, seed=self.seed, lr=self.lr, decay=self.decay)
        schedule = build_schedule(
            pairs,
            initial_lr=self.lr,
            decay=self.decay,
            plateau_threshold=self.plateau_threshold,
            p1_max_epochs=self.max_epochs,
            p1_decay_epochs=self.decay_epochs,
        )
        self.train_log_ = run_schedule(
            state, schedule, valid_pairs, self.batch_size, self.clip_norm
        )
        self.state_ = state
        self.model_ = state.model
        self.n_iter_ = state.epoch
        self.skipped_ = skipped
        return self

    def predict(self, X) -> list[str]:
        """Beam-decode each sentence; returns cased, space-joined strings."""
        check_is_fitted(self, "model_")
        X = as_token_lists(X)
        out = []
        for sent in X:
            lowered, factors = encode_case(sent)
            ids = self.vocab_.encode(lowered)
            case_ids = [CASE_TO_ID[f] for f in factors]
            hyp = beam_decode(
                self.model_,
                ids,
                case_ids,
                beam_size=self.beam,
                max_len=self.max_len,
                length_norm=self.length_norm,
            )
            pieces = self.vocab_.decode(hyp.tokens)
            tags = [ID_TO_CASE[c] for c in hyp.case_ids]
            out.append(" ".join(decode_case(pieces, tags)))
        return out

    def perplexity(self, X, y) -> float:
        check_is_fitted(self, "model_")
        X = as_token_lists(X)
        y = as_token_lists(y)
        check_aligned(X, y)
        pairs, _ = self._prepare(X, y, self.vocab_)
        require_nonempty(pairs, "evaluation corpus after length filtering")
        return evaluate_ppl(self.model_, pairs, self.batch_size)

    def score(self, X, y) -> float:
        """Corpus BLEU (0-100) of the predictions against references."""
        predictions = [h.split() for h in self.predict(X)]
        references = as_token_lists(y)
        return corpus_bleu(predictions, references).bleu
