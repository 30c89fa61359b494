"""The numeric core: embeddings, stacked LSTMs, bidirectional encoder,
general attention, decoder, output softmaxes, and exact analytic gradients.

Everything is plain NumPy. Parameters live in a flat name->array dict so the
same machinery serves SGD updates, checkpointing, and finite-difference
gradient checks. Training runs in float32 by default; gradient-check builds
use float64.

Conventions: token ids 0..3 are <pad>, <unk>, <s>, <eos>. Source sequences
are <eos>-terminated before padding; target input starts with <s> and target
output ends with <eos>. LSTM gates are packed (input, forget, candidate,
output) along the last axis. Attention scores use the bilinear form
h_t^T W_a hbar_s, softmax-normalized over unmasked source positions; the
attentional state is tanh(W_c [context; h_t]) and, with input feeding on, is
concatenated to the next step's decoder input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, NumericError
from .subword import BOS_ID, EOS_ID, PAD_ID

N_CASE = 5  # L, C, U, M, N
CASE_NONE_ID = 4  # the N tag; used for specials like <s>/<eos>


@dataclass(frozen=True)
class ModelConfig:
    src_vocab: int
    tgt_vocab: int
    layers: int = 4
    hidden: int = 1000
    embed: int = 500
    case_embed: int = 8
    dropout: float = 0.3
    input_feed: bool = True
    case_loss_weight: float = 1.0
    max_len: int = 80
    # full-scale convention is 0.1; desk-scale models need a healthier signal
    # magnitude at initialization or attention starts out too flat to train
    init_scale: float = 0.1
    dtype: str = "float32"

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self) -> dict:
        return {
            "src_vocab": self.src_vocab,
            "tgt_vocab": self.tgt_vocab,
            "layers": self.layers,
            "hidden": self.hidden,
            "embed": self.embed,
            "case_embed": self.case_embed,
            "dropout": self.dropout,
            "input_feed": self.input_feed,
            "case_loss_weight": self.case_loss_weight,
            "max_len": self.max_len,
            "init_scale": self.init_scale,
            "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """All tensors uniform in [-init_scale, init_scale], seed-reproducible."""
    rng = np.random.Generator(np.random.PCG64(seed))
    dt = config.np_dtype
    H, E, C, L = config.hidden, config.embed, config.case_embed, config.layers
    scale = config.init_scale

    def u(*shape):
        return rng.uniform(-scale, scale, size=shape).astype(dt)

    params = {
        "src_embed": u(config.src_vocab, E),
        "tgt_embed": u(config.tgt_vocab, E),
        "src_case_embed": u(N_CASE, C),
        "tgt_case_embed": u(N_CASE, C),
        "att_wa": u(H, H),
        "att_wc": u(2 * H, H),
        "out_w": u(H, config.tgt_vocab),
        "out_b": u(config.tgt_vocab),
        "case_w": u(H, N_CASE),
        "case_b": u(N_CASE),
    }
    enc_in = E + C
    dec_in = E + C + (H if config.input_feed else 0)
    for stack, d0 in (("enc_fwd", enc_in), ("enc_bwd", enc_in), ("dec", dec_in)):
        for l in range(L):
            d_in = d0 if l == 0 else H
            params[f"{stack}_{l}_wx"] = u(d_in, 4 * H)
            params[f"{stack}_{l}_wh"] = u(H, 4 * H)
            params[f"{stack}_{l}_b"] = u(4 * H)
    return params


def zeros_like_params(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in params.items()}


# --- single LSTM cell -------------------------------------------------------


def lstm_step(x, h_prev, c_prev, layer_params):
    """One LSTM step. `layer_params` is (wx, wh, b) with gates packed i,f,g,o.

    c = f*c_prev + i*g, h = o*tanh(c), with sigmoid gates and tanh candidate.
    """
    h, c, _ = _lstm_forward(x, h_prev, c_prev, *layer_params)
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(c))):
        raise NumericError("non-finite LSTM state")
    return h, c


def _lstm_forward(x, h_prev, c_prev, wx, wh, b):
    H = c_prev.shape[-1]
    pre = x @ wx + h_prev @ wh + b
    i = _sigmoid(pre[..., :H])
    f = _sigmoid(pre[..., H : 2 * H])
    g = np.tanh(pre[..., 2 * H : 3 * H])
    o = _sigmoid(pre[..., 3 * H :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, (i, f, g, o)


def _lstm_backward(dh, dc_in, x, h_prev, c_prev, c_new, gates, wx, wh):
    i, f, g, o = gates
    tc = np.tanh(c_new)
    do = dh * tc
    dc = dc_in + dh * o * (1.0 - tc * tc)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    dc_prev = dc * f
    dpre = np.concatenate(
        [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)],
        axis=-1,
    )
    dwx = x.T @ dpre
    dwh = h_prev.T @ dpre
    db = dpre.sum(axis=0)
    dx = dpre @ wx.T
    dh_prev = dpre @ wh.T
    return dx, dh_prev, dc_prev, dwx, dwh, db


# --- attention ---------------------------------------------------------------


def attention(h_t, encoder_states, w_a, mask=None):
    """Alignment weights and context vector for one decoder state.

    h_t: (B, H); encoder_states: (B, J, H); mask: (B, J) with 1 at real
    positions. Returns (a, context) with a summing to 1 over unmasked
    positions.
    """
    q = h_t @ w_a  # (B, H)
    scores = np.einsum("bh,bjh->bj", q, encoder_states)
    if mask is not None:
        scores = np.where(mask > 0, scores, -np.inf)
    a = _softmax(scores)
    context = np.einsum("bj,bjh->bh", a, encoder_states)
    return a, context


# --- batches -----------------------------------------------------------------


@dataclass
class Batch:
    """Padded id arrays for one minibatch of sequence pairs."""

    src: np.ndarray
    src_case: np.ndarray
    src_len: np.ndarray
    tgt_in: np.ndarray
    tgt_in_case: np.ndarray
    tgt_out: np.ndarray
    tgt_out_case: np.ndarray
    tgt_mask: np.ndarray

    @property
    def size(self) -> int:
        return self.src.shape[0]


def make_batch(pairs: Sequence[tuple], dtype="float32") -> Batch:
    """Assemble (src_ids, src_case, tgt_ids, tgt_case) tuples into a Batch.

    Appends <eos> to every source, wraps targets in <s>...<eos>, right-pads
    with <pad>, and builds the target loss mask.
    """
    if not pairs:
        raise DataError("empty batch")
    B = len(pairs)
    J = max(len(p[0]) for p in pairs) + 1
    T = max(len(p[2]) for p in pairs) + 1
    src = np.full((B, J), PAD_ID, dtype=np.int64)
    src_case = np.full((B, J), CASE_NONE_ID, dtype=np.int64)
    src_len = np.zeros(B, dtype=np.int64)
    tgt_in = np.full((B, T), PAD_ID, dtype=np.int64)
    tgt_in_case = np.full((B, T), CASE_NONE_ID, dtype=np.int64)
    tgt_out = np.full((B, T), PAD_ID, dtype=np.int64)
    tgt_out_case = np.full((B, T), CASE_NONE_ID, dtype=np.int64)
    tgt_mask = np.zeros((B, T), dtype=np.dtype(dtype))
    for b, (s_ids, s_case, t_ids, t_case) in enumerate(pairs):
        if len(s_ids) != len(s_case) or len(t_ids) != len(t_case):
            raise DataError("case factor sequence length mismatch")
        if not s_ids:
            raise DataError("empty source sequence")
        j = len(s_ids)
        src[b, :j] = s_ids
        src[b, j] = EOS_ID
        src_case[b, :j] = s_case
        src_len[b] = j + 1
        t = len(t_ids)
        tgt_in[b, 0] = BOS_ID
        tgt_in[b, 1 : t + 1] = t_ids
        tgt_in_case[b, 1 : t + 1] = t_case
        tgt_out[b, :t] = t_ids
        tgt_out[b, t] = EOS_ID
        tgt_out_case[b, :t] = t_case
        tgt_mask[b, : t + 1] = 1.0
    return Batch(src, src_case, src_len, tgt_in, tgt_in_case, tgt_out, tgt_out_case, tgt_mask)


# --- encoder / decoder -------------------------------------------------------


@dataclass
class EncoderOutput:
    hbar: np.ndarray  # (B, J, H): forward + backward states per position
    mask: np.ndarray  # (B, J)
    init_h: np.ndarray  # (L, B, H)
    init_c: np.ndarray  # (L, B, H)


@dataclass
class DecoderState:
    h: np.ndarray  # (L, B, H)
    c: np.ndarray  # (L, B, H)
    htilde: np.ndarray  # (B, H)
    enc: EncoderOutput


@dataclass
class _StackCache:
    x: list  # per layer: (B, T, Din) actual (post-dropout) inputs
    gates: list  # per layer: tuple of (B, T, H) arrays i, f, g, o
    c_new: list  # per layer: (B, T, H) pre-mask cell states
    h_seq: list  # per layer: (B, T, H) post-mask hidden states
    c_seq: list  # per layer: (B, T, H) post-mask cell states
    drop: list  # per layer transition: (B, T, H) masks, or None


@dataclass
class _StepCache:
    x0: np.ndarray
    x: list  # per layer inputs
    gates: list
    c_new: list
    h_prev: np.ndarray  # (L, B, H) states entering the step
    c_prev: np.ndarray
    h: np.ndarray  # (L, B, H) states leaving the step
    c: np.ndarray
    a: np.ndarray
    ctx: np.ndarray
    cat: np.ndarray
    htilde: np.ndarray
    probs_w: np.ndarray
    probs_c: np.ndarray


@dataclass
class ForwardCache:
    batch: Batch
    enc: "EncoderOutput"
    enc_fwd: _StackCache
    enc_bwd: _StackCache
    hbar: np.ndarray
    steps: list  # of _StepCache
    dec_drop: list  # per layer transition: (B, T, H) or None
    n_tokens: float
    word_nll_sum: float
    case_nll_sum: float
    loss: float


def _reverse_rows(x: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Reverse each row within its true length; padding stays in place."""
    T = x.shape[1]
    ar = np.arange(T)[None, :]
    rev = np.where(ar < lengths[:, None], lengths[:, None] - 1 - ar, ar)
    if x.ndim == 3:
        return np.take_along_axis(x, rev[..., None], axis=1)
    return np.take_along_axis(x, rev, axis=1)


class Seq2SeqModel:
    """Bidirectional LSTM encoder-decoder with general attention.

    Holds the parameter dict and implements teacher-forced training loss,
    exact analytic gradients, and incremental decoding.
    """

    def __init__(self, config: ModelConfig, params: dict | None = None, seed: int = 0):
        self.config = config
        self.params = params if params is not None else init_params(config, seed)

    # -- helpers -------------------------------------------------------------

    def _layer(self, stack: str, l: int):
        p = self.params
        return p[f"{stack}_{l}_wx"], p[f"{stack}_{l}_wh"], p[f"{stack}_{l}_b"]

    def _embed_src(self, ids, case_ids):
        if ids.max(initial=0) >= self.config.src_vocab:
            raise DataError("source token id out of vocabulary")
        return np.concatenate(
            [self.params["src_embed"][ids], self.params["src_case_embed"][case_ids]],
            axis=-1,
        )

    def _embed_tgt(self, ids, case_ids):
        if ids.max(initial=0) >= self.config.tgt_vocab:
            raise DataError("target token id out of vocabulary")
        return np.concatenate(
            [self.params["tgt_embed"][ids], self.params["tgt_case_embed"][case_ids]],
            axis=-1,
        )

    def _run_stack(self, stack: str, X, mask, drop, collect: bool):
        """Run one direction's layer stack over a whole sequence.

        Uses carry-through masking: at padded positions the state is held, so
        the state at the last column is the state at each row's true length.
        """
        cfg = self.config
        B, T, _ = X.shape
        H, L = cfg.hidden, cfg.layers
        dt = cfg.np_dtype
        cache = _StackCache([], [], [], [], [], drop if drop else [None] * (L - 1))
        layer_in = X
        final_h = np.zeros((L, B, H), dtype=dt)
        final_c = np.zeros((L, B, H), dtype=dt)
        for l in range(L):
            wx, wh, b = self._layer(stack, l)
            h = np.zeros((B, H), dtype=dt)
            c = np.zeros((B, H), dtype=dt)
            h_seq = np.zeros((B, T, H), dtype=dt)
            c_seq = np.zeros((B, T, H), dtype=dt)
            if collect:
                gi = np.zeros((B, T, H), dtype=dt)
                gf = np.zeros((B, T, H), dtype=dt)
                gg = np.zeros((B, T, H), dtype=dt)
                go = np.zeros((B, T, H), dtype=dt)
                cn = np.zeros((B, T, H), dtype=dt)
            for t in range(T):
                h_new, c_new, gates = _lstm_forward(layer_in[:, t], h, c, wx, wh, b)
                m = mask[:, t : t + 1]
                h = m * h_new + (1.0 - m) * h
                c = m * c_new + (1.0 - m) * c
                h_seq[:, t] = h
                c_seq[:, t] = c
                if collect:
                    gi[:, t], gf[:, t], gg[:, t], go[:, t] = gates
                    cn[:, t] = c_new
            final_h[l] = h
            final_c[l] = c
            if collect:
                cache.x.append(layer_in)
                cache.gates.append((gi, gf, gg, go))
                cache.c_new.append(cn)
                cache.h_seq.append(h_seq)
                cache.c_seq.append(c_seq)
            if l < L - 1:
                dm = drop[l] if drop else None
                layer_in = h_seq * dm if dm is not None else h_seq
        return h_seq, final_h, final_c, cache

    def encode(self, src, src_case, src_len, drop=None, collect=False):
        """Run both encoder directions and combine them.

        Per-position outputs of the two top layers are summed; per-layer final
        states of the two stacks are summed to initialize the decoder.
        """
        cfg = self.config
        src = np.asarray(src, dtype=np.int64)
        src_case = np.asarray(src_case, dtype=np.int64)
        src_len = np.asarray(src_len, dtype=np.int64)
        if src.ndim != 2 or src.shape[1] < 1:
            raise DataError("source batch must be (B, J>=1)")
        mask = (np.arange(src.shape[1])[None, :] < src_len[:, None]).astype(cfg.np_dtype)
        X = self._embed_src(src, src_case)
        drop_f, drop_b = (drop[0], drop[1]) if drop else (None, None)
        top_f, fin_h_f, fin_c_f, cache_f = self._run_stack("enc_fwd", X, mask, drop_f, collect)
        X_rev = _reverse_rows(X, src_len)
        top_b_rev, fin_h_b, fin_c_b, cache_b = self._run_stack(
            "enc_bwd", X_rev, mask, drop_b, collect
        )
        top_b = _reverse_rows(top_b_rev, src_len)
        hbar = (top_f + top_b) * mask[..., None]
        out = EncoderOutput(hbar, mask, fin_h_f + fin_h_b, fin_c_f + fin_c_b)
        return (out, cache_f, cache_b) if collect else out

    def init_decoder(self, enc: EncoderOutput) -> DecoderState:
        B = enc.hbar.shape[0]
        htilde = np.zeros((B, self.config.hidden), dtype=self.config.np_dtype)
        return DecoderState(enc.init_h.copy(), enc.init_c.copy(), htilde, enc)

    def _dec_step(self, x0, h_in, c_in, enc, drop_col, collect):
        """One decoder time step: stacked LSTM, attention, combiner, softmaxes."""
        cfg = self.config
        L, H = cfg.layers, cfg.hidden
        h_out = np.empty_like(h_in)
        c_out = np.empty_like(c_in)
        xs = []
        gates_l = []
        c_new_l = []
        x = x0
        for l in range(L):
            wx, wh, b = self._layer("dec", l)
            h_new, c_new, gates = _lstm_forward(x, h_in[l], c_in[l], wx, wh, b)
            h_out[l] = h_new
            c_out[l] = c_new
            if collect:
                xs.append(x)
                gates_l.append(gates)
                c_new_l.append(c_new)
            if l < L - 1:
                dm = drop_col[l] if drop_col else None
                x = h_new * dm if dm is not None else h_new
        h_top = h_out[L - 1]
        a, ctx = attention(h_top, enc.hbar, self.params["att_wa"], enc.mask)
        cat = np.concatenate([ctx, h_top], axis=-1)
        htilde = np.tanh(cat @ self.params["att_wc"])
        probs_w = _softmax(htilde @ self.params["out_w"] + self.params["out_b"])
        probs_c = _softmax(htilde @ self.params["case_w"] + self.params["case_b"])
        step = None
        if collect:
            step = _StepCache(
                x0, xs, gates_l, c_new_l, h_in, c_in, h_out, c_out,
                a, ctx, cat, htilde, probs_w, probs_c,
            )
        return probs_w, probs_c, htilde, h_out, c_out, a, step

    def decode_step(self, prev_ids, prev_case_ids, state: DecoderState):
        """Advance one target position; returns both distributions and state."""
        x0 = self._embed_tgt(np.asarray(prev_ids), np.asarray(prev_case_ids))
        if self.config.input_feed:
            x0 = np.concatenate([x0, state.htilde], axis=-1)
        probs_w, probs_c, htilde, h, c, a, _ = self._dec_step(
            x0, state.h, state.c, state.enc, None, collect=False
        )
        new_state = DecoderState(h, c, htilde, state.enc)
        return probs_w, probs_c, new_state

    # -- training ------------------------------------------------------------

    def forward_loss(self, batch: Batch, dropout_p: float | None = None, seed: int = 0):
        """Teacher-forced mean NLL per target token plus the backward cache.

        The loss is word NLL plus `case_loss_weight` times the auxiliary case
        NLL, averaged over non-padding target events (gold tokens plus the
        final <eos>). Dropout applies between stacked layers only; masks are
        drawn from `seed` so a forward pass is exactly reproducible.
        """
        cfg = self.config
        p = cfg.dropout if dropout_p is None else dropout_p
        if batch.src.shape[1] > cfg.max_len + 1 or batch.tgt_in.shape[1] > cfg.max_len + 1:
            raise DataError(
                f"batch exceeds the maximum sequence length {cfg.max_len}"
            )
        B, J = batch.src.shape
        T = batch.tgt_in.shape[1]
        H, L = cfg.hidden, cfg.layers
        dt = cfg.np_dtype

        drop_enc_f = drop_enc_b = None
        drop_dec = None
        if p > 0.0:
            if not 0.0 < p < 1.0:
                raise DataError("dropout probability must be in [0, 1)")
            rng = np.random.Generator(np.random.PCG64(seed))

            def masks(tsteps):
                return [
                    ((rng.random((B, tsteps, H)) >= p) / (1.0 - p)).astype(dt)
                    for _ in range(L - 1)
                ]

            drop_enc_f = masks(J)
            drop_enc_b = masks(J)
            drop_dec = masks(T)

        enc, cache_f, cache_b = self.encode(
            batch.src, batch.src_case, batch.src_len,
            drop=(drop_enc_f, drop_enc_b), collect=True,
        )

        x_emb = self._embed_tgt(batch.tgt_in, batch.tgt_in_case)  # (B, T, E+C)
        h = enc.init_h.copy()
        c = enc.init_c.copy()
        htilde = np.zeros((B, H), dtype=dt)
        steps = []
        word_nll = 0.0
        case_nll = 0.0
        n_tokens = float(batch.tgt_mask.sum())
        if n_tokens <= 0:
            raise DataError("batch contains no target tokens")
        rows = np.arange(B)
        for t in range(T):
            x0 = x_emb[:, t]
            if cfg.input_feed:
                x0 = np.concatenate([x0, htilde], axis=-1)
            drop_col = [dm[:, t] for dm in drop_dec] if drop_dec else None
            probs_w, probs_c, htilde, h, c, _, step = self._dec_step(
                x0, h, c, enc, drop_col, collect=True
            )
            steps.append(step)
            m = batch.tgt_mask[:, t]
            pw = np.maximum(probs_w[rows, batch.tgt_out[:, t]], 1e-300)
            pc = np.maximum(probs_c[rows, batch.tgt_out_case[:, t]], 1e-300)
            word_nll += float(-(np.log(pw) * m).sum())
            case_nll += float(-(np.log(pc) * m).sum())

        loss = (word_nll + cfg.case_loss_weight * case_nll) / n_tokens
        if not np.isfinite(loss):
            raise NumericError("non-finite training loss")
        cache = ForwardCache(
            batch, enc, cache_f, cache_b, enc.hbar, steps,
            drop_dec or [None] * (L - 1), n_tokens, word_nll, case_nll, loss,
        )
        return loss, cache

    def backward(self, cache: ForwardCache) -> dict[str, np.ndarray]:
        """Exact gradients of the forward_loss objective for every parameter."""
        cfg = self.config
        p = self.params
        batch = cache.batch
        B, J = batch.src.shape
        T = batch.tgt_in.shape[1]
        H, L, E = cfg.hidden, cfg.layers, cfg.embed
        dt = cfg.np_dtype
        grads = zeros_like_params(p)
        enc = cache.enc
        rows = np.arange(B)
        inv_n = 1.0 / cache.n_tokens

        d_hbar = np.zeros((B, J, H), dtype=dt)
        dh_carry = np.zeros((L, B, H), dtype=dt)
        dc_carry = np.zeros((L, B, H), dtype=dt)
        d_htilde_carry = np.zeros((B, H), dtype=dt)
        dx_emb = np.zeros((B, T, E + cfg.case_embed), dtype=dt)

        w_a, w_c = p["att_wa"], p["att_wc"]
        for t in reversed(range(T)):
            step: _StepCache = cache.steps[t]
            m = (batch.tgt_mask[:, t] * inv_n)[:, None]

            dlogits_w = step.probs_w.copy()
            dlogits_w[rows, batch.tgt_out[:, t]] -= 1.0
            dlogits_w *= m
            dlogits_c = step.probs_c.copy()
            dlogits_c[rows, batch.tgt_out_case[:, t]] -= 1.0
            dlogits_c *= m * cfg.case_loss_weight

            grads["out_w"] += step.htilde.T @ dlogits_w
            grads["out_b"] += dlogits_w.sum(axis=0)
            grads["case_w"] += step.htilde.T @ dlogits_c
            grads["case_b"] += dlogits_c.sum(axis=0)

            d_htilde = dlogits_w @ p["out_w"].T + dlogits_c @ p["case_w"].T
            d_htilde += d_htilde_carry

            du = d_htilde * (1.0 - step.htilde * step.htilde)
            grads["att_wc"] += step.cat.T @ du
            dcat = du @ w_c.T
            d_ctx = dcat[:, :H]
            dh_top = dcat[:, H:]

            # attention backward
            h_top = step.h[L - 1]
            a = step.a
            da = np.einsum("bh,bjh->bj", d_ctx, cache.hbar)
            d_hbar += a[..., None] * d_ctx[:, None, :]
            dscores = a * (da - (da * a).sum(axis=-1, keepdims=True))
            q = h_top @ w_a
            dq = np.einsum("bj,bjh->bh", dscores, cache.hbar)
            d_hbar += dscores[..., None] * q[:, None, :]
            grads["att_wa"] += h_top.T @ dq
            dh_top = dh_top + dq @ w_a.T

            # stacked LSTM backward, top to bottom
            dx_above = None
            for l in reversed(range(L)):
                dh_l = dh_carry[l].copy()
                if l == L - 1:
                    dh_l += dh_top
                else:
                    dm = cache.dec_drop[l]
                    dh_l += dx_above * dm[:, t] if dm is not None else dx_above
                wx, wh, _ = self._layer("dec", l)
                dx, dh_prev, dc_prev, dwx, dwh, db = _lstm_backward(
                    dh_l, dc_carry[l], step.x[l], step.h_prev[l], step.c_prev[l],
                    step.c_new[l], step.gates[l], wx, wh,
                )
                grads[f"dec_{l}_wx"] += dwx
                grads[f"dec_{l}_wh"] += dwh
                grads[f"dec_{l}_b"] += db
                dh_carry[l] = dh_prev
                dc_carry[l] = dc_prev
                dx_above = dx
            if cfg.input_feed:
                dx_emb[:, t] = dx_above[:, : E + cfg.case_embed]
                d_htilde_carry = dx_above[:, E + cfg.case_embed :]
            else:
                dx_emb[:, t] = dx_above

        np.add.at(grads["tgt_embed"], batch.tgt_in.reshape(-1), dx_emb[..., :E].reshape(-1, E))
        np.add.at(
            grads["tgt_case_embed"],
            batch.tgt_in_case.reshape(-1),
            dx_emb[..., E:].reshape(-1, cfg.case_embed),
        )

        # encoder backward: per-position grads plus decoder-init grads
        d_hbar *= enc.mask[..., None]
        d_init_h, d_init_c = dh_carry, dc_carry
        dX_f = self._stack_backward(
            "enc_fwd", cache.enc_fwd, d_hbar, d_init_h, d_init_c, enc.mask, grads
        )
        d_top_rev = _reverse_rows(d_hbar, batch.src_len)
        dX_b_rev = self._stack_backward(
            "enc_bwd", cache.enc_bwd, d_top_rev, d_init_h, d_init_c, enc.mask, grads
        )
        dX = dX_f + _reverse_rows(dX_b_rev, batch.src_len)
        np.add.at(grads["src_embed"], batch.src.reshape(-1), dX[..., :E].reshape(-1, E))
        np.add.at(
            grads["src_case_embed"],
            batch.src_case.reshape(-1),
            dX[..., E:].reshape(-1, cfg.case_embed),
        )
        return grads

    def _stack_backward(self, stack, sc: _StackCache, d_top, d_final_h, d_final_c, mask, grads):
        cfg = self.config
        L = cfg.layers
        B, T, _ = d_top.shape
        dh_carry = [d_final_h[l].copy() for l in range(L)]
        dc_carry = [d_final_c[l].copy() for l in range(L)]
        dX = np.zeros_like(sc.x[0])
        zeros = np.zeros((B, cfg.hidden), dtype=cfg.np_dtype)
        for t in reversed(range(T)):
            m = mask[:, t : t + 1]
            dx_above = None
            for l in reversed(range(L)):
                dh_t = dh_carry[l]
                if l == L - 1:
                    dh_t = dh_t + d_top[:, t]
                else:
                    dm = sc.drop[l]
                    dh_t = dh_t + (dx_above * dm[:, t] if dm is not None else dx_above)
                dc_t = dc_carry[l]
                # carry-through mask: held state passes gradient straight back
                dh_new = m * dh_t
                dc_new = m * dc_t
                h_prev = sc.h_seq[l][:, t - 1] if t > 0 else zeros
                c_prev = sc.c_seq[l][:, t - 1] if t > 0 else zeros
                gates = tuple(g[:, t] for g in sc.gates[l])
                wx, wh, _ = self._layer(stack, l)
                dx, dh_prev, dc_prev, dwx, dwh, db = _lstm_backward(
                    dh_new, dc_new, sc.x[l][:, t], h_prev, c_prev,
                    sc.c_new[l][:, t], gates, wx, wh,
                )
                grads[f"{stack}_{l}_wx"] += dwx
                grads[f"{stack}_{l}_wh"] += dwh
                grads[f"{stack}_{l}_b"] += db
                dh_carry[l] = dh_prev + (1.0 - m) * dh_t
                dc_carry[l] = dc_prev + (1.0 - m) * dc_t
                dx_above = dx
            dX[:, t] = dx_above
        return dX
