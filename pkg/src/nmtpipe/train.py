"""SGD training: epochs over shards, plateau-triggered LR decay, checkpoints.

The learning rate stays at its initial value until validation perplexity
stops improving by more than a relative threshold; from then on it is
multiplied by the decay factor after every epoch. Multi-phase schedules
cover parallel-only training, parallel+synthetic shard cycling at full LR,
and a final decay phase on selected data.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, ConfigError, DataError, NumericError
from .model import Batch, ModelConfig, Seq2SeqModel, make_batch

CHECKPOINT_MAGIC = b"NMTPIPE\x01"
CHECKPOINT_VERSION = 1

_DTYPE_CODES = {"float32": "<f4", "float64": "<f8"}


def sgd_update(params, grads, lr, clip_norm=5.0):
    """In-place SGD step with global-norm gradient clipping.

    If the global gradient norm exceeds `clip_norm`, all gradients are scaled
    by clip_norm/norm before the update p <- p - lr*g. Pass clip_norm=None
    (or inf) to disable clipping.
    """
    if lr <= 0:
        raise ConfigError("learning rate must be positive")
    sq = 0.0
    for g in grads.values():
        s = float(np.sum(np.square(g, dtype=np.float64)))
        if not np.isfinite(s):
            raise NumericError("non-finite gradient; batch aborted")
        sq += s
    norm = np.sqrt(sq)
    scale = 1.0
    if clip_norm is not None and np.isfinite(clip_norm) and norm > clip_norm:
        scale = clip_norm / norm
    for name, p in params.items():
        p -= (lr * scale) * grads[name].astype(p.dtype, copy=False)
    return params


@dataclass
class TrainState:
    """Everything needed to continue training: params, LR state, RNG."""

    model: Seq2SeqModel
    epoch: int = 0
    lr: float = 1.0
    decay: float = 0.7
    decay_mode: bool = False
    ppl_history: list = field(default_factory=list)
    rng: np.random.Generator = None
    metadata: dict = field(default_factory=dict)
    updates: int = 0

    def __post_init__(self):
        if self.rng is None:
            self.rng = np.random.Generator(np.random.PCG64(0))


def new_train_state(config: ModelConfig, seed: int = 0, lr: float = 1.0, decay: float = 0.7):
    model = Seq2SeqModel(config, seed=seed)
    return TrainState(model=model, lr=lr, decay=decay,
                      rng=np.random.Generator(np.random.PCG64(seed)))


def bucket_batches(pairs, batch_size, seed, dtype="float32"):
    """Batches bucketed by source length, batch order shuffled by `seed`."""
    order = sorted(range(len(pairs)), key=lambda i: (len(pairs[i][0]), i))
    batches = []
    for start in range(0, len(order), batch_size):
        chunk = [pairs[i] for i in order[start : start + batch_size]]
        batches.append(make_batch(chunk, dtype=dtype))
    rng = np.random.Generator(np.random.PCG64(seed))
    rng.shuffle(batches)
    return batches


def run_epoch(state: TrainState, shard, batch_size=64, clip_norm=5.0, dropout=None):
    """One seeded-shuffled pass over a shard; returns mean train loss/token."""
    if not shard:
        raise DataError("cannot run an epoch over an empty shard")
    dtype = state.model.config.dtype
    shuffle_seed = int(state.rng.integers(2**62))
    total_loss = 0.0
    total_tokens = 0.0
    for batch in bucket_batches(shard, batch_size, shuffle_seed, dtype):
        batch_seed = int(state.rng.integers(2**62))
        loss, cache = state.model.forward_loss(batch, dropout_p=dropout, seed=batch_seed)
        grads = state.model.backward(cache)
        sgd_update(state.model.params, grads, state.lr, clip_norm)
        state.updates += 1
        total_loss += loss * cache.n_tokens
        total_tokens += cache.n_tokens
    return total_loss / total_tokens


def evaluate_ppl(model: Seq2SeqModel, pairs, batch_size=64):
    """exp(mean word NLL per target token), teacher-forced, dropout off."""
    if not pairs:
        raise DataError("cannot evaluate on an empty corpus")
    nll = 0.0
    tokens = 0.0
    for start in range(0, len(pairs), batch_size):
        batch = make_batch(pairs[start : start + batch_size], dtype=model.config.dtype)
        _, cache = model.forward_loss(batch, dropout_p=0.0, seed=0)
        nll += cache.word_nll_sum
        tokens += cache.n_tokens
    return float(np.exp(nll / tokens))


def update_lr(state: TrainState, new_ppl: float, threshold: float):
    """Record a validation PPL and apply the plateau/decay policy.

    Once in decay mode the LR is multiplied by the decay factor after every
    epoch; decay mode starts as soon as the relative improvement
    (prev - new)/prev falls below `threshold`, and the first decayed LR
    applies to the following epoch.
    """
    prev = state.ppl_history[-1] if state.ppl_history else None
    state.ppl_history.append(float(new_ppl))
    if state.decay_mode:
        state.lr *= state.decay
    elif prev is not None and (prev - new_ppl) / prev < threshold:
        state.decay_mode = True
        state.lr *= state.decay
    return state


@dataclass
class TrainingSchedule:
    """Epoch plan: parallel-only until plateau (plus decay epochs), then one
    epoch per parallel+synthetic shard at full LR, then decay epochs on the
    selected subset."""

    parallel: list
    synthetic_shards: list = field(default_factory=list)
    selected: list | None = None
    initial_lr: float = 1.0
    decay: float = 0.7
    plateau_threshold: float = 0.01
    p1_max_epochs: int = 20
    p1_decay_epochs: int = 4
    p3_decay_epochs: int = 5

    def labels(self):
        out = ["P"]
        out += [f"P+M{i + 1}" for i in range(len(self.synthetic_shards))]
        if self.selected is not None:
            out += ["P'+M'"] * self.p3_decay_epochs
        return out


def build_schedule(parallel, synthetic_shards=(), selected=None, **knobs) -> TrainingSchedule:
    if not parallel:
        raise ConfigError("schedule requires non-empty parallel data")
    shards = [list(s) for s in synthetic_shards]
    for i, shard in enumerate(shards):
        if not shard:
            raise ConfigError(f"synthetic shard {i + 1} is empty")
    if selected is not None and not selected:
        raise ConfigError("selected corpus for the decay phase is empty")
    return TrainingSchedule(list(parallel), shards, selected, **knobs)


@dataclass
class EpochLog:
    epoch: int
    label: str
    lr: float
    train_loss: float
    valid_ppl: float
    seconds: float

    def to_line(self) -> str:
        return (
            f"{self.epoch}\t{self.label}\t{self.lr:.6g}\t"
            f"{self.train_loss:.6f}\t{self.valid_ppl:.4f}\t{self.seconds:.2f}"
        )


def run_schedule(
    state: TrainState,
    schedule: TrainingSchedule,
    validation,
    batch_size=64,
    clip_norm=5.0,
    log_fn=None,
) -> list[EpochLog]:
    """Execute a schedule, evaluating on `validation` after every epoch."""
    logs: list[EpochLog] = []

    def one_epoch(shard, label):
        t0 = time.time()
        train_loss = run_epoch(state, shard, batch_size, clip_norm)
        ppl = evaluate_ppl(state.model, validation, batch_size)
        state.epoch += 1
        row = EpochLog(state.epoch, label, state.lr, train_loss, ppl, time.time() - t0)
        logs.append(row)
        if log_fn:
            log_fn(row.to_line())
        return ppl

    # phase 1: parallel data until the validation PPL plateaus...
    for _ in range(schedule.p1_max_epochs):
        ppl = one_epoch(schedule.parallel, "P")
        update_lr(state, ppl, schedule.plateau_threshold)
        if state.decay_mode:
            break
    # ...then additional parallel epochs with the LR decaying each time.
    if state.decay_mode:
        for _ in range(schedule.p1_decay_epochs):
            ppl = one_epoch(schedule.parallel, "P")
            update_lr(state, ppl, schedule.plateau_threshold)

    # phase 2: the union of all parallel data with one synthetic shard per
    # epoch, learning rate reset to its initial value.
    if schedule.synthetic_shards:
        state.lr = schedule.initial_lr
        state.decay_mode = False
        for i, shard in enumerate(schedule.synthetic_shards):
            ppl = one_epoch(schedule.parallel + shard, f"P+M{i + 1}")
            state.ppl_history.append(ppl)

    # phase 3: decay-mode epochs on the selected subset.
    if schedule.selected is not None:
        state.decay_mode = True
        state.lr = schedule.initial_lr * schedule.decay
        for _ in range(schedule.p3_decay_epochs):
            ppl = one_epoch(schedule.selected, "P'+M'")
            update_lr(state, ppl, schedule.plateau_threshold)
    return logs


# --- checkpoints -------------------------------------------------------------


def save_checkpoint(state: TrainState, path) -> None:
    """Binary container: magic, version, JSON metadata, raw tensors (LE)."""
    cfg = state.model.config
    params = state.model.params
    names = sorted(params)
    meta = {
        "config": cfg.to_dict(),
        "epoch": state.epoch,
        "lr": state.lr,
        "decay": state.decay,
        "decay_mode": state.decay_mode,
        "ppl_history": state.ppl_history,
        "updates": state.updates,
        "rng_state": state.rng.bit_generator.state,
        "metadata": state.metadata,
        "tensors": [
            {"name": n, "shape": list(params[n].shape), "dtype": str(params[n].dtype)}
            for n in names
        ],
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            arr = params[n]
            fh.write(np.ascontiguousarray(arr).astype(_DTYPE_CODES[str(arr.dtype)]).tobytes())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def load_checkpoint(path) -> TrainState:
    with open(path, "rb") as fh:
        if _read_exact(fh, len(CHECKPOINT_MAGIC), "magic") != CHECKPOINT_MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic bytes)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<Q", _read_exact(fh, 8, "metadata length"))
        try:
            meta = json.loads(_read_exact(fh, meta_len, "metadata"))
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from None
        config = ModelConfig.from_dict(meta["config"])
        params = {}
        for spec in meta["tensors"]:
            shape = tuple(spec["shape"])
            dtype = spec["dtype"]
            count = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, count * np.dtype(dtype).itemsize, spec["name"])
            params[spec["name"]] = (
                np.frombuffer(raw, dtype=_DTYPE_CODES[dtype]).astype(dtype).reshape(shape)
            )
        extra = fh.read(1)
        if extra:
            raise CheckpointError("trailing bytes after checkpoint payload")
    model = Seq2SeqModel(config, params=params)
    rng = np.random.Generator(np.random.PCG64(0))
    rng.bit_generator.state = meta["rng_state"]
    return TrainState(
        model=model,
        epoch=meta["epoch"],
        lr=meta["lr"],
        decay=meta["decay"],
        decay_mode=meta["decay_mode"],
        ppl_history=list(meta["ppl_history"]),
        rng=rng,
        metadata=meta.get("metadata", {}),
        updates=meta.get("updates", 0),
    )
