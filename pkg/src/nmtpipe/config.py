"""Pipeline configuration: flat key = value sections, validated all at once.

Defaults are the full-scale settings (4x1000 LSTM, 500-dim embeddings,
dropout 0.3, batch 64, max length 80, 30k merges and vocabulary, 4.5M-pair
shards, 2.5M+2.5M selection quotas). Every problem in a file is reported in
one error, not fail-fast.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields

from .errors import ConfigError


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _path_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


@dataclass
class PipelineConfig:
    # [data] corpus roles; test_src/test_tgt may list several files
    p_src: str = ""
    p_tgt: str = ""
    mono_tgt: str = ""
    valid_src: str = ""
    valid_tgt: str = ""
    test_src: list = None
    test_tgt: list = None
    # [preprocess]
    compound_split: bool = False
    compound_min_len: int = 4
    compound_max_parts: int = 2
    merges: int = 30000
    vocab_size: int = 30000
    # [model]
    layers: int = 4
    hidden: int = 1000
    embed: int = 500
    case_embed: int = 8
    dropout: float = 0.3
    input_feed: bool = True
    init_scale: float = 0.1
    # [train]
    batch_size: int = 64
    max_len: int = 80
    lr: float = 1.0
    decay: float = 0.7
    plateau_threshold: float = 0.01
    p1_max_epochs: int = 20
    p1_decay_epochs: int = 4
    p3_decay_epochs: int = 5
    clip_norm: float = 5.0
    reverse_epochs: int = 4
    shard_size: int = 4500000
    hyperspec_lr: float = 0.7
    hyperspec_epochs: int = 1
    hyperspec_clip: float = None  # inherits clip_norm when unset
    # [select]
    quota_p: int = 2500000
    quota_m: int = 2500000
    # [translate]
    beam: int = 5
    length_norm: bool = True
    # [pipeline]
    seed: int = 1

    def __post_init__(self):
        if self.test_src is None:
            self.test_src = []
        if self.test_tgt is None:
            self.test_tgt = []

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


# (section, key) -> (attribute, parser, range check, expected-type text)
def _pos(x):
    return x > 0


def _nonneg(x):
    return x >= 0


_SCHEMA = {
    ("data", "p_src"): ("p_src", str, None, "path"),
    ("data", "p_tgt"): ("p_tgt", str, None, "path"),
    ("data", "mono_tgt"): ("mono_tgt", str, None, "path"),
    ("data", "valid_src"): ("valid_src", str, None, "path"),
    ("data", "valid_tgt"): ("valid_tgt", str, None, "path"),
    ("data", "test_src"): ("test_src", _path_list, None, "comma-separated paths"),
    ("data", "test_tgt"): ("test_tgt", _path_list, None, "comma-separated paths"),
    ("preprocess", "compound_split"): ("compound_split", _bool, None, "boolean"),
    ("preprocess", "compound_min_len"): ("compound_min_len", int, _pos, "positive integer"),
    ("preprocess", "compound_max_parts"): (
        "compound_max_parts", int, lambda x: x >= 2, "integer >= 2",
    ),
    ("preprocess", "merges"): ("merges", int, _nonneg, "integer >= 0"),
    ("preprocess", "vocab_size"): ("vocab_size", int, lambda x: x >= 4, "integer >= 4"),
    ("model", "layers"): ("layers", int, _pos, "positive integer"),
    ("model", "hidden"): ("hidden", int, _pos, "positive integer"),
    ("model", "embed"): ("embed", int, _pos, "positive integer"),
    ("model", "case_embed"): ("case_embed", int, _pos, "positive integer"),
    ("model", "dropout"): ("dropout", float, lambda x: 0.0 <= x < 1.0, "float in [0, 1)"),
    ("model", "input_feed"): ("input_feed", _bool, None, "boolean"),
    ("model", "init_scale"): ("init_scale", float, _pos, "positive float"),
    ("train", "batch_size"): ("batch_size", int, _pos, "positive integer"),
    ("train", "max_len"): ("max_len", int, _pos, "positive integer"),
    ("train", "lr"): ("lr", float, _pos, "positive float"),
    ("train", "decay"): ("decay", float, lambda x: 0.0 < x < 1.0, "float in (0, 1)"),
    ("train", "plateau_threshold"): (
        "plateau_threshold", float, _nonneg, "float >= 0",
    ),
    ("train", "p1_max_epochs"): ("p1_max_epochs", int, _pos, "positive integer"),
    ("train", "p1_decay_epochs"): ("p1_decay_epochs", int, _nonneg, "integer >= 0"),
    ("train", "p3_decay_epochs"): ("p3_decay_epochs", int, _nonneg, "integer >= 0"),
    ("train", "clip_norm"): ("clip_norm", float, _pos, "positive float"),
    ("train", "reverse_epochs"): ("reverse_epochs", int, _pos, "positive integer"),
    ("train", "shard_size"): ("shard_size", int, _pos, "positive integer"),
    ("train", "hyperspec_lr"): ("hyperspec_lr", float, _pos, "positive float"),
    ("train", "hyperspec_epochs"): ("hyperspec_epochs", int, _nonneg, "integer >= 0"),
    ("train", "hyperspec_clip"): ("hyperspec_clip", float, _pos, "positive float"),
    ("select", "quota_p"): ("quota_p", int, _nonneg, "integer >= 0"),
    ("select", "quota_m"): ("quota_m", int, _nonneg, "integer >= 0"),
    ("translate", "beam"): ("beam", int, _pos, "positive integer"),
    ("translate", "length_norm"): ("length_norm", _bool, None, "boolean"),
    ("pipeline", "seed"): ("seed", int, None, "integer"),
}

_PATH_ATTRS = ("p_src", "p_tgt", "mono_tgt", "valid_src", "valid_tgt")


def validate_config(path) -> PipelineConfig:
    """Parse and fully validate a config file; absent keys take defaults.

    Collects every problem (unknown keys, type mismatches, range violations,
    missing files) and raises one ConfigError carrying the whole list.
    """
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read config file: {exc}"]) from None
    except configparser.Error as exc:
        raise ConfigError([f"malformed config file: {exc}"]) from None

    errors: list[str] = []
    config = PipelineConfig()
    for section in parser.sections():
        known_keys = {k for s, k in _SCHEMA if s == section}
        if not known_keys:
            errors.append(f"unknown section [{section}]")
            continue
        for key, raw in parser.items(section):
            spec = _SCHEMA.get((section, key))
            if spec is None:
                errors.append(f"unknown key '{key}' in section [{section}]")
                continue
            attr, parse, check, expected = spec
            try:
                value = parse(raw)
            except ValueError:
                errors.append(
                    f"[{section}] {key} = {raw!r}: expected {expected}"
                )
                continue
            if check is not None and not check(value):
                errors.append(
                    f"[{section}] {key} = {raw!r}: out of range, expected {expected}"
                )
                continue
            setattr(config, attr, value)

    for attr in _PATH_ATTRS:
        p = getattr(config, attr)
        if p and not os.path.exists(p):
            errors.append(f"[data] {attr}: file not found: {p}")
    for attr in ("test_src", "test_tgt"):
        for p in getattr(config, attr):
            if not os.path.exists(p):
                errors.append(f"[data] {attr}: file not found: {p}")
    if len(config.test_src) != len(config.test_tgt):
        errors.append("[data] test_src and test_tgt list different numbers of files")

    if errors:
        raise ConfigError(errors)
    return config
