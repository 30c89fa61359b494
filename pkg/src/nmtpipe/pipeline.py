"""Config-driven end-to-end pipeline with a reproducibility manifest.

Stages run in the training order of the full system: preprocess, joint BPE,
training on parallel data until plateau (plus decay epochs), back-translation
of monolingual text with a reverse model, continuation training on
parallel+synthetic shards, cross-entropy data selection, decay-mode training
on the selected subset, hyper-specialisation on the test-set sources, and
BLEU evaluation. Every stage's outputs are hashed into manifest.json so a
re-run with the same seed can be checked for bit-identical behaviour.
"""

from __future__ import annotations

import hashlib
import json
import os
import time

from . import __version__
from .bleu import average_bleu, bleu
from .config import PipelineConfig
from .corpusio import read_lines, sha256_file, write_lines, write_tokens
from .errors import ConfigError
from .model import ModelConfig
from .select import SelectionJob, select_top
from .subword import BPE_MARKER, BpeEncoder, Vocabulary, build_vocab, count_words
from .textnorm import (
    CASE_TO_ID,
    ID_TO_CASE,
    CompoundSplitter,
    decode_case,
    encode_case,
    join_compounds,
    tokenize,
)
from .train import (
    build_schedule,
    evaluate_ppl,
    load_checkpoint,
    new_train_state,
    run_schedule,
    save_checkpoint,
)
from .translate import back_translate, beam_decode, hyper_specialize


def stage_seed(master: int, name: str) -> int:
    digest = hashlib.sha256(f"{master}:{name}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def postprocess_pieces(pieces, tags, compound_split=False, marker=BPE_MARKER):
    """Subword pieces + per-piece case tags -> cased, compound-joined tokens.

    A word's case tag is the tag of its first piece; dangling continuation
    markers are flushed as-is.
    """
    words, word_tags = [], []
    buf, buf_tag = "", None
    for piece, tag in zip(pieces, tags):
        if buf_tag is None:
            buf_tag = tag
        if piece.endswith(marker):
            buf += piece[: -len(marker)]
        else:
            words.append(buf + piece)
            word_tags.append(buf_tag)
            buf, buf_tag = "", None
    if buf:
        words.append(buf)
        word_tags.append(buf_tag)
    cased = decode_case(words, word_tags)
    if compound_split:
        cased = join_compounds(cased)
    return cased


class _Manifest:
    def __init__(self, config: PipelineConfig, workdir, seed, deterministic, threads):
        self.data = {
            "tool": f"nmtpipe {__version__}",
            "seed": seed,
            "deterministic": deterministic,
            "threads": threads,
            "config": config.to_dict(),
            "inputs": {},
            "stages": {},
            "metrics": {},
        }
        self.workdir = workdir

    def add_input(self, path):
        self.data["inputs"][os.path.basename(path)] = sha256_file(path)

    def add_stage(self, name, outputs, seconds):
        self.data["stages"][name] = {
            "outputs": {os.path.relpath(p, self.workdir): sha256_file(p) for p in outputs},
            "seconds": round(seconds, 3),
        }

    def write(self):
        path = os.path.join(self.workdir, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


class _Prepared:
    """One corpus side after preprocessing and BPE: pieces + case tags."""

    def __init__(self, pieces, tags):
        self.pieces = pieces
        self.tags = tags

    def ids(self, vocab: Vocabulary):
        return [
            (vocab.encode(p), [CASE_TO_ID[t] for t in ts])
            for p, ts in zip(self.pieces, self.tags)
        ]


def _preprocess(lines, splitter=None):
    toks = [tokenize(line) for line in lines]
    if splitter is not None:
        toks = splitter.transform(toks)
    lowered, factors = [], []
    for sent in toks:
        low, fac = encode_case(sent)
        lowered.append(low)
        factors.append(fac)
    return lowered, factors


def _segment(encoder: BpeEncoder, lowered, factors) -> _Prepared:
    pieces_out, tags_out = [], []
    for sent, tags in zip(lowered, factors):
        pieces, ptags = [], []
        for tok, tag in zip(sent, tags):
            segs = encoder.segment(tok)
            pieces.extend(segs)
            ptags.extend([tag] * len(segs))
        pieces_out.append(pieces)
        tags_out.append(ptags)
    return _Prepared(pieces_out, tags_out)


def _pairs(src: _Prepared, tgt: _Prepared, vocab, max_len):
    out = []
    for (s, sc), (t, tc) in zip(src.ids(vocab), tgt.ids(vocab)):
        if s and len(s) <= max_len and len(t) <= max_len:
            out.append((s, sc, t, tc))
    return out


def run_pipeline(
    config: PipelineConfig,
    workdir,
    seed: int | None = None,
    deterministic: bool = True,
    threads: int = 1,
    log=None,
) -> dict:
    """Execute every stage; returns the manifest dict (also written to disk)."""
    log = log or (lambda msg: None)
    seed = config.seed if seed is None else seed
    os.makedirs(workdir, exist_ok=True)
    required = {"p_src": config.p_src, "p_tgt": config.p_tgt,
                "valid_src": config.valid_src, "valid_tgt": config.valid_tgt,
                "mono_tgt": config.mono_tgt}
    missing = [k for k, v in required.items() if not v]
    if missing or not config.test_src:
        missing += [] if config.test_src else ["test_src"]
        raise ConfigError([f"pipeline requires [data] {k}" for k in missing])
    manifest = _Manifest(config, workdir, seed, deterministic, threads)
    for p in [config.p_src, config.p_tgt, config.mono_tgt, config.valid_src,
              config.valid_tgt, *config.test_src, *config.test_tgt]:
        manifest.add_input(p)

    def path(name):
        return os.path.join(workdir, name)

    # --- stage: preprocess ---------------------------------------------------
    t0 = time.time()
    splitter = None
    if config.compound_split:
        src_tok = [tokenize(line) for line in read_lines(config.p_src)]
        splitter = CompoundSplitter(
            config.compound_min_len, config.compound_max_parts
        ).fit(src_tok)
    corpora = {}
    roles = [("p.src", config.p_src, True), ("p.tgt", config.p_tgt, False),
             ("mono.tgt", config.mono_tgt, False),
             ("valid.src", config.valid_src, True), ("valid.tgt", config.valid_tgt, False)]
    for i, p in enumerate(config.test_src):
        roles.append((f"test{i + 1}.src", p, True))
    for i, p in enumerate(config.test_tgt):
        roles.append((f"test{i + 1}.tgt", p, False))
    outputs = []
    for name, src_path, is_source in roles:
        lowered, factors = _preprocess(
            read_lines(src_path), splitter if is_source else None
        )
        corpora[name] = (lowered, factors)
        write_tokens(path(name + ".tok"), lowered)
        write_tokens(path(name + ".case"), factors)
        outputs += [path(name + ".tok"), path(name + ".case")]
    manifest.add_stage("preprocess", outputs, time.time() - t0)
    log("preprocess: done")

    # --- stage: bpe ------------------------------------------------------------
    t0 = time.time()
    joint = count_words(corpora["p.src"][0]) + count_words(corpora["p.tgt"][0])
    encoder = BpeEncoder(num_merges=config.merges).fit(joint)
    encoder.save(path("bpe.merges"))
    prepared = {
        name: _segment(encoder, lowered, factors)
        for name, (lowered, factors) in corpora.items()
    }
    vocab = build_vocab(
        prepared["p.src"].pieces + prepared["p.tgt"].pieces, config.vocab_size
    )
    vocab.save(path("vocab.txt"))
    outputs = [path("bpe.merges"), path("vocab.txt")]
    for name, prep in prepared.items():
        write_tokens(path(name + ".bpe"), prep.pieces)
        outputs.append(path(name + ".bpe"))
    manifest.add_stage("bpe", outputs, time.time() - t0)
    log(f"bpe: {len(encoder.merges_)} merges, vocabulary {len(vocab)}")

    vocab_hash = hashlib.sha256("\n".join(vocab.symbols()).encode()).hexdigest()
    meta = {"vocab_sha256": vocab_hash, "vocab": vocab.symbols()}
    model_cfg = ModelConfig(
        src_vocab=len(vocab), tgt_vocab=len(vocab),
        layers=config.layers, hidden=config.hidden, embed=config.embed,
        case_embed=config.case_embed, dropout=config.dropout,
        input_feed=config.input_feed, max_len=config.max_len,
        init_scale=config.init_scale,
    )

    p_pairs = _pairs(prepared["p.src"], prepared["p.tgt"], vocab, config.max_len)
    valid_pairs = _pairs(prepared["valid.src"], prepared["valid.tgt"], vocab, config.max_len)
    test_pairs = []
    test_sources = []
    for i in range(len(config.test_src)):
        s = prepared[f"test{i + 1}.src"]
        t = prepared[f"test{i + 1}.tgt"]
        test_pairs.append(_pairs(s, t, vocab, config.max_len))
        test_sources.append([(ids, case) for ids, case in s.ids(vocab)])

    def train_stage(name, state, schedule):
        t0 = time.time()
        lines = []
        logs = run_schedule(state, schedule, valid_pairs, config.batch_size,
                            config.clip_norm, log_fn=lines.append)
        write_lines(path(name + ".log"), lines)
        save_checkpoint(state, path(name + ".ckpt"))
        manifest.add_stage(name, [path(name + ".log"), path(name + ".ckpt")], time.time() - t0)
        for line in lines:
            log(f"{name}: {line}")
        return logs

    # --- stage: train on parallel data ---------------------------------------
    state = new_train_state(model_cfg, seed=stage_seed(seed, "train_p"),
                            lr=config.lr, decay=config.decay)
    state.metadata = meta
    train_stage("train_p", state, build_schedule(
        p_pairs,
        initial_lr=config.lr, decay=config.decay,
        plateau_threshold=config.plateau_threshold,
        p1_max_epochs=config.p1_max_epochs, p1_decay_epochs=config.p1_decay_epochs,
    ))

    # --- stage: back-translation ----------------------------------------------
    t0 = time.time()
    reverse_pairs = [(t, tc, s, sc) for s, sc, t, tc in p_pairs]
    rev_state = new_train_state(model_cfg, seed=stage_seed(seed, "reverse"),
                                lr=config.lr, decay=config.decay)
    rev_state.metadata = meta
    run_schedule(
        rev_state,
        build_schedule(reverse_pairs, initial_lr=config.lr, decay=config.decay,
                       plateau_threshold=config.plateau_threshold,
                       p1_max_epochs=config.reverse_epochs, p1_decay_epochs=0),
        [(t, tc, s, sc) for s, sc, t, tc in valid_pairs],
        config.batch_size, config.clip_norm,
    )
    save_checkpoint(rev_state, path("reverse.ckpt"))
    mono = [(ids, case) for ids, case in prepared["mono.tgt"].ids(vocab)
            if ids and len(ids) <= config.max_len]
    synthetic = back_translate(rev_state.model, mono, config.shard_size,
                               config.batch_size, config.max_len)
    outputs = [path("reverse.ckpt")]
    shards = synthetic.shards()
    for i, shard in enumerate(shards):
        write_tokens(path(f"m{i + 1}.src.bpe"), [vocab.decode(p[0]) for p in shard])
        write_tokens(path(f"m{i + 1}.tgt.bpe"), [vocab.decode(p[2]) for p in shard])
        outputs += [path(f"m{i + 1}.src.bpe"), path(f"m{i + 1}.tgt.bpe")]
    manifest.add_stage("backtranslate", outputs, time.time() - t0)
    log(f"backtranslate: {len(synthetic.pairs)} pairs in {len(shards)} shards")

    # --- stage: train on parallel + synthetic shards ---------------------------
    state = load_checkpoint(path("train_p.ckpt"))
    train_stage("train_pm", state, build_schedule(
        p_pairs, synthetic_shards=shards,
        initial_lr=config.lr, decay=config.decay,
        plateau_threshold=config.plateau_threshold, p1_max_epochs=0,
        p1_decay_epochs=0, p3_decay_epochs=0,
    ))

    # --- stage: data selection --------------------------------------------------
    t0 = time.time()
    in_domain = [src for src, _ in [x for sources in test_sources for x in sources]]
    job = SelectionJob(
        corpora={"P": _as_selection_pairs(p_pairs), "M": _as_selection_pairs(synthetic.pairs)},
        in_domain=in_domain,
        quotas={"P": config.quota_p, "M": config.quota_m},
        seed=stage_seed(seed, "select"),
    )
    result = select_top(job)
    selected = [full for _, full in result.pairs]
    write_tokens(path("selected.src.bpe"), [vocab.decode(p[0]) for p in selected])
    write_tokens(path("selected.tgt.bpe"), [vocab.decode(p[2]) for p in selected])
    score_paths = {}
    for label in ("P", "M"):
        rows = [f"{idx}\t{h_in:.6f}\t{h_out:.6f}\t{delta:.6f}"
                for lab, idx, h_in, h_out, delta in result.records if lab == label]
        score_paths[label] = path(f"selected.{label}.scores")
        write_lines(score_paths[label], rows)
    manifest.add_stage(
        "select",
        [path("selected.src.bpe"), path("selected.tgt.bpe"), *score_paths.values()],
        time.time() - t0,
    )
    log(f"select: kept {len(selected)} pairs")

    # --- stage: decay training on the selected subset ---------------------------
    state = load_checkpoint(path("train_pm.ckpt"))
    train_stage("train_decay", state, build_schedule(
        p_pairs, selected=selected,
        initial_lr=config.lr, decay=config.decay,
        plateau_threshold=config.plateau_threshold, p1_max_epochs=0,
        p1_decay_epochs=0, p3_decay_epochs=config.p3_decay_epochs,
    ))

    # --- stage: hyper-specialisation ---------------------------------------------
    t0 = time.time()
    final_state = load_checkpoint(path("train_decay.ckpt"))
    all_test_pairs = [pair for pairs in test_pairs for pair in pairs]
    ppl_before = evaluate_ppl(final_state.model, all_test_pairs, config.batch_size)
    t_sources = [x for sources in test_sources for x in sources]
    hyperspec_clip = config.hyperspec_clip
    if hyperspec_clip is None:
        hyperspec_clip = config.clip_norm
    hyper_state = hyper_specialize(
        final_state, t_sources, targets=None,
        lr=config.hyperspec_lr, epochs=config.hyperspec_epochs,
        batch_size=config.batch_size, clip_norm=hyperspec_clip,
        beam_size=config.beam, max_len=config.max_len,
        seed=stage_seed(seed, "hyperspec"),
    )
    ppl_after = evaluate_ppl(hyper_state.model, all_test_pairs, config.batch_size)
    save_checkpoint(hyper_state, path("hyperspec.ckpt"))
    manifest.add_stage("hyperspec", [path("hyperspec.ckpt")], time.time() - t0)
    manifest.data["metrics"]["in_domain_ppl_before_hyperspec"] = ppl_before
    manifest.data["metrics"]["in_domain_ppl_after_hyperspec"] = ppl_after
    log(f"hyperspec: in-domain PPL {ppl_before:.4f} -> {ppl_after:.4f}")

    # --- stage: BLEU ---------------------------------------------------------------
    t0 = time.time()
    outputs = []
    reports = {}
    for label, model in (("final", final_state.model), ("hyperspec", hyper_state.model)):
        per_set = []
        for i, sources in enumerate(test_sources):
            hyps = []
            for ids, case in sources:
                hyp = beam_decode(model, ids, case, beam_size=config.beam,
                                  max_len=config.max_len,
                                  length_norm=config.length_norm)
                pieces = vocab.decode(hyp.tokens)
                tags = [ID_TO_CASE[c] for c in hyp.case_ids]
                hyps.append(postprocess_pieces(pieces, tags, config.compound_split))
            refs = [tokenize(line) for line in read_lines(config.test_tgt[i])]
            report = bleu(hyps, refs)
            per_set.append(report.bleu)
            hyp_path = path(f"test{i + 1}.{label}.hyp")
            write_tokens(hyp_path, hyps)
            outputs.append(hyp_path)
        reports[label] = per_set
    manifest.add_stage("bleu", outputs, time.time() - t0)
    manifest.data["metrics"]["bleu_before_hyperspec"] = reports["final"]
    manifest.data["metrics"]["bleu"] = reports["hyperspec"]
    manifest.data["metrics"]["bleu_average"] = average_bleu(reports["hyperspec"])
    log(f"bleu: {reports['hyperspec']} (avg {manifest.data['metrics']['bleu_average']:.2f})")

    manifest.write()
    return manifest.data


def _as_selection_pairs(pairs):
    # selection scores the source side of each aligned pair; ride the full
    # 4-tuple along as the "target" so the selected output stays trainable
    return [(tuple(p[0]), p) for p in pairs]
