"""Command-line surface: every pipeline stage as a subcommand.

Subcommands stream line-oriented text and are pipe-friendly: they read stdin
and write stdout whenever file flags are omitted. Exit code 0 means no error
diagnostic was emitted; failures print one line per problem on stderr.
"""

from __future__ import annotations

import argparse
import sys
from collections import Counter

from . import __version__
from .bleu import bleu as bleu_score
from .config import validate_config
from .corpusio import read_case, read_lines, read_tokens, write_lines, write_tokens
from .errors import ConfigError, NmtError
from .lm import NGramLanguageModel
from .pipeline import postprocess_pieces, run_pipeline
from .select import SelectionJob, select_top
from .subword import BpeEncoder, Vocabulary, count_words
from .textnorm import (
    CASE_TO_ID,
    ID_TO_CASE,
    CompoundSplitter,
    decode_line,
    encode_case,
    tokenize,
)
from .model import ModelConfig
from .train import (
    build_schedule,
    load_checkpoint,
    new_train_state,
    run_schedule,
    save_checkpoint,
)
from .translate import back_translate, beam_decode, greedy_decode, hyper_specialize


def _in_lines(path):
    if path:
        return read_lines(path)
    return [decode_line(raw).rstrip("\n") for raw in sys.stdin.buffer]


def _out_lines(path, lines):
    if path:
        write_lines(path, lines)
    else:
        for line in lines:
            sys.stdout.write(line + "\n")
        sys.stdout.flush()


def _load_lexicon(path) -> Counter:
    lex = Counter()
    for lineno, line in enumerate(read_lines(path), start=1):
        fields = line.split("\t")
        if len(fields) != 2:
            raise ConfigError([f"{path}:{lineno}: expected 'word<TAB>count'"])
        lex[fields[0]] = int(fields[1])
    return lex


def _read_corpus_with_case(tok_path, case_path, vocab):
    sents = read_tokens(tok_path)
    if case_path:
        case = read_case(case_path)
        if len(case) != len(sents):
            raise ConfigError([f"{case_path}: line count differs from {tok_path}"])
    else:
        case = [encode_case(s)[1] for s in sents]
    ids = [vocab.encode(s) for s in sents]
    case_ids = [[CASE_TO_ID[t] for t in tags] for tags in case]
    return list(zip(ids, case_ids))


def _vocab_from_checkpoint(state) -> Vocabulary:
    symbols = state.metadata.get("vocab")
    if not symbols:
        raise ConfigError(["checkpoint carries no vocabulary metadata"])
    from .subword import SPECIALS

    return Vocabulary([s for s in symbols if s not in SPECIALS])


# --- subcommand handlers -----------------------------------------------------


def _cmd_tokenize(args):
    lines = _in_lines(args.input)
    sents = [tokenize(line) for line in lines]
    if args.count_lexicon:
        freqs = count_words(sents)
        rows = [f"{w}\t{c}" for w, c in sorted(freqs.items(), key=lambda kv: (-kv[1], kv[0]))]
        write_lines(args.count_lexicon, rows)
        return 0
    if args.compound_lexicon:
        splitter = CompoundSplitter(args.compound_min_len, args.compound_max_parts)
        splitter.lexicon_ = _load_lexicon(args.compound_lexicon)
        sents = splitter.transform(sents)
    if args.case_out:
        lowered, factors = [], []
        for sent in sents:
            low, fac = encode_case(sent)
            lowered.append(low)
            factors.append(fac)
        write_tokens(args.case_out, factors)
        sents = lowered
    _out_lines(args.output, (" ".join(s) for s in sents))
    return 0


def _cmd_learn_bpe(args):
    freqs = Counter()
    for path in args.input or [None]:
        freqs += count_words(line.split() for line in _in_lines(path))
    encoder = BpeEncoder(num_merges=args.merges).fit(freqs)
    encoder.save(args.output)
    return 0


def _cmd_apply_bpe(args):
    encoder = BpeEncoder.from_file(args.merges)
    sents = [line.split() for line in _in_lines(args.input)]
    if args.case_in:
        if not args.case_out:
            raise ConfigError(["--case-in requires --case-out"])
        case = read_case(args.case_in)
        if len(case) != len(sents):
            raise ConfigError([f"{args.case_in}: line count differs from the input"])
        # expand word-level tags to piece-level tags
        pieces_out, tags_out = [], []
        for sent, tags in zip(sents, case):
            if len(sent) != len(tags):
                raise ConfigError([f"{args.case_in}: tag/token length mismatch"])
            pieces, ptags = [], []
            for tok, tag in zip(sent, tags):
                segs = encoder.segment(tok)
                pieces.extend(segs)
                ptags.extend([tag] * len(segs))
            pieces_out.append(pieces)
            tags_out.append(ptags)
        write_tokens(args.case_out, tags_out)
        _out_lines(args.output, (" ".join(p) for p in pieces_out))
    else:
        _out_lines(args.output, (" ".join(sum((encoder.segment(t) for t in s), []))
                                 for s in sents))
    return 0


def _cmd_train_lm(args):
    if args.score:
        model = NGramLanguageModel.load(args.score)
        out = [f"{model.cross_entropy(line.split()):.6f}" for line in _in_lines(args.input)]
        _out_lines(args.output, out)
        return 0
    corpus = [line.split() for line in _in_lines(args.input)]
    lambdas = tuple(float(x) for x in args.lambdas.split())
    model = NGramLanguageModel(order=args.order, lambdas=lambdas).fit(corpus)
    model.save(args.output)
    return 0


def _cmd_select(args):
    corpora = {}
    if args.p_src:
        corpora["P"] = list(zip(read_tokens(args.p_src), read_tokens(args.p_tgt)))
    if args.m_src:
        corpora["M"] = list(zip(read_tokens(args.m_src), read_tokens(args.m_tgt)))
    if not corpora:
        raise ConfigError(["select needs at least one labeled corpus (--p-src/--m-src)"])
    in_domain = []
    for path in args.in_domain:
        in_domain.extend(read_tokens(path))
    quotas = {}
    if "P" in corpora:
        quotas["P"] = args.quota_p
    if "M" in corpora:
        quotas["M"] = args.quota_m
    job = SelectionJob(corpora=corpora, in_domain=in_domain, quotas=quotas, seed=args.seed)
    result = select_top(job)
    write_tokens(args.out_prefix + ".src", (src for src, _ in result.pairs))
    write_tokens(args.out_prefix + ".tgt", (tgt for _, tgt in result.pairs))
    for label in corpora:
        rows = [f"{idx}\t{h_in:.6f}\t{h_out:.6f}\t{delta:.6f}"
                for lab, idx, h_in, h_out, delta in result.records if lab == label]
        write_lines(f"{args.out_prefix}.{label}.scores", rows)
    return 0


def _cmd_train(args):
    vocab = Vocabulary.load(args.vocab)
    pairs_src = _read_corpus_with_case(args.train_src, args.train_src_case, vocab)
    pairs_tgt = _read_corpus_with_case(args.train_tgt, args.train_tgt_case, vocab)
    pairs = [
        (s, sc, t, tc)
        for (s, sc), (t, tc) in zip(pairs_src, pairs_tgt)
        if s and len(s) <= args.max_len and len(t) <= args.max_len
    ]
    valid_src = _read_corpus_with_case(args.valid_src, args.valid_src_case, vocab)
    valid_tgt = _read_corpus_with_case(args.valid_tgt, args.valid_tgt_case, vocab)
    valid = [
        (s, sc, t, tc)
        for (s, sc), (t, tc) in zip(valid_src, valid_tgt)
        if s and len(s) <= args.max_len and len(t) <= args.max_len
    ]
    if args.resume:
        state = load_checkpoint(args.resume)
    else:
        config = ModelConfig(
            src_vocab=len(vocab), tgt_vocab=len(vocab), layers=args.layers,
            hidden=args.hidden, embed=args.embed, dropout=args.dropout,
            max_len=args.max_len,
        )
        state = new_train_state(config, seed=args.seed, lr=args.lr, decay=args.decay)
        state.metadata = {"vocab": vocab.symbols()}
    schedule = build_schedule(
        pairs, initial_lr=args.lr, decay=args.decay,
        plateau_threshold=args.threshold,
        p1_max_epochs=args.epochs, p1_decay_epochs=args.decay_epochs,
    )
    run_schedule(state, schedule, valid, args.batch_size, args.clip_norm,
                 log_fn=lambda line: print(line, file=sys.stderr))
    save_checkpoint(state, args.save)
    return 0


def _cmd_translate(args):
    state = load_checkpoint(args.checkpoint)
    vocab = _vocab_from_checkpoint(state)
    sents = [line.split() for line in _in_lines(args.input)]
    if args.case_in:
        case = read_case(args.case_in)
    else:
        case = [encode_case(s)[1] for s in sents]
    out = []
    scores = []
    for sent, tags in zip(sents, case):
        ids = vocab.encode(sent)
        case_ids = [CASE_TO_ID[t] for t in tags]
        if args.beam == 1:
            hyp = greedy_decode(state.model, ids, case_ids, args.max_len)
        else:
            hyp = beam_decode(state.model, ids, case_ids, beam_size=args.beam,
                              max_len=args.max_len,
                              length_norm=not args.no_length_norm)
        pieces = vocab.decode(hyp.tokens)
        tags_out = [ID_TO_CASE[c] for c in hyp.case_ids]
        if args.postprocess:
            out.append(" ".join(postprocess_pieces(pieces, tags_out, args.join_compounds)))
        else:
            out.append(" ".join(pieces))
        scores.append(f"{hyp.log_prob:.6f}")
    _out_lines(args.output, out)
    if args.scores_out:
        write_lines(args.scores_out, scores)
    return 0


def _cmd_backtranslate(args):
    state = load_checkpoint(args.checkpoint)
    vocab = _vocab_from_checkpoint(state)
    mono = _read_corpus_with_case(args.mono, args.mono_case, vocab)
    mono = [(ids, case) for ids, case in mono if ids and len(ids) <= args.max_len]
    synthetic = back_translate(state.model, mono, args.shard_size,
                               args.batch_size, args.max_len)
    for i, shard in enumerate(synthetic.shards()):
        write_tokens(f"{args.out_prefix}.m{i + 1}.src",
                     (vocab.decode(p[0]) for p in shard))
        write_tokens(f"{args.out_prefix}.m{i + 1}.tgt",
                     (vocab.decode(p[2]) for p in shard))
    print(f"{len(synthetic.pairs)} pairs in {len(synthetic.shards())} shards",
          file=sys.stderr)
    return 0


def _cmd_hyperspec(args):
    state = load_checkpoint(args.checkpoint)
    vocab = _vocab_from_checkpoint(state)
    in_domain = _read_corpus_with_case(args.in_domain_src, args.in_domain_case, vocab)
    targets = None
    if args.targets:
        targets = _read_corpus_with_case(args.targets, args.targets_case, vocab)
    new_state = hyper_specialize(
        state, in_domain, targets=targets, lr=args.lr, epochs=args.epochs,
        batch_size=args.batch_size, beam_size=args.beam, max_len=args.max_len,
        seed=args.seed,
    )
    save_checkpoint(new_state, args.save)
    return 0


def _cmd_bleu(args):
    hyps = [line.split() for line in _in_lines(args.hyp)]
    refs = read_tokens(args.ref)
    report = bleu_score(hyps, refs, lowercase=args.lc)
    print(report.format())
    return 0


def _cmd_pipeline(args):
    config = validate_config(args.config)
    manifest = run_pipeline(
        config, args.workdir, seed=args.seed, deterministic=args.deterministic,
        threads=args.threads,
        log=lambda msg: print(msg, file=sys.stderr),
    )
    print(f"manifest written to {args.workdir}/manifest.json", file=sys.stderr)
    metrics = manifest["metrics"]
    print(f"BLEU (hyper-specialised): {metrics['bleu']}"
          f" average {metrics['bleu_average']:.2f}")
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="nmtpipe",
        description="desk-scale NMT pipeline: preprocessing, BPE, selection, "
                    "LSTM attention training, back-translation, fine-tuning, BLEU",
    )
    ap.add_argument("--version", action="version", version=f"nmtpipe {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenize", help="tokenize raw text; optional casing/compounds")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--case-out", help="lowercase output and write case factors here")
    p.add_argument("--compound-lexicon", help="word<TAB>count lexicon enabling splitting")
    p.add_argument("--compound-min-len", type=int, default=4)
    p.add_argument("--compound-max-parts", type=int, default=2)
    p.add_argument("--count-lexicon", help="only write the frequency lexicon to this path")
    p.set_defaults(func=_cmd_tokenize)

    p = sub.add_parser("learn-bpe", help="learn a merge table over tokenized corpora")
    p.add_argument("--input", action="append", help="repeatable; stdin when omitted")
    p.add_argument("--output", required=True)
    p.add_argument("--merges", type=int, default=30000)
    p.set_defaults(func=_cmd_learn_bpe)

    p = sub.add_parser("apply-bpe", help="segment tokenized text with a merge table")
    p.add_argument("--merges", required=True)
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--case-in", help="word-level case factors to expand per piece")
    p.add_argument("--case-out", help="where to write piece-level case factors")
    p.set_defaults(func=_cmd_apply_bpe)

    p = sub.add_parser("train-lm", help="train (or score with) a 3-gram LM")
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--order", type=int, default=3)
    p.add_argument("--lambdas", default="0.5 0.3 0.2")
    p.add_argument("--score", help="score stdin/--input with this saved model instead")
    p.set_defaults(func=_cmd_train_lm)

    p = sub.add_parser("select", help="cross-entropy-difference data selection")
    p.add_argument("--p-src")
    p.add_argument("--p-tgt")
    p.add_argument("--m-src")
    p.add_argument("--m-tgt")
    p.add_argument("--in-domain", action="append", required=True)
    p.add_argument("--quota-p", type=int, default=0)
    p.add_argument("--quota-m", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("train", help="train on one corpus with plateau decay")
    p.add_argument("--train-src", required=True)
    p.add_argument("--train-tgt", required=True)
    p.add_argument("--train-src-case")
    p.add_argument("--train-tgt-case")
    p.add_argument("--valid-src", required=True)
    p.add_argument("--valid-tgt", required=True)
    p.add_argument("--valid-src-case")
    p.add_argument("--valid-tgt-case")
    p.add_argument("--vocab", required=True)
    p.add_argument("--save", required=True)
    p.add_argument("--resume")
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--hidden", type=int, default=1000)
    p.add_argument("--embed", type=int, default=500)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--max-len", type=int, default=80)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--decay", type=float, default=0.7)
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--decay-epochs", type=int, default=4)
    p.add_argument("--clip-norm", type=float, default=5.0)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("translate", help="decode preprocessed text with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input")
    p.add_argument("--output")
    p.add_argument("--case-in")
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int, default=80)
    p.add_argument("--no-length-norm", action="store_true")
    p.add_argument("--postprocess", action="store_true",
                   help="revert BPE and restore casing")
    p.add_argument("--join-compounds", action="store_true")
    p.add_argument("--scores-out", help="write per-sentence model scores here")
    p.set_defaults(func=_cmd_translate)

    p = sub.add_parser("backtranslate", help="synthesize parallel data from target text")
    p.add_argument("--checkpoint", required=True, help="reverse-direction model")
    p.add_argument("--mono", required=True)
    p.add_argument("--mono-case")
    p.add_argument("--shard-size", type=int, default=4500000)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--max-len", type=int, default=80)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_backtranslate)

    p = sub.add_parser("hyperspec", help="one-epoch in-domain fine-tuning")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--in-domain-src", required=True)
    p.add_argument("--in-domain-case")
    p.add_argument("--targets", help="reference targets; omit to self-train "
                                     "on the model's own best hypotheses")
    p.add_argument("--targets-case")
    p.add_argument("--lr", type=float, default=0.7)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int, default=80)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--save", required=True)
    p.set_defaults(func=_cmd_hyperspec)

    p = sub.add_parser("bleu", help="multi-bleu-compatible corpus BLEU")
    p.add_argument("--hyp", help="hypotheses; stdin when omitted")
    p.add_argument("--ref", required=True)
    p.add_argument("--lc", action="store_true", help="lowercase both sides")
    p.set_defaults(func=_cmd_bleu)

    p = sub.add_parser("pipeline", help="run every stage from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--workdir", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--deterministic", action="store_true", default=True)
    p.set_defaults(func=_cmd_pipeline)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"config error: {err}", file=sys.stderr)
        return 1
    except NmtError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
