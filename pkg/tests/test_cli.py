import io
import sys

import pytest

from nmtpipe.cli import main
from nmtpipe.corpusio import read_lines, write_lines


def run_cli(argv, stdin_text=None, capsys=None, monkeypatch=None):
    if stdin_text is not None:
        monkeypatch.setattr(
            "sys.stdin", io.TextIOWrapper(io.BytesIO(stdin_text.encode()), encoding="utf-8")
        )
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestTokenizeCommand:
    def test_stdin_to_stdout(self, capsys, monkeypatch):
        code, out, _ = run_cli(["tokenize"], "Hello, world!\n", capsys, monkeypatch)
        assert code == 0
        assert out == "Hello , world !\n"

    def test_case_sidecar(self, tmp_path, capsys, monkeypatch):
        case_path = tmp_path / "case.txt"
        code, out, _ = run_cli(
            ["tokenize", "--case-out", str(case_path)],
            "Hello USA 123\n", capsys, monkeypatch,
        )
        assert code == 0
        assert out == "hello usa 123\n"
        assert read_lines(case_path) == ["C U N"]

    def test_count_lexicon_mode(self, tmp_path, capsys, monkeypatch):
        lex_path = tmp_path / "lex.tsv"
        code, _, _ = run_cli(
            ["tokenize", "--count-lexicon", str(lex_path)],
            "a b a\nb a\n", capsys, monkeypatch,
        )
        assert code == 0
        assert read_lines(lex_path) == ["a\t3", "b\t2"]

    def test_compound_splitting_via_lexicon(self, tmp_path, capsys, monkeypatch):
        lex_path = tmp_path / "lex.tsv"
        write_lines(lex_path, ["aktien\t10", "kurse\t12"])
        code, out, _ = run_cli(
            ["tokenize", "--compound-lexicon", str(lex_path)],
            "Aktienkurse\n", capsys, monkeypatch,
        )
        assert code == 0
        assert out == "Aktien▁+ kurse\n"


class TestBpeCommands:
    def test_learn_and_apply_roundtrip(self, tmp_path, capsys, monkeypatch):
        corpus = tmp_path / "corpus.tok"
        write_lines(corpus, ["low lower", "newest widest"])
        merges = tmp_path / "bpe.merges"
        code, _, _ = run_cli(
            ["learn-bpe", "--input", str(corpus), "--output", str(merges),
             "--merges", "8"],
            None, capsys, monkeypatch,
        )
        assert code == 0
        assert read_lines(merges)[0] == "nmtpipe-bpe 1"

        code, out, _ = run_cli(
            ["apply-bpe", "--merges", str(merges)], "lowest\n", capsys, monkeypatch
        )
        assert code == 0
        pieces = out.strip().split()
        assert "".join(p.rstrip("@") for p in pieces) == "lowest"

    def test_apply_with_case_expansion(self, tmp_path, capsys, monkeypatch):
        merges = tmp_path / "bpe.merges"
        write_lines(merges, ["nmtpipe-bpe 1"])
        case_in = tmp_path / "in.case"
        write_lines(case_in, ["C"])
        case_out = tmp_path / "out.case"
        code, out, _ = run_cli(
            ["apply-bpe", "--merges", str(merges), "--case-in", str(case_in),
             "--case-out", str(case_out)],
            "abc\n", capsys, monkeypatch,
        )
        assert code == 0
        assert out == "a@@ b@@ c\n"
        assert read_lines(case_out) == ["C C C"]


class TestTrainLmCommand:
    def test_train_then_score(self, tmp_path, capsys, monkeypatch):
        corpus = tmp_path / "corpus.txt"
        write_lines(corpus, ["a b", "a b", "a c"])
        model = tmp_path / "model.lm"
        code, _, _ = run_cli(
            ["train-lm", "--input", str(corpus), "--output", str(model)],
            None, capsys, monkeypatch,
        )
        assert code == 0
        code, out, _ = run_cli(
            ["train-lm", "--score", str(model)], "a b\n", capsys, monkeypatch
        )
        assert code == 0
        assert float(out.strip()) > 0.0


class TestBleuCommand:
    def test_identity_prints_100(self, tmp_path, capsys, monkeypatch):
        ref = tmp_path / "ref.txt"
        write_lines(ref, ["the cat sat on the mat"])
        code, out, _ = run_cli(
            ["bleu", "--hyp", str(ref), "--ref", str(ref)], None, capsys, monkeypatch
        )
        assert code == 0
        assert out.startswith("BLEU = 100.00")

    def test_reads_hypotheses_from_stdin(self, tmp_path, capsys, monkeypatch):
        ref = tmp_path / "ref.txt"
        write_lines(ref, ["the cat sat on the mat"])
        code, out, _ = run_cli(
            ["bleu", "--ref", str(ref)], "the cat sat on mat\n", capsys, monkeypatch
        )
        assert code == 0
        assert out.startswith("BLEU = 57.89")

    def test_mismatch_is_diagnosed_nonzero(self, tmp_path, capsys, monkeypatch):
        ref = tmp_path / "ref.txt"
        write_lines(ref, ["a b", "c d"])
        code, _, err = run_cli(
            ["bleu", "--ref", str(ref)], "a b\n", capsys, monkeypatch
        )
        assert code == 1
        assert err.strip().count("\n") == 0  # one-line diagnostic
        assert "mismatch" in err


class TestSelectCommand:
    def test_end_to_end(self, tmp_path, capsys, monkeypatch):
        from nmtpipe.toydata import make_two_grammar_mixture

        sentences, labels = make_two_grammar_mixture(30, 30, seed=3)
        src = tmp_path / "p.src"
        tgt = tmp_path / "p.tgt"
        write_lines(src, [" ".join(s) for s in sentences])
        write_lines(tgt, ["t" for _ in sentences])
        dom = tmp_path / "dom.txt"
        write_lines(dom, [" ".join(s) for s, l in zip(sentences, labels) if l == "A"])
        code, _, _ = run_cli(
            ["select", "--p-src", str(src), "--p-tgt", str(tgt),
             "--in-domain", str(dom), "--quota-p", "10",
             "--out-prefix", str(tmp_path / "sel")],
            None, capsys, monkeypatch,
        )
        assert code == 0
        picked = read_lines(tmp_path / "sel.src")
        assert len(picked) == 10
        scores = read_lines(tmp_path / "sel.P.scores")
        assert len(scores) == 10
        assert all(len(line.split("\t")) == 4 for line in scores)

    def test_config_error_lists_each_problem(self, capsys, monkeypatch):
        code, _, err = run_cli(
            ["select", "--in-domain", "/nope", "--out-prefix", "/tmp/x"],
            None, capsys, monkeypatch,
        )
        assert code == 1
        assert "config error" in err


class TestErrorHandling:
    def test_missing_file_is_one_line_oserror(self, capsys, monkeypatch):
        code, _, err = run_cli(
            ["tokenize", "--input", "/no/such/file"], None, capsys, monkeypatch
        )
        assert code == 1
        assert err.startswith("error:")

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "nmtpipe" in capsys.readouterr().out
