"""Synthetic two-domain bilingual toy data.

A templated grammar with two disjoint-vocabulary domains ("nature" and
"finance") and a word-for-word lexicon mapping between the made-up source
language and English-like targets. Small enough to train in minutes on a
CPU, structured enough to exercise casing, selection, and adaptation: the
test sets are domain-A only, so domain A is the in-domain data.

Run ``python -m nmtpipe.toydata OUTDIR`` to regenerate the bundled files.
"""

from __future__ import annotations

import os
import random

A_LEXICON = {
    "mira": "dawn", "tolu": "river", "kade": "stone", "rupo": "light",
    "nasi": "wind", "velo": "rain", "guma": "tree", "pilo": "bird",
    "seda": "song", "arin": "road",
}
B_LEXICON = {
    "befo": "market", "grivo": "price", "halmo": "trade", "jipon": "bank",
    "kulme": "coin", "lirta": "debt", "mopan": "loan", "nuvel": "rate",
    "ostra": "fund", "prewo": "tax",
}

MIN_WORDS = 3
MAX_WORDS = 7


def _make_pair(rng: random.Random, lexicon: dict) -> tuple[str, str]:
    words = rng.choices(sorted(lexicon), k=rng.randint(MIN_WORDS, MAX_WORDS))
    src = [w for w in words]
    tgt = [lexicon[w] for w in words]
    src[0] = src[0].capitalize()
    tgt[0] = tgt[0].capitalize()
    return " ".join(src) + " .", " ".join(tgt) + " ."


def make_bilingual(n: int, seed: int, domain: str = "A") -> tuple[list[str], list[str]]:
    """n raw sentence pairs from one domain's grammar."""
    lexicon = A_LEXICON if domain == "A" else B_LEXICON
    # derive an int seed: string hashing is process-randomized, ints are not
    rng = random.Random(seed * 2 + (0 if domain == "A" else 1))
    pairs = [_make_pair(rng, lexicon) for _ in range(n)]
    return [p[0] for p in pairs], [p[1] for p in pairs]


def make_two_grammar_mixture(n_a=500, n_b=500, seed=0):
    """Tokenized source sentences from both grammars plus domain labels."""
    a_src, _ = make_bilingual(n_a, seed, "A")
    b_src, _ = make_bilingual(n_b, seed + 1, "B")
    sentences = [s.split() for s in a_src + b_src]
    labels = ["A"] * n_a + ["B"] * n_b
    order = random.Random(seed + 2).sample(range(len(sentences)), len(sentences))
    return [sentences[i] for i in order], [labels[i] for i in order]


def make_copy_task(vocab_size=30, n=2000, min_len=3, max_len=8, seed=0):
    """Sentence pairs where the target is a copy of the source."""
    rng = random.Random(seed)
    words = [f"w{i:02d}" for i in range(vocab_size)]
    sentences = [
        " ".join(rng.choices(words, k=rng.randint(min_len, max_len))) for _ in range(n)
    ]
    return sentences, list(sentences)


def make_toy_dataset(
    outdir,
    seed: int = 13,
    n_pairs: int = 2000,
    n_mono: int = 800,
    n_valid: int = 200,
    n_test: int = 100,
) -> dict:
    """Write the bundled toy corpus files; returns their paths.

    The parallel corpus P mixes both domains evenly (with a domain-label
    sidecar for auditing), the monolingual file holds extra target-side text,
    and the two test sets are in-domain (domain A) only.
    """
    os.makedirs(outdir, exist_ok=True)
    rng = random.Random(seed)

    half = n_pairs // 2
    a_src, a_tgt = make_bilingual(half, seed, "A")
    b_src, b_tgt = make_bilingual(n_pairs - half, seed, "B")
    rows = [(s, t, "A") for s, t in zip(a_src, a_tgt)]
    rows += [(s, t, "B") for s, t in zip(b_src, b_tgt)]
    rng.shuffle(rows)

    va_src, va_tgt = make_bilingual(n_valid // 2, seed + 10, "A")
    vb_src, vb_tgt = make_bilingual(n_valid - n_valid // 2, seed + 11, "B")
    valid = list(zip(va_src + vb_src, va_tgt + vb_tgt))
    rng.shuffle(valid)

    ma_tgt = make_bilingual(n_mono // 2, seed + 20, "A")[1]
    mb_tgt = make_bilingual(n_mono - n_mono // 2, seed + 21, "B")[1]
    mono = ma_tgt + mb_tgt
    rng.shuffle(mono)

    t1_src, t1_tgt = make_bilingual(n_test, seed + 30, "A")
    t2_src, t2_tgt = make_bilingual(n_test, seed + 31, "A")

    paths = {}

    def write(name, lines):
        path = os.path.join(outdir, name)
        with open(path, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line + "\n")
        paths[name] = path

    write("p.src", [r[0] for r in rows])
    write("p.tgt", [r[1] for r in rows])
    write("p.domains", [r[2] for r in rows])
    write("valid.src", [v[0] for v in valid])
    write("valid.tgt", [v[1] for v in valid])
    write("mono.tgt", mono)
    write("test1.src", t1_src)
    write("test1.tgt", t1_tgt)
    write("test2.src", t2_src)
    write("test2.tgt", t2_tgt)
    return paths


if __name__ == "__main__":
    import argparse

    ap = argparse.ArgumentParser(description="regenerate the bundled toy dataset")
    ap.add_argument("outdir")
    ap.add_argument("--seed", type=int, default=13)
    args = ap.parse_args()
    for name, path in sorted(make_toy_dataset(args.outdir, seed=args.seed).items()):
        print(path)
