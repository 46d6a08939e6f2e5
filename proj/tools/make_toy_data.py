#!/usr/bin/env python3
"""Generate the bundled toy corpus and miniature GLUE task files.

Output is a pure function of --seed, so the committed files can be
regenerated byte for byte:

    python3 tools/make_toy_data.py --out data
"""

import argparse
import random
from pathlib import Path

ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kr", "st", "tr", "pl", "sh"]
VOWELS = ["a", "e", "i", "o", "u", "ai", "ou"]
CODAS = ["", "n", "r", "l", "s", "m", "k"]

FUNCTION_TEMPLATES = [
    "the {adj} {noun} {verb}s near the {place} .",
    "{name} {verb}ed the {adj} {noun} in {place} .",
    "every {noun} {verb}s {adv} before the {noun2} arrives .",
    "when the {noun} {verb}s , the {noun2} {verb2}s too .",
    "{name} said that the {noun} was {adj} and {adj2} .",
    "a {adj} {noun} and a {adj2} {noun2} {verb}ed together .",
    "in {place} , {name} often {verb}s the {noun} {adv} .",
    "the {noun} of {name} is more {adj} than the {noun2} .",
    "nobody {verb}s a {noun} without a {adj} {noun2} .",
    "{name} and the {noun} {verb}ed across {place} at night .",
]

POSITIVE = ["good", "great", "lovely", "bright", "happy", "pleasant", "warm", "fine", "brilliant", "kind"]
NEGATIVE = ["bad", "awful", "dull", "sad", "grim", "poor", "cold", "rotten", "terrible", "cruel"]


def make_lexicon(rng, count, used, min_syl=1, max_syl=3):
    words = []
    while len(words) < count:
        n = rng.randint(min_syl, max_syl)
        w = "".join(rng.choice(ONSETS) + rng.choice(VOWELS) + rng.choice(CODAS) for _ in range(n))
        if len(w) < 3 or w in used:
            continue
        used.add(w)
        words.append(w)
    return words


def build_lexicons(rng):
    used = set(POSITIVE + NEGATIVE)
    return {
        "noun": make_lexicon(rng, 700, used),
        "verb": make_lexicon(rng, 300, used),
        "adj": make_lexicon(rng, 250, used) + POSITIVE + NEGATIVE,
        "adv": [w + "ly" for w in make_lexicon(rng, 80, used)],
        "name": [w.capitalize() for w in make_lexicon(rng, 150, used, 2, 3)],
        "place": [w.capitalize() for w in make_lexicon(rng, 80, used, 2, 3)],
    }


def topic(rng, lex):
    return {
        "noun": rng.sample(lex["noun"], 8),
        "verb": rng.sample(lex["verb"], 4),
        "adj": rng.sample(lex["adj"], 4),
        "adv": rng.sample(lex["adv"], 2),
        "name": rng.sample(lex["name"], 2),
        "place": rng.sample(lex["place"], 2),
    }


def fill(rng, template, t):
    nouns = rng.sample(t["noun"], 2)
    verbs = rng.sample(t["verb"], 2)
    adjs = rng.sample(t["adj"], 2)
    return template.format(
        noun=nouns[0], noun2=nouns[1], verb=verbs[0], verb2=verbs[1], adj=adjs[0], adj2=adjs[1],
        adv=rng.choice(t["adv"]), name=rng.choice(t["name"]), place=rng.choice(t["place"]))


def write_corpus(rng, lex, path, documents=100, sentences=10):
    lines = []
    for d in range(documents):
        t = topic(rng, lex)
        for _ in range(sentences):
            lines.append(fill(rng, rng.choice(FUNCTION_TEMPLATES), t))
        if d != documents - 1:
            lines.append("")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def sentence(rng, lex):
    return fill(rng, rng.choice(FUNCTION_TEMPLATES), topic(rng, lex))


def scramble(rng, s):
    words = s.rstrip(" .").split()
    while True:
        rng.shuffle(words)
        out = " ".join(words) + " ."
        if out != s:
            return out


def swap_one(rng, s, lex):
    words = s.split()
    idx = [i for i, w in enumerate(words) if w in lex["noun"]]
    i = rng.choice(idx) if idx else 0
    words[i] = rng.choice(lex["noun"])
    return " ".join(words)


def tsv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    out = []
    if header is not None:
        out.append("\t".join(header))
    out.extend("\t".join(str(c) for c in r) for r in rows)
    path.write_text("\n".join(out) + "\n", encoding="utf-8")


def glue_tasks(rng, lex, root, n_train, n_dev):
    def split(make):
        return [make(i) for i in range(n_train)], [make(i) for i in range(n_dev)]

    def cola(i):
        s = sentence(rng, lex)
        ok = rng.random() < 0.5
        return ["toy0" + str(i % 9), int(ok), "" if ok else "*", s if ok else scramble(rng, s)]

    tr, dv = split(cola)
    tsv(root / "CoLA" / "train.tsv", None, tr)
    tsv(root / "CoLA" / "dev.tsv", None, dv)

    def sst(i):
        pos = rng.random() < 0.5
        word = rng.choice(POSITIVE if pos else NEGATIVE)
        t = topic(rng, lex)
        return [f"the {rng.choice(t['noun'])} was {word} , truly {word} .", int(pos)]

    tr, dv = split(sst)
    tsv(root / "SST-2" / "train.tsv", ["sentence", "label"], tr)
    tsv(root / "SST-2" / "dev.tsv", ["sentence", "label"], dv)

    def paraphrase_pair():
        a = sentence(rng, lex)
        same = rng.random() < 0.5
        return a, (a if same else sentence(rng, lex)), same

    def mrpc(i):
        a, b, same = paraphrase_pair()
        return [int(same), 1000 + i, 2000 + i, a, b]

    tr, dv = split(mrpc)
    hdr = ["Quality", "#1 ID", "#2 ID", "#1 String", "#2 String"]
    tsv(root / "MRPC" / "train.tsv", hdr, tr)
    tsv(root / "MRPC" / "dev.tsv", hdr, dv)

    def sts(i):
        a = sentence(rng, lex)
        k = rng.randint(0, 5)
        words = a.split()
        b = words[:]
        nouns = [j for j, w in enumerate(words) if w not in (".", ",")]
        for j in rng.sample(nouns, min(len(nouns), 5 - k)):
            b[j] = rng.choice(lex["noun"])
        return [i, "toy", "synthetic", "2020", i, "none", "none", a, " ".join(b), f"{float(k):.3f}"]

    tr, dv = split(sts)
    hdr = ["index", "genre", "filename", "year", "old_index", "source1", "source2", "sentence1", "sentence2", "score"]
    tsv(root / "STS-B" / "train.tsv", hdr, tr)
    tsv(root / "STS-B" / "dev.tsv", hdr, dv)

    def qqp(i):
        a, b, same = paraphrase_pair()
        return [i, 3000 + i, 4000 + i, a.replace(" .", " ?"), b.replace(" .", " ?"), int(same)]

    tr, dv = split(qqp)
    hdr = ["id", "qid1", "qid2", "question1", "question2", "is_duplicate"]
    tsv(root / "QQP" / "train.tsv", hdr, tr)
    tsv(root / "QQP" / "dev.tsv", hdr, dv)

    def nli_pair():
        a = sentence(rng, lex)
        kind = rng.choice(["entailment", "neutral", "contradiction"])
        if kind == "entailment":
            b = a
        elif kind == "contradiction":
            b = "it is not true that " + a
        else:
            b = sentence(rng, lex)
        return a, b, kind

    mnli_train_hdr = ["index", "promptID", "pairID", "genre", "sentence1_binary_parse", "sentence2_binary_parse",
                      "sentence1_parse", "sentence2_parse", "sentence1", "sentence2", "label1", "gold_label"]
    mnli_dev_hdr = mnli_train_hdr[:11] + ["label2", "label3", "label4", "label5", "gold_label"]

    def mnli_train(i):
        a, b, kind = nli_pair()
        return [i, i, f"{i}e", "toy", "-", "-", "-", "-", a, b, kind, kind]

    def mnli_dev(i):
        a, b, kind = nli_pair()
        return [i, i, f"{i}e", "toy", "-", "-", "-", "-", a, b, kind, kind, kind, kind, kind, kind]

    tsv(root / "MNLI" / "train.tsv", mnli_train_hdr, [mnli_train(i) for i in range(n_train)])
    tsv(root / "MNLI" / "dev_matched.tsv", mnli_dev_hdr, [mnli_dev(i) for i in range(n_dev)])

    def entail_pair():
        a = sentence(rng, lex)
        yes = rng.random() < 0.5
        return a, (a if yes else "it is not true that " + a), yes

    def qnli(i):
        a, b, yes = entail_pair()
        return [i, a.replace(" .", " ?"), b, "entailment" if yes else "not_entailment"]

    tr, dv = split(qnli)
    tsv(root / "QNLI" / "train.tsv", ["index", "question", "sentence", "label"], tr)
    tsv(root / "QNLI" / "dev.tsv", ["index", "question", "sentence", "label"], dv)

    def rte(i):
        a, b, yes = entail_pair()
        return [i, a, b, "entailment" if yes else "not_entailment"]

    tr, dv = split(rte)
    tsv(root / "RTE" / "train.tsv", ["index", "sentence1", "sentence2", "label"], tr)
    tsv(root / "RTE" / "dev.tsv", ["index", "sentence1", "sentence2", "label"], dv)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data", type=Path)
    ap.add_argument("--seed", default=20201, type=int)
    ap.add_argument("--train-rows", default=64, type=int)
    ap.add_argument("--dev-rows", default=32, type=int)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    lex = build_lexicons(rng)
    args.out.mkdir(parents=True, exist_ok=True)
    write_corpus(rng, lex, args.out / "toy_corpus.txt")
    glue_tasks(rng, lex, args.out / "glue_mini", args.train_rows, args.dev_rows)


if __name__ == "__main__":
    main()
