#!/usr/bin/env python3
"""Generate cross-check fixtures for the metrics module.

A deliberately plain, brute-force implementation of the answer and
retrieval metrics computes expected values for a mix of hand-picked and
seeded-random cases. The Rust tests assert agreement to 1e-12, so any
drift between the two implementations shows up immediately.

Run from the repository root:

    python3 tools/gen_metric_fixtures.py > crates/core/fixtures/metric_oracle.json
"""

import json
import math
import random
import string
import sys
from collections import Counter

ARTICLES = {"a", "an", "the"}


def tokens(text, keep_articles):
    out = text.lower()
    out = "".join(ch for ch in out if ch not in string.punctuation)
    toks = out.split()
    if not keep_articles:
        toks = [t for t in toks if t not in ARTICLES]
    return toks


def token_f1(prediction, gold):
    pred = tokens(prediction, keep_articles=False)
    ref = tokens(gold, keep_articles=False)
    if not pred or not ref:
        return 1.0 if pred == ref else 0.0
    overlap = sum((Counter(pred) & Counter(ref)).values())
    if overlap == 0:
        return 0.0
    prec = overlap / len(pred)
    rec = overlap / len(ref)
    return 2 * prec * rec / (prec + rec)


def bleu1(prediction, gold):
    pred = tokens(prediction, keep_articles=True)
    ref = tokens(gold, keep_articles=True)
    c = len(pred)
    r = len(ref)
    if c == 0:
        return 0.0
    clipped = sum((Counter(pred) & Counter(ref)).values())
    p1 = clipped / c
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return bp * p1


def greedy_alignment(pred, ref):
    """Pairs (i, j) of matched positions, preferring chunk continuation."""
    used = [False] * len(ref)
    pairs = []
    prev_j = None
    for i, tok in enumerate(pred):
        j = None
        if (
            prev_j is not None
            and prev_j + 1 < len(ref)
            and not used[prev_j + 1]
            and ref[prev_j + 1] == tok
        ):
            j = prev_j + 1
        else:
            for cand in range(len(ref)):
                if not used[cand] and ref[cand] == tok:
                    j = cand
                    break
        if j is None:
            prev_j = None
        else:
            used[j] = True
            pairs.append((i, j))
            prev_j = j
    return pairs


def meteor(prediction, gold):
    pred = tokens(prediction, keep_articles=True)
    ref = tokens(gold, keep_articles=True)
    pairs = greedy_alignment(pred, ref)
    m = len(pairs)
    if m == 0:
        return 0.0
    chunks = 0
    for idx, (i, j) in enumerate(pairs):
        if idx == 0 or pairs[idx - 1] != (i - 1, j - 1):
            chunks += 1
    p = m / len(pred)
    r = m / len(ref)
    f_mean = 10 * p * r / (r + 9 * p)
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1.0 - penalty)


def surface(text):
    return " ".join(tokens(text, keep_articles=True))


def matches(note, gold_item):
    a = surface(note)
    b = surface(gold_item)
    return b in a or a in b


def evidence_prf(retrieved, gold):
    matched_retrieved = sum(1 for n in retrieved if any(matches(n, g) for g in gold))
    prec = matched_retrieved / len(retrieved) if retrieved else 0.0
    covered = sum(1 for g in gold if any(matches(n, g) for n in retrieved))
    rec = covered / len(gold)
    f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    return prec, rec, f1


def recall_at_k(retrieved, gold, k):
    hit = 0
    for g in gold:
        rank = None
        for i, n in enumerate(retrieved):
            if matches(n, g):
                rank = i + 1
                break
        if rank is not None and rank <= k:
            hit += 1
    return hit / len(gold)


def ndcg_at_k(retrieved, gold, k):
    rel = [1 if any(matches(n, g) for g in gold) else 0 for n in retrieved]
    total_relevant = sum(rel)
    if total_relevant == 0:
        return 0.0
    dcg = sum(rel[i] / math.log2(i + 2) for i in range(min(k, len(rel))))
    idcg = sum(1.0 / math.log2(i + 2) for i in range(min(total_relevant, k)))
    return dcg / idcg


HAND_CASES = [
    ("harry potter", "harry potter"),
    ("harry potter", "harry potter and game of thrones"),
    ("", "x"),
    ("x", ""),
    ("", ""),
    ("alpha x beta y", "alpha q beta r"),
    ("The cat sat.", "the cat sat"),
    ("a an the", "the a an"),
    ("don't", "dont"),
    ("cat cat cat", "cat cat"),
    ("the quick brown fox", "quick brown fox jumps over the lazy dog"),
    ("YELLING, with; punctuation!!!", "yelling with punctuation"),
]

POOL = [
    "moon", "tide", "river", "stone", "amber", "quick", "lantern",
    "seven", "orbit", "cedar", "violet", "march", "copper", "wren",
]
DECOR = ["", "", "", ",", ".", "!", "?", ";"]


def random_text(rng):
    n = rng.randint(0, 12)
    parts = []
    for _ in range(n):
        word = rng.choice(POOL)
        if rng.random() < 0.2:
            parts.append(rng.choice(sorted(ARTICLES)))
        if rng.random() < 0.15:
            word = word.capitalize()
        parts.append(word + rng.choice(DECOR))
    return " ".join(parts)


SENTENCES = [
    "the treaty was signed in geneva in 1955",
    "amber waves rolled across the copper fields",
    "a lantern guided the seven travellers home",
    "orbital decay shortened the satellite mission",
    "the cedar bridge crossed the quiet river",
    "violet dye was traded along the silk road",
    "march storms flooded the lower valley",
    "the wren nested inside the stone wall",
]


def random_ranking_case(rng):
    gold_count = rng.randint(1, 3)
    gold = rng.sample(SENTENCES, gold_count)
    retrieved = []
    for _ in range(rng.randint(0, 10)):
        if rng.random() < 0.4:
            base = rng.choice(gold)
            retrieved.append("note: " + base + " (archived)")
        else:
            retrieved.append(random_text(rng) or "filler text")
    return retrieved, gold


def main():
    rng = random.Random(12345)
    text_cases = []
    pairs = list(HAND_CASES)
    while len(pairs) < 50:
        pairs.append((random_text(rng), random_text(rng)))
    for prediction, gold in pairs:
        text_cases.append(
            {
                "prediction": prediction,
                "gold": gold,
                "f1": token_f1(prediction, gold),
                "bleu1": bleu1(prediction, gold),
                "meteor": meteor(prediction, gold),
            }
        )

    ranking_cases = []
    hand_rankings = [
        ([], SENTENCES[:2]),
        (["note: " + SENTENCES[0]], [SENTENCES[0]]),
        (["unrelated filler"] * 4, SENTENCES[:1]),
    ]
    for retrieved, gold in hand_rankings:
        ranking_cases.append((retrieved, gold))
    while len(ranking_cases) < 12:
        ranking_cases.append(random_ranking_case(rng))

    ranking_out = []
    for retrieved, gold in ranking_cases:
        prec, rec, f1 = evidence_prf(retrieved, gold)
        ranking_out.append(
            {
                "retrieved": retrieved,
                "gold": gold,
                "e_prec": prec,
                "e_recall": rec,
                "e_f1": f1,
                "recall_at": {str(k): recall_at_k(retrieved, gold, k) for k in (1, 5, 10)},
                "ndcg_at": {str(k): ndcg_at_k(retrieved, gold, k) for k in (1, 5, 10)},
            }
        )

    json.dump(
        {"text_cases": text_cases, "ranking_cases": ranking_out},
        sys.stdout,
        indent=1,
    )
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
