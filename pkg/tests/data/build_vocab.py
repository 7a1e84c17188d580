"""Regenerate tiny.tiktoken: 256 byte tokens plus merges learned on alice.txt.

Run from this directory: ``python build_vocab.py``. The output is committed;
this script only documents how it was made.
"""

import base64
from collections import Counter
from pathlib import Path

import regex

from factree.tokenizers import DEFAULT_BPE_PATTERN

N_MERGES = 400


def main() -> None:
    text = Path("alice.txt").read_text(encoding="utf-8")
    words = Counter(tuple(bytes([b]) for b in w.encode("utf-8"))
                    for w in regex.findall(DEFAULT_BPE_PATTERN, text))
    ranks = {bytes([b]): b for b in range(256)}
    for _ in range(N_MERGES):
        pairs = Counter()
        for w, n in words.items():
            for a, b in zip(w, w[1:]):
                pairs[(a, b)] += n
        if not pairs:
            break
        # most frequent pair; ties broken by byte order for reproducibility
        (a, b), _ = max(pairs.items(), key=lambda kv: (kv[1], kv[0]))
        merged = a + b
        ranks[merged] = len(ranks)
        new = Counter()
        for w, n in words.items():
            out, i = [], 0
            while i < len(w):
                if i + 1 < len(w) and w[i] == a and w[i + 1] == b:
                    out.append(merged)
                    i += 2
                else:
                    out.append(w[i])
                    i += 1
            new[tuple(out)] += n
        words = new
    with open("tiny.tiktoken", "w", encoding="ascii") as fh:
        for tok, rank in sorted(ranks.items(), key=lambda kv: kv[1]):
            fh.write(f"{base64.b64encode(tok).decode()} {rank}\n")


if __name__ == "__main__":
    main()
