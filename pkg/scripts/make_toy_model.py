#!/usr/bin/env python3
"""Generate a small random model plus matching vocab, features and LM files.

Writes into --out-dir: toy.model, toy.vocab, utt0.feats .. uttN-1.feats,
and toy.arpa (a uniform bigram over the letter tokens).  Everything is
deterministic in --seed, so the artifacts are reproducible.
"""

import argparse
import math
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from streamasr import random_features, random_model, save_model, save_vocab, toy_vocab, write_features


def write_uniform_bigram(path, tokens):
    """ARPA file giving every token the same unigram/bigram probability."""
    n = len(tokens)
    uni = math.log10(1.0 / n)
    with open(path, "w", encoding="utf-8") as f:
        f.write("\\data\\\n")
        f.write(f"ngram 1={n}\n")
        f.write(f"ngram 2={n * n}\n\n")
        f.write("\\1-grams:\n")
        for t in tokens:
            f.write(f"{uni:.6f} {t} 0.0\n")
        f.write("\n\\2-grams:\n")
        for a in tokens:
            for b in tokens:
                f.write(f"{uni:.6f} {a} {b}\n")
        f.write("\n\\end\\\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="toy")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--labels", type=int, default=3, help="letter tokens besides <sos>/<eos>")
    ap.add_argument("--utterances", type=int, default=2)
    ap.add_argument("--frames", type=int, default=40, help="feature frames per utterance")
    ap.add_argument("--d-feat", type=int, default=8)
    ap.add_argument("--d-model", type=int, default=16)
    ap.add_argument("--d-ff", type=int, default=32)
    ap.add_argument("--heads", type=int, default=4)
    ap.add_argument("--e-layers", type=int, default=2)
    ap.add_argument("--d-layers", type=int, default=1)
    args = ap.parse_args()

    os.makedirs(args.out_dir, exist_ok=True)
    vocab = toy_vocab(args.labels)
    model = random_model(
        args.seed, d_feat=args.d_feat, d_model=args.d_model, d_ff=args.d_ff,
        heads=args.heads, e_layers=args.e_layers, d_layers=args.d_layers,
        vocab_size=len(vocab),
    )
    model_path = os.path.join(args.out_dir, "toy.model")
    vocab_path = os.path.join(args.out_dir, "toy.vocab")
    lm_path = os.path.join(args.out_dir, "toy.arpa")
    save_model(model_path, model)
    save_vocab(vocab_path, vocab)
    letters = [t for i, t in enumerate(vocab.tokens) if i not in vocab.reserved_ids()]
    write_uniform_bigram(lm_path, letters)
    feat_paths = []
    for i in range(args.utterances):
        p = os.path.join(args.out_dir, f"utt{i}.feats")
        write_features(p, random_features(args.seed + 100 + i, args.frames, args.d_feat))
        feat_paths.append(p)

    print(f"wrote {model_path}, {vocab_path}, {lm_path}")
    print(f"wrote {len(feat_paths)} feature files")
    feats = " ".join(f"--features {p}" for p in feat_paths)
    print("try: streamasr --model", model_path, "--vocab", vocab_path, feats,
          "--eps-enc 1 --eps-dec 2 --k 8 --p 4")


if __name__ == "__main__":
    main()
