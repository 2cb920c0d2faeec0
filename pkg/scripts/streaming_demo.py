#!/usr/bin/env python3
"""Stream a random utterance through an incremental session and show how the
partial hypothesis evolves, then check the result against the offline path.
"""

import argparse
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from streamasr import (
    DecodeParams,
    StreamConfig,
    StreamingSession,
    UniformLM,
    decode,
    encode,
    posteriorgram_from_states,
    random_features,
    random_model,
    theoretical_latency_ms,
    toy_vocab,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--frames", type=int, default=80)
    ap.add_argument("--chunk", type=int, default=4)
    ap.add_argument("--eps-enc", type=int, default=1)
    ap.add_argument("--eps-dec", type=int, default=2)
    args = ap.parse_args()

    vocab = toy_vocab(3)
    model = random_model(args.seed, vocab_size=len(vocab))
    lm = UniformLM(len(vocab) - len(vocab.reserved_ids()))
    params = DecodeParams(k_size=8, p_size=4, eps_dec=args.eps_dec)
    cfg = StreamConfig(eps_enc=args.eps_enc, eps_dec=args.eps_dec)
    feats = random_features(args.seed + 1, args.frames, model.d_feat)

    print(f"latency budget: {theoretical_latency_ms(cfg, model.e_layers):.0f} ms "
          f"({model.e_layers} layers, eps_enc={args.eps_enc}, eps_dec={args.eps_dec})")
    session = StreamingSession(model, lm, params, cfg)
    for start in range(0, args.frames, args.chunk):
        partial = session.push(feats.frames[start : start + args.chunk])
        if partial is not None:
            ms = (start + args.chunk) * cfg.frame_shift_ms
            print(f"  t={ms:6.0f} ms  partial: {vocab.detokenize(partial)!r}")
    result = session.finalize()
    print(f"final: {vocab.detokenize(result.labels)!r}  score {result.score:.4f}")

    enc = encode(feats, model.encoder, args.eps_enc)
    post = posteriorgram_from_states(enc.states, model.ctc_w, model.ctc_b)
    offline = decode(enc, post, lm, model.decoder, params)
    same = offline.labels == result.labels and offline.score == result.score
    print(f"offline agreement (bit-exact): {same}")


if __name__ == "__main__":
    main()
