#!/usr/bin/env python3
"""Print the algorithmic latency for a grid of look-ahead settings.

Latency at a 10 ms frame shift: 30 ms for the convolutional front end,
plus 40 ms per encoder layer per frame of encoder look-ahead, plus 40 ms
per frame of decoder look-ahead.
"""

import argparse
import math
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from streamasr import StreamConfig, theoretical_latency_ms


def fmt(ms):
    return "unbounded" if ms == math.inf else f"{ms:7.0f} ms"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--e-layers", type=int, default=12)
    ap.add_argument("--frame-shift-ms", type=float, default=10.0)
    args = ap.parse_args()

    enc_opts = [0, 1, 2, 3, math.inf]
    dec_opts = [0, 6, 18]
    print(f"encoder layers: {args.e_layers}, frame shift: {args.frame_shift_ms} ms")
    header = "eps_enc \\ eps_dec |" + "".join(f" {d:>10}" for d in dec_opts)
    print(header)
    print("-" * len(header))
    for e in enc_opts:
        cells = []
        for d in dec_opts:
            cfg = StreamConfig(eps_enc=e, eps_dec=d, frame_shift_ms=args.frame_shift_ms)
            cells.append(fmt(theoretical_latency_ms(cfg, args.e_layers)))
        label = "inf" if e == math.inf else str(e)
        print(f"{label:>17} |" + "".join(f" {c:>10}" for c in cells))


if __name__ == "__main__":
    main()
