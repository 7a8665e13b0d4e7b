#!/usr/bin/env python3
"""Writes the synthetic MUSHRA response fixture used by tests and the README.

Scores are drawn from a per-screen offset plus a per-system shift plus
noise, so the numbers have no relation to any real listening test.
"""
import argparse
import random

SYSTEMS = {"B": 0.0, "B+FT": 1.5, "B+VC": 2.0, "B+VC+FT": 3.5}
METRICS = ["signal_quality", "style_adequacy", "naturalness", "speaker_similarity"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--listeners", type=int, default=25)
    ap.add_argument("--screens", type=int, default=5)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    lines = ["#mushra v1"]
    for li in range(args.listeners):
        for sc in range(args.screens):
            for metric in METRICS:
                offset = rng.gauss(65.0, 8.0)
                for system, shift in SYSTEMS.items():
                    score = round(offset + shift + rng.gauss(0.0, 6.0))
                    score = max(0, min(100, score))
                    lines.append(f"L{li:03d}\tscr{li:03d}_{sc}\t{system}\t{metric}\t{score}")
    with open(args.out, "w") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
