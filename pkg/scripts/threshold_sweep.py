#!/usr/bin/env python3
"""Flagged-event counts on a synthetic corpus as detection thresholds vary.

Writes one CSV row per (parameter, value). Counts never grow as a threshold
tightens; the sweep makes the trade-off for each knob visible.

    python scripts/threshold_sweep.py --out sweep.csv
"""

import argparse
import csv
import sys
from dataclasses import replace

from nftwash.config import PipelineConfig
from nftwash.mining import mine
from nftwash.pipeline import detect_all
from nftwash.synthgen import Injection, ScenarioSpec, generate_corpus

SWEEPS = {
    "walk_threshold": [1, 2, 10, 100, 1000, 10_000],
    "eth_window_min": [1, 3, 5, 10, 20, 40],
    "erc20_window_min": [5, 10, 20, 40, 80, 160],
    "initial_ati_seconds": [600, 3600, 21_600, 84_400, 604_800],
    "hidden_min_len": [2, 3, 4, 5, 6],
    "support": [0.0005, 0.005, 0.01, 0.05, 0.1],
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="-", help="CSV path, '-' for stdout")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tokens", type=int, default=80)
    args = ap.parse_args(argv)

    corpus = generate_corpus(ScenarioSpec(seed=args.seed, n_tokens=args.tokens, decoys=True, injections=[
        Injection("roundtrip", 10), Injection("unprofitable-eth", 5),
        Injection("unprofitable-weth", 5), Injection("hidden", 10)]))
    seqs = corpus.sequences()
    base = PipelineConfig()
    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["parameter", "value", "roundtrip", "unprofitable", "hidden", "pairs"])
    found, _ = detect_all(seqs, corpus.block_txns, corpus.erc20_txns, corpus.prices, base)
    for name, values in SWEEPS.items():
        for v in values:
            cfg = replace(base, **{name: v})
            f = found if name == "support" else detect_all(
                seqs, corpus.block_txns, corpus.erc20_txns, corpus.prices, cfg)[0]
            refs = f.flagged_refs()
            pairs = len(mine(f.roundtrip, f.unprofitable, f.hidden, cfg.support).pairs)
            w.writerow([name, v, len(refs["roundtrip"]), len(refs["unprofitable"]), len(refs["hidden"]), pairs])
    if fh is not sys.stdout:
        fh.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
