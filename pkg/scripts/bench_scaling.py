"""Repetition decode scaling in P*d and the decode-vs-GM comparison.

    python3 scripts/bench_scaling.py --d 10000 --out out/scaling.csv
"""

import argparse
import csv
from pathlib import Path

from draco.bench import bench_cell, loglog_slope, repetition_decode_scaling


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--Ps", default="6,12,24,48")
    ap.add_argument("--d", type=int, default=10_000)
    ap.add_argument("--reps", type=int, default=40)
    ap.add_argument("--out", default="out/scaling.csv")
    args = ap.parse_args()

    Ps = [int(p) for p in args.Ps.split(",")]
    med = repetition_decode_scaling(Ps, args.d, reps=args.reps)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["P", "d", "decode_ns"])
        w.writerows([P, args.d, med[P]] for P in Ps)
    slope = loglog_slope([P * args.d for P in Ps], [med[P] for P in Ps])
    print(f"repetition decode medians (ns): {med}")
    print(f"log-log slope vs P*d: {slope:.3f}")

    row = bench_cell("repetition", 15, 1, 100_000, reps=20)
    print(f"P=15 d=1e5: decode {row['decode_ns'] / 1e6:.2f} ms, GM {row['gm_ns'] / 1e6:.2f} ms")
    print(f"scaling -> {out}")


if __name__ == "__main__":
    main()
