"""Loss curves of mean (no attack), GM and DRACO under the constant attack.

    python3 scripts/gm_failure.py --T 1000 --seed 0 --out out/gm_failure.csv
"""

import argparse
import csv
from dataclasses import replace
from pathlib import Path

from draco.simharness import DatasetSpec, ExperimentConfig, run_experiment
from draco.threat import AttackSpec
from draco.trainbench import ModelSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--count", type=int, default=2, help="adversaries per round")
    ap.add_argument("--kappa", type=float, default=-100.0)
    ap.add_argument("--out", default="out/gm_failure.csv")
    args = ap.parse_args()

    base = ExperimentConfig(P=15, s=0, aggregator="mean", B=60, lr=0.1, T=args.T, seed=args.seed,
                            model=ModelSpec("logistic", 10), dataset=DatasetSpec("classification", 600, 10))
    attack = AttackSpec("constant", args.count, kappa=args.kappa)
    s_rep = next(s for s in range(args.count, 8) if 15 % (2 * s + 1) == 0)
    runs = {
        "baseline": base,
        "gm": replace(base, aggregator="gm", attack=attack),
        "draco-rep": replace(base, aggregator="draco-rep", s=s_rep, attack=attack),
        "draco-cyclic": replace(base, aggregator="draco-cyclic", s=args.count, attack=attack),
    }
    curves = {name: [float(r["loss"]) for r in run_experiment(cfg, keep_transcripts=False).rows]
              for name, cfg in runs.items()}

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", *curves])
        for r in range(args.T):
            w.writerow([r, *(repr(c[r]) for c in curves.values())])
    for name, c in curves.items():
        print(f"{name:13s} final loss {c[-1]:.6f}  ({c[-1] - curves['baseline'][-1]:+.2e} vs baseline)")
    print(f"curves -> {out}")


if __name__ == "__main__":
    main()
