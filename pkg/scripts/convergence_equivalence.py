"""Per-iterate distance between attacked DRACO runs and the attack-free mean run.

    python3 scripts/convergence_equivalence.py --T 200
"""

import argparse

import numpy as np

from draco.simharness import run_experiment
from draco.threat import AttackSpec
from draco.verify import equivalence_config, smallest_repetition_s


def drift(traj, base):
    return max(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300) for a, b in zip(traj[1:], base[1:]))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=int, default=200)
    args = ap.parse_args()

    base = run_experiment(equivalence_config("mean", 0, AttackSpec(), args.T), keep_transcripts=False).trajectory
    print(f"{'attack':10s} {'count':>5s} {'rep s':>5s} {'repetition':>12s} {'cyclic drift':>13s}")
    for kind in ("reverse", "constant"):
        for count in (1, 3, 5):
            attack = AttackSpec(kind, count)
            s_rep = smallest_repetition_s(15, count)
            rep = run_experiment(equivalence_config("draco-rep", s_rep, attack, args.T), keep_transcripts=False)
            cyc = run_experiment(equivalence_config("draco-cyclic", count, attack, args.T), keep_transcripts=False)
            same = all(a.tobytes() == b.tobytes() for a, b in zip(rep.trajectory, base))
            print(f"{kind:10s} {count:5d} {s_rep:5d} {'bitwise' if same else 'DIFFERS':>12s} "
                  f"{drift(cyc.trajectory, base):13.1e}")


if __name__ == "__main__":
    main()
