"""Seeded property suites behind ``draco verify``."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from .codes import (
    CodeParams,
    InvalidParams,
    Scheme,
    TooManyAdversaries,
    assignment_for,
    build_cyclic_tables,
    decode_cyclic,
    decode_repetition,
    decoding_vector,
    detect_adversaries,
    encode_all,
    extend_syndrome,
    locator_system,
    redundancy_ratio,
    syndrome,
)
from .numerics import min_norm_solve, streaming_majority
from .simharness import DatasetSpec, ExperimentConfig, run_experiment
from .threat import AttackSpec
from .trainbench import ModelSpec


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}" + (f": {self.detail}" if self.detail else "")


def feasible(P: int, scheme: Scheme) -> list[int]:
    return [s for s in range((P - 1) // 2 + 1) if scheme is Scheme.CYCLIC or P % (2 * s + 1) == 0]


def dyadic_block(rng, d, P):
    """Gradient units on a 2**-20 grid: every summation order is exact."""
    return rng.integers(-(2**20), 2**20, size=(d, P)) / 2.0**20


def exact_tolerance(Ps=(3, 5, 6, 7, 8), seeds=200, d=4, seed=0) -> list[Check]:
    """Every adversary subset of size <= s, random noise, ``seeds`` draws each."""
    rng = np.random.default_rng(seed)
    checks = []
    for scheme in Scheme:
        for P in Ps:
            for s in feasible(P, scheme):
                params = CodeParams(P, s, scheme)
                tables = build_cyclic_tables(params) if scheme is Scheme.CYCLIC else None
                worst, bad_cases, cases = 0.0, 0, 0
                subsets = [V for k in range(s + 1) for V in itertools.combinations(range(P), k)]
                for _ in range(seeds):
                    G = dyadic_block(rng, d, P)
                    oracle = G.sum(axis=1)
                    Z = encode_all(G, params, tables)
                    for V in subsets:
                        R = Z.copy()
                        R[:, list(V)] += rng.normal(size=(d, len(V))) * 10.0
                        cases += 1
                        if scheme is Scheme.REPETITION:
                            ok = decode_repetition(R, params).tobytes() == oracle.tobytes()
                        else:
                            try:
                                found = detect_adversaries(R, tables, rng)
                                err = np.linalg.norm(decode_cyclic(R, tables, found.adversaries) - oracle)
                                err /= np.linalg.norm(oracle)
                            except TooManyAdversaries:
                                err = np.inf
                            worst = max(worst, err)
                            ok = err <= 1e-8
                        bad_cases += not ok
                detail = f"{cases} cases, {bad_cases} failures" + (f", worst rel err {worst:.1e}" if scheme is Scheme.CYCLIC else "")
                checks.append(Check(f"exact tolerance {scheme.value} P={P} s={s}", bad_cases == 0, detail))
    return checks


def redundancy_checks(max_P=16) -> list[Check]:
    bad = []
    for scheme in Scheme:
        for P in range(1, max_P + 1):
            for s in feasible(P, scheme):
                a = assignment_for(CodeParams(P, s, scheme))
                if redundancy_ratio(a) != 2 * s + 1 or not np.all(a.replication() == 2 * s + 1):
                    bad.append((scheme.value, P, s))
            try:
                CodeParams(P, (P - 1) // 2 + 1, scheme)
                bad.append((scheme.value, P, "accepted s > (P-1)/2"))
            except InvalidParams:
                pass
    return [Check("redundancy ratio 2s+1 and s-bound rejection", not bad, f"violations {bad}" if bad else "")]


def structure_checks(max_P=12, seed=0) -> list[Check]:
    rng = np.random.default_rng(seed)
    support_worst, span_worst, ortho_worst = 0.0, 0.0, 0.0
    for P in range(1, max_P + 1):
        for s in feasible(P, Scheme.CYCLIC):
            tables = build_cyclic_tables(CodeParams(P, s, Scheme.CYCLIC))
            A = tables.assignment.matrix().T  # rows = units, columns = nodes, like W
            absW = np.abs(tables.W)
            support_worst = max(support_worst, float(((absW * (A == 0)).max(axis=1) / absW.max(axis=1)).max()))
            for k in range(P - 2 * s, P + 1):
                for U in itertools.combinations(range(P), k):
                    b = decoding_vector(tables, U)
                    span_worst = max(span_worst, float(np.abs(tables.W[:, list(U)] @ b - 1).max()))
            G = rng.normal(size=(8, P))
            Z = encode_all(G, tables.params, tables)
            f = rng.normal(1.0, 1.0, size=8)
            if s:
                ortho_worst = max(ortho_worst, float(np.linalg.norm(syndrome(Z, tables, f)) / np.linalg.norm(f @ Z)))
    return [
        Check("W vanishes off the assignment support", support_worst <= 1e-10, f"worst {support_worst:.1e}"),
        Check("1 in span of W[:, U] for |U| >= P-2s", span_worst <= 1e-8, f"worst {span_worst:.1e}"),
        Check("honest syndrome vanishes", ortho_worst <= 1e-8, f"worst {ortho_worst:.1e}"),
    ]


def locator_checks(trials=200, seed=0) -> list[Check]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        P = int(rng.choice([7, 9, 11, 15]))
        s = int(rng.integers(1, (P - 1) // 2 + 1))
        tables = build_cyclic_tables(CodeParams(P, s, Scheme.CYCLIC))
        k = int(rng.integers(1, s + 1))
        N = np.zeros((6, P), dtype=complex)
        N[:, rng.choice(P, size=k, replace=False)] = rng.normal(size=(6, k))
        known = syndrome(N, tables, rng.normal(1.0, 1.0, size=6))
        h_full = np.concatenate([np.zeros(P - 2 * s), known])
        H, rhs = locator_system(h_full, P, s)
        beta = min_norm_solve(H, rhs)
        h = extend_syndrome(known, beta, P, s)
        # the recurrence must reproduce the known entries too, cyclically
        for ell in range(P - 2 * s, P):
            pred = sum(beta[u] * h[(ell + u - s) % P] for u in range(s))
            worst = max(worst, abs(pred - h[ell]) / np.abs(known).max())
    return [Check("locator recurrence holds for the min-norm solution", worst <= 1e-6, f"worst {worst:.1e}")]


def majority_checks(max_len=9) -> list[Check]:
    bad = 0
    total = 0
    for n in range(1, max_len + 1):
        for seq in itertools.product("abc", repeat=n):
            counts = {c: seq.count(c) for c in "abc"}
            top = max(counts, key=counts.get)
            if 2 * counts[top] <= n:
                continue
            total += 1
            bad += streaming_majority(seq) != top
    return [Check("streaming majority equals exhaustive count", bad == 0, f"{total} sequences, {bad} mismatches")]


def codes_suite(seeds=200) -> list[Check]:
    return (redundancy_checks() + structure_checks() + locator_checks() + majority_checks()
            + exact_tolerance(seeds=seeds))


def detection_trials(P, s, trials, rng, d=16):
    tables = build_cyclic_tables(CodeParams(P, s, Scheme.CYCLIC))
    exact, oversize_silent = 0, 0
    for _ in range(trials):
        G = rng.normal(size=(d, P))
        R = encode_all(G, tables.params, tables)
        k = int(rng.integers(0, s + 1))
        V = tuple(sorted(int(j) for j in rng.choice(P, size=k, replace=False)))
        R[:, list(V)] += rng.normal(size=(d, k))
        try:
            found = detect_adversaries(R, tables, rng).adversaries
        except TooManyAdversaries:
            continue
        if len(found) > s:
            oversize_silent += 1
        exact += found == V
    return exact, oversize_silent


def detection_suite(trials=10_000, seed=0) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks = []
    for P in (5, 7, 11, 15):
        for s in (1, 2, 3):
            if 2 * s + 1 > P:
                continue
            exact, silent = detection_trials(P, s, trials, rng)
            rate = exact / trials
            checks.append(Check(f"detection P={P} s={s}", rate >= 0.999 and silent == 0,
                                f"exact {exact}/{trials} ({rate:.4%}), oversize without error {silent}"))
    return checks


def equivalence_config(aggregator, s, attack, T=200):
    return ExperimentConfig(P=15, s=s, aggregator=aggregator, attack=attack, B=60, lr=0.1, T=T, seed=7,
                            model=ModelSpec("logistic", 10),
                            dataset=DatasetSpec("classification", 600, 10, separation=3.0))


def smallest_repetition_s(P, at_least):
    return next(s for s in range(at_least, (P - 1) // 2 + 1) if P % (2 * s + 1) == 0)


def equivalence_suite(T=200) -> list[Check]:
    base = run_experiment(equivalence_config("mean", 0, AttackSpec(), T)).trajectory
    checks = []
    attacks = [AttackSpec("reverse", 0, c=100.0), AttackSpec("constant", 0, kappa=-100.0)]
    for attack in attacks:
        for count in (1, 3, 5):
            spec = replace(attack, count=count)
            rep = run_experiment(equivalence_config("draco-rep", smallest_repetition_s(15, count), spec, T)).trajectory
            same = all(a.tobytes() == b.tobytes() for a, b in zip(rep, base))
            checks.append(Check(f"repetition trajectory, {attack.kind} x{count}", same, "bitwise" if same else "differs"))
            cyc = run_experiment(equivalence_config("draco-cyclic", count, spec, T)).trajectory
            worst = max(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300) for a, b in zip(cyc, base))
            checks.append(Check(f"cyclic trajectory, {attack.kind} x{count}", worst <= 1e-6, f"worst rel {worst:.1e}"))
    return checks


SUITES = {
    "codes": codes_suite,
    "detection": detection_suite,
    "equivalence": equivalence_suite,
}
