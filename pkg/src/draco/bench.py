"""Encode/decode timing for the coded schemes against the geometric median."""

from __future__ import annotations

import time

import numpy as np

from .aggregation import aggregate_geometric_median
from .codes import (
    CodeParams,
    Scheme,
    build_cyclic_tables,
    decode_cyclic,
    decode_repetition,
    detect_adversaries,
    encode_all,
    encode_cyclic,
    encode_repetition,
    pack_complex,
)
from .threat import AttackSpec, corrupt

BENCH_HEADER = ["scheme", "P", "s", "d", "encode_ns", "decode_ns", "gm_ns"]


def median_ns(fn, reps: int) -> int:
    """Median wall time of ``fn()`` over ``reps`` calls on a monotonic clock."""
    times = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        times.append(time.perf_counter_ns() - t0)
    return int(np.median(times))


def bench_cell(scheme: str, P: int, s: int, d: int, reps: int = 20, seed: int = 0, with_gm: bool = True) -> dict:
    """Time one node's encode, the full server decode (with s constant attackers) and GM.

    Decode includes adversary detection for the cyclic code.
    """
    rng = np.random.default_rng(seed)
    params = CodeParams(P, s, scheme)
    G = rng.normal(size=(d, P))
    attack = AttackSpec("constant", s)
    bad = rng.choice(P, size=s, replace=False)
    if params.scheme is Scheme.REPETITION:
        R = encode_all(G, params)
        units = [G[:, k] for k in range(2 * s + 1)]
        encode = lambda: encode_repetition(0, units)
        decode = lambda: decode_repetition(R, params)
    else:
        tables = build_cyclic_tables(params)
        Gp = pack_complex(G)
        R = encode_all(Gp, params, tables)
        units = [Gp[:, k] for k in tables.assignment.per_node[0]]
        encode = lambda: encode_cyclic(0, units, tables)
        det_rng = np.random.default_rng(seed + 1)

        def decode():
            found = detect_adversaries(R, tables, det_rng)
            return decode_cyclic(R, tables, found.adversaries)

    for j in bad:
        R[:, j] = corrupt(R[:, j], attack)
    row = {"scheme": params.scheme.value, "P": P, "s": s, "d": d,
           "encode_ns": median_ns(encode, reps), "decode_ns": median_ns(decode, reps), "gm_ns": ""}
    if with_gm:
        messages = G.T.copy()
        for j in bad:
            messages[j] = corrupt(messages[j], attack)
        row["gm_ns"] = median_ns(lambda: aggregate_geometric_median(messages, 100, 1e-8), reps)
    return row


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def repetition_decode_scaling(Ps, d: int, s: int = 1, reps: int = 40, seed: int = 0) -> dict[int, int]:
    """Median repetition decode time per P, sampling the P values round-robin.

    Interleaving keeps background load from biasing one size against another.
    """
    rng = np.random.default_rng(seed)
    cases = {}
    for P in Ps:
        params = CodeParams(P, s, Scheme.REPETITION)
        R = encode_all(rng.normal(size=(d, P)), params)
        for j in rng.choice(P, size=s, replace=False):
            R[:, j] = -100.0 * R[:, j]
        cases[P] = (R, params)
    samples = {P: [] for P in Ps}
    for P in Ps:  # warm-up
        decode_repetition(*cases[P])
    for _ in range(reps):
        for P in Ps:
            R, params = cases[P]
            t0 = time.perf_counter_ns()
            decode_repetition(R, params)
            samples[P].append(time.perf_counter_ns() - t0)
    return {P: int(np.median(v)) for P, v in samples.items()}
