"""Single-process simulation of one parameter server and P workers.

Every round: draw a batch, split it into P shards, compute one gradient unit
per shard, encode per the node assignment, let the adversaries rewrite their
outbound messages, aggregate at the server and take an SGD step.

Gradient units are rounded to a dyadic grid (``quantum``, default 2**-40) so
that any summation order over them is exact. This makes a repetition-code run
bitwise comparable with a plain averaging run even though the two add the
same units in different groupings.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .aggregation import AGGREGATOR_KINDS, Aggregator
from .codes import (
    CodeParams,
    CyclicTables,
    Scheme,
    assignment_for,
    build_cyclic_tables,
    encode_cyclic,
    encode_repetition,
    pack_complex,
    unpack_complex,
)
from .numerics import DEFAULT_TOL, Tolerances
from .threat import AttackSpec, corrupt, select_adversaries
from .trainbench import ModelSpec, SyntheticDataset, accuracy, generate_synthetic, gradient, loss, sgd_step

METRICS_HEADER = ["round", "wall_ms", "compute_ns", "encode_ns", "decode_ns", "loss", "accuracy", "adversaries", "detected"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "classification"
    n: int = 600
    feat_dim: int = 10
    noise_sd: float = 0.1
    separation: float = 3.0
    seed: Optional[int] = None
    cache: Optional[str] = None


@dataclass(frozen=True)
class ExperimentConfig:
    P: int = 15
    s: int = 1
    aggregator: str = "draco-rep"
    attack: AttackSpec = field(default_factory=AttackSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    B: int = 60
    lr: float = 0.1
    T: int = 100
    seed: int = 0
    pack: bool = True
    quantum: float = 2.0**-40
    gm_max_iters: int = 100
    gm_tol: float = 1e-8
    timing: bool = False
    debug: bool = True
    attack_seed: Optional[int] = None
    tol: Tolerances = DEFAULT_TOL

    @property
    def scheme(self) -> Optional[Scheme]:
        return {"draco-rep": Scheme.REPETITION, "draco-cyclic": Scheme.CYCLIC}.get(self.aggregator)

    def validate(self) -> None:
        if self.P < 1:
            raise ConfigError("P must be >= 1")
        if self.B < 1 or self.B % self.P:
            raise ConfigError(f"batch size B={self.B} must be a positive multiple of P={self.P}")
        if not self.lr > 0:
            raise ConfigError("learning rate must be positive")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if self.attack.count > self.P:
            raise ConfigError("more adversaries than nodes")
        if self.quantum < 0:
            raise ConfigError("quantum must be >= 0")
        if self.dataset.cache is None and self.dataset.n < self.B:
            raise ConfigError("dataset smaller than one batch")
        if self.model.kind == "linear" and self.dataset.kind != "regression":
            raise ConfigError("linear model needs a regression dataset")
        if self.model.kind != "linear" and self.dataset.kind != "classification":
            raise ConfigError(f"{self.model.kind} model needs a classification dataset")
        if self.scheme is not None:
            try:
                CodeParams(self.P, self.s, self.scheme)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if self.aggregator not in AGGREGATOR_KINDS:
            raise ConfigError(f"unknown aggregator {self.aggregator!r}")
        if self.gm_max_iters < 1 or not self.gm_tol > 0:
            raise ConfigError("need gm.max_iters >= 1 and gm.tol > 0")


@dataclass
class RoundTranscript:
    round_index: int
    adversaries: tuple[int, ...]
    digests: list[str]
    detected: tuple[int, ...] = ()
    decoded_sum: Optional[np.ndarray] = None
    oracle_sum: Optional[np.ndarray] = None
    mismatch: Optional[bool] = None
    error: Optional[str] = None
    timings: dict = field(default_factory=lambda: {"compute": 0, "encode": 0, "decode": 0})

    @property
    def completed(self) -> bool:
        return self.decoded_sum is not None

    def to_record(self) -> dict:
        def vec(v):
            return None if v is None else [float(x) for x in v]

        return {
            "round": self.round_index,
            "adversaries": list(self.adversaries),
            "digests": self.digests,
            "detected": list(self.detected),
            "decoded_sum": vec(self.decoded_sum),
            "oracle_sum": vec(self.oracle_sum),
            "mismatch": self.mismatch,
            "error": self.error,
            "timings_ns": dict(self.timings),
        }


def _digest(message: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(message).tobytes()).hexdigest()[:16]


def quantize(g: np.ndarray, quantum: float) -> np.ndarray:
    if quantum == 0:
        return g
    return np.round(g / quantum) * quantum


class _Clock:
    def __init__(self, enabled):
        self.enabled = enabled

    def now(self):
        return time.perf_counter_ns() if self.enabled else 0


class Simulation:
    """Holds everything that is fixed across rounds: data, model, code tables, rng streams."""

    def __init__(self, config: ExperimentConfig, dataset: Optional[SyntheticDataset] = None,
                 tables: Optional[CyclicTables] = None):
        config.validate()
        self.config = config
        root = np.random.SeedSequence(config.seed)
        data_ss, batch_ss, adv_ss, detect_ss, attack_ss, init_ss = root.spawn(6)
        if config.attack_seed is not None:
            adv_ss, attack_ss = np.random.SeedSequence(config.attack_seed).spawn(2)
        self.batch_rng = np.random.default_rng(batch_ss)
        self.adv_rng = np.random.default_rng(adv_ss)
        self.detect_rng = np.random.default_rng(detect_ss)
        self.attack_rng = np.random.default_rng(attack_ss)

        ds = config.dataset
        if dataset is None:
            if ds.cache is not None:
                dataset = SyntheticDataset.load(ds.cache, ds.kind)
            else:
                seed = ds.seed if ds.seed is not None else int(data_ss.generate_state(1)[0])
                dataset = generate_synthetic(ds.kind, ds.n, ds.feat_dim, ds.noise_sd, seed, ds.separation)
        if dataset.n < config.B:
            raise ConfigError("dataset smaller than one batch")
        if dataset.feat_dim != config.model.feat_dim:
            raise ConfigError(f"model expects {config.model.feat_dim} features, dataset has {dataset.feat_dim}")
        self.dataset = dataset
        self.model = config.model
        self.w0 = config.model.init_weights(np.random.default_rng(init_ss))

        self.params = None
        self.tables = None
        if config.scheme is not None:
            self.params = CodeParams(config.P, config.s, config.scheme)
            if config.scheme is Scheme.CYCLIC:
                self.tables = tables if tables is not None else build_cyclic_tables(self.params, config.tol)
                if self.tables.params != self.params:
                    raise ConfigError(f"cached tables are for {self.tables.params}, need {self.params}")
            self.assignment = assignment_for(self.params)
        self.aggregator = Aggregator(config.aggregator, config.gm_max_iters, config.gm_tol,
                                     self.params, self.tables, config.tol)
        self._perm = np.empty(0, dtype=int)
        self._cursor = 0

    def next_batch(self):
        """Shards (X_k, y_k) for k = 0..P-1 of the next batch; reshuffles per epoch."""
        B, P = self.config.B, self.config.P
        if self._cursor + B > len(self._perm):
            self._perm = self.batch_rng.permutation(self.dataset.n)
            self._cursor = 0
        idx = self._perm[self._cursor : self._cursor + B]
        self._cursor += B
        per = B // P
        return [(self.dataset.X[idx[k * per : (k + 1) * per]], self.dataset.y[idx[k * per : (k + 1) * per]])
                for k in range(P)]

    def _encode(self, units):
        """Outbound message of every node, one row per node."""
        cfg = self.config
        if self.params is None:
            return np.stack(units)
        if self.params.scheme is Scheme.REPETITION:
            return np.stack([encode_repetition(j, [units[k] for k in ks])
                             for j, ks in enumerate(self.assignment.per_node)])
        G = np.stack(units, axis=1)
        if cfg.pack:
            G = pack_complex(G)
        return np.stack([encode_cyclic(j, [G[:, k] for k in ks], self.tables)
                         for j, ks in enumerate(self.assignment.per_node)])

    def run_round(self, w: np.ndarray, shards, round_index: int = 0):
        cfg = self.config
        clock = _Clock(cfg.timing)
        t0 = clock.now()
        units = [quantize(gradient(self.model, w, X, y), cfg.quantum) for X, y in shards]
        t1 = clock.now()
        messages = self._encode(units)
        t2 = clock.now()

        adversaries = select_adversaries(cfg.attack, cfg.P, self.adv_rng)
        for j in adversaries:
            messages[j] = corrupt(messages[j], cfg.attack, self.attack_rng)
        tr = RoundTranscript(round_index, adversaries, [_digest(m) for m in messages])

        t3 = clock.now()
        try:
            outcome = self.aggregator.sum_estimate(messages, self.detect_rng)
        except Exception as exc:  # recorded, round skipped
            tr.error = f"{type(exc).__name__}: {exc}"
            t4 = clock.now()
            tr.timings = {"compute": t1 - t0, "encode": t2 - t1, "decode": t4 - t3}
            return None, tr
        t4 = clock.now()
        total = outcome.total
        if np.iscomplexobj(total):
            total = unpack_complex(total, len(w)) if cfg.pack else total.real.copy()
        tr.detected = tuple(outcome.located)
        tr.decoded_sum = total
        tr.timings = {"compute": t1 - t0, "encode": t2 - t1, "decode": t4 - t3}
        if cfg.debug:
            oracle = units[0].copy()
            for u in units[1:]:
                oracle += u
            tr.oracle_sum = oracle
            if self.params is not None and self.params.scheme is Scheme.REPETITION:
                tr.mismatch = oracle.tobytes() != total.tobytes()
            else:
                tr.mismatch = bool(np.linalg.norm(total - oracle) > cfg.tol.recover_tol * max(np.linalg.norm(oracle), 1e-300))
        return total, tr


@dataclass
class ExperimentResult:
    rows: list[dict]
    trajectory: list[np.ndarray]
    transcripts: list[RoundTranscript]

    @property
    def final_weights(self) -> np.ndarray:
        return self.trajectory[-1]

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=METRICS_HEADER, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows)
        return buf.getvalue()

    def transcripts_jsonl(self) -> str:
        return "".join(json.dumps(t.to_record(), sort_keys=True) + "\n" for t in self.transcripts)


def _fmt_set(ids) -> str:
    return ";".join(str(i) for i in ids)


def run_round(w, shard_batches, config: ExperimentConfig, rng=None, sim: Optional[Simulation] = None):
    """One distributed round outside of a full experiment.

    ``rng`` (if given) replaces every random stream of a freshly built
    simulation, which is handy for isolated tests.
    """
    if sim is None:
        sim = Simulation(config)
        if rng is not None:
            sim.adv_rng = sim.detect_rng = sim.attack_rng = rng
    return sim.run_round(np.asarray(w, dtype=float), shard_batches)


def run_experiment(config: ExperimentConfig, dataset: Optional[SyntheticDataset] = None,
                   tables: Optional[CyclicTables] = None, keep_transcripts: bool = True) -> ExperimentResult:
    sim = Simulation(config, dataset, tables)
    w = sim.w0.copy()
    X, y = sim.dataset.X, sim.dataset.y
    rows, trajectory, transcripts = [], [w.copy()], []
    for r in range(config.T):
        start = time.perf_counter_ns() if config.timing else 0
        total, tr = sim.run_round(w, sim.next_batch(), r)
        if total is not None:
            w = sgd_step(w, total, config.lr, config.B)
        wall = (time.perf_counter_ns() - start) / 1e6 if config.timing else 0.0
        acc = accuracy(sim.model, w, X, y)
        rows.append({
            "round": r,
            "wall_ms": f"{wall:.3f}",
            "compute_ns": tr.timings["compute"],
            "encode_ns": tr.timings["encode"],
            "decode_ns": tr.timings["decode"],
            "loss": repr(loss(sim.model, w, X, y)),
            "accuracy": "" if acc is None else repr(acc),
            "adversaries": _fmt_set(tr.adversaries),
            "detected": _fmt_set(tr.detected),
        })
        trajectory.append(w.copy())
        if keep_transcripts:
            transcripts.append(tr)
    return ExperimentResult(rows, trajectory, transcripts)
