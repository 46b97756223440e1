"""Parameter-server aggregation rules: mean, geometric median and DRACO decoding."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .codes import (
    CodeParams,
    CyclicTables,
    Scheme,
    decode_cyclic,
    decode_repetition,
    detect_adversaries,
    repetition_dissenters,
)
from .numerics import DEFAULT_TOL, Tolerances

AGGREGATOR_KINDS = ("mean", "gm", "draco-rep", "draco-cyclic")

GM_EPS = 1e-12


def canonical_sum(messages) -> np.ndarray:
    """Left-to-right sum of a sequence of vectors."""
    it = iter(messages)
    acc = np.array(next(it), copy=True)
    for m in it:
        acc = acc + m
    return acc


def aggregate_mean(messages) -> np.ndarray:
    messages = list(messages)
    if not messages:
        raise ValueError("mean of no messages")
    return canonical_sum(messages) / len(messages)


def _gm_objective(y, M, eps=GM_EPS):
    return float(np.sum(np.sqrt(np.sum((M - y) ** 2, axis=1) + eps**2)))


def aggregate_geometric_median(messages, max_iters: int = 100, gm_tol: float = 1e-8, trace: Optional[list] = None):
    """Weiszfeld iteration for ``argmin_y sum_j ||y - m_j||``.

    Distances are smoothed as ``sqrt(||.||^2 + eps^2)`` so an iterate landing on
    a message does not divide by zero. The iteration starts at the mean and
    stops once a step is shorter than ``gm_tol * max(1, ||y||)``. If ``trace``
    is a list, the smoothed objective of every iterate is appended to it.
    """
    M = np.asarray(messages, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.shape[0] == 0:
        raise ValueError("geometric median of no messages")
    if max_iters < 1 or not gm_tol > 0:
        raise ValueError("need max_iters >= 1 and gm_tol > 0")
    y = M.mean(axis=0)
    if trace is not None:
        trace.append(_gm_objective(y, M))
    for _ in range(max_iters):
        w = 1.0 / np.sqrt(np.sum((M - y) ** 2, axis=1) + GM_EPS**2)
        y_new = (w @ M) / w.sum()
        step = np.linalg.norm(y_new - y)
        y = y_new
        if trace is not None:
            trace.append(_gm_objective(y, M))
        if step < gm_tol * max(1.0, np.linalg.norm(y)):
            break
    return y


@dataclass
class DracoOutcome:
    total: np.ndarray
    located: tuple[int, ...]


def aggregate_draco(
    R: np.ndarray,
    params: CodeParams,
    tables: CyclicTables | None = None,
    rng: np.random.Generator | None = None,
    tol: Tolerances = DEFAULT_TOL,
) -> DracoOutcome:
    """Decode the received d x P matrix to the gradient *sum*.

    ``located`` lists the nodes the decoder identified as adversarial: the
    detection output for the cyclic code, outvoted nodes for repetition.
    """
    if params.scheme is Scheme.REPETITION:
        return DracoOutcome(decode_repetition(R, params), repetition_dissenters(R, params))
    if tables is None or rng is None:
        raise ValueError("cyclic decoding needs tables and a random source")
    det = detect_adversaries(R, tables, rng, tol)
    return DracoOutcome(decode_cyclic(R, tables, det.adversaries, tol), det.adversaries)


@dataclass
class Aggregator:
    """Strategy object used by the simulator to turn P messages into a gradient sum."""

    kind: str = "mean"
    max_iters: int = 100
    gm_tol: float = 1e-8
    params: Optional[CodeParams] = None
    tables: Optional[CyclicTables] = None
    tol: Tolerances = DEFAULT_TOL

    def __post_init__(self):
        if self.kind not in AGGREGATOR_KINDS:
            raise ValueError(f"unknown aggregator {self.kind!r}")
        if self.max_iters < 1 or not self.gm_tol > 0:
            raise ValueError("need max_iters >= 1 and gm_tol > 0")
        if self.is_draco and self.params is None:
            raise ValueError("DRACO aggregator needs code parameters")

    @property
    def is_draco(self) -> bool:
        return self.kind.startswith("draco")

    def sum_estimate(self, messages: np.ndarray, rng=None) -> DracoOutcome:
        """``messages`` is P x d' (one row per node)."""
        if self.kind == "mean":
            return DracoOutcome(canonical_sum(messages), ())
        if self.kind == "gm":
            gm = aggregate_geometric_median(messages, self.max_iters, self.gm_tol)
            return DracoOutcome(len(messages) * gm, ())
        return aggregate_draco(np.asarray(messages).T, self.params, self.tables, rng, self.tol)
