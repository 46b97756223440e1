"""Gradient allocation, encoding and adversary-tolerant decoding.

Two schemes are provided. The fractional repetition code splits the P nodes
into groups of r = 2s+1 that all compute the same partial sum; the parameter
server takes a per-group majority vote. The cyclic code gives every node
2s+1 cyclically consecutive gradient units and has it send a complex linear
combination of them; the server locates corrupted messages from a syndrome
(Reed-Solomon style) and then solves for the sum from the clean ones.

Orientation used throughout: node ``j`` holds units ``{j, j-1, ..., j-2s}``
(mod P), which is the support of column ``j`` of ``W``. Row ``k`` of ``W`` is
then supported on ``{k, k+1, ..., k+2s}``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .numerics import (
    DEFAULT_TOL,
    SingularMatrix,
    Tolerances,
    bit_equal,
    dft_matrix,
    min_norm_solve,
    solve_square,
    streaming_majority,
)

TABLES_MAGIC = b"DRCO1"


class InvalidParams(ValueError):
    pass


class AssignmentMismatch(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class SingularConstruction(SingularMatrix):
    pass


class SingularSubsystem(SingularMatrix):
    pass


class TooManyAdversaries(RuntimeError):
    def __init__(self, located, s):
        self.located = tuple(located)
        self.s = s
        super().__init__(f"located {len(self.located)} adversaries {self.located}, more than s={s}")


class Scheme(str, enum.Enum):
    REPETITION = "repetition"
    CYCLIC = "cyclic"


@dataclass(frozen=True)
class CodeParams:
    P: int
    s: int
    scheme: Scheme = Scheme.CYCLIC

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.P < 1:
            raise InvalidParams(f"need at least one node, got P={self.P}")
        if self.s < 0:
            raise InvalidParams(f"s must be non-negative, got {self.s}")
        if 2 * self.s + 1 > self.P:
            raise InvalidParams(f"s={self.s} exceeds (P-1)/2 for P={self.P}")
        if self.scheme is Scheme.REPETITION and self.P % self.r:
            raise InvalidParams(f"repetition code needs 2s+1={self.r} to divide P={self.P}")

    @property
    def r(self) -> int:
        return 2 * self.s + 1

    @property
    def groups(self) -> int:
        return self.P // self.r


@dataclass(frozen=True)
class Assignment:
    """Which gradient units each node computes (sparse allocation matrix)."""

    per_node: tuple[tuple[int, ...], ...]

    @property
    def P(self) -> int:
        return len(self.per_node)

    def matrix(self) -> np.ndarray:
        A = np.zeros((self.P, self.P), dtype=int)
        for j, units in enumerate(self.per_node):
            A[j, list(units)] = 1
        return A

    def replication(self) -> np.ndarray:
        counts = np.zeros(self.P, dtype=int)
        for units in self.per_node:
            counts[list(units)] += 1
        return counts


def repetition_assignment(params: CodeParams) -> Assignment:
    if params.scheme is not Scheme.REPETITION:
        raise InvalidParams("repetition_assignment needs a repetition scheme")
    r = params.r
    return Assignment(tuple(tuple(range((j // r) * r, (j // r) * r + r)) for j in range(params.P)))


def cyclic_assignment(params: CodeParams) -> Assignment:
    if params.scheme is not Scheme.CYCLIC:
        raise InvalidParams("cyclic_assignment needs a cyclic scheme")
    P, r = params.P, params.r
    return Assignment(tuple(tuple(sorted((j - t) % P for t in range(r))) for j in range(P)))


def assignment_for(params: CodeParams) -> Assignment:
    if params.scheme is Scheme.REPETITION:
        return repetition_assignment(params)
    return cyclic_assignment(params)


def redundancy_ratio(a: Assignment) -> Fraction:
    return Fraction(sum(len(units) for units in a.per_node), a.P)


# ---------------------------------------------------------------- cyclic tables


@dataclass(frozen=True, eq=False)
class CyclicTables:
    params: CodeParams
    C_L: np.ndarray
    C_R: np.ndarray
    W: np.ndarray
    assignment: Assignment
    node_coeffs: tuple[np.ndarray, ...] = field(repr=False)

    def save(self, path) -> None:
        """Write ``DRCO1``, P and s as little-endian uint64, then W row-major complex128."""
        with open(path, "wb") as fh:
            fh.write(TABLES_MAGIC)
            fh.write(struct.pack("<QQ", self.params.P, self.params.s))
            fh.write(np.ascontiguousarray(self.W, dtype="<c16").tobytes())

    @classmethod
    def load(cls, path) -> "CyclicTables":
        data = Path(path).read_bytes()
        head = len(TABLES_MAGIC) + 16
        if data[: len(TABLES_MAGIC)] != TABLES_MAGIC:
            raise ValueError(f"{path}: not a cyclic tables file")
        P, s = struct.unpack("<QQ", data[len(TABLES_MAGIC) : head])
        body = data[head:]
        if len(body) != 16 * P * P:
            raise ValueError(f"{path}: expected {16 * P * P} bytes of W, found {len(body)}")
        W = np.frombuffer(body, dtype="<c16").reshape(P, P).astype(complex)
        return _assemble_tables(CodeParams(int(P), int(s), Scheme.CYCLIC), W)


def _row_support(P: int, s: int, k: int) -> list[int]:
    return sorted((k + t) % P for t in range(2 * s + 1))


def _assemble_tables(params: CodeParams, W: np.ndarray) -> CyclicTables:
    P, s = params.P, params.s
    C = dft_matrix(P)
    assignment = cyclic_assignment(params)
    coeffs = tuple(W[list(units), j].copy() for j, units in enumerate(assignment.per_node))
    for a in (W, *coeffs):
        a.setflags(write=False)
    return CyclicTables(params, C[: P - 2 * s], C[P - 2 * s :], W, assignment, coeffs)


def build_cyclic_tables(params: CodeParams, tol: Tolerances = DEFAULT_TOL) -> CyclicTables:
    """Construct the encoding matrix ``W = [Q 1] C_L``.

    For each row k, ``q_k`` is the unique vector with ``[q_k 1] C_L`` vanishing
    on the P-2s-1 columns outside the row's support.
    """
    if params.scheme is not Scheme.CYCLIC:
        raise InvalidParams("cyclic tables need a cyclic scheme")
    P, s = params.P, params.s
    C_L = dft_matrix(P)[: P - 2 * s]
    W = np.empty((P, P), dtype=complex)
    for k in range(P):
        support = set(_row_support(P, s, k))
        alpha = [c for c in range(P) if c not in support]
        sub = C_L[:, alpha]
        try:
            q = solve_square(sub[:-1].T, -sub[-1], tol)
        except SingularMatrix as exc:
            raise SingularConstruction(f"row {k}: {exc}") from exc
        W[k] = np.concatenate([q, [1.0]]) @ C_L
    return _assemble_tables(params, W)


# ---------------------------------------------------------------- encoding


def encode_repetition(node: int, grads: Sequence[np.ndarray]) -> np.ndarray:
    """Sum of the node's gradient units, accumulated in ascending-index order."""
    it = iter(grads)
    acc = np.array(next(it), dtype=float, copy=True)
    for g in it:
        acc += g
    return acc


def _ordered_grads(units, grads, node):
    if isinstance(grads, Mapping):
        if set(grads) != set(units):
            raise AssignmentMismatch(f"node {node} holds {units}, got units {sorted(grads)}")
        return [grads[k] for k in units]
    grads = list(grads)
    if len(grads) != len(units):
        raise AssignmentMismatch(f"node {node} holds {len(units)} units, got {len(grads)} gradients")
    return grads


def encode_cyclic(node: int, grads, tables: CyclicTables) -> np.ndarray:
    """``sum_k W[k, node] * g_k`` over the node's units in ascending order.

    ``grads`` is either a mapping unit -> vector or a sequence aligned with the
    node's (sorted) assignment.
    """
    units = tables.assignment.per_node[node]
    ordered = _ordered_grads(units, grads, node)
    coeffs = tables.node_coeffs[node]
    acc = coeffs[0] * np.asarray(ordered[0])
    for c, g in zip(coeffs[1:], ordered[1:]):
        acc = acc + c * np.asarray(g)
    return acc


def encode_all(G: np.ndarray, params: CodeParams, tables: CyclicTables | None = None) -> np.ndarray:
    """Honest received matrix (d x P) for a full block of gradient units ``G`` (d x P)."""
    G = np.asarray(G)
    if G.ndim != 2 or G.shape[1] != params.P:
        raise DimensionMismatch(f"expected d x {params.P} gradient block, got {G.shape}")
    if params.scheme is Scheme.REPETITION:
        a = repetition_assignment(params)
        cols = [encode_repetition(j, [G[:, k] for k in units]) for j, units in enumerate(a.per_node)]
    else:
        if tables is None:
            raise ValueError("cyclic encoding needs tables")
        a = tables.assignment
        cols = [encode_cyclic(j, [G[:, k] for k in units], tables) for j, units in enumerate(a.per_node)]
    # one contiguous buffer per node, viewed as d x P
    return np.stack(cols, axis=0).T


# ---------------------------------------------------------------- decoding


def _majority_columns(R: np.ndarray, params: CodeParams):
    rows = np.ascontiguousarray(R.T)  # free when R is a view of per-node buffers
    r = params.r
    for g in range(params.groups):
        yield g, rows[g * r : (g + 1) * r], streaming_majority(rows[g * r : (g + 1) * r], bit_equal)


def decode_repetition(R: np.ndarray, params: CodeParams) -> np.ndarray:
    """Sum of the per-group majority messages (bit-exact vote)."""
    R = np.asarray(R)
    if R.ndim != 2 or R.shape[1] != params.P:
        raise DimensionMismatch(f"expected d x {params.P} received matrix, got {R.shape}")
    total = None
    for _, _, winner in _majority_columns(R, params):
        if total is None:
            total = winner.copy()
        else:
            total += winner
    return total


def repetition_dissenters(R: np.ndarray, params: CodeParams) -> tuple[int, ...]:
    """Nodes whose message disagrees with their group's majority."""
    out = []
    for g, members, winner in _majority_columns(np.asarray(R), params):
        out.extend(g * params.r + i for i, m in enumerate(members) if not bit_equal(m, winner))
    return tuple(out)


@dataclass(frozen=True)
class DetectionResult:
    adversaries: tuple[int, ...]
    locator_residual: float = 0.0


def syndrome(R: np.ndarray, tables: CyclicTables, f: np.ndarray) -> np.ndarray:
    """``[h_{P-2s}, ..., h_{P-1}] = f R C_R^H``; zero for honest rounds."""
    return (f @ R) @ tables.C_R.conj().T


def locator_system(h: np.ndarray, P: int, s: int) -> tuple[np.ndarray, np.ndarray]:
    """Hankel system whose row i reads ``[h_{P-s-1-i} .. h_{P-2-i}] beta = h_{P-1-i}``."""
    H = np.empty((s, s), dtype=complex)
    rhs = np.empty(s, dtype=complex)
    for i in range(s):
        H[i] = h[P - s - 1 - i : P - 1 - i]
        rhs[i] = h[P - 1 - i]
    return H, rhs


def extend_syndrome(known: np.ndarray, beta: np.ndarray, P: int, s: int) -> np.ndarray:
    """Fill ``h_0 .. h_{P-2s-1}`` by ``h_l = sum_u beta_u h_{l+u-s}`` (indices mod P)."""
    h = np.zeros(P, dtype=complex)
    h[P - 2 * s :] = known
    for ell in range(P - 2 * s):
        h[ell] = sum(beta[u] * h[(ell + u - s) % P] for u in range(s))
    return h


def detect_adversaries(
    R: np.ndarray,
    tables: CyclicTables,
    rng: np.random.Generator,
    tol: Tolerances = DEFAULT_TOL,
) -> DetectionResult:
    """Locate the columns of ``R`` carrying adversarial noise."""
    P, s = tables.params.P, tables.params.s
    R = np.asarray(R)
    if R.ndim != 2 or R.shape[1] != P:
        raise DimensionMismatch(f"expected d x {P} received matrix, got {R.shape}")
    if s == 0:
        return DetectionResult(())
    f = rng.normal(1.0, 1.0, size=R.shape[0])
    projected = f @ R
    known = projected @ tables.C_R.conj().T
    scale = max(1.0, float(np.max(np.abs(projected))))
    if np.max(np.abs(known)) <= tol.syndrome_tol * scale:
        return DetectionResult(())

    H, rhs = locator_system(np.concatenate([np.zeros(P - 2 * s), known]), P, s)
    beta = min_norm_solve(H, rhs, tol)
    residual = float(np.linalg.norm(H @ beta - rhs) / max(np.linalg.norm(rhs), np.finfo(float).tiny))

    h = extend_syndrome(known, beta, P, s)
    t = np.abs(dft_matrix(P) @ h)
    # relative to the largest entry, floored at the honest round-off level
    threshold = max(tol.zero_tol * float(t.max()), tol.syndrome_tol * scale)
    located = tuple(int(j) for j in np.flatnonzero(t > threshold))
    if len(located) > s:
        raise TooManyAdversaries(located, s)
    return DetectionResult(located, residual)


def decoding_vector(tables: CyclicTables, honest: Sequence[int], tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Coefficients ``b`` over ``honest`` with ``W[:, honest] @ b = 1``.

    Only the first P-2s honest indices get nonzero weight: they solve
    ``C_L[:, first] b = (0, ..., 0, 1)``.
    """
    P, s = tables.params.P, tables.params.s
    honest = sorted(honest)
    m = P - 2 * s
    if len(honest) < m:
        raise ValueError(f"need at least {m} honest nodes, got {len(honest)}")
    e_last = np.zeros(m, dtype=complex)
    e_last[-1] = 1.0
    try:
        head = solve_square(tables.C_L[:, honest[:m]], e_last, tol)
    except SingularMatrix as exc:
        raise SingularSubsystem(str(exc)) from exc
    b = np.zeros(len(honest), dtype=complex)
    b[:m] = head
    return b


def decode_cyclic(
    R: np.ndarray,
    tables: CyclicTables,
    adversaries: Sequence[int] = (),
    tol: Tolerances = DEFAULT_TOL,
) -> np.ndarray:
    """Recover ``G 1_P`` from the columns not flagged as adversarial."""
    P = tables.params.P
    R = np.asarray(R)
    if R.ndim != 2 or R.shape[1] != P:
        raise DimensionMismatch(f"expected d x {P} received matrix, got {R.shape}")
    bad = set(adversaries)
    honest = [j for j in range(P) if j not in bad]
    b = decoding_vector(tables, honest, tol)
    m = P - 2 * tables.params.s
    return R[:, honest[:m]] @ b[:m]


# ---------------------------------------------------------------- complex packing


def pack_complex(G: np.ndarray) -> np.ndarray:
    """Fold a real d x P block into ceil(d/2) x P complex (second half -> imaginary)."""
    G = np.asarray(G, dtype=float)
    if G.ndim not in (1, 2):
        raise DimensionMismatch(f"expected a vector or d x P block, got shape {G.shape}")
    d = G.shape[0]
    half = (d + 1) // 2
    out = np.zeros((half,) + G.shape[1:], dtype=complex)
    out.real = G[:half]  # assigning parts keeps signed zeros intact
    out.imag[: d - half] = G[half:]
    return out


def unpack_complex(u: np.ndarray, d: int) -> np.ndarray:
    """Inverse of :func:`pack_complex` for a single vector."""
    u = np.asarray(u)
    half = (d + 1) // 2
    if u.ndim != 1 or u.shape[0] != half:
        raise DimensionMismatch(f"packed vector of length {u.shape} does not match d={d}")
    return np.concatenate([u.real, u.imag[: d - half]])
