"""Complex linear algebra helpers, the IDFT matrix and streaming majority vote."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Iterable, TypeVar

import numpy as np
import scipy.linalg

T = TypeVar("T")


class SingularMatrix(np.linalg.LinAlgError):
    pass


class EmptySequence(ValueError):
    pass


@dataclass(frozen=True)
class Tolerances:
    """Numerical thresholds shared by the codes module.

    ``solve_tol`` is a relative cutoff for pivots and singular values,
    ``zero_tol`` decides whether an entry of the locator output is nonzero
    (relative to its largest entry), ``recover_tol`` bounds the relative error
    of a decoded sum, and ``syndrome_tol`` is the level, relative to the
    projected messages, below which a value is treated as round-off.
    """

    solve_tol: float = 1e-10
    zero_tol: float = 1e-6
    recover_tol: float = 1e-8
    syndrome_tol: float = 1e-10

    def __post_init__(self):
        for name in ("solve_tol", "zero_tol", "recover_tol", "syndrome_tol"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


DEFAULT_TOL = Tolerances()


def dft_matrix(P: int) -> np.ndarray:
    """P x P unitary IDFT matrix, ``C[j, k] = exp(2*pi*i*j*k/P) / sqrt(P)``."""
    if P < 1:
        raise ValueError("P must be >= 1")
    jk = np.outer(np.arange(P), np.arange(P)) % P
    return np.exp(2j * np.pi * jk / P) / np.sqrt(P)


def solve_square(M, rhs, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Solve ``M x = rhs`` by LU with partial pivoting.

    Raises SingularMatrix when a pivot falls below ``solve_tol * ||M||``.
    """
    M = np.asarray(M, dtype=complex)
    rhs = np.asarray(rhs, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if rhs.shape[0] != M.shape[0]:
        raise ValueError("rhs length does not match matrix rows")
    n = M.shape[0]
    if n == 0:
        return np.zeros(rhs.shape, dtype=complex)
    norm = np.linalg.norm(M, 2)
    if norm == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=True)
    smallest = np.min(np.abs(np.diag(lu)))
    if smallest < tol.solve_tol * norm:
        raise SingularMatrix(f"pivot {smallest:.3e} below {tol.solve_tol:.1e} * ||M|| = {norm:.3e}")
    return scipy.linalg.lu_solve((lu, piv), rhs)


def min_norm_solve(M, rhs, tol: Tolerances = DEFAULT_TOL) -> np.ndarray:
    """Minimum-norm least-squares solution of ``M x = rhs``.

    Singular values below ``solve_tol * sigma_max`` are discarded, so
    rank-deficient systems (fewer active adversaries than the design bound)
    still get a well-defined answer.
    """
    M = np.asarray(M, dtype=complex)
    rhs = np.asarray(rhs, dtype=complex)
    if M.size == 0:
        return np.zeros(M.shape[1], dtype=complex)
    u, sv, vh = np.linalg.svd(M, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        return np.zeros(M.shape[1], dtype=complex)
    keep = sv > tol.solve_tol * sv[0]
    coeffs = (u[:, keep].conj().T @ rhs) / sv[keep]
    return vh[keep].conj().T @ coeffs


def streaming_majority(items: Iterable[T], eq: Callable[[T, T], bool] = lambda a, b: a == b) -> T:
    """Boyer-Moore majority vote in one pass with O(1) state.

    If a strict majority exists under ``eq`` it is returned; otherwise the
    surviving candidate is returned and the caller must know better.
    """
    it = iter(items)
    try:
        candidate = next(it)
    except StopIteration:
        raise EmptySequence("majority of an empty sequence") from None
    counter = 1
    for item in it:
        if counter == 0:
            candidate = item
            counter = 1
        elif eq(candidate, item):
            counter += 1
        else:
            counter -= 1
    return candidate


def verified_majority(items, eq=lambda a, b: a == b):
    """Majority vote plus a second counting pass; returns None without a strict majority."""
    items = list(items)
    candidate = streaming_majority(items, eq)
    count = sum(1 for item in items if eq(candidate, item))
    return candidate if 2 * count > len(items) else None


def bit_equal(a: np.ndarray, b: np.ndarray) -> bool:
    """Exact byte equality of two arrays (distinguishes -0.0 from 0.0)."""
    if a.shape != b.shape or a.dtype != b.dtype:
        return False
    if a.flags.c_contiguous and b.flags.c_contiguous and a.nbytes % 8 == 0:
        return bool(np.array_equal(a.reshape(-1).view(np.uint64), b.reshape(-1).view(np.uint64)))
    return a.tobytes() == b.tobytes()
