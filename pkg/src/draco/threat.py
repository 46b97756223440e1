"""Adversary selection and corruption of outbound worker messages."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

ATTACK_KINDS = ("none", "reverse", "constant", "custom")


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class AttackSpec:
    """What the adversaries do and how they are picked.

    ``kind`` is one of ``none``, ``reverse`` (send ``-c * z``), ``constant``
    (send ``kappa * 1``) or ``custom`` (``fn(message, rng)``). ``selection`` is
    ``random`` (fresh uniform subset every round) or ``fixed``.
    """

    kind: str = "none"
    count: int = 0
    c: float = 100.0
    kappa: float = -100.0
    selection: str = "random"
    fixed: tuple[int, ...] = ()
    fn: Optional[Callable] = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise InvalidSpec(f"unknown attack kind {self.kind!r}")
        if self.count < 0:
            raise InvalidSpec("adversary count must be non-negative")
        if self.kind == "reverse" and not self.c > 0:
            raise InvalidSpec(f"reverse-gradient scale must be positive, got {self.c}")
        if self.kind == "custom" and self.fn is None:
            raise InvalidSpec("custom attack needs a corruption function")
        if self.selection not in ("random", "fixed"):
            raise InvalidSpec(f"unknown selection policy {self.selection!r}")
        if self.selection == "fixed":
            object.__setattr__(self, "fixed", tuple(sorted(set(self.fixed))))
            if len(self.fixed) != self.count:
                raise InvalidSpec(f"fixed set {self.fixed} does not have {self.count} members")

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.count > 0


def select_adversaries(spec: AttackSpec, P: int, rng: np.random.Generator) -> tuple[int, ...]:
    if spec.count > P:
        raise InvalidSpec(f"cannot pick {spec.count} adversaries among {P} nodes")
    if not spec.active:
        return ()
    if spec.selection == "fixed":
        if spec.fixed and max(spec.fixed) >= P:
            raise InvalidSpec(f"fixed adversary index out of range for P={P}")
        return spec.fixed
    return tuple(sorted(int(j) for j in rng.choice(P, size=spec.count, replace=False)))


def corrupt(message: np.ndarray, spec: AttackSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Replace an honest outbound message by the adversary's choice.

    For complex messages the constant attack sets real parts to ``kappa`` and
    imaginary parts to zero.
    """
    message = np.asarray(message)
    if spec.kind == "none":
        return message.copy()
    if spec.kind == "reverse":
        return -spec.c * message
    if spec.kind == "constant":
        return np.full(message.shape, spec.kappa, dtype=message.dtype)
    out = np.asarray(spec.fn(message, rng))
    if out.shape != message.shape:
        raise InvalidSpec(f"custom attack changed the message shape {message.shape} -> {out.shape}")
    return out.astype(message.dtype, copy=False)
