"""Flat ``key = value`` experiment configuration files.

Lines are ``dotted.key = value``; ``#`` starts a comment. Unknown keys are an
error. The seed is resolved with precedence command-line flag > ``DRACO_SEED``
environment variable > file.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Callable, Iterable, Optional

from .simharness import ConfigError, DatasetSpec, ExperimentConfig
from .threat import AttackSpec, InvalidSpec
from .trainbench import ModelSpec


def _bool(v: str) -> bool:
    low = v.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in v.replace(";", ",").split(",") if x.strip())


def _opt_int(v: str) -> Optional[int]:
    return None if v.strip().lower() in ("", "none") else int(v)


def _opt_str(v: str) -> Optional[str]:
    return None if v.strip().lower() in ("", "none") else v.strip()


KEYS: dict[str, tuple[Callable[[str], object], object]] = {
    "seed": (int, 0),
    "aggregator": (str, "draco-rep"),
    "code.P": (int, 15),
    "code.s": (int, 1),
    "code.scheme": (_opt_str, None),
    "code.pack": (_bool, True),
    "code.tables": (_opt_str, None),
    "gm.max_iters": (int, 100),
    "gm.tol": (float, 1e-8),
    "attack.kind": (str, "none"),
    "attack.c": (float, 100.0),
    "attack.kappa": (float, -100.0),
    "attack.count": (int, 0),
    "attack.seed": (_opt_int, None),
    "attack.selection": (str, "random"),
    "attack.fixed": (_ints, ()),
    "model.kind": (str, "logistic"),
    "model.hidden": (_ints, (8,)),
    "model.activation": (str, "tanh"),
    "data.kind": (_opt_str, None),
    "data.n": (int, 600),
    "data.dim": (int, 10),
    "data.noise_sd": (float, 0.1),
    "data.separation": (float, 3.0),
    "data.seed": (_opt_int, None),
    "data.cache": (_opt_str, None),
    "train.B": (int, 60),
    "train.lr": (float, 0.1),
    "train.T": (int, 100),
    "train.quantum": (float, 2.0**-40),
    "out.dir": (str, "out"),
    "out.timing": (_bool, False),
    "out.transcripts": (_bool, False),
}


def parse_lines(lines: Iterable[str], source: str = "<config>") -> dict[str, str]:
    raw = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        raw[key] = value
    return raw


def parse_overrides(pairs: Iterable[str]) -> dict[str, str]:
    return parse_lines(pairs, "--override")


def resolve(raw: dict[str, str]) -> dict[str, object]:
    values = {k: default for k, (_, default) in KEYS.items()}
    for key, text in raw.items():
        conv = KEYS[key][0]
        try:
            values[key] = conv(text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc
    return values


def load(path: Optional[str | Path] = None, overrides: Iterable[str] = (), seed: Optional[int] = None,
         env: Optional[dict] = None) -> tuple[ExperimentConfig, dict[str, object]]:
    """Build an :class:`ExperimentConfig` and return it with the resolved flat values."""
    raw = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        raw.update(parse_lines(path.read_text().splitlines(), str(path)))
    raw.update(parse_overrides(overrides))
    v = resolve(raw)

    env = os.environ if env is None else env
    if seed is not None:
        v["seed"] = seed
    elif env.get("DRACO_SEED"):
        try:
            v["seed"] = int(env["DRACO_SEED"])
        except ValueError as exc:
            raise ConfigError(f"DRACO_SEED is not an integer: {env['DRACO_SEED']!r}") from exc

    aggregator = v["aggregator"]
    scheme = v["code.scheme"]
    if aggregator == "draco":
        if scheme not in ("repetition", "cyclic"):
            raise ConfigError("aggregator = draco needs code.scheme = repetition | cyclic")
        aggregator = "draco-rep" if scheme == "repetition" else "draco-cyclic"
    elif scheme is not None:
        implied = {"draco-rep": "repetition", "draco-cyclic": "cyclic"}.get(aggregator)
        if implied is not None and implied != scheme:
            raise ConfigError(f"code.scheme = {scheme} contradicts aggregator = {aggregator}")

    model_kind = v["model.kind"]
    data_kind = v["data.kind"] or ("regression" if model_kind == "linear" else "classification")
    if v["data.cache"] is not None and not Path(v["data.cache"]).is_file():
        raise ConfigError(f"data.cache not found: {v['data.cache']}")
    try:
        attack = AttackSpec(
            kind=v["attack.kind"],
            count=v["attack.count"] if v["attack.kind"] != "none" else 0,
            c=v["attack.c"],
            kappa=v["attack.kappa"],
            selection=v["attack.selection"],
            fixed=v["attack.fixed"],
        )
        model = ModelSpec(model_kind, v["data.dim"], v["model.hidden"], v["model.activation"])
    except (InvalidSpec, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    cfg = ExperimentConfig(
        P=v["code.P"],
        s=v["code.s"],
        aggregator=aggregator,
        attack=attack,
        model=model,
        dataset=DatasetSpec(data_kind, v["data.n"], v["data.dim"], v["data.noise_sd"], v["data.separation"],
                            v["data.seed"], v["data.cache"]),
        B=v["train.B"],
        lr=v["train.lr"],
        T=v["train.T"],
        seed=v["seed"],
        pack=v["code.pack"],
        quantum=v["train.quantum"],
        gm_max_iters=v["gm.max_iters"],
        gm_tol=v["gm.tol"],
        timing=v["out.timing"],
        attack_seed=v["attack.seed"],
    )
    cfg.validate()
    return cfg, v
