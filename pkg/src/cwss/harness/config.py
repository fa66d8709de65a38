"""Experiment configuration, presets, and strategy construction by name."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from ..bfgs import StopCriteria
from ..l2o.train import MetaConfig
from ..problems import DEFAULT_RHO, ProblemKind
from ..strategies import FixedStep, Hgd, LineSearch

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "FAMILY_DIMS",
    "PRESETS",
    "preset",
    "load_config",
    "parse_strategy",
    "build_strategy",
]

FAMILY_DIMS = {
    ProblemKind.LEAST_SQUARES: ("m", "n"),
    ProblemKind.LOGISTIC: ("m", "n"),
    ProblemKind.LOGSUMEXP: ("m", "d"),
}

_DESK_DIMS = {
    ProblemKind.LEAST_SQUARES: {"m": 60, "n": 120},
    ProblemKind.LOGISTIC: {"m": 120, "n": 60},
    ProblemKind.LOGSUMEXP: {"m": 120, "d": 20},
}
_PAPER_DIMS = {
    ProblemKind.LEAST_SQUARES: {"m": 250, "n": 500},
    ProblemKind.LOGISTIC: {"m": 500, "n": 250},
    ProblemKind.LOGSUMEXP: {"m": 500, "d": 100},
}
PRESETS = ("desk", "paper")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass(frozen=True)
class ExperimentConfig:
    family: ProblemKind = ProblemKind.LEAST_SQUARES
    dims: Dict[str, Any] = field(default_factory=lambda: dict(_DESK_DIMS[ProblemKind.LEAST_SQUARES]))
    n_train: int = 2000
    n_test: int = 128
    strategies: Tuple[str, ...] = ("ls", "hgd", "l2o")
    stop: StopCriteria = StopCriteria(grad_tol=1e-10, max_iters=1000)
    seed: int = 0
    meta: MetaConfig = MetaConfig()
    workers: int = 1
    monitor: bool = False

    def __post_init__(self):
        try:
            family = ProblemKind(self.family)
        except ValueError:
            raise ConfigError(f"family: unknown problem family {self.family!r}") from None
        object.__setattr__(self, "family", family)
        need = FAMILY_DIMS[family]
        dims = dict(self.dims)
        for key in need:
            if key not in dims:
                raise ConfigError(f"dims.{key}: required for family {family.value}")
            if not isinstance(dims[key], int) or dims[key] < 1:
                raise ConfigError(f"dims.{key}: must be a positive integer, got {dims[key]!r}")
        allowed = set(need) | ({"rho"} if family is ProblemKind.LOGISTIC else set())
        extra = set(dims) - allowed
        if extra:
            raise ConfigError(f"dims: unexpected keys {sorted(extra)} for family {family.value}")
        if family is ProblemKind.LOGISTIC:
            dims.setdefault("rho", DEFAULT_RHO)
            if not (isinstance(dims["rho"], (int, float)) and dims["rho"] >= 0):
                raise ConfigError("dims.rho: must be a non-negative number")
        object.__setattr__(self, "dims", dims)
        if not isinstance(self.n_train, int) or self.n_train < 0:
            raise ConfigError("n_train: must be a non-negative integer")
        if not isinstance(self.n_test, int) or self.n_test < 1:
            raise ConfigError("n_test: must be >= 1")
        strategies = tuple(self.strategies)
        if not strategies:
            raise ConfigError("strategies: at least one strategy is required")
        for s in strategies:
            parse_strategy(s)
        if len(set(strategies)) != len(strategies):
            raise ConfigError("strategies: duplicate entries")
        object.__setattr__(self, "strategies", strategies)
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ConfigError("workers: must be >= 1")

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "dims": dict(sorted(self.dims.items())),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "strategies": list(self.strategies),
            "stop": dataclasses.asdict(self.stop),
            "seed": self.seed,
            "meta": dataclasses.asdict(self.meta),
            "workers": self.workers,
            "monitor": self.monitor,
        }

    @classmethod
    def from_dict(cls, data: dict, base: Optional["ExperimentConfig"] = None) -> "ExperimentConfig":
        """Overlay ``data`` onto ``base`` (default: the desk preset for ``data['family']``)."""
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object")
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"config: unknown fields {sorted(unknown)}")
        if base is None:
            base = preset("desk", data.get("family", ProblemKind.LEAST_SQUARES))
        kw = {f.name: getattr(base, f.name) for f in dataclasses.fields(cls)}
        for key, value in data.items():
            if key == "stop":
                kw["stop"] = _sub(StopCriteria, base.stop, value, "stop")
            elif key == "meta":
                kw["meta"] = _sub(MetaConfig, base.meta, value, "meta")
            elif key == "family" and value != base.family.value and "dims" not in data:
                kw["family"] = value
                kw["dims"] = dict(_DESK_DIMS.get(_family(value), {}))
            else:
                kw[key] = value
        return cls(**kw)

    def config_hash(self) -> str:
        """sha256 over the canonical JSON form (sorted keys, no whitespace).

        ``workers`` is excluded: it cannot change any result.
        """
        d = self.to_dict()
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _family(value) -> ProblemKind:
    try:
        return ProblemKind(value)
    except ValueError:
        raise ConfigError(f"family: unknown problem family {value!r}") from None


def _sub(cls, base, value, name):
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    for key in value:
        if key not in names:
            raise ConfigError(f"{name}.{key}: unknown field")
    try:
        return dataclasses.replace(base, **value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def preset(name: str, family=ProblemKind.LEAST_SQUARES) -> ExperimentConfig:
    """``desk``: minutes on a laptop. ``paper``: large instances, hours of compute."""
    family = _family(family)
    if name == "desk":
        return ExperimentConfig(family, dict(_DESK_DIMS[family]), 2000, 128)
    if name == "paper":
        return ExperimentConfig(family, dict(_PAPER_DIMS[family]), 32_000, 1024)
    raise ConfigError(f"preset: unknown preset {name!r} (choose from {', '.join(PRESETS)})")


def load_config(path=None, preset_name: Optional[str] = None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Preset (default desk), then the JSON file at ``path``, then ``overrides``."""
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"config: cannot read {path}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"config: {path} must hold a JSON object")
    data = {**data, **(overrides or {})}
    base = preset(preset_name or "desk", data.get("family", ProblemKind.LEAST_SQUARES))
    return ExperimentConfig.from_dict(data, base)


def parse_strategy(name: str) -> Tuple[str, Optional[float]]:
    """``'ls' | 'hgd' | 'l2o' | 'fixed:<alpha>'`` -> ``(kind, alpha)``."""
    if name in ("ls", "hgd", "l2o"):
        return name, None
    if isinstance(name, str) and name.startswith("fixed:"):
        try:
            alpha = float(name[len("fixed:"):])
        except ValueError:
            alpha = float("nan")
        if alpha > 0 and alpha != float("inf"):
            return "fixed", alpha
    raise ConfigError(f"strategies: unknown strategy {name!r} (use ls, hgd, l2o or fixed:<alpha>)")


def build_strategy(name: str, model=None, rng=None, hidden_init_std: float = 0.1):
    """Construct a fresh strategy object; ``l2o`` needs ``model``."""
    kind, alpha = parse_strategy(name)
    if kind == "ls":
        return LineSearch()
    if kind == "hgd":
        return Hgd()
    if kind == "fixed":
        return FixedStep(alpha)
    if model is None:
        raise ConfigError("strategies: l2o requires a checkpoint")
    from ..l2o.strategy import L2OStrategy

    return L2OStrategy(model, rng, hidden_init_std)
