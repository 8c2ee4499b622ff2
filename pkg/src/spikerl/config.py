"""Experiment configuration: versioned YAML schema, validation, hashing.

A config file is a mapping with `schema_version: 1`, the experiment kind,
a `network` section and one experiment-specific section. The config hash
covers every field that influences emitted numbers (so it is insensitive
to key order and formatting, and ignores output location and logging
switches); every emitted record carries it.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, field
from typing import Any

import yaml

from .neuron import Representation

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSection:
    hidden_layers: tuple[int, ...]
    beta: float
    gamma: float
    weight_init_halfwidth: float
    representation: Representation = Representation.SYMMETRIC_PM1
    bias_enabled: bool = False


@dataclass(frozen=True)
class SonarSection:
    data_path: str
    hold_steps: int
    epochs: int
    runs: int
    split_fraction: float


@dataclass(frozen=True)
class PendulumSection:
    total_steps: int
    window_steps: int


@dataclass(frozen=True)
class GradcheckSection:
    fixture: str
    betas: tuple[float, ...]
    steps: int
    seeds: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str  # sonar | pendulum | gradcheck
    seed: int
    network: NetworkSection | None
    sonar: SonarSection | None = None
    pendulum: PendulumSection | None = None
    gradcheck: GradcheckSection | None = None
    output_dir: str = "out"
    log_raw: bool = False
    mixing_time_hint: float | None = None

    def semantic_dict(self) -> dict[str, Any]:
        """Everything that determines emitted numbers (not where they go)."""
        d: dict[str, Any] = {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "seed": self.seed,
        }
        if self.network is not None:
            d["network"] = {
                "hidden_layers": list(self.network.hidden_layers),
                "beta": self.network.beta,
                "gamma": self.network.gamma,
                "weight_init_halfwidth": self.network.weight_init_halfwidth,
                "representation": self.network.representation.value,
                "bias_enabled": self.network.bias_enabled,
            }
        for name in ("sonar", "pendulum", "gradcheck"):
            section = getattr(self, name)
            if section is not None:
                sec = dict(section.__dict__)
                for k, v in sec.items():
                    if isinstance(v, tuple):
                        sec[k] = list(v)
                d[name] = sec
        return d

    def config_hash(self) -> str:
        canon = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("ascii")).hexdigest()[:16]


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"{where}: missing required key '{key}'")
    return mapping[key]


def _check_unknown(mapping: dict, allowed: set[str], where: str):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")


def _parse_network(raw: dict) -> NetworkSection:
    _check_unknown(raw, {"hidden_layers", "beta", "gamma", "weight_init_halfwidth",
                         "representation", "bias_enabled"}, "network")
    hidden = tuple(int(n) for n in _require(raw, "hidden_layers", "network"))
    if not hidden or any(n < 1 for n in hidden):
        raise ConfigError(f"network: hidden_layers must be positive integers, got {hidden}")
    rep = raw.get("representation", Representation.SYMMETRIC_PM1.value)
    try:
        representation = Representation(rep)
    except ValueError:
        raise ConfigError(
            f"network: unknown representation {rep!r} "
            f"(choose from {[r.value for r in Representation]})"
        ) from None
    beta = float(_require(raw, "beta", "network"))
    gamma = float(_require(raw, "gamma", "network"))
    if not 0.0 <= beta < 1.0:
        raise ConfigError(f"network: beta must lie in [0, 1), got {beta}")
    if gamma < 0.0:
        raise ConfigError(f"network: gamma must be nonnegative, got {gamma}")
    hw = float(_require(raw, "weight_init_halfwidth", "network"))
    if hw < 0.0:
        raise ConfigError(f"network: weight_init_halfwidth must be nonnegative, got {hw}")
    return NetworkSection(
        hidden_layers=hidden, beta=beta, gamma=gamma, weight_init_halfwidth=hw,
        representation=representation, bias_enabled=bool(raw.get("bias_enabled", False)),
    )


def parse_config(raw: Any, where: str = "config") -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: must be a mapping")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{where}: schema_version must be {SCHEMA_VERSION}, got {version!r}")
    _check_unknown(raw, {"schema_version", "experiment", "seed", "network", "sonar",
                         "pendulum", "gradcheck", "output_dir", "log_raw",
                         "mixing_time_hint"}, where)
    experiment = _require(raw, "experiment", where)
    if experiment not in ("sonar", "pendulum", "gradcheck"):
        raise ConfigError(f"{where}: experiment must be sonar, pendulum or gradcheck, "
                          f"got {experiment!r}")
    seed = int(_require(raw, "seed", where))

    network = None
    if experiment in ("sonar", "pendulum"):
        network = _parse_network(_require(raw, "network", where))

    sonar = pendulum = gradcheck = None
    if experiment == "sonar":
        sec = _require(raw, "sonar", where)
        _check_unknown(sec, {"data_path", "hold_steps", "epochs", "runs",
                             "split_fraction"}, "sonar")
        sonar = SonarSection(
            data_path=str(_require(sec, "data_path", "sonar")),
            hold_steps=int(_require(sec, "hold_steps", "sonar")),
            epochs=int(_require(sec, "epochs", "sonar")),
            runs=int(_require(sec, "runs", "sonar")),
            split_fraction=float(_require(sec, "split_fraction", "sonar")),
        )
        if sonar.hold_steps < 1 or sonar.epochs < 1 or sonar.runs < 1:
            raise ConfigError("sonar: hold_steps, epochs and runs must be positive")
        if not 0.0 < sonar.split_fraction < 1.0:
            raise ConfigError(f"sonar: split_fraction must be inside (0, 1), "
                              f"got {sonar.split_fraction}")
    elif experiment == "pendulum":
        sec = _require(raw, "pendulum", where)
        _check_unknown(sec, {"total_steps", "window_steps"}, "pendulum")
        pendulum = PendulumSection(
            total_steps=int(_require(sec, "total_steps", "pendulum")),
            window_steps=int(_require(sec, "window_steps", "pendulum")),
        )
        if pendulum.window_steps < 1 or pendulum.total_steps < pendulum.window_steps:
            raise ConfigError("pendulum: need total_steps >= window_steps >= 1")
    else:
        sec = _require(raw, "gradcheck", where)
        _check_unknown(sec, {"fixture", "betas", "steps", "seeds"}, "gradcheck")
        betas = tuple(float(b) for b in _require(sec, "betas", "gradcheck"))
        if not betas or any(not 0.0 <= b < 1.0 for b in betas):
            raise ConfigError(f"gradcheck: betas must lie in [0, 1), got {betas}")
        gradcheck = GradcheckSection(
            fixture=str(_require(sec, "fixture", "gradcheck")),
            betas=betas,
            steps=int(_require(sec, "steps", "gradcheck")),
            seeds=int(sec.get("seeds", 10)),
        )
        if gradcheck.steps < 1 or gradcheck.seeds < 1:
            raise ConfigError("gradcheck: steps and seeds must be positive")

    config = ExperimentConfig(
        experiment=experiment, seed=seed, network=network,
        sonar=sonar, pendulum=pendulum, gradcheck=gradcheck,
        output_dir=str(raw.get("output_dir", "out")),
        log_raw=bool(raw.get("log_raw", False)),
        mixing_time_hint=(float(raw["mixing_time_hint"])
                          if raw.get("mixing_time_hint") is not None else None),
    )
    warn_about_time_constants(config)
    return config


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f)
    return parse_config(raw, where=str(path))


def warn_about_time_constants(config: ExperimentConfig) -> None:
    """Both the trace time constant 1/(1-beta) and 1/gamma need to dominate
    the task's mixing time for accurate gradients; warn (never fail) when a
    user-supplied hint says they do not ("significantly larger" is taken as
    a factor of 10)."""
    hint = config.mixing_time_hint
    if hint is None or config.network is None:
        return
    beta, gamma = config.network.beta, config.network.gamma
    trace_tc = 1.0 / (1.0 - beta)
    if trace_tc < 10.0 * hint:
        warnings.warn(
            f"1/(1-beta) = {trace_tc:.1f} is not well above the mixing-time hint "
            f"{hint:g} (want >= 10x); gradient estimates may be badly biased",
            stacklevel=2,
        )
    if gamma > 0.0 and 1.0 / gamma < 10.0 * hint:
        warnings.warn(
            f"1/gamma = {1.0 / gamma:.1f} is not well above the mixing-time hint "
            f"{hint:g} (want >= 10x); parameters drift too fast for the "
            f"estimate to settle",
            stacklevel=2,
        )


def experiment_field(config: ExperimentConfig) -> SonarSection | PendulumSection | GradcheckSection:
    section = getattr(config, config.experiment)
    assert section is not None
    return section
