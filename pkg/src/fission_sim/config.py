"""Experiment configuration: defaults, file loading, and feasibility checks.

Two formats are accepted: JSON objects with the same dotted keys, or a plain
key-value text format (one ``section.key = value`` per line, ``#`` comments).
Every key has a default, so an empty file is a valid config; unknown keys are
rejected by name so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

from .dists import parse_dist
from .errors import DomainError, ParseError, ValidationError
from .sortition import SecurityParams, theta_bounds


@dataclass
class PopulationSettings:
    nodes: int = 400
    stake_dist: str = "fixed:2500"


@dataclass
class SecuritySettings:
    h: float = 0.75
    alpha: float = 0.7
    tau: float = 5000.0
    theta: float = 0.3


@dataclass
class EpochSettings:
    delta_micro: float = 2.0
    delta_interim: float = 5.0
    delta_main: float = 3.0
    delta_leader: float = 1.0
    micro_throughput: float = 500.0


@dataclass
class ChainSettings:
    tx_per_epoch: int = 100
    invalid_fraction: float = 0.0
    offline_rate: float = 0.0


@dataclass
class PartitionSettings:
    n_shard: int = 8
    n_partition: int = 2
    n_e_max: int = 1000
    delta: float = 0.8
    n_rs: int = 3


@dataclass
class RelaySettings:
    relayers: int = 64
    nodes: int = 4096
    cap_dist: str = "uniform:2:64"
    mu: float = 1.0
    mean_msg_size: float = 1.0
    rounds: int = 64
    trials: int = 1
    join_rate: float = 0.0
    leave_rate: float = 0.0


@dataclass
class DrsSettings:
    nodes: int = 1024
    keys: int = 64
    size_dist: str = "fixed:64"
    cap_dist: str = "uniform:2:64"
    replication: int = 3
    deadline: float = 8.0


_SECTIONS = {
    "population": PopulationSettings,
    "security": SecuritySettings,
    "epochs": EpochSettings,
    "chain": ChainSettings,
    "partition": PartitionSettings,
    "relay": RelaySettings,
    "drs": DrsSettings,
}


@dataclass
class SimConfig:
    population: PopulationSettings = field(default_factory=PopulationSettings)
    security: SecuritySettings = field(default_factory=SecuritySettings)
    epochs: EpochSettings = field(default_factory=EpochSettings)
    chain: ChainSettings = field(default_factory=ChainSettings)
    partition: PartitionSettings = field(default_factory=PartitionSettings)
    relay: RelaySettings = field(default_factory=RelaySettings)
    drs: DrsSettings = field(default_factory=DrsSettings)
    seed: int = 0
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out: dict[str, object] = {"seed": self.seed}
        for name, cls in _SECTIONS.items():
            section = getattr(self, name)
            for f in dc_fields(cls):
                out[f"{name}.{f.name}"] = getattr(section, f.name)
        return out


def _set_key(cfg: SimConfig, key: str, raw: object) -> None:
    if key == "seed":
        cfg.seed = _coerce("seed", raw, int)
        return
    if "." not in key:
        raise ParseError(f"unknown field {key!r}")
    section_name, _, field_name = key.partition(".")
    cls = _SECTIONS.get(section_name)
    if cls is None:
        raise ParseError(f"unknown field {key!r}")
    section = getattr(cfg, section_name)
    matching = [f for f in dc_fields(cls) if f.name == field_name]
    if not matching:
        raise ParseError(f"unknown field {key!r}")
    setattr(section, field_name, _coerce(key, raw, matching[0].type))


def _coerce(key: str, raw: object, target: object):
    target_name = target if isinstance(target, str) else target.__name__
    try:
        if target_name == "int":
            if isinstance(raw, float) and raw != int(raw):
                raise ValueError
            return int(raw)
        if target_name == "float":
            return float(raw)
        if target_name == "str":
            return str(raw)
    except (TypeError, ValueError):
        pass
    raise ValidationError(key, f"cannot read {raw!r} as {target_name}")


def _parse_scalar(text: str) -> object:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text  # bare strings like uniform:2:64


def load_config(path: str | Path | None = None) -> SimConfig:
    """Load and validate a config; None gives pure defaults."""
    cfg = SimConfig()
    if path is not None:
        text = Path(path).read_text()
        stripped = text.lstrip()
        if stripped.startswith("{"):
            try:
                data = json.loads(text)
            except json.JSONDecodeError as e:
                raise ParseError(f"bad JSON config: {e}") from None
            if not isinstance(data, dict):
                raise ParseError("JSON config must be an object")
            for key, value in data.items():
                _set_key(cfg, key, value)
        else:
            for lineno, line in enumerate(text.splitlines(), start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ParseError(f"line {lineno}: expected 'key = value', got {line!r}")
                key, _, value = line.partition("=")
                _set_key(cfg, key.strip(), _parse_scalar(value.strip()))
    validate_config(cfg)
    return cfg


def validate_config(cfg: SimConfig) -> None:
    """Hard errors for unusable values, warnings for jointly infeasible ones."""
    sec = cfg.security
    try:
        # population K is only known after the stake draw; domain-check with a
        # placeholder supply that keeps p in range
        SecurityParams(sec.h, sec.alpha, sec.tau, sec.theta, int(sec.tau * 100)).check_domain()
    except DomainError as e:
        raise ValidationError("security", str(e)) from None

    # theta below the activity-independent lower bound can never be safe
    universal_lo = theta_bounds(sec.h, 1.0, sec.tau)[0]
    if sec.theta <= universal_lo:
        raise ValidationError(
            "security.theta",
            f"{sec.theta} is at or below the universal lower bound {universal_lo:.5f} "
            f"for h={sec.h}, tau={sec.tau}",
        )
    lo, hi = theta_bounds(sec.h, sec.alpha, sec.tau)
    if not lo < sec.theta < hi:
        cfg.warnings.append(
            f"security: theta={sec.theta} outside feasible window ({lo:.5f}, {hi:.5f}) "
            f"at h={sec.h}, alpha={sec.alpha}, tau={sec.tau}"
        )

    part = cfg.partition
    if part.n_shard < 1 or not 1 <= part.n_partition <= part.n_shard:
        raise ValidationError("partition.n_partition", "need 1 <= n_partition <= n_shard")
    if not 0.0 < part.delta < 1.0:
        raise ValidationError("partition.delta", "must be in (0, 1)")
    if part.n_e_max < 1 or part.n_rs < 1:
        raise ValidationError("partition.n_e_max", "n_e_max and n_rs must be positive")

    for name in ("delta_micro", "delta_interim", "delta_main", "delta_leader"):
        if getattr(cfg.epochs, name) <= 0:
            raise ValidationError(f"epochs.{name}", "must be positive")
    if cfg.epochs.micro_throughput <= 0:
        raise ValidationError("epochs.micro_throughput", "must be positive")

    if not 0.0 <= cfg.chain.invalid_fraction <= 1.0:
        raise ValidationError("chain.invalid_fraction", "must be in [0, 1]")
    if not 0.0 <= cfg.chain.offline_rate < 1.0:
        raise ValidationError("chain.offline_rate", "must be in [0, 1)")
    if cfg.chain.tx_per_epoch < 0:
        raise ValidationError("chain.tx_per_epoch", "must be >= 0")
    if cfg.population.nodes < 1:
        raise ValidationError("population.nodes", "must be >= 1")

    if cfg.relay.relayers < 1 or cfg.relay.nodes < 1:
        raise ValidationError("relay.relayers", "relayers and nodes must be >= 1")
    if cfg.relay.mu <= 0:
        raise ValidationError("relay.mu", "must be positive")
    if cfg.relay.join_rate < 0 or cfg.relay.leave_rate < 0:
        raise ValidationError("relay.join_rate", "churn rates must be >= 0")
    if cfg.drs.nodes < 1 or cfg.drs.keys < 1 or cfg.drs.replication < 1:
        raise ValidationError("drs.nodes", "nodes, keys, replication must be >= 1")
    if cfg.drs.deadline <= 0:
        raise ValidationError("drs.deadline", "must be positive")

    for key, spec in (
        ("population.stake_dist", cfg.population.stake_dist),
        ("relay.cap_dist", cfg.relay.cap_dist),
        ("drs.size_dist", cfg.drs.size_dist),
        ("drs.cap_dist", cfg.drs.cap_dist),
    ):
        try:
            parse_dist(spec)
        except ParseError as e:
            raise ValidationError(key, str(e)) from None
