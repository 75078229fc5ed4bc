"""Run configuration: one YAML file with sections, overridden by CLI flags.

Example::

    plant:
      source: cr3bp          # or: file, with path: plant.json
    cr3bp:
      disturbance_scale: 0.5
      box_margin: 0.05
    synthesis:
      norm: h2
      gamma: 0.1
      p: 1
    simulation:
      noise_deg: 2.0
      seed: 0
      schedule: estimate
    out: runs/h2
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml

from .cr3bp import Cr3bpConfig, keplerian_period, keplerian_state
from .serialization import DocumentError, cr3bp_config_from_dict, plant_from_dict, read_json
from .simulation import GAUSSIAN, SCHEDULE_ESTIMATE, SCHEDULE_TRUTH, UNIFORM
from .synthesis import parse_norm, parse_p


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthesisSettings:
    norm: str = "h2"
    gamma: float = 0.1
    gammas: tuple = ()
    p: float = 1.0
    eps: float = 1e-8
    backend: str = "clarabel"
    polish: bool = True
    polish_slack: float = 0.02
    workers: int = 1


@dataclass(frozen=True)
class SimulationSettings:
    noise_deg: float | None = None  # None: the design's own allowable angle
    distribution: str = UNIFORM
    seed: int = 0
    initial_error: float = 0.1
    schedule: str = SCHEDULE_ESTIMATE
    t_final: float | None = None


@dataclass(frozen=True)
class RunConfig:
    plant_source: str = "cr3bp"
    plant_path: str | None = None
    cr3bp: Cr3bpConfig = field(default_factory=Cr3bpConfig)
    synthesis: SynthesisSettings = field(default_factory=SynthesisSettings)
    simulation: SimulationSettings = field(default_factory=SimulationSettings)
    out: str = "."

    def load_plant(self):
        """The plant described by the configuration."""
        if self.plant_source == "cr3bp":
            from .cr3bp import build_scenario
            return build_scenario(self.cr3bp).plant
        try:
            doc = read_json(self.plant_path)
        except OSError as exc:
            raise ConfigError(f"cannot read plant file: {exc}") from None
        return plant_from_dict(doc.get("plant", doc))


def _section(raw, name, cls):
    data = raw.get(name) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return data


def _cr3bp(data: dict) -> Cr3bpConfig:
    data = dict(data)
    orbit = data.pop("orbit", None)
    if orbit is not None:
        # periapsis/apoapsis radii about the Earth; sets state and horizon
        try:
            rp, ra = (float(v) for v in orbit)
        except (TypeError, ValueError):
            raise ConfigError("cr3bp.orbit must be [r_periapsis, r_apoapsis]") from None
        pi2 = float(data.get("pi2", Cr3bpConfig.pi2))
        data.setdefault("initial_state", list(keplerian_state(rp, ra, pi2)))
        data.setdefault("t_final", keplerian_period(rp, ra, pi2))
    try:
        return cr3bp_config_from_dict(data)
    except DocumentError as exc:
        raise ConfigError(f"cr3bp: {exc}") from None


def _float(v, name) -> float:
    # YAML 1.1 reads "1e-9" as a string
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {v!r}") from None


def validate(cfg: RunConfig) -> RunConfig:
    s, m = cfg.synthesis, cfg.simulation
    try:
        norm = "both" if str(s.norm).lower() == "both" else parse_norm(s.norm)
        p = parse_p(s.p)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    gamma = _float(s.gamma, "gamma")
    if not gamma > 0:
        raise ConfigError(f"gamma must be positive (got {s.gamma})")
    gammas = tuple(_float(g, "gammas") for g in s.gammas)
    if any(not g > 0 for g in gammas):
        raise ConfigError("gamma must be positive (gamma list)")
    eps = _float(s.eps, "eps")
    if not eps > 0:
        raise ConfigError("eps must be positive")
    slack = _float(s.polish_slack, "polish_slack")
    if not slack > 0:
        raise ConfigError("polish_slack must be positive")
    if int(s.workers) < 1:
        raise ConfigError("workers must be at least 1")
    noise = None if m.noise_deg is None else _float(m.noise_deg, "noise_deg")
    if noise is not None and not noise >= 0:
        raise ConfigError("noise_deg must be nonnegative")
    t_final = None if m.t_final is None else _float(m.t_final, "t_final")
    if t_final is not None and not t_final > 0:
        raise ConfigError("t_final must be positive")
    init = _float(m.initial_error, "initial_error")
    if m.distribution not in (UNIFORM, GAUSSIAN):
        raise ConfigError(f"distribution must be {UNIFORM!r} or {GAUSSIAN!r}")
    if m.schedule not in (SCHEDULE_ESTIMATE, SCHEDULE_TRUTH):
        raise ConfigError(f"schedule must be {SCHEDULE_ESTIMATE!r} or {SCHEDULE_TRUTH!r}")
    if cfg.plant_source not in ("cr3bp", "file"):
        raise ConfigError("plant.source must be 'cr3bp' or 'file'")
    if cfg.plant_source == "file" and not cfg.plant_path:
        raise ConfigError("plant.source 'file' needs plant.path")
    return replace(cfg,
                   synthesis=replace(s, norm=norm, p=p, gammas=gammas, gamma=gamma, eps=eps,
                                     polish_slack=slack, workers=int(s.workers)),
                   simulation=replace(m, noise_deg=noise, t_final=t_final, initial_error=init,
                                      seed=int(m.seed)))


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Read ``path`` (YAML) and apply ``overrides``.

    ``overrides`` maps ``"section.key"`` (or ``"out"``) to a value; ``None``
    values are ignored so unset CLI flags fall through to the file.
    """
    raw = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(raw) - {"plant", "cr3bp", "synthesis", "simulation", "out"}
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in raw.items()}
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if "." in key:
            sec, name = key.split(".", 1)
            raw.setdefault(sec, {})
            raw[sec] = dict(raw[sec] or {})
            raw[sec][name] = val
        else:
            raw[key] = val
    plant = raw.get("plant") or {}
    if not isinstance(plant, dict) or set(plant) - {"source", "path"}:
        raise ConfigError("plant section accepts only 'source' and 'path'")
    cr = raw.get("cr3bp") or {}
    if not isinstance(cr, dict):
        raise ConfigError("section 'cr3bp' must be a mapping")
    try:
        synth = SynthesisSettings(**_section(raw, "synthesis", SynthesisSettings))
        sim = SimulationSettings(**_section(raw, "simulation", SimulationSettings))
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    cfg = RunConfig(plant_source=plant.get("source", "cr3bp"), plant_path=plant.get("path"),
                    cr3bp=_cr3bp(cr), synthesis=synth, simulation=sim,
                    out=str(raw.get("out", ".")))
    return validate(cfg)
