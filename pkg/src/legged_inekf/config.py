"""Run configuration: JSON loading, schema validation and CLI overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources

import jsonschema
import numpy as np

from .simulator import FilterSettings, NoiseLevels, Rates, ScenarioConfig, SlipWindow, VARIANTS
from .state import RobotState


class ConfigError(ValueError):
    """Malformed or schema-violating configuration."""


def load_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("config_schema.json").read_text())


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    filter: FilterSettings = field(default_factory=FilterSettings)
    variants: tuple = ("camera_on",)
    estimate_stride: int = 10
    initial_state: RobotState | None = None

    def to_dict(self) -> dict:
        sc = self.scenario
        scen = {f.name: _plain(getattr(sc, f.name)) for f in fields(sc)
                if f.name not in ("slip_windows", "noise", "rates", "seed")}
        fs = {k: v for k, v in asdict(self.filter).items() if k in _FILTER_KEYS}
        out = {
            "seed": sc.seed,
            "scenario": scen,
            "slip_windows": [
                {"t_start": w.t_start, "t_end": w.t_end, "velocity": list(map(float, w.velocity))}
                for w in sc.slip_windows
            ],
            "noise": asdict(sc.noise),
            "rates": asdict(sc.rates),
            "filter": fs,
            "variants": list(self.variants),
            "output": {"estimate_stride": self.estimate_stride},
        }
        if self.initial_state is not None:
            s = self.initial_state
            out["initial_state"] = {k: getattr(s, k).tolist() for k in ("R", "v", "p", "b_omega", "b_a", "R_c", "p_c")}
        return out


_FILTER_KEYS = (
    "gate_threshold",
    "tuner_window",
    "tune_camera_noise",
    "camera_noise_world_frame",
    "extrinsic_rot_error_deg",
    "extrinsic_pos_error_m",
    "gyro_bias_std",
    "dt_max",
)


def _plain(v):
    if isinstance(v, tuple):
        return [float(x) for x in v]
    return v


def _line_of(text: str, path) -> int | None:
    """Best-effort line number of the innermost key in ``path``."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    needle = json.dumps(keys[-1]) + ":"
    pos = text.replace('" :', '":').find(needle)
    return text.count("\n", 0, pos) + 1 if pos >= 0 else None


def parse_config(text: str) -> RunConfig:
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        path = list(exc.absolute_path)
        if exc.validator == "additionalProperties" and isinstance(exc.instance, dict):
            extra = sorted(set(exc.instance) - set(exc.schema.get("properties", {})))
            path += extra[:1]
        line = _line_of(text, path)
        prefix = f"line {line}: " if line else ""
        raise ConfigError(f"{prefix}{where}: {exc.message}") from None
    return from_dict(raw)


def from_dict(raw: dict) -> RunConfig:
    try:
        scen = dict(raw.get("scenario", {}))
        for k in ("bias_omega", "bias_a", "camera_rotvec", "camera_position"):
            if k in scen:
                scen[k] = tuple(scen[k])
        windows = tuple(
            SlipWindow(w["t_start"], w["t_end"], tuple(w.get("velocity", (0.3, 0.0, 0.0))))
            for w in raw.get("slip_windows", [])
        )
        sc = ScenarioConfig(
            **scen,
            slip_windows=windows,
            noise=NoiseLevels(**raw.get("noise", {})),
            rates=Rates(**raw.get("rates", {})),
            seed=raw.get("seed", 0),
        )
        settings = FilterSettings(**raw.get("filter", {}))
        x0 = None
        if "initial_state" in raw:
            x0 = RobotState(**{k: np.asarray(v, dtype=float) for k, v in raw["initial_state"].items()})
        variants = tuple(raw.get("variants", ["camera_on"]))
        stride = raw.get("output", {}).get("estimate_stride", 10)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(sc, settings, variants, stride, x0)


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def parse_rates(text: str) -> Rates:
    """``imu,contact,camera`` in Hz."""
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError("--rates expects imu,contact,camera")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"--rates: not numbers: {text!r}") from None
    if not all(np.isfinite(v) and v > 0 for v in vals):
        raise ConfigError("--rates must be positive")
    return Rates(*vals)


def apply_overrides(cfg: RunConfig, seed=None, rates=None, gate_rho=None, tuner_window=None) -> RunConfig:
    sc, fs = cfg.scenario, cfg.filter
    if seed is not None:
        sc = replace(sc, seed=int(seed))
    if rates is not None:
        sc = replace(sc, rates=parse_rates(rates) if isinstance(rates, str) else rates)
    if gate_rho is not None:
        if not gate_rho > 0:
            raise ConfigError("--gate-rho must be positive")
        fs = replace(fs, gate_threshold=float(gate_rho))
    if tuner_window is not None:
        if tuner_window < 2:
            raise ConfigError("--tuner-window must be >= 2")
        fs = replace(fs, tuner_window=int(tuner_window))
    return replace(cfg, scenario=sc, filter=fs)


__all__ = [
    "ConfigError",
    "RunConfig",
    "VARIANTS",
    "apply_overrides",
    "from_dict",
    "load_config",
    "load_schema",
    "parse_config",
    "parse_rates",
]
