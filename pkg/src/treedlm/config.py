"""Run configuration shared by the command-line subcommands."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .priors import TreePriorConfig
from .sampler import MODES, SamplerConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # sampler
    mode: str = "tdlmm_full"
    A: int = 20
    iterations: int = 15000
    burn_in: int = 5000
    thin: int = 5
    kappa: float = 1.089
    alpha: float = 0.95
    beta: float = 2.0
    seed: int = 0
    chains: int = 1
    threads: int = 1
    # data and summaries
    family: str = "gaussian"
    level: float = 0.95
    data: str | None = None
    outcome: str = "y"
    exposures: list[str] | None = None
    covariates: list[str] | None = None
    out: str = "treedlm-out"
    # simulation and benchmarking
    scenario: int = 1
    n: int = 2000
    T: int = 20
    M: int | None = None
    pbar: float = 0.5
    sigma2: float = 25.0
    replicates: int = 2
    models: list[str] | None = None
    exposure_source: str = "synthetic_ar"
    exposure_file: str | None = None
    workers: int = 1

    def sampler_config(self, mode: str | None = None) -> SamplerConfig:
        try:
            return SamplerConfig(
                A=self.A, mode=mode or self.mode, iterations=self.iterations, burn_in=self.burn_in,
                thin=self.thin, tree_prior=TreePriorConfig(self.alpha, self.beta), kappa=self.kappa,
            )
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def validate(self) -> RunConfig:
        self.sampler_config()
        if self.M is None:
            self.M = 1 if self.scenario == 1 else 5
        if self.models is None:
            self.models = ["tdlm"] if self.scenario == 1 else ["tdlmm_additive", "tdlmm_noself", "tdlmm_full"]
        for m in self.models:
            if m not in MODES:
                raise ConfigError(f"unknown model {m!r}; choose from {', '.join(MODES)}")
        checks = [
            (self.family in ("gaussian", "bernoulli"), f"unknown family {self.family!r}"),
            (0.0 < self.level < 1.0, "level must lie in (0, 1)"),
            (self.chains >= 1 and self.threads >= 1 and self.workers >= 1, "chains, threads and workers must be >= 1"),
            (self.scenario in (1, 2), "scenario must be 1 or 2"),
            (self.n >= 1 and self.T >= 2 and self.M >= 1, "need n >= 1, T >= 2, M >= 1"),
            (0.0 < self.pbar < 1.0, "pbar must lie in (0, 1)"),
            (self.sigma2 > 0.0, "sigma2 must be positive"),
            (self.replicates >= 1, "replicates must be >= 1"),
            (self.exposure_source in ("synthetic_ar", "resample_file"), "unknown exposure source"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ConfigError(msg)
        return self

    def to_dict(self) -> dict:
        return asdict(self)


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
LIST_FIELDS = {"exposures", "covariates", "models"}


def coerce(key: str, value):
    """Convert a raw (string or JSON) value to the type of ``RunConfig.<key>``."""
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    if value is None:
        return None
    typ = FIELD_TYPES[key]
    try:
        if key in LIST_FIELDS:
            if isinstance(value, str):
                return [v.strip() for v in value.split(",") if v.strip()]
            return [str(v) for v in value]
        if typ.startswith("int"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if typ.startswith("float"):
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {typ}") from None


def read_config_file(path: str | Path) -> dict:
    """JSON object, a run manifest (its ``config`` entry is used), or ``key = value`` lines."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    if text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if "config" in raw and isinstance(raw["config"], dict):
            raw = raw["config"]
    else:
        raw = {}
        for i, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {i}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            raw[k.replace("-", "_")] = v
    return {k: coerce(k, v) for k, v in raw.items()}


def build_config(file_values: dict, flag_values: dict) -> RunConfig:
    """Defaults, then the config file, then explicitly given flags."""
    merged = {**file_values, **{k: v for k, v in flag_values.items() if v is not None}}
    return RunConfig(**{k: coerce(k, v) for k, v in merged.items()}).validate()
