"""YAML configuration: providers, verifier, run parameters, service limits.

One file drives the CLI, the benchmark harness and the local service, so an
editor front-end and batch runs share provider settings. API keys are never
stored here; providers name the environment variable that holds theirs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .gateway import ProviderConfig
from .repair import RunConfig
from .verifier import VerifierConfig

CONFIG_VERSION = 1


class ConfigError(Exception):
    pass


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8157
    max_concurrent_jobs: int = 2
    retry_limit: int = 3


@dataclass
class AppConfig:
    workspace: Path = Path(".specforge")
    verifier: VerifierConfig = field(default_factory=VerifierConfig)
    providers: list[ProviderConfig] = field(default_factory=list)
    run: RunConfig = field(default_factory=RunConfig)
    service: ServiceConfig = field(default_factory=ServiceConfig)

    def run_config(self, **overrides) -> RunConfig:
        base = {
            "strategy": self.run.strategy,
            "max_direct_runs": self.run.max_direct_runs,
            "max_repair_iterations": self.run.max_repair_iterations,
            "multimodel": self.run.multimodel,
            "minimize_on_success": self.run.minimize_on_success,
            "diagnostics_budget_lines": self.run.diagnostics_budget_lines,
            "negative_retry_budget": self.run.negative_retry_budget,
            "config_id": self.run.config_id,
            "providers": self.providers,
            "verifier": self.verifier,
        }
        base.update(overrides)
        return RunConfig(**base)


def _provider_from_dict(d: dict) -> ProviderConfig:
    known = {
        "name", "model_id", "kind", "endpoint", "api_key_env", "auth_header",
        "auth_scheme", "temperature", "reasoning_effort", "cost_per_input_token",
        "cost_per_output_token", "priority", "timeout_s", "replay_dir",
    }
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown provider keys: {sorted(unknown)}")
    if "name" not in d:
        raise ConfigError("provider entries need a name")
    return ProviderConfig(**d)


def load_config(path: str | Path | None) -> AppConfig:
    """Parse a config file; a missing path yields defaults."""
    if path is None:
        return AppConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    data = yaml.safe_load(path.read_text()) or {}
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    version = data.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")

    cfg = AppConfig()
    if "workspace" in data:
        cfg.workspace = Path(data["workspace"])

    v = data.get("verifier", {})
    cfg.verifier = VerifierConfig(
        executable=v.get("executable", "dafny"),
        timeout_s=float(v.get("timeout_s", 60.0)),
        extra_args=tuple(v.get("extra_args", ())),
        filter_symbol=v.get("filter_symbol"),
    )

    providers = data.get("providers", [])
    priorities = [p.get("priority", 1) for p in providers]
    if len(priorities) != len(set(priorities)):
        raise ConfigError("provider priorities must be unique within a run")
    cfg.providers = [_provider_from_dict(p) for p in providers]

    r = data.get("run", {})
    cfg.run = RunConfig(
        strategy=r.get("strategy", "repair"),
        max_direct_runs=int(r.get("max_direct_runs", 5)),
        max_repair_iterations=int(r.get("max_repair_iterations", 9)),
        multimodel=bool(r.get("multimodel", False)),
        minimize_on_success=bool(r.get("minimize_on_success", False)),
        diagnostics_budget_lines=int(r.get("diagnostics_budget_lines", 100)),
        negative_retry_budget=int(r.get("negative_retry_budget", 1)),
        config_id=r.get("config_id", ""),
        providers=cfg.providers,
        verifier=cfg.verifier,
    )

    s = data.get("service", {})
    cfg.service = ServiceConfig(
        host=s.get("host", "127.0.0.1"),
        port=int(s.get("port", 8157)),
        max_concurrent_jobs=int(s.get("max_concurrent_jobs", 2)),
        retry_limit=int(s.get("retry_limit", 3)),
    )
    return cfg
