"""Declarative configuration for the CLI and service.

One YAML file describes the language pair, providers, generation defaults,
budget, and strategy defaults. Secrets never live in the file: the config
names an environment variable (api_key_env) and the gateway reads the key
from there at request time.

All validation happens at load time so a bad config fails before any
network call is attempted.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from adaptmt.gateway import (
    EchoTopMatchProvider,
    FixtureProvider,
    GenerationConfig,
    HTTPProvider,
)
from adaptmt.languages import LanguageError, LanguagePair
from adaptmt.mt_bridge import FixtureMTProvider, HTTPMTProvider
from adaptmt.prompts import BudgetConfig
from adaptmt.terminology import GlossaryConfig


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


@dataclass
class ProviderConfig:
    kind: str  # http | fixture | echo_top_match
    endpoint: str | None = None
    api_key_env: str | None = None
    fixture: str | None = None
    timeout: float = 60.0


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8017
    state_dir: str | None = None


@dataclass
class AppConfig:
    lang: LanguagePair
    llm: ProviderConfig
    mt: ProviderConfig | None
    generation: GenerationConfig
    budget: BudgetConfig
    glossary: GlossaryConfig
    strategy_defaults: dict
    display_names: dict[str, str] = field(default_factory=dict)
    service: ServiceConfig = field(default_factory=ServiceConfig)
    config_hash: str = ""
    base_dir: Path = field(default_factory=Path)

    def resolve_path(self, value: str) -> str:
        path = Path(value)
        return str(path if path.is_absolute() else self.base_dir / path)


def load_config(path: str) -> AppConfig:
    try:
        raw_text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    try:
        raw = yaml.safe_load(raw_text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")

    project = _section(raw, "project")
    try:
        lang = LanguagePair(
            str(project.get("source_lang", "")),
            str(project.get("target_lang", "")),
            int(project.get("multiplier", 0) or 0),
        )
    except (LanguageError, ValueError) as exc:
        raise ConfigError(f"project: {exc}")

    providers = _section(raw, "providers")
    llm = _provider_config(_section(providers, "llm"), "providers.llm")
    mt_raw = providers.get("mt")
    mt = _provider_config(mt_raw, "providers.mt") if mt_raw else None
    if mt is not None and mt.kind == "echo_top_match":
        raise ConfigError("providers.mt: kind must be http or fixture")

    gen_raw = raw.get("generation") or {}
    stop = gen_raw.get("stop")
    if isinstance(stop, str):
        stop = [stop]
    try:
        generation = GenerationConfig(
            model=str(gen_raw.get("model", "offline")),
            top_p=float(gen_raw.get("top_p", 1.0)),
            temperature=float(gen_raw.get("temperature", 0.3)),
            stop=stop,
            max_tokens=int(gen_raw.get("max_tokens", 250)),
            decoding=str(gen_raw.get("decoding", "sampling")),
            batch_size=int(gen_raw.get("batch_size", 20)),
            max_parallel=int(gen_raw.get("max_parallel", 4)),
        )
    except ValueError as exc:
        raise ConfigError(f"generation: {exc}")

    budget_raw = raw.get("budget") or {}
    try:
        budget = BudgetConfig(
            context_limit=int(budget_raw.get("context_limit", 4097)),
            approx_chars_per_token=float(budget_raw.get("chars_per_token", 4.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"budget: {exc}")

    glossary_raw = raw.get("glossary") or {}
    try:
        glossary = GlossaryConfig(
            min_freq=int(glossary_raw.get("min_freq", 2)),
            max_ngram=int(glossary_raw.get("max_ngram", 5)),
            max_terms_per_segment=int(glossary_raw.get("max_terms", 5)),
            separator=str(glossary_raw.get("separator", "=")),
        )
    except ValueError as exc:
        raise ConfigError(f"glossary: {exc}")

    service_raw = raw.get("service") or {}
    service = ServiceConfig(
        host=str(service_raw.get("host", "127.0.0.1")),
        port=int(service_raw.get("port", 8017)),
        state_dir=service_raw.get("state_dir"),
    )

    display_names = {
        str(k): str(v) for k, v in (raw.get("display_names") or {}).items()
    }
    strategy_defaults = dict(raw.get("strategy") or {})

    digest = hashlib.sha256(
        json.dumps(raw, sort_keys=True, ensure_ascii=False).encode("utf-8")
    ).hexdigest()

    return AppConfig(
        lang=lang,
        llm=llm,
        mt=mt,
        generation=generation,
        budget=budget,
        glossary=glossary,
        strategy_defaults=strategy_defaults,
        display_names=display_names,
        service=service,
        config_hash=digest,
        base_dir=Path(path).resolve().parent,
    )


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name)
    if not isinstance(value, dict):
        raise ConfigError(f"config is missing the '{name}' section")
    return value


def _provider_config(raw: dict, where: str) -> ProviderConfig:
    kind = str(raw.get("kind", ""))
    if kind not in ("http", "fixture", "echo_top_match"):
        raise ConfigError(
            f"{where}: kind must be one of http, fixture, echo_top_match"
        )
    cfg = ProviderConfig(
        kind=kind,
        endpoint=raw.get("endpoint"),
        api_key_env=raw.get("api_key_env"),
        fixture=raw.get("fixture"),
        timeout=float(raw.get("timeout", 60.0)),
    )
    if "api_key" in raw or "token" in raw:
        raise ConfigError(
            f"{where}: secrets are not allowed in config files;"
            " set api_key_env to the name of an environment variable"
        )
    if kind == "http" and not cfg.endpoint:
        raise ConfigError(f"{where}: http provider requires an endpoint")
    if kind == "fixture" and not cfg.fixture:
        raise ConfigError(f"{where}: fixture provider requires a fixture path")
    return cfg


def build_llm_provider(config: AppConfig):
    cfg = config.llm
    if cfg.kind == "http":
        return HTTPProvider(
            cfg.endpoint, api_key_env=cfg.api_key_env, timeout=cfg.timeout
        )
    if cfg.kind == "fixture":
        return FixtureProvider.from_file(config.resolve_path(cfg.fixture))
    return EchoTopMatchProvider()


def build_mt_provider(config: AppConfig):
    if config.mt is None:
        return None
    cfg = config.mt
    if cfg.kind == "http":
        return HTTPMTProvider(cfg.endpoint, config.lang, timeout=cfg.timeout)
    if cfg.kind == "fixture":
        return FixtureMTProvider.from_file(
            config.resolve_path(cfg.fixture), config.lang
        )
    raise ConfigError("providers.mt: kind must be http or fixture")
