"""Declarative pipeline configuration.

One YAML document configures every stage; CLI flags override file values,
which override defaults. Validation happens here so stage code can assume a
well-formed PipelineConfig.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .codesim import MASKING_PRESETS, METRICS
from .curation import BENCHMARK_MODES, CurationParams, DEFAULT_PER_REF
from .embedding import DEFAULT_FALLBACK_DIM, FallbackEmbedder, RemoteEmbedder
from .errors import DataError, UsageError
from .transform import TrainConfig

PROVIDER_KINDS = ("fallback", "remote")

DEFAULTS: dict = {
    "corpus": None,
    "outdir": "out",
    "seed": 0,
    "metric": "sketch",
    "preset": "generic",
    "provider": {
        "kind": "fallback",
        "model": "text-embedding-ada-002",
        "dim": DEFAULT_FALLBACK_DIM,
        "batch_size": 64,
        "cache": None,
    },
    "curation": {"top_k": 4, "skip": 4, "dedupe": False},
    "benchmark": {"mode": "boundary", "per_ref": DEFAULT_PER_REF},
    "train": {
        "hidden_dim": 512,
        "output_dim": 512,
        "dropout_rate": 0.3,
        "epochs": 30,
        "batch_size": 64,
        "learning_rate": 1e-3,
        "beta1": 0.9,
        "beta2": 0.999,
        "epsilon": 1e-8,
        "seed": None,  # falls back to the global seed
        "early_stop_patience": 5,
        "validation_fraction": 0.1,
        "probe_pairs_per_anchor": 64,
        "loss": "squared",
    },
    "retrieval": {"k": 8, "template": None},
}


@dataclass
class ProviderConfig:
    kind: str = "fallback"
    model: str = "text-embedding-ada-002"
    dim: int = DEFAULT_FALLBACK_DIM
    batch_size: int = 64
    cache: str | None = None

    def make_provider(self):
        if self.kind == "fallback":
            return FallbackEmbedder(self.dim)
        if self.kind == "remote":
            return RemoteEmbedder.from_env(self.model, batch_size=self.batch_size)
        raise UsageError(f"unknown provider kind {self.kind!r}; expected one of {PROVIDER_KINDS}")


@dataclass
class PipelineConfig:
    corpus: str | None
    outdir: str
    seed: int
    metric: str
    preset: str
    provider: ProviderConfig
    curation: CurationParams
    dedupe: bool
    benchmark_mode: str
    per_ref: int
    train: TrainConfig
    retrieval_k: int
    template: str | None
    raw: dict = field(default_factory=dict, repr=False)


def deep_merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; override wins, nested maps merge key-wise."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise UsageError(f"config file not found: {path}")
    try:
        payload = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise UsageError(f"{path}: invalid YAML: {exc}") from exc
    if payload is None:
        return {}
    if not isinstance(payload, dict):
        raise UsageError(f"{path}: config must be a mapping, found {type(payload).__name__}")
    unknown = set(payload) - set(DEFAULTS)
    if unknown:
        raise UsageError(f"{path}: unknown config keys {sorted(unknown)}")
    for key in ("provider", "curation", "benchmark", "train", "retrieval"):
        section = payload.get(key)
        if section is None:
            continue
        if not isinstance(section, dict):
            raise UsageError(f"{path}: section {key!r} must be a mapping")
        bad = set(section) - set(DEFAULTS[key])
        if bad:
            raise UsageError(f"{path}: unknown keys in section {key!r}: {sorted(bad)}")
    return payload


def resolve_config(config_path: str | None = None, overrides: dict | None = None) -> PipelineConfig:
    """defaults <- config file <- flag overrides, then typed validation."""
    merged = DEFAULTS
    if config_path:
        merged = deep_merge(merged, load_config_file(config_path))
    if overrides:
        merged = deep_merge(merged, overrides)

    metric = merged["metric"]
    if metric not in METRICS:
        raise UsageError(f"unknown metric {metric!r}; expected one of {METRICS}")
    preset = merged["preset"]
    if preset not in MASKING_PRESETS:
        raise UsageError(f"unknown masking preset {preset!r}; available: {sorted(MASKING_PRESETS)}")
    mode = merged["benchmark"]["mode"]
    if mode not in BENCHMARK_MODES:
        raise UsageError(f"unknown benchmark mode {mode!r}; expected one of {BENCHMARK_MODES}")
    provider_section = merged["provider"]
    if provider_section["kind"] not in PROVIDER_KINDS:
        raise UsageError(
            f"unknown provider kind {provider_section['kind']!r}; expected one of {PROVIDER_KINDS}"
        )

    train_section = dict(merged["train"])
    if train_section.get("seed") is None:
        train_section["seed"] = merged["seed"]
    try:
        curation = CurationParams(
            top_k=int(merged["curation"]["top_k"]), skip=int(merged["curation"]["skip"])
        )
        train_cfg = TrainConfig(**train_section)
        provider = ProviderConfig(
            kind=provider_section["kind"],
            model=str(provider_section["model"]),
            dim=int(provider_section["dim"]),
            batch_size=int(provider_section["batch_size"]),
            cache=provider_section["cache"],
        )
    except (DataError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc

    per_ref = int(merged["benchmark"]["per_ref"])
    if per_ref < 1:
        raise UsageError(f"benchmark per_ref must be >= 1, got {per_ref}")
    retrieval_k = int(merged["retrieval"]["k"])
    if retrieval_k < 1:
        raise UsageError(f"retrieval k must be >= 1, got {retrieval_k}")

    return PipelineConfig(
        corpus=merged["corpus"],
        outdir=str(merged["outdir"]),
        seed=int(merged["seed"]),
        metric=metric,
        preset=preset,
        provider=provider,
        curation=curation,
        dedupe=bool(merged["curation"]["dedupe"]),
        benchmark_mode=mode,
        per_ref=per_ref,
        train=train_cfg,
        retrieval_k=retrieval_k,
        template=merged["retrieval"]["template"],
        raw=merged,
    )
