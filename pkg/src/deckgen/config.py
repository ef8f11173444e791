"""Run configuration: one JSON file, validated up front, unknown keys rejected."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .cgseg import CgsegConfig
from .kb import HttpEmbeddingProvider, MockEmbeddingProvider
from .llm import BackendConfig
from .scm import ScmWeights


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class SlideGeometry:
    """Slide extent in inches plus the design image extent in pixels."""

    slide_width: float = 13.333
    slide_height: float = 7.5
    image_width: int = 0
    image_height: int = 0

    def __post_init__(self):
        if self.slide_width <= 0 or self.slide_height <= 0:
            raise ValueError("slide dimensions must be positive")
        if self.image_width < 0 or self.image_height < 0:
            raise ValueError("image dimensions must be non-negative")

    def with_image(self, width: int, height: int) -> "SlideGeometry":
        return SlideGeometry(self.slide_width, self.slide_height, width, height)


@dataclass(frozen=True)
class EmbeddingConfig:
    provider: str = "mock"
    dimension: int = 64
    seed: int = 0
    endpoint: str = ""
    model: str = ""
    api_key_env: str = ""

    def __post_init__(self):
        if self.provider not in ("mock", "http"):
            raise ValueError(f"unknown embedding provider {self.provider!r}")
        if self.provider == "http" and not self.endpoint:
            raise ValueError("http embedding provider requires an endpoint")

    def build(self):
        if self.provider == "http":
            return HttpEmbeddingProvider(
                endpoint=self.endpoint,
                dimension=self.dimension,
                model=self.model,
                api_key_env=self.api_key_env,
            )
        return MockEmbeddingProvider(dimension=self.dimension, seed=self.seed)


def _starter_kb(name: str) -> str:
    return str(Path(__file__).parent / "data" / name)


@dataclass(frozen=True)
class RunConfig:
    backend: BackendConfig = BackendConfig(kind="mock", script_path="")
    embedding: EmbeddingConfig = EmbeddingConfig()
    cgseg: CgsegConfig = CgsegConfig()
    weights: ScmWeights = ScmWeights()
    geometry: SlideGeometry = SlideGeometry()
    shape_type_kb: str = field(default_factory=lambda: _starter_kb("shape_type_kb.jsonl"))
    operation_function_kb: str = field(
        default_factory=lambda: _starter_kb("operation_function_kb.jsonl")
    )
    top_k: int = 5
    max_refine: int = 3
    parallelism: int = 1
    seed: int = 0
    design: str = ""
    pictures_dir: str = ""
    output_dir: str = ""

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.max_refine < 1:
            raise ValueError("max_refine must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")


_SECTION_KEYS = {
    "backend": {
        "kind", "endpoint", "model", "api_key_env", "timeout", "retries",
        "retry_backoff", "script_path",
    },
    "embedding": {"provider", "dimension", "seed", "endpoint", "model", "api_key_env"},
    "cgseg": {"grid", "threshold", "max_depth"},
    "weights": {"alpha", "beta", "gamma", "epsilon"},
    "geometry": {"slide_width", "slide_height"},
    "paths": {"design", "pictures_dir", "output_dir", "shape_type_kb", "operation_function_kb"},
}
_TOP_KEYS = set(_SECTION_KEYS) | {"top_k", "max_refine", "parallelism", "seed"}


def _check_keys(section: str, raw: dict, allowed: set[str]) -> None:
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown {section} keys: {sorted(unknown)}")


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a JSON run config; every error names the bad key."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{p}: config root must be an object")
    _check_keys("top-level", raw, _TOP_KEYS)
    for section in _SECTION_KEYS:
        if section in raw:
            if not isinstance(raw[section], dict):
                raise ConfigError(f"{p}: section {section!r} must be an object")
            _check_keys(section, raw[section], _SECTION_KEYS[section])
    paths = raw.get("paths", {})
    base = p.parent

    def _resolve(value: str) -> str:
        return str((base / value).resolve()) if value and not Path(value).is_absolute() else value

    try:
        kwargs = dict(
            backend=BackendConfig(**{
                **raw.get("backend", {}),
                **(
                    {"script_path": _resolve(raw["backend"]["script_path"])}
                    if raw.get("backend", {}).get("script_path")
                    else {}
                ),
            }),
            embedding=EmbeddingConfig(**raw.get("embedding", {})),
            cgseg=CgsegConfig(**raw.get("cgseg", {})),
            weights=ScmWeights(**raw.get("weights", {})),
            geometry=SlideGeometry(**raw.get("geometry", {})),
            top_k=raw.get("top_k", 5),
            max_refine=raw.get("max_refine", 3),
            parallelism=raw.get("parallelism", 1),
            seed=raw.get("seed", 0),
            design=_resolve(paths.get("design", "")),
            pictures_dir=_resolve(paths.get("pictures_dir", "")),
            output_dir=_resolve(paths.get("output_dir", "")),
        )
        if paths.get("shape_type_kb"):
            kwargs["shape_type_kb"] = _resolve(paths["shape_type_kb"])
        if paths.get("operation_function_kb"):
            kwargs["operation_function_kb"] = _resolve(paths["operation_function_kb"])
        return RunConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{p}: {exc}") from exc
