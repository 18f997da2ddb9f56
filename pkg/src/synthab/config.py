"""Run configuration: one YAML or JSON file describing shops, agents and seeds."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from .agent.records import Limits
from .errors import ConfigError


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


@dataclass(frozen=True, slots=True)
class ShopConfig:
    shop_id: str
    clickstream_path: Path
    storefront_path: Path
    human_delta: float
    cluster_human_deltas: dict[int, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "shop_id": self.shop_id,
            "clickstream_path": str(self.clickstream_path),
            "storefront_path": str(self.storefront_path),
            "human_delta": self.human_delta,
            "cluster_human_deltas": {str(k): v for k, v in sorted(self.cluster_human_deltas.items())},
        }


@dataclass(frozen=True, slots=True)
class RunConfig:
    shops: tuple[ShopConfig, ...]
    output_dir: Path
    agents_per_shop: int = 600
    k: int | str = "auto"
    k_range: tuple[int, int] = (2, 8)
    restarts: int = 5
    backend: dict = field(default_factory=lambda: {"kind": "scripted"})
    limits: Limits = field(default_factory=Limits)
    run_seed: int = 0
    repeat: int = 1
    workers: int = 1
    memory_enabled: bool = True
    mc_samples: int = 100_000
    bootstrap_sizes: tuple[int, ...] = tuple(range(50, 701, 50))
    bootstrap_iterations: int = 1000
    lexicons_path: Path | None = None

    def __post_init__(self):
        if not self.shops:
            raise ConfigError("config lists no shops")
        ids = [s.shop_id for s in self.shops]
        if len(set(ids)) != len(ids):
            raise ConfigError("shop_id values must be unique")
        if self.agents_per_shop < 2:
            raise ConfigError("agents_per_shop must be >= 2")
        if self.k != "auto" and (not isinstance(self.k, int) or self.k < 1):
            raise ConfigError(f"k must be a positive integer or 'auto', got {self.k!r}")
        if self.repeat < 1 or self.workers < 1:
            raise ConfigError("repeat and workers must be >= 1")

    def semantic_json(self) -> dict:
        """Everything that affects per-run results.

        Output location, worker count and the number of repeats do not; the
        pipeline tracks ``repeat`` as an input of the simulate stage instead.
        Input files enter by content, so a relocated fixture hashes the same.
        """
        shops = []
        for s in self.shops:
            row = s.to_json()
            row["clickstream_path"] = sha256_file(s.clickstream_path)
            row["storefront_path"] = sha256_file(s.storefront_path)
            shops.append(row)
        return {
            "shops": shops,
            "agents_per_shop": self.agents_per_shop,
            "k": self.k,
            "k_range": list(self.k_range),
            "restarts": self.restarts,
            "backend": self.backend,
            "limits": self.limits.to_json(),
            "run_seed": self.run_seed,
            "memory_enabled": self.memory_enabled,
            "mc_samples": self.mc_samples,
            "bootstrap_sizes": list(self.bootstrap_sizes),
            "bootstrap_iterations": self.bootstrap_iterations,
            "lexicons_path": None if self.lexicons_path is None else sha256_file(self.lexicons_path),
        }

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.semantic_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def with_overrides(self, seed: int | None = None, workers: int | None = None, repeat: int | None = None) -> "RunConfig":
        changes = {}
        if seed is not None:
            changes["run_seed"] = seed
        if workers is not None:
            changes["workers"] = workers
        if repeat is not None:
            changes["repeat"] = repeat
        return replace(self, **changes) if changes else self


def _path(base: Path, value, what: str, must_exist: bool = True) -> Path:
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{what} must be a path string")
    p = Path(value)
    if not p.is_absolute():
        p = (base / p).resolve()
    if must_exist and not p.exists():
        raise ConfigError(f"{what} does not exist: {p}")
    return p


def config_from_dict(raw: dict, base_dir: Path) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    try:
        shops = []
        for i, s in enumerate(raw["shops"]):
            shops.append(
                ShopConfig(
                    shop_id=str(s["shop_id"]),
                    clickstream_path=_path(base_dir, s["clickstream_path"], f"shops[{i}].clickstream_path"),
                    storefront_path=_path(base_dir, s["storefront_path"], f"shops[{i}].storefront_path"),
                    human_delta=float(s["human_delta"]),
                    cluster_human_deltas={int(k): float(v) for k, v in (s.get("cluster_human_deltas") or {}).items()},
                )
            )
        limits = Limits(**raw.get("limits", {}))
        boot = raw.get("bootstrap", {})
        sizes = boot.get("sizes", list(range(50, 701, 50)))
        lex = raw.get("lexicons_path")
        seeds = raw.get("seeds", {})
        return RunConfig(
            shops=tuple(shops),
            output_dir=_path(base_dir, raw.get("output_dir", "out"), "output_dir", must_exist=False),
            agents_per_shop=int(raw.get("agents_per_shop", 600)),
            k=raw.get("k", "auto"),
            k_range=tuple(raw.get("k_range", (2, 8))),
            restarts=int(raw.get("restarts", 5)),
            backend=dict(raw.get("backend", {"kind": "scripted"})),
            limits=limits,
            run_seed=int(seeds.get("run_seed", raw.get("run_seed", 0))),
            repeat=int(raw.get("repeat", 1)),
            workers=int(raw.get("workers", 1)),
            memory_enabled=bool(raw.get("memory_enabled", True)),
            mc_samples=int(raw.get("mc_samples", 100_000)),
            bootstrap_sizes=tuple(int(x) for x in sizes),
            bootstrap_iterations=int(boot.get("iterations", 1000)),
            lexicons_path=None if lex is None else _path(base_dir, lex, "lexicons_path"),
        )
    except KeyError as exc:
        raise ConfigError(f"config missing required key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from None


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return config_from_dict(raw, path.parent.resolve())
