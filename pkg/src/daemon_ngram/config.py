"""Flat ``key=value`` run configuration shared by the CLI and model bundles."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

from .entropy import PAPER_FACTORS, PAPER_LENGTHS, Stage1Config
from .forest import ForestConfig
from .miner import Stage2Config
from .selector import Stage3Config


def _opt_int(v: str) -> int | None:
    return None if v.strip().lower() in ("", "none") else int(v)


def _bool(v: str) -> bool:
    return v.strip().lower() in ("1", "true", "yes", "on")


@dataclass(frozen=True)
class RunConfig:
    lengths: tuple[int, ...] = PAPER_LENGTHS
    alpha: float = 0.1
    beta: int = 256
    factors: dict = field(default_factory=lambda: dict(PAPER_FACTORS))
    gamma: float = 0.1
    memory_cap_bytes: int | None = None
    budget: int = 50_000
    n_trees: int = 3000
    feature_cap: int = 5000
    max_depth: int | None = None
    min_leaf: int = 1
    features_per_split: int | None = None
    calibration: str = "sigmoid"
    calibration_folds: int = 3
    seed: int = 0
    # execution only; never changes the trained model, so it is not recorded
    threads: int = 0

    def stage1(self) -> Stage1Config:
        return Stage1Config(self.lengths, self.alpha, self.beta, self.factors, self.seed)

    def stage2(self) -> Stage2Config:
        return Stage2Config(self.gamma, self.memory_cap_bytes)

    def stage3(self) -> Stage3Config:
        return Stage3Config(self.budget)

    def forest(self) -> ForestConfig:
        return ForestConfig(self.n_trees, self.feature_cap, self.seed, self.max_depth,
                            self.min_leaf, self.features_per_split)

    def model_items(self) -> list[tuple[str, str]]:
        """Resolved, model-affecting settings in a fixed order."""
        items = [("lengths", ",".join(map(str, self.lengths))),
                 ("alpha", repr(self.alpha)), ("beta", str(self.beta))]
        items += [(f"factor.{n}", repr(self.factors[n])) for n in self.lengths]
        items += [("gamma", repr(self.gamma)), ("memory_cap_bytes", str(self.memory_cap_bytes)),
                  ("budget", str(self.budget)), ("n_trees", str(self.n_trees)),
                  ("feature_cap", str(self.feature_cap)), ("max_depth", str(self.max_depth)),
                  ("min_leaf", str(self.min_leaf)),
                  ("features_per_split", str(self.features_per_split)),
                  ("calibration", self.calibration),
                  ("calibration_folds", str(self.calibration_folds)), ("seed", str(self.seed))]
        return items

    def with_overrides(self, pairs: dict[str, str]) -> "RunConfig":
        changes: dict = {}
        factors = dict(self.factors)
        for key, raw in pairs.items():
            key = key.strip()
            raw = raw.strip()
            if key.startswith("factor."):
                factors[int(key.split(".", 1)[1])] = float(raw)
            elif key == "factors":
                for item in filter(None, raw.split(",")):
                    n, f = item.split(":")
                    factors[int(n)] = float(f)
            elif key == "lengths":
                changes["lengths"] = tuple(int(x) for x in raw.split(",") if x.strip())
            elif key in ("alpha", "gamma"):
                changes[key] = float(raw)
            elif key in ("beta", "budget", "n_trees", "feature_cap", "min_leaf",
                         "calibration_folds", "seed", "threads"):
                changes[key] = int(raw)
            elif key in ("memory_cap_bytes", "max_depth", "features_per_split"):
                changes[key] = _opt_int(raw)
            elif key == "calibration":
                if raw not in ("none", "sigmoid"):
                    raise ValueError(f"calibration must be 'none' or 'sigmoid', got {raw!r}")
                changes[key] = raw
            else:
                raise ValueError(f"unknown config key {key!r}")
        lengths = changes.get("lengths", self.lengths)
        for n in lengths:
            factors.setdefault(n, PAPER_FACTORS.get(n, 1.0))
        changes["factors"] = {n: factors[n] for n in lengths}
        return replace(self, **changes)

    @classmethod
    def from_file(cls, path: str | os.PathLike, base: "RunConfig | None" = None) -> "RunConfig":
        return (base or cls()).with_overrides(read_key_values(path))

    @classmethod
    def from_items(cls, items) -> "RunConfig":
        return cls().with_overrides(dict(items))


def read_key_values(path: str | os.PathLike) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


CONFIG_KEYS = tuple(f.name for f in fields(RunConfig))
