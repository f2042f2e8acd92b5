"""Weighted-sum score fusion across face-analysis modules."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import InvalidParams, MissingScore
from .ingest import ModuleId

# head distance carries little signal; opt-in only for "all" sweeps
DEFAULT_SWEEP_MODULES = (ModuleId.EB, ModuleId.EAR, ModuleId.EXPR, ModuleId.HP)


def subset_key(modules: Iterable) -> str:
    """Canonical name of a module subset, e.g. ``"eb+expr+hp"``."""
    return "+".join(sorted(ModuleId.parse(m).value for m in modules))


def parse_subset(key: str) -> tuple[ModuleId, ...]:
    tokens = [t for t in key.strip().split("+") if t.strip()]
    if not tokens:
        raise ValueError(f"empty module subset {key!r}")
    mods = tuple(sorted({ModuleId.parse(t) for t in tokens}, key=lambda m: m.value))
    return mods


@dataclass(frozen=True)
class FusionConfig:
    modules: tuple
    weights: Mapping

    def __init__(self, modules, weights=None):
        mods = tuple(sorted({ModuleId.parse(m) for m in modules}, key=lambda m: m.value))
        if not mods:
            raise InvalidParams("fusion needs at least one module")
        if weights is None:
            raw = {m: 1.0 for m in mods}
        else:
            raw = {ModuleId.parse(k): float(v) for k, v in dict(weights).items()}
            extra = set(raw) - set(mods)
            if extra:
                raise InvalidParams(f"weights given for modules outside the subset: {sorted(m.value for m in extra)}")
            raw = {m: raw.get(m, 0.0) for m in mods}
        if any(v < 0 or not np.isfinite(v) for v in raw.values()):
            raise InvalidParams("fusion weights must be finite and non-negative")
        total = sum(raw.values())
        if total <= 0:
            raise InvalidParams("fusion weights sum to zero")
        object.__setattr__(self, "modules", mods)
        object.__setattr__(self, "weights", {m: raw[m] / total for m in mods})

    @property
    def key(self) -> str:
        return subset_key(self.modules)


def fuse(scores: Mapping, config: FusionConfig) -> float:
    """Fused score of one sample: sum of module weight times module score."""
    total = 0.0
    for m in config.modules:
        s = scores.get(m, scores.get(m.value)) if isinstance(scores, Mapping) else None
        if s is None:
            raise MissingScore(f"sample has no {m.value} score")
        total += config.weights[m] * float(s)
    return total


def fuse_matrix(scores: Mapping, config: FusionConfig) -> np.ndarray:
    """Vectorized :func:`fuse` over aligned per-module score arrays."""
    out = None
    for m in config.modules:
        if m not in scores:
            raise MissingScore(f"no {m.value} scores")
        col = np.asarray(scores[m], dtype=np.float64)
        if len(config.modules) == 1 and config.weights[m] == 1.0:
            return col.copy()
        term = config.weights[m] * col
        out = term if out is None else out + term
    return out


def enumerate_combinations(modules: Iterable) -> list[tuple[ModuleId, ...]]:
    """All non-empty subsets, by size and then lexicographically by id."""
    mods = sorted({ModuleId.parse(m) for m in modules}, key=lambda m: m.value)
    out = []
    for k in range(1, len(mods) + 1):
        out.extend(combinations(mods, k))
    return out


class WeightedSumFusion(TransformerMixin, BaseEstimator):
    """Score-level fusion as a transformer.

    Input columns follow ``modules``; ``weights`` (same order) default to
    equal weights. Weights are normalized to sum to one.
    """

    def __init__(self, modules=("eb", "hp", "expr"), weights=None):
        self.modules = modules
        self.weights = weights

    def fit(self, X=None, y=None):
        mods = [ModuleId.parse(m) for m in self.modules]
        w = None if self.weights is None else dict(zip(mods, self.weights))
        self.config_ = FusionConfig(mods, w)
        self.order_ = mods
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(self.order_):
            raise MissingScore(f"expected {len(self.order_)} score columns, got shape {X.shape}")
        return fuse_matrix({m: X[:, i] for i, m in enumerate(self.order_)}, self.config_)
