"""One-minute sliding windows, percentile labeling and dataset assembly."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import EmptyInput, InvalidParams, MissingModule, NoLabeledSamples, WindowOutOfRange
from .ingest import ModuleId, SessionRecord

HIGH, LOW, EXCLUDED = "High", "Low", "Excluded"
LABEL_SIGN = {HIGH: 1, LOW: -1}

DATASET_FORMAT = "attnfuse-dataset/1"


@dataclass(frozen=True)
class Thresholds:
    tau_L: float
    tau_H: float
    p_L: float = 10.0
    p_H: float = 90.0

    def __post_init__(self):
        if not self.p_L < self.p_H:
            raise InvalidParams(f"p_L={self.p_L} must be below p_H={self.p_H}")
        if self.tau_L > self.tau_H:
            raise InvalidParams(f"tau_L={self.tau_L} exceeds tau_H={self.tau_H}")


def _check_percentiles(p_L: float, p_H: float) -> None:
    if not 0 < p_L < p_H < 100:
        raise InvalidParams(f"need 0 < p_L < p_H < 100, got p_L={p_L}, p_H={p_H}")


def nearest_rank(sorted_values: np.ndarray, p: float) -> float:
    n = len(sorted_values)
    k = math.ceil(Fraction(str(p)) * n / 100)
    return float(sorted_values[max(k, 1) - 1])


def compute_thresholds(means, p_L: float = 10.0, p_H: float = 90.0) -> Thresholds:
    """Nearest-rank percentiles of the pooled window means."""
    _check_percentiles(p_L, p_H)
    values = np.sort(np.asarray(means, dtype=float).ravel())
    values = values[~np.isnan(values)]
    if values.size == 0:
        raise EmptyInput("no window means to threshold")
    return Thresholds(nearest_rank(values, p_L), nearest_rank(values, p_H), float(p_L), float(p_H))


def label(mean_attention: float, thresholds: Thresholds) -> str:
    if mean_attention > thresholds.tau_H:
        return HIGH
    if mean_attention < thresholds.tau_L:
        return LOW
    return EXCLUDED


def _check_end(session: SessionRecord, end_second: int, window_seconds: int) -> None:
    if end_second < window_seconds or end_second > session.duration_seconds:
        raise WindowOutOfRange(
            f"{session.user_id}: window ending at {end_second} s needs "
            f"{window_seconds} <= end <= {session.duration_seconds}"
        )


def window_mean_attention(session: SessionRecord, end_second: int, window_seconds: int = 60) -> float:
    _check_end(session, end_second, window_seconds)
    seg = session.attention_per_second()[end_second - window_seconds : end_second]
    if np.isnan(seg).any():
        raise WindowOutOfRange(f"{session.user_id}: attention gap inside window ending at {end_second} s")
    return float(seg.mean())


def all_window_means(session: SessionRecord, window_seconds: int = 60) -> np.ndarray:
    """Mean attention of every candidate window (index ``i`` ends at ``window_seconds + i``).

    Windows overlapping an attention gap come back as NaN.
    """
    att = session.attention_per_second()
    if len(att) < window_seconds:
        return np.empty(0)
    return sliding_window_view(att, window_seconds).mean(axis=1)


def _window_matrix(session: SessionRecord, module: ModuleId, window_seconds: int) -> np.ndarray:
    # row i is the flattened window ending at second window_seconds + i
    try:
        aligned = session.aligned[module]
    except KeyError:
        raise MissingModule(f"{session.user_id}: no {module.value} stream") from None
    step = session.fps * module.dim
    flat = aligned.values.reshape(-1)
    return sliding_window_view(flat, window_seconds * step)[::step]


def window_vector(session: SessionRecord, module, end_second: int, window_seconds: int = 60) -> np.ndarray:
    """Concatenated per-frame features of frames ``[(end-W)*fps, end*fps)``."""
    module = ModuleId.parse(module)
    _check_end(session, end_second, window_seconds)
    return _window_matrix(session, module, window_seconds)[end_second - window_seconds].copy()


def _window_valid_fraction(session: SessionRecord, modules: Sequence[ModuleId], window_seconds: int) -> np.ndarray:
    # minimum over modules of the fraction of genuinely valid frames
    fracs = []
    for m in modules:
        ok = session.aligned[m].valid.astype(float)
        per_window = sliding_window_view(ok, window_seconds * session.fps)[:: session.fps].mean(axis=1)
        fracs.append(per_window)
    return np.min(fracs, axis=0)


@dataclass(frozen=True)
class WindowSample:
    user_id: str
    end_second: int
    mean_attention: float
    label: str
    vectors: dict
    valid_fraction: float


@dataclass
class LabeledDataset:
    """High/Low-labeled windows, stored column-wise.

    ``X[module]`` is an ``(n_samples, window_seconds * fps * dim)`` matrix
    aligned with the per-sample arrays. ``y`` is +1 for High, -1 for Low.
    """

    user_ids: np.ndarray
    end_seconds: np.ndarray
    mean_attention: np.ndarray
    y: np.ndarray
    valid_fraction: np.ndarray
    X: dict
    thresholds: Thresholds
    window_seconds: int = 60
    fps: int = 30
    counts: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.y)

    @property
    def users(self) -> list[str]:
        return sorted(set(self.user_ids.tolist()))

    @property
    def modules(self) -> list[ModuleId]:
        return list(self.X)

    @property
    def labels(self) -> np.ndarray:
        return np.where(self.y > 0, HIGH, LOW)

    @property
    def n_high(self) -> int:
        return int((self.y > 0).sum())

    @property
    def n_low(self) -> int:
        return int((self.y < 0).sum())

    @property
    def samples(self) -> Iterator[WindowSample]:
        for i in range(len(self)):
            yield WindowSample(
                user_id=str(self.user_ids[i]),
                end_second=int(self.end_seconds[i]),
                mean_attention=float(self.mean_attention[i]),
                label=HIGH if self.y[i] > 0 else LOW,
                vectors={m: X[i] for m, X in self.X.items()},
                valid_fraction=float(self.valid_fraction[i]),
            )

    def subset(self, index) -> "LabeledDataset":
        index = np.asarray(index)
        return LabeledDataset(
            user_ids=self.user_ids[index],
            end_seconds=self.end_seconds[index],
            mean_attention=self.mean_attention[index],
            y=self.y[index],
            valid_fraction=self.valid_fraction[index],
            X={m: X[index] for m, X in self.X.items()},
            thresholds=self.thresholds,
            window_seconds=self.window_seconds,
            fps=self.fps,
        )

    # ---- on-disk format: manifest.json + samples.csv + X_<module>.npy (<f8)

    def save(self, path) -> Path:
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        manifest = {
            "format": DATASET_FORMAT,
            "thresholds": {
                "tau_L": self.thresholds.tau_L,
                "tau_H": self.thresholds.tau_H,
                "p_L": self.thresholds.p_L,
                "p_H": self.thresholds.p_H,
            },
            "window_seconds": self.window_seconds,
            "fps": self.fps,
            "n_samples": len(self),
            "n_high": self.n_high,
            "n_low": self.n_low,
            "users": self.users,
            "modules": {m.value: {"file": f"X_{m.value}.npy", "dim": m.dim, "columns": int(X.shape[1])} for m, X in self.X.items()},
            "counts": self.counts,
        }
        (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        rows = ["user_id,end_second,mean_attention,label,valid_fraction"]
        for u, e, a, yy, v in zip(
            self.user_ids.tolist(), self.end_seconds.tolist(), self.mean_attention.tolist(), self.y.tolist(), self.valid_fraction.tolist()
        ):
            rows.append(f"{u},{e},{a!r},{HIGH if yy > 0 else LOW},{v!r}")
        (path / "samples.csv").write_text("\n".join(rows) + "\n")
        for m, X in self.X.items():
            np.save(path / f"X_{m.value}.npy", np.ascontiguousarray(X, dtype="<f8"))
        return path

    @classmethod
    def load(cls, path, modules=None, mmap: bool = False) -> "LabeledDataset":
        path = Path(path)
        manifest = json.loads((path / "manifest.json").read_text())
        if manifest.get("format") != DATASET_FORMAT:
            raise ValueError(f"{path}: not a labeled dataset directory")
        with open(path / "samples.csv", newline="") as f:
            rows = list(csv.DictReader(f))
        wanted = [ModuleId.parse(m) for m in modules] if modules else [ModuleId.parse(m) for m in manifest["modules"]]
        X = {}
        for m in wanted:
            if m.value not in manifest["modules"]:
                raise MissingModule(f"dataset at {path} has no {m.value} features")
            X[m] = np.load(path / manifest["modules"][m.value]["file"], mmap_mode="r" if mmap else None)
        t = manifest["thresholds"]
        return cls(
            user_ids=np.array([r["user_id"] for r in rows], dtype=object),
            end_seconds=np.array([int(r["end_second"]) for r in rows], dtype=np.int64),
            mean_attention=np.array([float(r["mean_attention"]) for r in rows]),
            y=np.array([1 if r["label"] == HIGH else -1 for r in rows], dtype=np.int64),
            valid_fraction=np.array([float(r["valid_fraction"]) for r in rows]),
            X=X,
            thresholds=Thresholds(t["tau_L"], t["tau_H"], t["p_L"], t["p_H"]),
            window_seconds=int(manifest["window_seconds"]),
            fps=int(manifest["fps"]),
            counts=manifest.get("counts", {}),
        )


def pooled_attention(sessions: Sequence[SessionRecord], window_seconds: int = 60, source: str = "window_means") -> np.ndarray:
    """Values whose percentiles define the thresholds.

    ``source="window_means"`` pools every candidate window mean;
    ``source="raw"`` pools the raw 1 Hz samples instead.
    """
    if source == "window_means":
        parts = [all_window_means(s, window_seconds) for s in sessions]
    elif source == "raw":
        parts = [s.attention.attention for s in sessions]
    else:
        raise InvalidParams(f"unknown threshold source {source!r}")
    return np.concatenate(parts) if parts else np.empty(0)


def build_dataset(
    sessions: Sequence[SessionRecord],
    thresholds: Thresholds,
    modules=None,
    window_seconds: int = 60,
    min_valid_fraction: float = 0.8,
) -> LabeledDataset:
    """Label every one-second-displaced window and keep High/Low ones.

    Samples are ordered by user id, then end second.
    """
    if not sessions:
        raise EmptyInput("no sessions")
    fps_set = {s.fps for s in sessions}
    if len(fps_set) != 1:
        raise InvalidParams(f"sessions disagree on fps: {sorted(fps_set)}")
    fps = fps_set.pop()
    if modules is None:
        modules = [m for m in ModuleId if all(m in s.aligned for s in sessions)]
    modules = [ModuleId.parse(m) for m in modules]
    if not modules:
        raise MissingModule("no module is present in every session")

    counts = {"candidate": 0, "high": 0, "low": 0, "excluded": 0, "undefined": 0, "low_validity": 0}
    meta = {k: [] for k in ("user", "end", "mean", "y", "vf")}
    blocks = {m: [] for m in modules}
    for s in sorted(sessions, key=lambda s: s.user_id):
        for m in modules:
            if m not in s.aligned:
                raise MissingModule(f"{s.user_id}: no {m.value} stream")
        means = all_window_means(s, window_seconds)
        n = len(means)
        counts["candidate"] += n
        if n == 0:
            continue
        vf = _window_valid_fraction(s, modules, window_seconds)
        defined = ~np.isnan(means)
        high = defined & (means > thresholds.tau_H)
        low = defined & (means < thresholds.tau_L)
        counts["undefined"] += int((~defined).sum())
        counts["excluded"] += int((defined & ~high & ~low).sum())
        keep_label = high | low
        trusted = vf >= min_valid_fraction
        counts["low_validity"] += int((keep_label & ~trusted).sum())
        keep = np.flatnonzero(keep_label & trusted)
        counts["high"] += int(high[keep].sum())
        counts["low"] += int(low[keep].sum())
        meta["user"].extend([s.user_id] * len(keep))
        meta["end"].append(keep + window_seconds)
        meta["mean"].append(means[keep])
        meta["y"].append(np.where(high[keep], 1, -1))
        meta["vf"].append(vf[keep])
        for m in modules:
            blocks[m].append(_window_matrix(s, m, window_seconds)[keep])

    if counts["high"] + counts["low"] == 0:
        raise NoLabeledSamples(
            f"no window passed labeling (tau_L={thresholds.tau_L}, tau_H={thresholds.tau_H}, "
            f"min_valid_fraction={min_valid_fraction})"
        )
    return LabeledDataset(
        user_ids=np.array(meta["user"], dtype=object),
        end_seconds=np.concatenate(meta["end"]).astype(np.int64),
        mean_attention=np.concatenate(meta["mean"]),
        y=np.concatenate(meta["y"]).astype(np.int64),
        valid_fraction=np.concatenate(meta["vf"]),
        X={m: np.concatenate(blocks[m]) for m in modules},
        thresholds=thresholds,
        window_seconds=window_seconds,
        fps=fps,
        counts=counts,
    )


class WindowLabeler(BaseEstimator, TransformerMixin):
    """Learn global attention thresholds from a session pool, then window it.

    ``fit`` pools the window means (or raw samples) of all sessions and
    takes nearest-rank percentiles; ``transform`` turns sessions into a
    :class:`LabeledDataset` using those thresholds.
    """

    def __init__(
        self,
        p_low=10.0,
        p_high=90.0,
        window_seconds=60,
        modules=None,
        min_valid_fraction=0.8,
        threshold_source="window_means",
    ):
        self.p_low = p_low
        self.p_high = p_high
        self.window_seconds = window_seconds
        self.modules = modules
        self.min_valid_fraction = min_valid_fraction
        self.threshold_source = threshold_source

    def fit(self, sessions, y=None):
        _check_percentiles(self.p_low, self.p_high)
        if self.window_seconds <= 0:
            raise InvalidParams("window_seconds must be positive")
        pooled = pooled_attention(sessions, self.window_seconds, self.threshold_source)
        self.thresholds_ = compute_thresholds(pooled, self.p_low, self.p_high)
        return self

    def transform(self, sessions) -> LabeledDataset:
        check_is_fitted(self, "thresholds_")
        return build_dataset(sessions, self.thresholds_, self.modules, self.window_seconds, self.min_valid_fraction)
