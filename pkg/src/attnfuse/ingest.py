"""Parsing and alignment of per-frame facial feature streams.

A session directory looks like::

    <root>/<user_id>/attention.csv     second_index,attention
    <root>/<user_id>/<module>.csv      frame_index,valid,f_0,...,f_{d-1}

with ``module`` one of ``eb, hp, ear, hd, expr``.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping

import numpy as np

from .errors import (
    DimensionMismatch,
    FpsMismatch,
    MalformedRow,
    NonMonotonicIndex,
    NoValidFrames,
    OutOfRange,
)

DEFAULT_FPS = 30


class ModuleId(str, enum.Enum):
    """Face-analysis module producing one feature stream."""

    EB = "eb"
    HP = "hp"
    EAR = "ear"
    HD = "hd"
    EXPR = "expr"

    @property
    def dim(self) -> int:
        return _DIMS[self]

    @classmethod
    def parse(cls, token) -> "ModuleId":
        if isinstance(token, cls):
            return token
        try:
            return cls(str(token).strip().lower())
        except ValueError:
            valid = ", ".join(m.value for m in cls)
            raise ValueError(f"unknown module {token!r}; valid ids: {valid}") from None

    def __str__(self):
        return self.value


_DIMS = {ModuleId.EB: 1, ModuleId.HP: 2, ModuleId.EAR: 2, ModuleId.HD: 4, ModuleId.EXPR: 16}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FeatureFrameSeries:
    module: ModuleId
    fps: int
    frame_index: np.ndarray  # (n,) int64
    values: np.ndarray  # (n, dim) float64
    valid: np.ndarray  # (n,) bool

    def __post_init__(self):
        object.__setattr__(self, "frame_index", _frozen(np.asarray(self.frame_index, dtype=np.int64)))
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=np.float64).reshape(-1, self.module.dim)))
        object.__setattr__(self, "valid", _frozen(np.asarray(self.valid, dtype=bool)))

    def __len__(self):
        return len(self.frame_index)

    def __eq__(self, other):
        if not isinstance(other, FeatureFrameSeries):
            return NotImplemented
        return (
            self.module == other.module
            and self.fps == other.fps
            and np.array_equal(self.frame_index, other.frame_index)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.valid, other.valid)
        )


@dataclass(frozen=True, eq=False)
class AttentionSeries:
    second_index: np.ndarray  # (n,) int64
    attention: np.ndarray  # (n,) float64

    def __post_init__(self):
        object.__setattr__(self, "second_index", _frozen(np.asarray(self.second_index, dtype=np.int64)))
        object.__setattr__(self, "attention", _frozen(np.asarray(self.attention, dtype=np.float64)))

    def __len__(self):
        return len(self.second_index)

    def __eq__(self, other):
        if not isinstance(other, AttentionSeries):
            return NotImplemented
        return np.array_equal(self.second_index, other.second_index) and np.array_equal(
            self.attention, other.attention
        )

    def dense(self, duration: int) -> np.ndarray:
        """Per-second attention on ``[0, duration)`` with NaN at gaps."""
        out = np.full(duration, np.nan)
        keep = self.second_index < duration
        out[self.second_index[keep]] = self.attention[keep]
        return out


@dataclass(frozen=True, eq=False)
class AlignedStream:
    """Frame-slot view of a stream: exactly ``duration * fps`` rows.

    ``valid`` is False for slots that were missing or marked invalid and
    were carry-forward filled.
    """

    values: np.ndarray  # (slots, dim)
    valid: np.ndarray  # (slots,)
    truncated: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "valid", _frozen(self.valid))

    def __eq__(self, other):
        if not isinstance(other, AlignedStream):
            return NotImplemented
        return (
            np.array_equal(self.values, other.values)
            and np.array_equal(self.valid, other.valid)
            and self.truncated == other.truncated
        )


@dataclass(frozen=True)
class SessionRecord:
    user_id: str
    fps: int
    attention: AttentionSeries
    duration_seconds: int
    streams: Mapping[ModuleId, FeatureFrameSeries]
    aligned: Mapping[ModuleId, AlignedStream] = field(repr=False)

    @property
    def modules(self) -> list[ModuleId]:
        return list(self.aligned)

    def attention_per_second(self) -> np.ndarray:
        return self.attention.dense(self.duration_seconds)


# --------------------------------------------------------------------------
# parsing


def _text_stream(source) -> IO[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, Path):
        return open(source, encoding="utf-8", newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _parse_int(cell: str, lineno: int, what: str) -> int:
    try:
        value = int(cell.strip())
    except ValueError:
        raise MalformedRow(f"line {lineno}: {what} {cell!r} is not an integer") from None
    return value


def _parse_float(cell: str, lineno: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise MalformedRow(f"line {lineno}: cell {cell!r} is not numeric") from None
    return value


def parse_frame_features(source, module, fps: int = DEFAULT_FPS) -> FeatureFrameSeries:
    """Parse one module's per-frame CSV.

    Rows with ``valid=0`` may carry empty or non-finite placeholders; they
    are stored as zeros and flagged invalid. Valid rows must be finite, and
    blink values must lie in [0, 1].
    """
    module = ModuleId.parse(module)
    if fps <= 0:
        raise ValueError("fps must be a positive integer")
    dim = module.dim
    f = _text_stream(source)
    reader = csv.reader(f)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedRow("missing header") from None
    header = [h.strip() for h in header]
    if header[:2] != ["frame_index", "valid"]:
        raise MalformedRow(f"header must start with frame_index,valid; got {header[:2]}")
    feats = header[2:]
    if len(feats) != dim:
        raise DimensionMismatch(f"{module.value} expects {dim} feature columns, header has {len(feats)}")
    if feats != [f"f_{i}" for i in range(dim)]:
        raise MalformedRow(f"feature columns must be named f_0..f_{dim - 1}")

    ncol = dim + 2
    idx: list[int] = []
    vals: list[list[float]] = []
    ok: list[bool] = []
    last = -1
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != ncol:
            raise MalformedRow(f"line {lineno}: expected {ncol} columns, got {len(row)}")
        fi = _parse_int(row[0], lineno, "frame_index")
        if fi < 0:
            raise MalformedRow(f"line {lineno}: negative frame_index {fi}")
        if fi <= last:
            raise NonMonotonicIndex(f"line {lineno}: frame_index {fi} after {last}")
        last = fi
        flag = row[1].strip()
        if flag not in ("0", "1"):
            raise MalformedRow(f"line {lineno}: valid must be 0 or 1, got {flag!r}")
        is_valid = flag == "1"
        if is_valid:
            v = [_parse_float(c, lineno) for c in row[2:]]
            if not all(math.isfinite(x) for x in v):
                raise MalformedRow(f"line {lineno}: non-finite feature value")
            if module is ModuleId.EB and not 0.0 <= v[0] <= 1.0:
                raise MalformedRow(f"line {lineno}: blink value {v[0]} outside [0, 1]")
        else:
            v = []
            for c in row[2:]:
                c = c.strip()
                x = _parse_float(c, lineno) if c else 0.0
                v.append(x if math.isfinite(x) else 0.0)
        idx.append(fi)
        vals.append(v)
        ok.append(is_valid)
    values = np.array(vals, dtype=np.float64).reshape(-1, dim)
    return FeatureFrameSeries(module, int(fps), np.array(idx, dtype=np.int64), values, np.array(ok, dtype=bool))


def parse_attention(source) -> AttentionSeries:
    f = _text_stream(source)
    reader = csv.reader(f)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MalformedRow("missing header") from None
    if header != ["second_index", "attention"]:
        raise MalformedRow(f"header must be second_index,attention; got {header}")
    secs: list[int] = []
    att: list[float] = []
    last = -1
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 2:
            raise MalformedRow(f"line {lineno}: expected 2 columns, got {len(row)}")
        s = _parse_int(row[0], lineno, "second_index")
        a = _parse_float(row[1], lineno)
        if s < 0:
            raise MalformedRow(f"line {lineno}: negative second_index {s}")
        if s <= last:
            raise NonMonotonicIndex(f"line {lineno}: second_index {s} after {last}")
        if last == -1 and s != 0:
            raise MalformedRow(f"line {lineno}: attention series must start at second 0")
        if not (math.isfinite(a) and 0.0 <= a <= 100.0):
            raise OutOfRange(f"line {lineno}: attention {row[1]!r} outside [0, 100]")
        last = s
        secs.append(s)
        att.append(a)
    return AttentionSeries(np.array(secs, dtype=np.int64), np.array(att, dtype=np.float64))


# --------------------------------------------------------------------------
# serialization (inverse of the parsers)


def serialize_frame_features(series: FeatureFrameSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["frame_index", "valid"] + [f"f_{i}" for i in range(series.module.dim)])
    for fi, v, ok in zip(series.frame_index.tolist(), series.values.tolist(), series.valid.tolist()):
        w.writerow([fi, 1 if ok else 0, *(repr(x) for x in v)])
    return buf.getvalue()


def serialize_attention(series: AttentionSeries) -> str:
    lines = ["second_index,attention"]
    lines += [f"{s},{a!r}" for s, a in zip(series.second_index.tolist(), series.attention.tolist())]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# assembly


def _align(series: FeatureFrameSeries, n_slots: int) -> AlignedStream:
    dim = series.module.dim
    inside = series.frame_index < n_slots
    truncated = int((~inside).sum())
    fi = series.frame_index[inside]
    good = series.valid[inside]
    if not good.any():
        raise NoValidFrames(f"{series.module.value}: no valid frames inside the attention-covered range")

    slot_valid = np.zeros(n_slots, dtype=bool)
    slot_valid[fi[good]] = True
    src = np.zeros((n_slots, dim))
    src[fi[good]] = series.values[inside][good]

    # carry forward the last valid slot; leading gaps take the first valid one
    pos = np.where(slot_valid, np.arange(n_slots), -1)
    np.maximum.accumulate(pos, out=pos)
    pos[pos < 0] = int(np.flatnonzero(slot_valid)[0])
    return AlignedStream(src[pos], slot_valid, truncated)


def assemble_session(
    user_id: str,
    streams: Mapping | Iterable[FeatureFrameSeries],
    attention: AttentionSeries,
    fps: int = DEFAULT_FPS,
) -> SessionRecord:
    if isinstance(streams, Mapping):
        streams = list(streams.values())
    streams = sorted(streams, key=lambda s: list(ModuleId).index(s.module))
    if len(attention) == 0:
        raise MalformedRow(f"{user_id}: empty attention series")
    for s in streams:
        if s.fps != fps:
            raise FpsMismatch(f"{user_id}/{s.module.value}: stream at {s.fps} fps, session at {fps} fps")
    seen = set()
    for s in streams:
        if s.module in seen:
            raise ValueError(f"{user_id}: duplicate stream for {s.module.value}")
        seen.add(s.module)
    duration = int(attention.second_index[-1]) + 1
    n_slots = duration * fps
    aligned = {}
    for s in streams:
        try:
            aligned[s.module] = _align(s, n_slots)
        except NoValidFrames as e:
            raise NoValidFrames(f"{user_id}/{e}") from None
    return SessionRecord(
        user_id=str(user_id),
        fps=int(fps),
        attention=attention,
        duration_seconds=duration,
        streams={s.module: s for s in streams},
        aligned=aligned,
    )


def session_integrity_report(session: SessionRecord) -> dict:
    """Per-module fill statistics and attention gaps, JSON-serializable."""
    modules = {}
    for m, a in session.aligned.items():
        total = len(a.valid)
        n_valid = int(a.valid.sum())
        modules[m.value] = {
            "total_frames": total,
            "valid_fraction": n_valid / total,
            "filled_fraction": (total - n_valid) / total,
            "filled_frames": total - n_valid,
            "truncated_frames": a.truncated,
        }
    secs = session.attention.second_index
    gaps = []
    if len(secs) > 1:
        jumps = np.flatnonzero(np.diff(secs) > 1)
        gaps = [[int(secs[j]) + 1, int(secs[j + 1] - secs[j] - 1)] for j in jumps]
    return {
        "user_id": session.user_id,
        "fps": session.fps,
        "duration_seconds": session.duration_seconds,
        "modules": modules,
        "attention_gaps": gaps,
    }


# --------------------------------------------------------------------------
# directories


def load_session_dir(path, fps: int = DEFAULT_FPS, modules=None) -> SessionRecord:
    path = Path(path)
    attention = parse_attention(path / "attention.csv")
    wanted = [ModuleId.parse(m) for m in modules] if modules else list(ModuleId)
    streams = []
    for m in wanted:
        p = path / f"{m.value}.csv"
        if p.exists():
            streams.append(parse_frame_features(p, m, fps))
        elif modules:
            raise FileNotFoundError(f"{p} not found")
    return assemble_session(path.name, streams, attention, fps)


def load_sessions(root, fps: int = DEFAULT_FPS, modules=None) -> list[SessionRecord]:
    """Load every ``<root>/<user_id>/`` session, ordered by user id."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"{root} is not a directory")
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and (p / "attention.csv").exists())
    return [load_session_dir(d, fps, modules) for d in dirs]


def write_session_dir(session: SessionRecord, root) -> Path:
    out = Path(root) / session.user_id
    out.mkdir(parents=True, exist_ok=True)
    (out / "attention.csv").write_text(serialize_attention(session.attention), encoding="utf-8")
    for m, s in session.streams.items():
        (out / f"{m.value}.csv").write_text(serialize_frame_features(s), encoding="utf-8")
    return out
