"""Seeded synthetic sessions with planted attention/feature couplings, and
brute-force oracles used to cross-check the metric and SVM code paths.

Couplings (``a`` is attention in [0, 100]):

* attention: mean-reverting walk (time constant ``attention_tau`` seconds,
  spread ``attention_sd``) centred on 50 per session and reflected into
  [0, 100], so every user drifts through both high and low episodes;
* blinks: Poisson events at ``rate * (1 - k_blink * a/100)`` per second,
  rendered as short runs of near-1 values;
* head pose: a one-sided "looking away" offset ``k_pose * (1 - a/100)`` on
  a slowly varying positive envelope, on top of per-user drift;
* EAR: baseline minus ``k_ear * (1 - a/100)`` droop and blink dips;
* head distance: user geometry with an optional weak ``k_hd`` term;
* expression: 16-d embedding shifted by ``k_expr * (a/100 - 0.5)`` along a
  fixed direction, plus per-user offsets and AR(1) noise.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidParams, SingleClass
from .ingest import (
    AttentionSeries,
    FeatureFrameSeries,
    ModuleId,
    SessionRecord,
    assemble_session,
    write_session_dir,
)


@dataclass(frozen=True)
class SynthParams:
    n_users: int = 6
    duration_seconds: int = 600
    fps: int = 30
    attention_sd: float = 25.0
    attention_tau: float = 15.0
    blink_rate: float = 0.35
    blink_frames: int = 4
    k_blink: float = 0.0
    k_pose: float = 0.0
    k_ear: float = 0.0
    k_hd: float = 0.0
    k_expr: float = 0.0
    blink_noise: float = 0.05
    pose_noise: float = 3.0
    pose_drift: float = 4.0
    drift_tau: float = 5.0
    ear_noise: float = 0.02
    hd_noise: float = 0.02
    expr_noise: float = 1.0
    expr_ar: float = 0.98
    user_offset: float = 0.1
    user_blink_sd: float = 0.1
    invalid_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_users < 1:
            raise InvalidParams(f"n_users must be >= 1, got {self.n_users}")
        if self.duration_seconds < 1:
            raise InvalidParams(f"duration_seconds must be >= 1, got {self.duration_seconds}")
        if self.fps < 1 or self.blink_frames < 1:
            raise InvalidParams("fps and blink_frames must be positive")
        nonneg = (
            "attention_sd attention_tau drift_tau blink_rate k_blink k_pose k_ear k_hd k_expr blink_noise pose_noise "
            "pose_drift ear_noise hd_noise expr_noise user_offset user_blink_sd invalid_rate"
        ).split()
        for name in nonneg:
            if not getattr(self, name) >= 0:
                raise InvalidParams(f"{name} must be >= 0")
        if self.k_blink > 1:
            raise InvalidParams("k_blink must lie in [0, 1] so blink rates stay non-negative")
        if not 0 <= self.expr_ar < 1 or self.invalid_rate >= 1:
            raise InvalidParams("expr_ar must lie in [0, 1) and invalid_rate below 1")

    def replace(self, **kw) -> "SynthParams":
        return dataclasses.replace(self, **kw)


# frozen reference presets
PRESETS = {
    "null": SynthParams(),
    "medium": SynthParams(
        blink_rate=0.6, k_blink=0.6, k_pose=6.0, k_ear=0.0, ear_noise=0.05, k_hd=0.0, k_expr=0.15, invalid_rate=0.002
    ),
    "easy": SynthParams(
        blink_rate=0.9, k_blink=1.0, k_pose=14.0, k_ear=0.0, ear_noise=0.05, k_hd=0.0, k_expr=0.35, invalid_rate=0.002
    ),
}


def preset(name: str, **overrides) -> SynthParams:
    try:
        base = PRESETS[name]
    except KeyError:
        raise InvalidParams(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return base.replace(**overrides)


def _reflect(x):
    return np.abs(np.mod(x + 100.0, 200.0) - 100.0)


def _ou(rng, shape, tau, sd):
    """Stationary AR(1) sequence(s) along axis 0 with time constant ``tau`` steps."""
    shape = (shape,) if np.isscalar(shape) else tuple(shape)
    phi = np.exp(-1.0 / tau)
    e = rng.normal(0.0, sd * np.sqrt(1 - phi**2), shape)
    zi = phi * rng.normal(0.0, sd, (1,) + shape[1:])
    return lfilter([1.0], [1.0, -phi], e, axis=0, zi=zi)[0]


def _user_streams(p: SynthParams, idx: int, expr_dir: np.ndarray):
    rng = np.random.default_rng([p.seed, idx])
    T, fps = p.duration_seconds, p.fps
    nf = T * fps

    walk = _ou(rng, T, p.attention_tau, p.attention_sd)
    att = _reflect(50.0 + walk - walk.mean())
    a = np.repeat(att / 100.0, fps)  # per frame, in [0, 1]

    # blinks
    rate = p.blink_rate * np.exp(rng.normal(0, p.user_blink_sd)) * (1 - p.k_blink * att / 100.0)
    counts = rng.poisson(np.clip(rate, 0, None))
    closed = np.zeros(nf, dtype=bool)
    starts = np.repeat(np.arange(T) * fps, counts) + rng.integers(0, fps, counts.sum())
    for k in range(p.blink_frames):
        closed[np.clip(starts + k, 0, nf - 1)] = True
    jitter = np.abs(rng.normal(0, p.blink_noise, nf))
    eb = np.clip(np.where(closed, 1.0 - jitter, jitter), 0.0, 1.0)

    # head pose (yaw, pitch), degrees
    away = np.abs(_ou(rng, T, 20.0, 1.0))
    away = np.repeat(away, fps) * p.k_pose * (1 - a)
    hp = np.empty((nf, 2))
    for c in range(2):
        drift = np.repeat(_ou(rng, T, p.drift_tau, p.pose_drift), fps) + rng.normal(0, p.user_offset * p.pose_drift)
        hp[:, c] = drift + away + rng.normal(0, p.pose_noise, nf)

    # EAR (left, right)
    base = 0.3 + rng.normal(0, p.user_offset * p.ear_noise)
    ear = np.empty((nf, 2))
    for c in range(2):
        ear[:, c] = base - p.k_ear * (1 - a) + rng.normal(0, p.ear_noise, nf)
    ear[closed] = 0.08 + rng.normal(0, p.ear_noise / 2, (int(closed.sum()), 2))

    # head distance: nose width/length, head width/length
    geom = rng.normal(1.0, p.user_offset * p.hd_noise, 4)
    hd = geom + p.k_hd * (a[:, None] - 0.5) + np.repeat(_ou(rng, T, p.drift_tau, 0.03), fps)[:, None] + rng.normal(0, p.hd_noise, (nf, 4))

    # expression embedding
    offset = rng.normal(0, p.user_offset, 16)
    if p.expr_ar > 0:
        noise = _ou(rng, (nf, 16), -1.0 / np.log(p.expr_ar), p.expr_noise)
    else:
        noise = rng.normal(0, p.expr_noise, (nf, 16))
    expr = offset + p.k_expr * (a[:, None] - 0.5) * expr_dir + noise

    values = {ModuleId.EB: eb[:, None], ModuleId.HP: hp, ModuleId.EAR: ear, ModuleId.HD: hd, ModuleId.EXPR: expr}
    streams = []
    frame_index = np.arange(nf)
    for m, v in values.items():
        valid = rng.random(nf) >= p.invalid_rate if p.invalid_rate > 0 else np.ones(nf, dtype=bool)
        valid[0] = True
        v = np.where(valid[:, None], v, 0.0)
        streams.append(FeatureFrameSeries(m, fps, frame_index, v, valid))
    attention = AttentionSeries(np.arange(T), att)
    return streams, attention, closed


def _expr_direction(seed: int) -> np.ndarray:
    v = np.random.default_rng([seed, 1 << 20]).normal(size=16)
    return v / np.linalg.norm(v) * 4.0


def generate_sessions(params: SynthParams) -> list[SessionRecord]:
    """One session per user, ids ``u00``, ``u01``, ...; fully determined by the seed."""
    if not isinstance(params, SynthParams):
        raise InvalidParams("params must be a SynthParams")
    direction = _expr_direction(params.seed)
    sessions = []
    for i in range(params.n_users):
        streams, attention, _ = _user_streams(params, i, direction)
        sessions.append(assemble_session(f"u{i:02d}", streams, attention, params.fps))
    return sessions


def blink_events(params: SynthParams, user_index: int) -> np.ndarray:
    """Per-frame closed-eye mask planted for one user (ground truth for tests)."""
    return _user_streams(params, user_index, _expr_direction(params.seed))[2]


def write_sessions(sessions, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return [write_session_dir(s, out) for s in sessions]


# --------------------------------------------------------------------------
# oracles


@dataclass(frozen=True)
class BruteForceEER:
    minmax: float  # min over thresholds of max(FPR, FNR)
    interpolated: float  # linear crossing of FPR and FNR
    threshold: float


def brute_force_eer(scores, labels) -> BruteForceEER:
    """EER by explicit per-threshold counting over every midpoint threshold."""
    scores = [float(s) for s in np.asarray(scores).ravel()]
    labels = [bool(l > 0) for l in np.asarray(labels).ravel()]
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("both classes are required")
    distinct = sorted(set(scores))
    thresholds = [-np.inf] + [(lo + hi) / 2 for lo, hi in zip(distinct, distinct[1:])] + [np.inf]
    pts = []
    for t in thresholds:
        fp = sum(1 for s, l in zip(scores, labels) if not l and s >= t)
        fn = sum(1 for s, l in zip(scores, labels) if l and s < t)
        pts.append((t, fp / n_neg, fn / n_pos))
    minmax = min(max(f, m) for _, f, m in pts)

    finite = {-np.inf: distinct[0], np.inf: float(np.nextafter(distinct[-1], np.inf))}
    for (ta, fa, ma), (tb, fb, mb) in zip(pts, pts[1:]):
        if fa == ma:
            return BruteForceEER(minmax, fa, finite.get(ta, ta))
        if fa > ma and fb <= mb:
            if fb == mb:
                return BruteForceEER(minmax, fb, finite.get(tb, tb))
            # solve fa + u (fb - fa) = ma + u (mb - ma)
            u = (fa - ma) / ((fa - ma) - (fb - mb))
            ta_, tb_ = finite.get(ta, ta), finite.get(tb, tb)
            return BruteForceEER(minmax, fa + u * (fb - fa), ta_ + u * (tb_ - ta_))
    _, f, m = pts[-1]
    return BruteForceEER(minmax, f, finite[np.inf])


def brute_force_max_accuracy(scores, labels) -> float:
    """Best accuracy over every real threshold (each distinct score and +inf)."""
    s = np.asarray(scores, dtype=float).ravel()
    pos = np.asarray(labels).ravel() > 0
    best = 0.0
    for t in list(np.unique(s)) + [np.inf]:
        best = max(best, float(np.mean((s >= t) == pos)))
    return best


@dataclass(frozen=True)
class ReferenceSolution:
    weights: np.ndarray
    bias: float
    objective: float
    grad_norm: float
    n_iter: int


def reference_svm_solve(X, y, C, n_starts: int = 3, max_iter: int = 1_000_000, grad_tol: float = 1e-10, seed: int = 0) -> ReferenceSolution:
    """Squared-hinge SVM by accelerated fixed-step gradient descent.

    Uses step ``1/L`` with ``L = 1 + 2 C lambda_max([X 1]^T [X 1])`` (a
    global Lipschitz bound of the gradient), Nesterov momentum with
    gradient-based restarts, several random starts; returns the lowest
    objective found. Intended for tiny problems only.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.unique(y).size < 2:
        raise SingleClass("both classes are required")
    n, d = X.shape
    Z = np.hstack([X, np.ones((n, 1))])
    L = 1.0 + 2.0 * C * float(np.linalg.eigvalsh(Z.T @ Z)[-1])
    reg = np.ones(d + 1)
    reg[-1] = 0.0

    def grad(theta):
        slack = np.maximum(0.0, 1.0 - y * (Z @ theta))
        return reg * theta - 2.0 * C * Z.T @ (y * slack)

    def objective(theta):
        slack = np.maximum(0.0, 1.0 - y * (Z @ theta))
        return 0.5 * float(theta[:d] @ theta[:d]) + C * float(slack @ slack)

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_starts):
        theta = rng.normal(0, 1, d + 1)
        prev = theta.copy()
        k = 0
        it = 0
        g = grad(theta)
        for it in range(1, max_iter + 1):
            mom = theta + (k / (k + 3.0)) * (theta - prev)
            gm = grad(mom)
            prev, theta = theta, mom - gm / L
            k += 1
            if gm @ (theta - prev) > 0:  # restart momentum
                k = 0
            g = grad(theta)
            if np.abs(g).max() <= grad_tol:
                break
        sol = ReferenceSolution(theta[:d].copy(), float(theta[d]), objective(theta), float(np.abs(g).max()), it)
        if best is None or sol.objective < best.objective:
            best = sol
    return best
