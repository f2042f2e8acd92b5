"""ROC, equal error rate, maximum accuracy and score densities.

Convention throughout: a sample is predicted High when ``score >= threshold``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import SingleClass, TooFewScores

GRID_POINTS = 512
MIN_BANDWIDTH = 1e-3

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class RocCurve:
    """Operating points ordered by increasing threshold.

    The first threshold is ``-inf`` (everything High) and the last ``+inf``
    (everything Low); the ones in between are midpoints of consecutive
    distinct scores.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    n_pos: int
    n_neg: int
    score_min: float
    score_max: float

    @property
    def fnr(self) -> np.ndarray:
        return 1.0 - self.tpr

    def finite_thresholds(self) -> np.ndarray:
        """Thresholds with the sentinels replaced by equivalent finite values."""
        t = self.thresholds.copy()
        t[0] = self.score_min
        t[-1] = np.nextafter(self.score_max, np.inf)
        return t

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(self.thresholds.tolist(), self.fpr.tolist(), self.tpr.tolist()):
            w.writerow([repr(t), repr(f), repr(p)])
        return buf.getvalue()

    def auc(self) -> float:
        x, y = self.fpr[::-1], self.tpr[::-1]
        return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2))


def _split(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores but {labels.size} labels")
    pos = labels > 0
    if pos.all() or not pos.any():
        raise SingleClass("scores must include both High and Low samples")
    return scores, pos


def _operating_points(scores, pos):
    """Distinct scores, candidate thresholds, and counts at each threshold."""
    distinct = np.unique(scores)
    mids = (distinct[:-1] + distinct[1:]) / 2
    thresholds = np.concatenate([[-np.inf], mids, [np.inf]])
    sp = np.sort(scores[pos])
    sn = np.sort(scores[~pos])
    tp = len(sp) - np.searchsorted(sp, thresholds, side="left")
    fp = len(sn) - np.searchsorted(sn, thresholds, side="left")
    return distinct, thresholds, tp, fp


def roc(scores, labels) -> RocCurve:
    scores, pos = _split(scores, labels)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    _, thresholds, tp, fp = _operating_points(scores, pos)
    return RocCurve(thresholds, fp / n_neg, tp / n_pos, n_pos, n_neg, float(scores.min()), float(scores.max()))


def eer(curve: RocCurve) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Takes the first (smallest-threshold) point where FPR - FNR stops being
    positive; if it is not an exact crossing, both rates and the threshold
    are linearly interpolated from the bracketing point before it.
    """
    fpr, fnr = curve.fpr, curve.fnr
    diff = fpr - fnr
    t = curve.finite_thresholds()
    j = int(np.argmax(diff <= 0))
    if diff[j] == 0 or j == 0:
        return float(fpr[j]), float(t[j])
    i = j - 1
    lam = diff[i] / (diff[i] - diff[j])
    rate = fpr[i] + lam * (fpr[j] - fpr[i])
    tau = t[i] + lam * (t[j] - t[i])
    return float(rate), float(tau)


def max_accuracy(scores, labels) -> tuple[float, float]:
    scores, pos = _split(scores, labels)
    n = len(scores)
    n_neg = int((~pos).sum())
    _, thresholds, tp, fp = _operating_points(scores, pos)
    acc = (tp + (n_neg - fp)) / n
    k = int(np.argmax(acc))
    t = thresholds.copy()
    t[0] = scores.min()
    t[-1] = np.nextafter(scores.max(), np.inf)
    return float(acc[k]), float(t[k])


def accuracy_at(scores, labels, tau: float) -> float:
    scores, pos = _split(scores, labels)
    return float(np.mean((scores >= tau) == pos))


def rates_at(scores, labels, tau: float) -> tuple[float, float]:
    """(FPR, FNR) at a fixed threshold."""
    scores, pos = _split(scores, labels)
    high = scores >= tau
    return float(high[~pos].mean()), float((~high[pos]).mean())


@dataclass(frozen=True)
class DensityEstimate:
    x: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        return float(_trapezoid(self.density, self.x))


def silverman_bandwidth(scores) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    std = scores.std(ddof=1)
    q75, q25 = np.percentile(scores, [75, 25])
    sigma = min(std, (q75 - q25) / 1.34)
    if sigma <= 0:
        sigma = std
    return max(1.06 * sigma * n ** (-1 / 5), MIN_BANDWIDTH)


def kde(scores, bandwidth: float | None = None, grid: np.ndarray | None = None) -> DensityEstimate:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.size < 2:
        raise TooFewScores(f"need at least 2 scores for a density, got {scores.size}")
    h = silverman_bandwidth(scores) if bandwidth is None else max(float(bandwidth), MIN_BANDWIDTH)
    x = np.linspace(0.0, 1.0, GRID_POINTS) if grid is None else np.asarray(grid, dtype=float)
    z = (x[:, None] - scores[None, :]) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (scores.size * h * np.sqrt(2 * np.pi))
    return DensityEstimate(x, dens, h)


def densities_csv(high: DensityEstimate, low: DensityEstimate) -> str:
    lines = ["x,density_high,density_low"]
    lines += [f"{x!r},{h!r},{l!r}" for x, h, l in zip(high.x.tolist(), high.density.tolist(), low.density.tolist())]
    return "\n".join(lines) + "\n"


def evaluate_scores(scores, labels) -> dict:
    """EER, accuracy at the EER threshold, and max accuracy in one pass."""
    curve = roc(scores, labels)
    e, tau_e = eer(curve)
    acc, tau_a = max_accuracy(scores, labels)
    return {
        "eer": e,
        "acc_at_eer": 1.0 - e,
        "tau_eer": tau_e,
        "max_acc": acc,
        "tau_maxacc": tau_a,
        "n_pos": curve.n_pos,
        "n_neg": curve.n_neg,
        "auc": curve.auc(),
        "roc": curve,
    }
