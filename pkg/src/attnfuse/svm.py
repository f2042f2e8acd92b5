"""Linear SVM with squared-hinge loss, feature standardization and logistic
score calibration.

The training objective is::

    F(w, b) = 1/2 ||w||^2 + C * sum_i s_i * max(0, 1 - y_i (w . x_i + b))^2

with an unregularized bias and optional per-sample weights ``s_i``. It is
minimized with an active-set Newton method: on the current set of margin
violators the objective is a regularized least-squares problem, solved
exactly, followed by an exact line search on the piecewise-quadratic
objective. When there are more features than samples the iterates are kept
in the span of the training rows (``w = X^T beta``) so every step costs
``O(n^2)`` on a precomputed Gram matrix instead of ``O(n d)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.optimize import brentq
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.model_selection import GroupKFold
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DimensionMismatch, EmptyInput, InvalidParams, SingleClass

C_GRID = tuple(10.0**k for k in range(-4, 3))
LOSSES = ("squared_hinge", "hinge")


@dataclass(frozen=True)
class TrainConfig:
    C: float = 1.0
    tol: float = 1e-3
    max_iter: int = 10000
    seed: int = 0
    loss: str = "squared_hinge"
    class_weight: object = None

    def __post_init__(self):
        if not self.C > 0:
            raise InvalidParams(f"C must be positive, got {self.C}")
        if not self.tol > 0 or self.max_iter <= 0:
            raise InvalidParams("tol and max_iter must be positive")
        if self.loss not in LOSSES:
            raise InvalidParams(f"loss must be one of {LOSSES}")
        if not 1e-4 <= self.C <= 1e2:
            warnings.warn(f"C={self.C:g} is outside the usual [1e-4, 1e2] range", stacklevel=3)


@dataclass
class SvmModel:
    weights: np.ndarray
    bias: float
    objective_value: float
    n_iterations: int
    converged: bool
    C: float = 1.0
    tol: float = 1e-3
    loss: str = "squared_hinge"
    grad_max_norm: float = float("nan")

    def decision(self, X) -> np.ndarray:
        return decision(self, X)


# --------------------------------------------------------------------------
# objective


def _as_pm1(y) -> np.ndarray:
    y = np.asarray(y)
    labels = np.unique(y)
    if labels.size < 2:
        raise SingleClass(f"training labels contain a single class: {labels.tolist()}")
    if labels.size > 2 or not set(labels.tolist()) <= {-1, 1}:
        raise ValueError(f"labels must be -1/+1, got {labels.tolist()}")
    return y.astype(np.float64)


def _sample_weights(y: np.ndarray, class_weight=None, sample_weight=None) -> np.ndarray:
    s = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=float).copy()
    if class_weight is None:
        return s
    if class_weight == "balanced":
        n = len(y)
        for c in (-1.0, 1.0):
            mask = y == c
            s[mask] *= n / (2.0 * mask.sum())
        return s
    for c, wt in dict(class_weight).items():
        s[y == float(c)] *= wt
    return s


def svm_objective(w, b, X, y, C, sample_weight=None, loss="squared_hinge") -> float:
    w = np.asarray(w, dtype=float)
    slack = np.maximum(0.0, 1.0 - np.asarray(y) * (np.asarray(X) @ w + b))
    s = np.ones(len(slack)) if sample_weight is None else np.asarray(sample_weight)
    data = np.dot(s, slack**2) if loss == "squared_hinge" else np.dot(s, slack)
    return 0.5 * float(w @ w) + C * float(data)


def svm_gradient(w, b, X, y, C, sample_weight=None) -> tuple[np.ndarray, float]:
    """Gradient of the squared-hinge objective with respect to (w, b)."""
    X = np.asarray(X)
    y = np.asarray(y, dtype=float)
    slack = np.maximum(0.0, 1.0 - y * (X @ w + b))
    s = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight)
    coef = 2.0 * C * s * y * slack
    return np.asarray(w) - X.T @ coef, -float(coef.sum())


# --------------------------------------------------------------------------
# active-set Newton solver


@dataclass
class _Solution:
    coef: np.ndarray  # w (primal) or beta (span of rows)
    bias: float
    n_iter: int
    converged: bool
    grad_max: float
    decisions: np.ndarray
    in_span: bool


def _exact_step(wdw, dwdw, o, do, y, s, C) -> float:
    """Minimizer over t >= 0 of the objective along a search direction."""

    def dphi(t):
        slack = np.maximum(0.0, 1.0 - y * (o + t * do))
        return wdw + t * dwdw - 2.0 * C * np.dot(s * y * do, slack)

    if dphi(0.0) >= 0.0:
        return 0.0
    hi = 1.0
    while dphi(hi) < 0.0:
        hi *= 2.0
        if hi > 1e12:
            return hi
    t = brentq(dphi, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    # the derivative is linear between breakpoints: finish with the exact root
    slack = 1.0 - y * (o + t * do)
    act = slack > 0
    c1 = dwdw + 2.0 * C * np.dot(s[act], do[act] ** 2)
    if c1 > 0:
        c0 = wdw - 2.0 * C * np.dot(s[act] * y[act] * do[act], 1.0 - y[act] * o[act])
        t_exact = -c0 / c1
        if t_exact > 0 and abs(t_exact - t) <= 1e-6 * max(1.0, t):
            return t_exact
    return t


def _solve_squared_hinge(
    y, C, s, tol, max_iter, *, X=None, K=None, rows=None, init=None
) -> _Solution:
    """Minimize F on training rows.

    Exactly one representation drives the iterations: the Gram matrix ``K``
    of the training rows (iterates ``w = X[rows]^T beta``), or the data
    matrix ``X`` itself. ``X`` with ``rows`` is still used in span mode for
    the max-norm stopping test.
    """
    n = len(y)
    in_span = K is not None
    if in_span:
        d = X.shape[1] if X is not None else n
        beta = np.zeros(n) if init is None else np.array(init[0], dtype=float)
        b = 0.0 if init is None else float(init[1])
        kb = K @ beta
        o = kb + b
    else:
        Xr = X if rows is None else X[rows]
        d = Xr.shape[1]
        w = np.zeros(d) if init is None else np.array(init[0], dtype=float)
        b = 0.0 if init is None else float(init[1])
        o = Xr @ w + b

    def xt_dot(v):
        if rows is None:
            return X.T @ v
        full = np.zeros(X.shape[0])
        full[rows] = v
        return X.T @ full

    # relative stopping rule: small C shrinks every gradient, including the one at the origin
    pull0 = 2.0 * C * s * y
    if in_span and X is None:
        g0 = math.sqrt(max(float(pull0 @ (K @ pull0)), 0.0))
    else:
        g0 = float(np.abs(xt_dot(pull0) if in_span else Xr.T @ pull0).max(initial=0.0))
    tol = tol * min(1.0, max(g0, abs(float(pull0.sum()))))

    converged = False
    grad_max = math.inf
    it = 0
    sqrt_d = math.sqrt(d)
    for it in range(1, max_iter + 1):
        slack = np.maximum(0.0, 1.0 - y * o)
        pull = 2.0 * C * s * y * slack
        gb = -float(pull.sum())
        if in_span:
            g = beta - pull
            l2 = math.sqrt(max(float(g @ (K @ g)), 0.0))
            if max(l2, abs(gb)) <= tol:
                grad_max = max(l2, abs(gb))
                converged = True
                break
            if l2 <= sqrt_d * tol and X is not None:
                grad_max = max(float(np.abs(xt_dot(g)).max()), abs(gb))
                if grad_max <= tol:
                    converged = True
                    break
        else:
            gw = w - Xr.T @ pull
            grad_max = max(float(np.abs(gw).max()), abs(gb))
            if grad_max <= tol:
                converged = True
                break

        act = slack > 0
        m = int(act.sum())
        if in_span:
            target = np.zeros(n)
            if m == 0:
                tb = b
            else:
                ridge = K[np.ix_(act, act)].copy()
                ridge[np.diag_indices(m)] += 1.0 / (2.0 * C * s[act])
                cf = linalg.cho_factor(ridge, check_finite=False)
                u = linalg.cho_solve(cf, y[act], check_finite=False)
                v = linalg.cho_solve(cf, np.ones(m), check_finite=False)
                tb = float(u.sum() / v.sum())
                target[act] = u - tb * v
            dbeta = target - beta
            kd = K @ dbeta
            db = tb - b
            wdw = float(beta @ kd)
            dwdw = float(dbeta @ kd)
            do = kd + db
        else:
            if m == 0:
                tw, tb = np.zeros(d), b
            else:
                Xa = Xr[act]
                sa = s[act]
                ya = y[act]
                H = np.empty((d + 1, d + 1))
                H[:d, :d] = 2.0 * C * (Xa.T * sa) @ Xa
                H[np.diag_indices(d)] += 1.0
                H[:d, d] = H[d, :d] = 2.0 * C * (Xa.T @ sa)
                H[d, d] = 2.0 * C * sa.sum()
                rhs = np.append(2.0 * C * Xa.T @ (sa * ya), 2.0 * C * np.dot(sa, ya))
                sol = linalg.solve(H, rhs, assume_a="pos", check_finite=False)
                tw, tb = sol[:d], float(sol[d])
            dw = tw - w
            db = tb - b
            wdw = float(w @ dw)
            dwdw = float(dw @ dw)
            do = Xr @ dw + db

        t = _exact_step(wdw, dwdw, o, do, y, s, C)
        if t == 0.0:
            break
        if in_span:
            beta = beta + t * dbeta
            kb = kb + t * kd
            b = b + t * db
            o = kb + b
        else:
            w = w + t * dw
            b = b + t * db
            o = o + t * do

    coef = beta if in_span else w
    return _Solution(coef, float(b), it, converged, grad_max, o, in_span)


def _solve_hinge(y, C, s, *, X=None, K=None, rows=None) -> _Solution:
    """Plain hinge loss through its dual QP (cvxopt)."""
    from cvxopt import matrix, solvers

    n = len(y)
    if K is None:
        Xr = X if rows is None else X[rows]
        K = Xr @ Xr.T
    P = matrix((np.outer(y, y) * K).astype(float))
    q = matrix(-np.ones(n))
    G = matrix(np.vstack([-np.eye(n), np.eye(n)]))
    h = matrix(np.concatenate([np.zeros(n), C * s]))
    A = matrix(y.reshape(1, -1).astype(float))
    res = solvers.qp(P, q, G, h, A, matrix(0.0), options={"show_progress": False, "abstol": 1e-10, "reltol": 1e-10, "feastol": 1e-10})
    alpha = np.clip(np.asarray(res["x"]).ravel(), 0.0, C * s)
    beta = alpha * y
    f = K @ beta
    eps = 1e-7 * np.maximum(C * s, 1.0)
    free = (alpha > eps) & (alpha < C * s - eps)
    if free.any():
        b = float(np.mean(y[free] - f[free]))
    else:
        # any b in [lo, hi] is optimal
        up = ((y > 0) & (alpha < C * s - eps)) | ((y < 0) & (alpha > eps))
        lo = np.max((y - f)[up]) if up.any() else -np.inf
        dn = ((y > 0) & (alpha > eps)) | ((y < 0) & (alpha < C * s - eps))
        hi = np.min((y - f)[dn]) if dn.any() else np.inf
        b = float(np.mean([v for v in (lo, hi) if np.isfinite(v)] or [0.0]))
    return _Solution(beta, b, int(res["iterations"]), res["status"] == "optimal", float("nan"), f + b, True)


def _materialize(sol: _Solution, X, rows=None) -> np.ndarray:
    if not sol.in_span:
        return sol.coef
    if rows is None:
        return X.T @ sol.coef
    full = np.zeros(X.shape[0])
    full[rows] = sol.coef
    return X.T @ full


def _solve(y, config: TrainConfig, s, *, X, K=None, rows=None, init=None) -> _Solution:
    if config.loss == "hinge":
        return _solve_hinge(y, config.C, s, X=X, K=K, rows=rows)
    return _solve_squared_hinge(y, config.C, s, config.tol, config.max_iter, X=X, K=K, rows=rows, init=init)


def train_svm(X, y, config: TrainConfig | None = None, sample_weight=None, gram=None) -> SvmModel:
    """Fit a linear SVM on standardized features ``X`` with labels in {-1, +1}."""
    config = config or TrainConfig()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"X must be 2-D, got shape {X.shape}")
    y = _as_pm1(y)
    if len(y) != X.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} rows but {len(y)} labels")
    s = _sample_weights(y, config.class_weight, sample_weight)
    n, d = X.shape
    K = gram
    if K is None and (d > n or config.loss == "hinge"):
        K = X @ X.T
    sol = _solve(y, config, s, X=X, K=K)
    w = _materialize(sol, X)
    b = sol.bias
    if config.loss == "squared_hinge" and sol.in_span:
        gw, gb = svm_gradient(w, b, X, y, config.C, s)
        sol.grad_max = max(float(np.abs(gw).max()), abs(gb))
    return SvmModel(
        weights=w,
        bias=b,
        objective_value=svm_objective(w, b, X, y, config.C, s, config.loss),
        n_iterations=sol.n_iter,
        converged=sol.converged,
        C=config.C,
        tol=config.tol,
        loss=config.loss,
        grad_max_norm=sol.grad_max,
    )


def decision(model: SvmModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = X.reshape(1, -1) if single else X
    if X2.shape[1] != len(model.weights):
        raise DimensionMismatch(f"model expects {len(model.weights)} features, got {X2.shape[1]}")
    out = X2 @ model.weights + model.bias
    return float(out[0]) if single else out


# --------------------------------------------------------------------------
# scaler


class FeatureScaler(TransformerMixin, BaseEstimator):
    """Per-dimension standardization; constant columns map to zero."""

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise EmptyInput("cannot fit a scaler on an empty matrix")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        std[std == 0] = 1.0
        self.scale_ = std
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.n_features_in_:
            raise DimensionMismatch(f"scaler fitted on {self.n_features_in_} features, got {X.shape[-1]}")
        out = X - self.mean_
        out /= self.scale_
        return out


def fit_scaler(X) -> FeatureScaler:
    return FeatureScaler().fit(X)


# --------------------------------------------------------------------------
# calibration


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


class LogisticCalibrator(TransformerMixin, BaseEstimator):
    """Monotone map ``sigmoid(a * d + b)`` from decision values to (0, 1).

    With ``smoothing="platt"`` the 0/1 targets are replaced by Platt's
    ``(N+ + 1)/(N+ + 2)`` and ``1/(N- + 2)``, which keeps the fit finite on
    separable decisions. The slope is constrained to ``a >= min_slope``.
    """

    def __init__(self, smoothing="platt", class_weight=None, min_slope=1e-3, tol=1e-6, max_iter=200):
        self.smoothing = smoothing
        self.class_weight = class_weight
        self.min_slope = min_slope
        self.tol = tol
        self.max_iter = max_iter

    def _loss(self, a, b, d, t, s):
        z = a * d + b
        return -float(np.dot(s, t * _log_sigmoid(z) + (1 - t) * _log_sigmoid(-z))) / s.sum()

    def fit(self, decisions, y):
        d = np.asarray(decisions, dtype=np.float64).ravel()
        y = _as_pm1(y)
        s = _sample_weights(y, self.class_weight)
        pos = y > 0
        if self.smoothing == "platt":
            n_pos, n_neg = s[pos].sum(), s[~pos].sum()
            t = np.where(pos, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
        else:
            t = pos.astype(float)

        # scale-free parametrization keeps Newton well conditioned
        scale = float(np.std(d)) or 1.0
        u = d / scale
        theta = np.array([1.0, 0.0])
        self.n_iter_ = 0
        for free_slope in (True, False):
            if not free_slope:
                theta[0] = self.min_slope * scale
            for _ in range(self.max_iter):
                self.n_iter_ += 1
                z = theta[0] * u + theta[1]
                p = np.exp(_log_sigmoid(z))
                r = s * (p - t) / s.sum()
                wgt = s * p * (1 - p) / s.sum()
                if free_slope:
                    g = np.array([r @ u, r.sum()])
                    H = np.array([[wgt @ (u * u), wgt @ u], [wgt @ u, wgt.sum()]])
                    H[np.diag_indices(2)] += 1e-12
                    step = np.linalg.solve(H, g)
                else:
                    g = np.array([0.0, r.sum()])
                    step = np.array([0.0, g[1] / max(wgt.sum(), 1e-12)])
                if np.abs(g).max() <= self.tol:
                    break
                f0 = self._loss(theta[0], theta[1], u, t, s)
                lam = 1.0
                while lam > 1e-10:
                    cand = theta - lam * step
                    if self._loss(cand[0], cand[1], u, t, s) <= f0 - 1e-4 * lam * float(g @ step):
                        break
                    lam *= 0.5
                theta = cand
            if theta[0] >= self.min_slope * scale:
                break
        self.a_ = float(theta[0] / scale)
        self.b_ = float(theta[1])
        return self

    def transform(self, decisions):
        check_is_fitted(self, "a_")
        z = self.a_ * np.asarray(decisions, dtype=np.float64) + self.b_
        return np.exp(_log_sigmoid(z))

    predict_proba = transform

    def log_loss(self, decisions, y) -> float:
        p = np.clip(self.transform(decisions), 1e-300, 1.0)
        y = np.asarray(y)
        return float(-np.mean(np.where(y > 0, np.log(p), np.log1p(-p))))


def fit_calibrator(decisions, y, **kwargs) -> LogisticCalibrator:
    return LogisticCalibrator(**kwargs).fit(decisions, y)


# --------------------------------------------------------------------------
# model selection


@dataclass
class CVResult:
    C: float
    scores: dict  # C -> mean inner accuracy
    oof_decisions: np.ndarray | None  # out-of-fold decisions at the chosen C
    oof_mask: np.ndarray | None


def _inner_cv(Xs, y, groups, grid, inner_folds, base: TrainConfig, K=None) -> CVResult:
    n, d = Xs.shape
    grid = sorted(float(c) for c in grid)
    if not grid:
        raise ValueError("empty C grid")
    users = np.unique(groups)
    n_splits = min(inner_folds, len(users))
    acc = {c: [] for c in grid}
    oof = {c: np.full(n, np.nan) for c in grid}
    if n_splits >= 2:
        use_span = K is not None or d > n
        if use_span and K is None:
            K = Xs @ Xs.T
        for tr, va in GroupKFold(n_splits=n_splits).split(Xs, y, groups):
            ytr = y[tr].astype(float)
            if np.unique(ytr).size < 2:
                continue
            s = _sample_weights(ytr, base.class_weight)
            Ktr = K[np.ix_(tr, tr)] if use_span else None
            init = None
            for c in grid:
                cfg = TrainConfig(c, base.tol, base.max_iter, base.seed, base.loss, base.class_weight) if c != base.C else base
                sol = _solve(ytr, cfg, s, X=Xs, K=Ktr, rows=tr, init=init)
                init = (sol.coef, sol.bias) if base.loss == "squared_hinge" else None
                if sol.in_span:
                    dv = K[np.ix_(va, tr)] @ sol.coef + sol.bias
                else:
                    dv = Xs[va] @ sol.coef + sol.bias
                cal = LogisticCalibrator(class_weight=base.class_weight).fit(sol.decisions, ytr)
                pred = np.where(cal.transform(dv) >= 0.5, 1, -1)
                acc[c].append(float(np.mean(pred == y[va])))
                oof[c][va] = dv
    scores = {c: float(np.mean(v)) if v else float("nan") for c, v in acc.items()}
    valid = [c for c in grid if not math.isnan(scores[c])]
    if not valid:
        warnings.warn("no usable inner fold for C selection; using the smallest grid value", stacklevel=2)
        return CVResult(grid[0], scores, None, None)
    best = max(valid, key=lambda c: (scores[c], -c))
    mask = ~np.isnan(oof[best])
    return CVResult(best, scores, oof[best], mask)


def select_C(X, y, user_ids, grid=C_GRID, inner_folds=3, config: TrainConfig | None = None) -> float:
    """Grid value with the best user-grouped inner accuracy (smaller C on ties).

    ``X`` is expected to be standardized already.
    """
    config = config or TrainConfig()
    grid = list(grid)
    if len(grid) == 1:
        return float(grid[0])
    X = np.asarray(X, dtype=np.float64)
    y = _as_pm1(y)
    return _inner_cv(X, y, np.asarray(user_ids), grid, inner_folds, config).C


# --------------------------------------------------------------------------
# per-module estimator


@dataclass
class TrainedModule:
    module: str
    scaler: FeatureScaler
    model: SvmModel
    calibrator: LogisticCalibrator
    C: float
    cv_scores: dict = field(default_factory=dict)
    train_users: tuple = ()

    def decision(self, X) -> np.ndarray:
        return decision(self.model, self.scaler.transform(X))

    def score(self, X) -> np.ndarray:
        return self.calibrator.transform(self.decision(X))

    def to_json(self) -> dict:
        return {
            "module": self.module,
            "dim": int(len(self.model.weights)),
            "weights": self.model.weights.tolist(),
            "bias": self.model.bias,
            "C": self.C,
            "tol": self.model.tol,
            "loss": self.model.loss,
            "scaler_mean": self.scaler.mean_.tolist(),
            "scaler_std": self.scaler.scale_.tolist(),
            "calibrator_a": self.calibrator.a_,
            "calibrator_b": self.calibrator.b_,
            "converged": bool(self.model.converged),
            "n_iterations": int(self.model.n_iterations),
            "objective_value": self.model.objective_value,
            "train_users": list(self.train_users),
        }

    @classmethod
    def from_json(cls, data: dict) -> "TrainedModule":
        scaler = FeatureScaler()
        scaler.mean_ = np.asarray(data["scaler_mean"], dtype=float)
        scaler.scale_ = np.asarray(data["scaler_std"], dtype=float)
        scaler.n_features_in_ = len(scaler.mean_)
        cal = LogisticCalibrator()
        cal.a_, cal.b_ = float(data["calibrator_a"]), float(data["calibrator_b"])
        model = SvmModel(
            weights=np.asarray(data["weights"], dtype=float),
            bias=float(data["bias"]),
            objective_value=float(data.get("objective_value", float("nan"))),
            n_iterations=int(data.get("n_iterations", 0)),
            converged=bool(data["converged"]),
            C=float(data["C"]),
            tol=float(data["tol"]),
            loss=data.get("loss", "squared_hinge"),
        )
        return cls(data["module"], scaler, model, cal, float(data["C"]), train_users=tuple(data.get("train_users", ())))


class ModalityClassifier(ClassifierMixin, BaseEstimator):
    """Scaler + linear SVM + calibrator for one face-analysis module.

    ``fit`` standardizes on the training rows, picks C by user-grouped inner
    cross-validation, refits on all rows and calibrates on the out-of-fold
    decisions of the chosen C (falling back to training decisions when no
    inner fold is usable).
    """

    def __init__(
        self,
        module="",
        C_grid=C_GRID,
        inner_folds=3,
        tol=1e-3,
        max_iter=10000,
        loss="squared_hinge",
        class_weight="balanced",
        calibration="oof",
        seed=0,
    ):
        self.module = module
        self.C_grid = C_grid
        self.inner_folds = inner_folds
        self.tol = tol
        self.max_iter = max_iter
        self.loss = loss
        self.class_weight = class_weight
        self.calibration = calibration
        self.seed = seed

    def fit(self, X, y, groups=None):
        X = check_array(X, dtype=np.float64)
        y = _as_pm1(y)
        if groups is None:
            groups = np.arange(len(y))
        groups = np.asarray(groups)
        self.classes_ = np.array([-1, 1])
        self.scaler_ = FeatureScaler().fit(X)
        Xs = self.scaler_.transform(X)
        n, d = Xs.shape
        K = Xs @ Xs.T if (d > n or self.loss == "hinge") else None
        grid = list(self.C_grid)
        base = TrainConfig(grid[0], self.tol, self.max_iter, self.seed, self.loss, self.class_weight)
        cv = _inner_cv(Xs, y, groups, grid, self.inner_folds, base, K=K)
        if len(grid) == 1:
            cv.C = float(grid[0])
        self.C_ = cv.C
        self.cv_scores_ = cv.scores
        cfg = TrainConfig(self.C_, self.tol, self.max_iter, self.seed, self.loss, self.class_weight)
        self.svm_ = train_svm(Xs, y, cfg, gram=K)
        if self.calibration == "oof" and cv.oof_decisions is not None and np.unique(y[cv.oof_mask]).size == 2:
            cal_d, cal_y = cv.oof_decisions[cv.oof_mask], y[cv.oof_mask]
        else:
            cal_d, cal_y = decision(self.svm_, Xs), y
        self.calibrator_ = LogisticCalibrator(class_weight=self.class_weight).fit(cal_d, cal_y)
        self.train_groups_ = tuple(sorted(set(groups.tolist())))
        return self

    def decision_function(self, X):
        check_is_fitted(self, "svm_")
        return decision(self.svm_, self.scaler_.transform(check_array(X, dtype=np.float64)))

    def predict_proba(self, X):
        p = self.calibrator_.transform(self.decision_function(X))
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return np.where(self.predict_proba(X)[:, 1] >= 0.5, 1, -1)

    def trained_module(self) -> TrainedModule:
        check_is_fitted(self, "svm_")
        return TrainedModule(
            str(self.module), self.scaler_, self.svm_, self.calibrator_, self.C_, dict(self.cv_scores_), self.train_groups_
        )
