"""Leave-one-user-out evaluation of monomodal and fused attention classifiers."""

from __future__ import annotations

import json
import logging
import os
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from ._files import atomic_write_text, dump_json
from .errors import AttnFuseError, InvalidParams, LeakageError, SingleClass, TooFewUsers
from .fusion import FusionConfig, fuse_matrix, parse_subset, subset_key
from .ingest import ModuleId
from .metrics import densities_csv, evaluate_scores, kde, rates_at
from .svm import C_GRID, ModalityClassifier, TrainedModule
from .windowing import LabeledDataset

log = logging.getLogger(__name__)

THRESHOLD_MODES = ("pooled_test", "train_calibrated")
CALIBRATED_TAU = 0.5


@dataclass
class ExperimentConfig:
    subsets: list = field(default_factory=lambda: ["eb"])
    p_L: float = 10.0
    p_H: float = 90.0
    window_seconds: int = 60
    fps: int = 30
    C_grid: tuple = C_GRID
    inner_folds: int = 3
    tol: float = 1e-3
    max_iter: int = 10000
    loss: str = "squared_hinge"
    class_weight: object = "balanced"
    threshold_mode: str = "pooled_test"
    weights: dict | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.subsets:
            raise InvalidParams("at least one module subset is required")
        self.subsets = [subset_key(parse_subset(s)) if isinstance(s, str) else subset_key(s) for s in self.subsets]
        if not 0 < self.p_L < self.p_H < 100:
            raise InvalidParams(f"invalid percentile pair ({self.p_L}, {self.p_H})")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise InvalidParams(f"threshold_mode must be one of {THRESHOLD_MODES}")
        self.C_grid = tuple(float(c) for c in self.C_grid)
        if not self.C_grid:
            raise InvalidParams("empty C grid")

    @property
    def modules(self) -> list[ModuleId]:
        mods = {m for s in self.subsets for m in parse_subset(s)}
        return sorted(mods, key=lambda m: m.value)

    def to_json(self) -> dict:
        d = asdict(self)
        d["C_grid"] = list(self.C_grid)
        return d


@dataclass
class FoldResult:
    test_user: str
    train_users: tuple
    test_index: np.ndarray
    modules: dict  # ModuleId -> TrainedModule
    scores: dict  # ModuleId -> calibrated test scores (aligned with test_index)
    failures: dict  # ModuleId -> message


@dataclass
class EvalReport:
    subset: str
    eer: float
    acc_at_eer: float
    max_acc: float
    tau_eer: float
    tau_maxacc: float
    n_pos: int
    n_neg: int
    auc: float
    calibrated: dict
    roc: object = field(repr=False)
    density_high: object = field(repr=False)
    density_low: object = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.subset.split("+"))

    def to_json(self) -> dict:
        return {
            "subset": self.subset,
            "modules": self.subset.split("+"),
            "eer": self.eer,
            "acc_at_eer": self.acc_at_eer,
            "max_acc": self.max_acc,
            "tau_eer": self.tau_eer,
            "tau_maxacc": self.tau_maxacc,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "auc": self.auc,
            "train_calibrated": self.calibrated,
            "density_bandwidth": {"high": self.density_high.bandwidth, "low": self.density_low.bandwidth},
        }


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    reports: dict  # subset key -> EvalReport
    folds: list
    scores: dict  # ModuleId -> pooled test scores (NaN where a fold failed)
    y: np.ndarray
    dataset_summary: dict

    def rows(self) -> list[EvalReport]:
        """Reports grouped by subset size, best max accuracy first."""
        return sorted(self.reports.values(), key=lambda r: (r.size, -r.max_acc, r.subset))

    def to_json(self) -> dict:
        folds = []
        for f in self.folds:
            folds.append(
                {
                    "test_user": f.test_user,
                    "n_train_users": len(f.train_users),
                    "n_test": int(len(f.test_index)),
                    "modules": {
                        m.value: {
                            "C": tm.C,
                            "converged": bool(tm.model.converged),
                            "n_iterations": int(tm.model.n_iterations),
                            "calibrator_a": tm.calibrator.a_,
                            "calibrator_b": tm.calibrator.b_,
                        }
                        for m, tm in f.modules.items()
                    },
                    "failures": {m.value: msg for m, msg in f.failures.items()},
                }
            )
        return {
            "config": self.config.to_json(),
            "dataset": self.dataset_summary,
            "threshold_mode": self.config.threshold_mode,
            "subsets": {k: r.to_json() for k, r in sorted(self.reports.items())},
            "table": [r.subset for r in self.rows()],
            "folds": folds,
        }


def loo_split(dataset) -> list[tuple[tuple, str]]:
    """One fold per user, ordered by user id: (training users, held-out user)."""
    users = dataset.users if hasattr(dataset, "users") else sorted(set(dataset))
    if len(users) < 2:
        raise TooFewUsers(f"leave-one-user-out needs at least 2 users, got {len(users)}")
    return [(tuple(u for u in users if u != test), test) for test in users]


def n_jobs_from_env() -> int:
    raw = os.environ.get("ATTNFUSE_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise InvalidParams(f"ATTNFUSE_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise InvalidParams("ATTNFUSE_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


def _train_rows(dataset: LabeledDataset, train_users) -> np.ndarray:
    return np.flatnonzero(np.isin(dataset.user_ids, list(train_users)))


def _run_fold(config: ExperimentConfig, dataset: LabeledDataset, train_users, test_user) -> FoldResult:
    if test_user in set(train_users):
        raise LeakageError(f"fold for {test_user}: held-out user is in the training set")
    tr = _train_rows(dataset, train_users)
    te = np.flatnonzero(dataset.user_ids == test_user)
    groups = dataset.user_ids[tr]
    y_tr = dataset.y[tr]
    trained, scores, failures = {}, {}, {}
    for m in config.modules:
        try:
            if np.unique(y_tr).size < 2:
                raise SingleClass("training users cover a single class")
            clf = ModalityClassifier(
                module=m.value,
                C_grid=config.C_grid,
                inner_folds=config.inner_folds,
                tol=config.tol,
                max_iter=config.max_iter,
                loss=config.loss,
                class_weight=config.class_weight,
                seed=config.seed,
            )
            clf.fit(dataset.X[m][tr], y_tr, groups=groups)
        except (AttnFuseError, np.linalg.LinAlgError, ValueError) as e:
            msg = f"{type(e).__name__}: {e}"
            warnings.warn(f"fold {test_user}, module {m.value} failed: {msg}", stacklevel=2)
            failures[m] = msg
            continue
        tm = clf.trained_module()
        trained[m] = tm
        scores[m] = tm.score(dataset.X[m][te])
    log.info("fold %s done (%d test samples)", test_user, len(te))
    return FoldResult(test_user, tuple(train_users), te, trained, scores, failures)


def check_leakage(folds: list[FoldResult], dataset: LabeledDataset) -> None:
    """Raise :class:`LeakageError` unless folds are user-disjoint and every sample is tested once."""
    tested = np.zeros(len(dataset), dtype=int)
    for f in folds:
        train = set(f.train_users)
        test_users = set(dataset.user_ids[f.test_index].tolist())
        if train & test_users:
            raise LeakageError(f"fold {f.test_user}: users {sorted(train & test_users)} both trained and tested")
        for m, tm in f.modules.items():
            seen = set(tm.train_users)
            if seen & test_users or not seen <= train:
                raise LeakageError(f"fold {f.test_user}: {m.value} model was fitted on rows of a held-out user")
        tested[f.test_index] += 1
    if not np.all(tested == 1):
        bad = int(np.sum(tested != 1))
        raise LeakageError(f"{bad} samples were tested a number of times other than once")


def _evaluate(key: str, fused: np.ndarray, y: np.ndarray) -> EvalReport:
    res = evaluate_scores(fused, y)
    fpr, fnr = rates_at(fused, y, CALIBRATED_TAU)
    calibrated = {
        "tau": CALIBRATED_TAU,
        "accuracy": float(np.mean((fused >= CALIBRATED_TAU) == (y > 0))),
        "fpr": fpr,
        "fnr": fnr,
    }
    return EvalReport(
        subset=key,
        eer=res["eer"],
        acc_at_eer=res["acc_at_eer"],
        max_acc=res["max_acc"],
        tau_eer=res["tau_eer"],
        tau_maxacc=res["tau_maxacc"],
        n_pos=res["n_pos"],
        n_neg=res["n_neg"],
        auc=res["auc"],
        calibrated=calibrated,
        roc=res["roc"],
        density_high=kde(fused[y > 0]),
        density_low=kde(fused[y < 0]),
    )


def run_experiment(config: ExperimentConfig, dataset: LabeledDataset, n_jobs: int | None = None, splitter=loo_split) -> ExperimentResult:
    """Train per-module classifiers fold by fold, pool test scores and evaluate every subset."""
    if len(dataset) == 0:
        raise InvalidParams("empty dataset")
    if dataset.n_high == 0 or dataset.n_low == 0:
        raise SingleClass("dataset must contain both High and Low samples")
    missing = [m.value for m in config.modules if m not in dataset.X]
    if missing:
        raise InvalidParams(f"dataset lacks features for {missing}")
    folds_spec = splitter(dataset)
    n_jobs = n_jobs_from_env() if n_jobs is None else n_jobs
    if n_jobs == 1:
        folds = [_run_fold(config, dataset, tr, te) for tr, te in folds_spec]
    else:
        folds = Parallel(n_jobs=n_jobs, prefer="threads")(delayed(_run_fold)(config, dataset, tr, te) for tr, te in folds_spec)
    folds = sorted(folds, key=lambda f: f.test_user)
    check_leakage(folds, dataset)

    n = len(dataset)
    pooled = {m: np.full(n, np.nan) for m in config.modules}
    for f in folds:
        for m, s in f.scores.items():
            pooled[m][f.test_index] = s

    reports = {}
    for key in config.subsets:
        mods = parse_subset(key)
        weights = None
        if config.weights:
            weights = {m: config.weights.get(m.value, config.weights.get(m, 1.0)) for m in mods}
        fc = FusionConfig(mods, weights)
        mask = np.all([np.isfinite(pooled[m]) for m in mods], axis=0)
        y = dataset.y[mask]
        if np.unique(y).size < 2:
            warnings.warn(f"subset {key}: not enough scored samples to evaluate", stacklevel=2)
            continue
        fused = fuse_matrix({m: pooled[m][mask] for m in mods}, fc)
        reports[key] = _evaluate(key, fused, y)

    summary = {
        "n_samples": n,
        "n_high": dataset.n_high,
        "n_low": dataset.n_low,
        "users": dataset.users,
        "tau_L": dataset.thresholds.tau_L,
        "tau_H": dataset.thresholds.tau_H,
        "window_seconds": dataset.window_seconds,
        "fps": dataset.fps,
    }
    return ExperimentResult(config, reports, folds, pooled, dataset.y.copy(), summary)


def write_results(result: ExperimentResult, out_dir, save_models: bool = True) -> Path:
    """``report.json``, ``roc_<subset>.csv``, ``pdf_<subset>.csv`` and per-fold models."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "report.json", dump_json(result.to_json()))
    for key, r in result.reports.items():
        atomic_write_text(out / f"roc_{key}.csv", r.roc.to_csv())
        atomic_write_text(out / f"pdf_{key}.csv", densities_csv(r.density_high, r.density_low))
    if save_models:
        for f in result.folds:
            for m, tm in f.modules.items():
                atomic_write_text(out / "folds" / f.test_user / f"model_{m.value}.json", dump_json(tm.to_json()))
    return out


def load_fold_model(path) -> TrainedModule:
    return TrainedModule.from_json(json.loads(Path(path).read_text()))
