import json
import warnings

import numpy as np
import pytest

from attnfuse import protocol
from attnfuse._files import dump_json
from attnfuse.errors import InvalidParams, LeakageError, TooFewUsers
from attnfuse.ingest import ModuleId
from attnfuse.protocol import (
    ExperimentConfig,
    check_leakage,
    load_fold_model,
    loo_split,
    n_jobs_from_env,
    run_experiment,
    write_results,
)
from attnfuse.synthgen import generate_sessions, preset
from attnfuse.windowing import WindowLabeler

from .conftest import toy_dataset

FAST = dict(C_grid=(1e-3, 1e-1, 10.0))


class TestLooSplit:
    def test_three_users(self):
        folds = loo_split(["a", "b", "c"])
        assert [t for _, t in folds] == ["a", "b", "c"]
        assert all(len(tr) == 2 and t not in tr for tr, t in folds)

    def test_thirty_eight_users(self):
        assert len(loo_split([f"s{i}" for i in range(38)])) == 38

    def test_one_user(self):
        with pytest.raises(TooFewUsers):
            loo_split(["a"])


class TestConfig:
    def test_canonical_subsets(self):
        cfg = ExperimentConfig(subsets=["hp+eb", ("expr",)])
        assert cfg.subsets == ["eb+hp", "expr"]
        assert cfg.modules == [ModuleId.EB, ModuleId.EXPR, ModuleId.HP]

    @pytest.mark.parametrize("kw", [dict(p_L=50, p_H=50), dict(threshold_mode="oracle"), dict(subsets=[])])
    def test_invalid(self, kw):
        with pytest.raises(InvalidParams):
            ExperimentConfig(**kw)

    def test_threads_env(self, monkeypatch):
        monkeypatch.setenv("ATTNFUSE_THREADS", "3")
        assert n_jobs_from_env() == 3
        monkeypatch.setenv("ATTNFUSE_THREADS", "0")
        assert n_jobs_from_env() >= 1
        monkeypatch.setenv("ATTNFUSE_THREADS", "x")
        with pytest.raises(InvalidParams):
            n_jobs_from_env()


class TestRunExperiment:
    def test_informative_module(self):
        ds = toy_dataset(signal={"eb": 3.0, "hp": 0.0})
        res = run_experiment(ExperimentConfig(subsets=["eb", "hp", "eb+hp"], **FAST), ds, n_jobs=1)
        assert res.reports["eb"].eer <= 0.02
        assert [r.subset for r in res.rows()][:2] == ["eb", "hp"]

    def test_shuffled_labels_null(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            base = toy_dataset(n_users=6, per_user=300, signal={"eb": 2.0, "hp": 2.0}, seed=seed)
            ds = toy_dataset(n_users=6, per_user=300, signal={"eb": 0.0, "hp": 0.0}, seed=seed, labels=rng.permutation(base.y))
            ds.X = base.X  # informative about the original labels, not the shuffled ones
            res = run_experiment(ExperimentConfig(subsets=["eb", "hp", "eb+hp"], **FAST), ds, n_jobs=1)
            for key, r in res.reports.items():
                assert 0.45 <= r.eer <= 0.55, (seed, key, r.eer)

    def test_deterministic_json(self):
        ds = toy_dataset(signal={"eb": 1.0, "hp": 0.5})
        cfg = ExperimentConfig(subsets=["eb", "eb+hp"], **FAST)
        a = dump_json(run_experiment(cfg, ds, n_jobs=1).to_json())
        b = dump_json(run_experiment(cfg, ds, n_jobs=2).to_json())
        assert a == b

    def test_calibrated_scores_in_unit_interval(self):
        ds = toy_dataset(signal={"eb": 1.0, "hp": 0.0})
        res = run_experiment(ExperimentConfig(subsets=["eb"], **FAST), ds, n_jobs=1)
        s = res.scores[ModuleId.EB]
        assert np.all((s > 0) & (s < 1))
        cal = res.reports["eb"].calibrated
        assert cal["tau"] == 0.5 and 0 <= cal["accuracy"] <= 1

    def test_failed_folds_are_skipped_with_warning(self):
        # each user holds one class only, so every training set in a two-user run is single-class
        y = np.r_[np.ones(30), -np.ones(30)]
        ds = toy_dataset(n_users=2, per_user=30, signal={"eb": 1.0}, labels=y)
        with pytest.warns(UserWarning, match="failed"):
            res = run_experiment(ExperimentConfig(subsets=["eb"], **FAST), ds, n_jobs=1)
        assert all(f.failures for f in res.folds)
        assert res.reports == {}

    def test_missing_module(self):
        ds = toy_dataset(signal={"eb": 1.0})
        with pytest.raises(InvalidParams):
            run_experiment(ExperimentConfig(subsets=["hp"]), ds, n_jobs=1)


class TestLeakage:
    def test_clean_run_passes(self):
        ds = toy_dataset(signal={"eb": 1.0})
        res = run_experiment(ExperimentConfig(subsets=["eb"], **FAST), ds, n_jobs=1)
        check_leakage(res.folds, ds)
        tested = np.concatenate([f.test_index for f in res.folds])
        assert np.array_equal(np.sort(tested), np.arange(len(ds)))

    def test_train_rows_include_test_user(self, monkeypatch):
        ds = toy_dataset(signal={"eb": 1.0})
        monkeypatch.setattr(protocol, "_train_rows", lambda dataset, train_users: np.arange(len(dataset)))
        with pytest.raises(LeakageError):
            run_experiment(ExperimentConfig(subsets=["eb"], **FAST), ds, n_jobs=1)

    def test_splitter_dropping_a_user(self):
        ds = toy_dataset(signal={"eb": 1.0})
        with pytest.raises(LeakageError):
            run_experiment(ExperimentConfig(subsets=["eb"], **FAST), ds, n_jobs=1, splitter=lambda d: loo_split(d)[1:])

    def test_splitter_training_on_test_user(self):
        ds = toy_dataset(signal={"eb": 1.0})

        def leaky(d):
            return [(tuple(d.users), t) for t in d.users]

        with pytest.raises(LeakageError):
            run_experiment(ExperimentConfig(subsets=["eb"], **FAST), ds, n_jobs=1, splitter=leaky)


def test_write_results(tmp_path):
    ds = toy_dataset(signal={"eb": 1.0, "hp": 0.3})
    res = run_experiment(ExperimentConfig(subsets=["eb", "eb+hp"], **FAST), ds, n_jobs=1)
    out = write_results(res, tmp_path / "res")
    report = json.loads((out / "report.json").read_text())
    assert set(report["subsets"]) == {"eb", "eb+hp"}
    assert (out / "roc_eb+hp.csv").read_text().startswith("threshold,fpr,tpr")
    assert (out / "pdf_eb.csv").read_text().startswith("x,density_high,density_low")
    tm = load_fold_model(out / "folds" / "u00" / "model_eb.json")
    X = ds.X[ModuleId.EB][ds.user_ids == "u00"]
    assert np.allclose(tm.score(X), res.scores[ModuleId.EB][ds.user_ids == "u00"])


@pytest.mark.slow
def test_uninformative_module_changes_eer_little():
    # recorded |EER(eb+hd) - EER(eb)| on easy, 6 users x 10 min, seeds 0-9:
    # 0.006 0.000 0.003 0.000 0.003 0.000 0.012 0.000 0.012 0.000
    deltas = []
    for seed in range(10):
        sessions = generate_sessions(preset("easy", n_users=6, duration_seconds=600, seed=seed))
        ds = WindowLabeler(modules=["eb", "hd"]).fit_transform(sessions)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = run_experiment(ExperimentConfig(subsets=["eb", "eb+hd"], seed=seed), ds, n_jobs=1)
        deltas.append(abs(res.reports["eb+hd"].eer - res.reports["eb"].eer))
    assert max(deltas) < 0.1, deltas
