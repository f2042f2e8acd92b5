import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from attnfuse.errors import InvalidParams, MissingScore
from attnfuse.fusion import (
    DEFAULT_SWEEP_MODULES,
    FusionConfig,
    WeightedSumFusion,
    enumerate_combinations,
    fuse,
    fuse_matrix,
    parse_subset,
    subset_key,
)
from attnfuse.ingest import ModuleId
from attnfuse.metrics import eer, roc

FOUR = ("eb", "hp", "ear", "expr")
unit = st.floats(0, 1, allow_nan=False)
weight = st.floats(0.01, 10, allow_nan=False)


class TestFuse:
    def test_equal_weights_mean(self):
        cfg = FusionConfig(FOUR)
        scores = {"eb": 0.2, "hp": 0.4, "ear": 0.6, "expr": 0.8}
        assert fuse(scores, cfg) == pytest.approx(0.5)

    def test_one_hot_weight(self):
        cfg = FusionConfig(["eb", "hp"], {"eb": 1, "hp": 0})
        assert fuse({"eb": 0.37, "hp": 0.9}, cfg) == 0.37

    @given(unit, st.lists(weight, min_size=4, max_size=4))
    def test_constant_scores(self, c, w):
        cfg = FusionConfig(FOUR, dict(zip(FOUR, w)))
        assert fuse({m: c for m in FOUR}, cfg) == pytest.approx(c, abs=1e-12)

    def test_missing_score(self):
        with pytest.raises(MissingScore):
            fuse({"eb": 0.5}, FusionConfig(["eb", "hp"]))

    @pytest.mark.parametrize("w", [{"eb": -1, "hp": 1}, {"eb": 0, "hp": 0}, {"eb": 1, "hd": 1}])
    def test_bad_weights(self, w):
        with pytest.raises(InvalidParams):
            FusionConfig(["eb", "hp"], w)


class TestCombinations:
    def test_singleton(self):
        assert enumerate_combinations(["eb"]) == [(ModuleId.EB,)]

    def test_four_modules(self):
        combos = enumerate_combinations(FOUR)
        sizes = [len(c) for c in combos]
        assert len(combos) == 15
        assert [sizes.count(k) for k in (1, 2, 3, 4)] == [4, 6, 4, 1]
        assert sizes == sorted(sizes)

    def test_pair(self):
        assert [subset_key(c) for c in enumerate_combinations(["eb", "hp"])] == ["eb", "hp", "eb+hp"]

    def test_hd_not_in_default_sweep(self):
        assert ModuleId.HD not in DEFAULT_SWEEP_MODULES

    def test_keys(self):
        assert subset_key(["HP", "eb", "expr"]) == "eb+expr+hp"
        assert parse_subset("hp+eb") == (ModuleId.EB, ModuleId.HP)
        with pytest.raises(ValueError, match="valid ids"):
            parse_subset("eb+xyz")


@given(st.lists(unit, min_size=3, max_size=3), st.lists(weight, min_size=3, max_size=3), st.floats(0.1, 100))
def test_weight_scaling_invariance(scores, w, k):
    mods = ("eb", "hp", "expr")
    s = dict(zip(mods, scores))
    a = fuse(s, FusionConfig(mods, dict(zip(mods, w))))
    b = fuse(s, FusionConfig(mods, {m: k * v for m, v in zip(mods, w)}))
    assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


@given(st.lists(unit, min_size=3, max_size=3), st.lists(weight, min_size=3, max_size=3), st.integers(0, 2), st.floats(0, 1))
def test_monotone_in_each_input(scores, w, i, bump):
    mods = ("eb", "hp", "expr")
    cfg = FusionConfig(mods, dict(zip(mods, w)))
    raised = list(scores)
    raised[i] = min(1.0, raised[i] + bump)
    assert fuse(dict(zip(mods, raised)), cfg) >= fuse(dict(zip(mods, scores)), cfg) - 1e-15


@given(st.integers(0, 10_000))
def test_singleton_bit_exact(seed):
    rng = np.random.default_rng(seed)
    s = rng.random(50)
    y = np.where(rng.random(50) < 0.5, 1, -1)
    y[:2] = [1, -1]
    fused = fuse_matrix({ModuleId.EB: s}, FusionConfig(["eb"]))
    assert np.array_equal(fused, s)
    assert eer(roc(fused, y)) == eer(roc(s, y))


def test_transformer():
    X = np.array([[0.2, 0.4, 0.6], [1.0, 0.0, 0.5]])
    f = WeightedSumFusion(modules=("eb", "hp", "expr"), weights=(2, 1, 1)).fit(X)
    assert np.allclose(f.transform(X), [0.35, 0.625])
    assert f.get_params()["weights"] == (2, 1, 1)
    with pytest.raises(MissingScore):
        f.transform(X[:, :2])
