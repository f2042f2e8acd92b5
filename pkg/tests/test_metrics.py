import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from attnfuse.errors import SingleClass, TooFewScores
from attnfuse.metrics import accuracy_at, densities_csv, eer, evaluate_scores, kde, max_accuracy, roc
from attnfuse.synthgen import brute_force_eer, brute_force_max_accuracy


def instance(draw_scores, draw_labels):
    s = np.asarray(draw_scores, dtype=float)
    y = np.where(np.asarray(draw_labels), 1, -1)
    return s, y


scores_labels = st.integers(2, 60).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-5, 5, allow_nan=False).map(lambda v: round(v, 2)), min_size=n, max_size=n),
        st.lists(st.booleans(), min_size=n, max_size=n).filter(lambda l: any(l) and not all(l)),
    )
)


class TestRoc:
    def test_separable_has_perfect_point(self):
        c = roc([0.9, 0.8, 0.1, 0.2], [1, 1, -1, -1])
        assert np.any((c.fpr == 0) & (c.tpr == 1))

    def test_identical_classes_on_diagonal(self):
        s = np.r_[np.arange(10.0), np.arange(10.0)]
        c = roc(s, np.r_[np.ones(10), -np.ones(10)])
        assert np.max(np.abs(c.fpr - c.tpr)) <= 1e-12

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(0)
        s = np.round(rng.normal(size=100), 1)
        y = np.where(rng.random(100) < 0.4, 1, -1)
        c = roc(s, y)
        distinct = np.unique(s)
        thresholds = [-np.inf] + [(a + b) / 2 for a, b in zip(distinct, distinct[1:])] + [np.inf]
        assert np.array_equal(c.thresholds, thresholds)
        for t, f, p in zip(thresholds, c.fpr, c.tpr):
            assert f == np.mean(s[y < 0] >= t)
            assert p == np.mean(s[y > 0] >= t)

    def test_single_class(self):
        with pytest.raises(SingleClass):
            roc([0.1, 0.2], [1, 1])

    def test_csv(self):
        text = roc([0.9, 0.1], [1, -1]).to_csv()
        assert text.splitlines()[0] == "threshold,fpr,tpr"
        assert len(text.splitlines()) == 4


class TestEer:
    def test_separable(self):
        assert eer(roc([0.9, 0.8, 0.1, 0.2], [1, 1, -1, -1]))[0] == 0

    def test_crossing_example(self):
        rate, tau = eer(roc([0.6, 0.4, 0.5, 0.3], [1, 1, -1, -1]))
        assert rate == 0.5
        assert 0.4 <= tau <= 0.5

    def test_identical_distributions(self):
        s = np.r_[np.arange(7.0), np.arange(7.0)]
        assert eer(roc(s, np.r_[np.ones(7), -np.ones(7)]))[0] == pytest.approx(0.5)


class TestMaxAccuracy:
    def test_example(self):
        acc, tau = max_accuracy([0.6, 0.4, 0.5, 0.3], [1, 1, -1, -1])
        assert acc == 0.75
        assert 0.3 < tau <= 0.4

    def test_separable(self):
        assert max_accuracy([0.9, 0.8, 0.1, 0.2], [1, 1, -1, -1])[0] == 1.0

    @given(st.integers(0, 10_000))
    def test_at_least_majority(self, seed):
        rng = np.random.default_rng(seed)
        y = rng.permutation(np.r_[np.ones(13), -np.ones(29)])
        acc, _ = max_accuracy(rng.normal(size=42), y)
        assert acc >= 29 / 42

    def test_threshold_achieves_accuracy(self):
        rng = np.random.default_rng(1)
        s, y = rng.normal(size=50), np.where(rng.random(50) < 0.5, 1, -1)
        acc, tau = max_accuracy(s, y)
        assert accuracy_at(s, y, tau) == acc


class TestKde:
    def test_point_mass(self):
        d = kde(np.full(20, 0.5))
        assert d.bandwidth == pytest.approx(1e-3)
        assert abs(d.x[np.argmax(d.density)] - 0.5) <= 0.5 / 511

    def test_symmetric(self):
        rng = np.random.default_rng(2)
        half = rng.uniform(0, 0.5, 50)
        d = kde(np.r_[half, 1 - half])
        assert np.allclose(d.density, d.density[::-1], atol=1e-9)

    def test_bimodal(self):
        rng = np.random.default_rng(3)
        x = np.where(rng.random(1000) < 0.5, rng.normal(0.3, 0.05, 1000), rng.normal(0.7, 0.05, 1000))
        d = kde(x)
        assert 0.95 <= d.integral() <= 1.05
        left = d.x[d.x < 0.5][np.argmax(d.density[d.x < 0.5])]
        right = d.x[d.x >= 0.5][np.argmax(d.density[d.x >= 0.5])]
        assert abs(left - 0.3) <= 0.05 and abs(right - 0.7) <= 0.05

    def test_too_few(self):
        with pytest.raises(TooFewScores):
            kde([0.4])

    def test_csv(self):
        a, b = kde([0.1, 0.2]), kde([0.8, 0.9])
        lines = densities_csv(a, b).splitlines()
        assert lines[0] == "x,density_high,density_low" and len(lines) == 513


@given(scores_labels)
def test_matches_brute_force(data):
    s, y = instance(*data)
    rate, tau = eer(roc(s, y))
    bf = brute_force_eer(s, y)
    assert rate == pytest.approx(bf.interpolated, abs=1e-9)
    assert tau == pytest.approx(bf.threshold, abs=1e-9)
    assert max_accuracy(s, y)[0] == pytest.approx(brute_force_max_accuracy(s, y), abs=1e-9)


@given(scores_labels)
def test_monotone_transform_invariance(data):
    s, y = instance(*data)
    t = s**3 + s
    assert abs(eer(roc(t, y))[0] - eer(roc(s, y))[0]) < 1e-12
    assert abs(max_accuracy(t, y)[0] - max_accuracy(s, y)[0]) < 1e-12


@given(scores_labels)
def test_eer_bounds_and_dominance(data):
    s, y = instance(*data)
    rate, tau = eer(roc(s, y))
    flipped, _ = eer(roc(-s, y))
    # an anti-informative score has EER above one half; negating it mirrors the rate
    assert 0.0 <= rate <= 1.0
    assert abs(rate + flipped - 1.0) <= 1e-12
    assert min(rate, flipped) <= 0.5 + 1e-12
    assert max_accuracy(s, y)[0] >= accuracy_at(s, y, tau) - 1e-12


@given(scores_labels, st.randoms(use_true_random=False))
def test_permutation_invariance(data, rnd):
    s, y = instance(*data)
    order = list(range(len(s)))
    rnd.shuffle(order)
    a = evaluate_scores(s, y)
    b = evaluate_scores(s[order], y[order])
    for k in ("eer", "tau_eer", "max_acc", "tau_maxacc", "auc"):
        assert a[k] == b[k]
