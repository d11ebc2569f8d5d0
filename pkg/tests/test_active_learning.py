import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from docconf.active_learning import Policy, select, simulate
from docconf.estimators import ConfidenceScore, Estimator
from docconf.synthetic import SyntheticCorpus, SyntheticDetectorConfig, make_corpus


def scores(values: dict, higher=True):
    return [ConfidenceScore(k, "x", v, higher) for k, v in values.items()]


ABC = {"a": 0.9, "b": 0.1, "c": 0.5}


class TestSelect:
    def test_budget(self):
        assert set(select(scores(ABC), Policy("budget", 2)).ids) == {"b", "c"}

    def test_threshold(self):
        assert select(scores(ABC), Policy("threshold", 0.2)).ids == ("b",)

    def test_threshold_is_strict(self):
        assert select(scores(ABC), Policy("threshold", 0.1)).ids == ()

    def test_dov_direction(self):
        assert select(scores({"a": 0.0, "b": 17.36}, higher=False), Policy("threshold", 10)).ids == ("b",)

    def test_ties_by_id(self):
        s = scores({"z": 0.3, "m": 0.3, "a": 0.3, "q": 0.9})
        assert select(s, Policy("budget", 2)).ids == ("a", "m")

    def test_budget_exceeds_pool(self, caplog):
        with caplog.at_level(logging.WARNING):
            sel = select(scores(ABC), Policy("budget", 7))
        assert sel.status == "budget-exceeds-pool" and len(sel.ids) == 3
        assert "exceeds" in caplog.text

    def test_empty_pool(self):
        with pytest.raises(ValueError):
            select([], Policy("budget", 1))

    @given(st.dictionaries(st.text("abcdef", min_size=1, max_size=3), st.floats(0, 1), min_size=1), st.integers(0, 10))
    def test_budget_size_and_repeatable(self, values, k):
        s = scores(values)
        first = select(s, Policy("budget", k))
        assert len(first.ids) == min(k, len(values))
        assert select(list(reversed(s)), Policy("budget", k)) == first


class TestPolicy:
    def test_parse(self):
        assert Policy.parse("threshold:0.2") == Policy("threshold", 0.2)
        assert Policy.parse("budget:10") == Policy("budget", 10)
        assert str(Policy.parse("budget:10")) == "budget:10"

    @pytest.mark.parametrize("text", ["budget", "size:3", "budget:-1", "budget:1.5"])
    def test_bad(self, text):
        with pytest.raises(ValueError):
            Policy.parse(text)


@pytest.fixture(scope="module")
def corpus():
    return make_corpus(12, 6, SyntheticDetectorConfig(), seed=3)


def test_constant_quality_keeps_test_map(corpus):
    det = SyntheticDetectorConfig(q_min=0.6, q_max=0.6)
    state = simulate(corpus, det, Estimator.PCE, Policy("budget", 3), 3, seed=3)
    assert len({row.test_map for row in state.log}) == 1


def test_whole_pool_in_one_step(corpus):
    state = simulate(corpus, SyntheticDetectorConfig(), "random", Policy("budget", 12), 3, seed=3)
    assert len(state.labeled) == 12 and state.unlabeled == []
    assert state.log[1].cumulative_images == 12 and len(state.log) == 2


@pytest.mark.parametrize("estimator", ["dap", "dov", "pce", "oracle", "random"])
def test_invariants_and_determinism(corpus, estimator):
    det = SyntheticDetectorConfig(ensemble_size=4)
    a = simulate(corpus, det, estimator, Policy("budget", 4), 2, seed=3)
    b = simulate(corpus, det, estimator, Policy("budget", 4), 2, seed=3)
    assert a.log == b.log
    assert not set(a.labeled) & set(a.unlabeled)
    assert sorted(a.labeled + a.unlabeled) == sorted(g.image_id for g in corpus.pool)
    cumulative = [r.cumulative_images for r in a.log]
    assert cumulative == sorted(cumulative)
    earlier = set()
    for row in a.log[1:]:
        assert not set(row.selected) & earlier
        earlier |= set(row.selected)


def test_threshold_policy(corpus):
    state = simulate(corpus, SyntheticDetectorConfig(ensemble_size=3), "dov", Policy("threshold", 0.0), 2, seed=3)
    assert all(r.n_selected >= 0 for r in state.log)


def test_errors(corpus):
    with pytest.raises(ValueError):
        simulate(SyntheticCorpus((), corpus.test), SyntheticDetectorConfig(), "dap", Policy("budget", 1), 1)
    with pytest.raises(ValueError):
        simulate(corpus, SyntheticDetectorConfig(), "random", Policy("threshold", 0.5), 1)
