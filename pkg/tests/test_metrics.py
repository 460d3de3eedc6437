import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hgnn_ima.metrics import f1_scores


class TestF1:
    def test_hand_case(self):
        # per-class F1: c0 = 1, c1 = 0, c2 = 0
        micro, macro = f1_scores([0, 1, 2, 0], [0, 2, 1, 0])
        assert micro == 0.5
        assert macro == pytest.approx((1.0 + 0.0 + 0.0) / 3)

    def test_perfect(self):
        assert f1_scores([2, 0, 1], [2, 0, 1]) == (1.0, 1.0)

    def test_absent_category_excluded(self):
        # categories 2..9 never appear, so they do not drag the mean down
        assert f1_scores([0, 1], [0, 1])[1] == 1.0
        assert f1_scores([0, 0], [0, 1]) == (0.5, pytest.approx((2 / 3 + 0) / 2))

    def test_errors(self):
        with pytest.raises(ValueError, match="empty"):
            f1_scores([], [])
        with pytest.raises(ValueError, match="length"):
            f1_scores([0, 1], [0])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=40))
    def test_matches_sklearn(self, pairs):
        sk = pytest.importorskip("sklearn.metrics")
        y, p = np.array(pairs).T
        micro, macro = f1_scores(y, p)
        labels = np.union1d(y, p)
        assert micro == pytest.approx(sk.f1_score(y, p, average="micro"))
        assert macro == pytest.approx(sk.f1_score(y, p, average="macro", labels=labels, zero_division=0))
