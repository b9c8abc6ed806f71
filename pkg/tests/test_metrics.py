import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from affectfusion.data.types import AnnotationTrack
from affectfusion.errors import ValidationError
from affectfusion.metrics import ccc, pearson, rmse, score_arrays, score_tracks


def test_ccc_examples():
    assert ccc([1, 2, 3], [1, 2, 3]) == pytest.approx(1.0, abs=1e-12)
    assert ccc([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0, abs=1e-12)
    # cov = 2/3, var = 2/3 each, mean gap 1: 2*(2/3) / (4/3 + 1) = 4/7
    assert ccc([1, 2, 3], [2, 3, 4]) == pytest.approx(4 / 7, abs=1e-12)


def test_ccc_degenerate_and_errors():
    assert ccc([2, 2, 2], [2, 2, 2]) == 0.0
    assert ccc([1, 1, 1], [1, 2, 3]) == 0.0
    with pytest.raises(ValidationError, match="length mismatch"):
        ccc([1, 2], [1, 2, 3])
    with pytest.raises(ValidationError, match="at least 2"):
        ccc([1], [1])


def test_pearson_examples():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-12)
    for c in (-5.0, 0.0, 3.25):
        assert pearson([1, 2, 3], np.array([1, 2, 3]) + c) == pytest.approx(1.0, abs=1e-12)
    # direct evaluation: centred x = (-1.5,-.5,.5,1.5), y = (-1.5,.5,-.5,1.5); sum xy = 4, sum x^2 = sum y^2 = 5
    assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)
    assert pearson([1, 1, 1], [1, 2, 3]) == 0.0


def test_rmse_examples():
    assert rmse([0.3, 0.1], [0.3, 0.1]) == 0.0
    assert rmse([0, 0], [1, 1]) == pytest.approx(1.0)
    assert rmse([0, 2], [1, 1]) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        rmse([0], [1, 2])


pairs = st.integers(2, 40).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-5, 5), min_size=n, max_size=n),
        st.lists(st.floats(-5, 5), min_size=n, max_size=n),
    )
)


@settings(max_examples=200, deadline=None)
@given(pairs)
def test_ccc_symmetric_and_bounded_by_pearson(xy):
    x, y = map(np.array, xy)
    assert ccc(x, y) == pytest.approx(ccc(y, x), abs=1e-12)
    assert abs(ccc(x, y)) <= abs(pearson(x, y)) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=40))
def test_ccc_self_is_one(x):
    x = np.array(x)
    assume(np.ptp(x) > 1e-6)
    assert ccc(x, x) == pytest.approx(1.0, abs=1e-12)


def test_ccc_affine_invariance(rng):
    for _ in range(200):
        n = rng.integers(2, 50)
        x, y = rng.normal(size=n), rng.normal(size=n)
        a, b = rng.uniform(0.1, 10), rng.normal(scale=5)
        assert ccc(a * x + b, a * y + b) == pytest.approx(ccc(x, y), abs=1e-9)


def test_pearson_independent_scaling(rng):
    for _ in range(200):
        n = rng.integers(3, 50)
        x, y = rng.normal(size=n), rng.normal(size=n)
        a, c = rng.uniform(0.1, 10, 2)
        b, d = rng.normal(size=2)
        assert pearson(a * x + b, c * y + d) == pytest.approx(pearson(x, y), abs=1e-9)


def test_score_report_csv(rng):
    gold = rng.uniform(-1, 1, (50, 3))
    rep = score_arrays(gold, gold)
    lines = rep.csv_lines()
    assert lines[0] == "dimension,ccc,pearson,rmse,n"
    assert [l.split(",")[0] for l in lines[1:]] == ["arousal", "valence", "liking"]
    assert all(abs(s.ccc - 1) < 1e-12 and s.rmse == 0 for s in rep.scores.values())
    assert rep.to_dict()["n"] == 50


def test_score_tracks_aligns_by_time():
    ts = np.arange(4.0)
    gold = AnnotationTrack.from_matrix(ts, np.column_stack([ts / 4, -ts / 4, ts / 8]))
    # predictions sampled twice as densely; nearest-neighbour picks the gold instants
    fine = np.arange(0, 4, 0.5)
    pred = AnnotationTrack.from_matrix(fine, np.column_stack([fine / 4, -fine / 4, fine / 8]))
    rep = score_tracks([(gold, pred)])
    assert rep.n == 4
    assert rep.scores["valence"].ccc == pytest.approx(1.0)
