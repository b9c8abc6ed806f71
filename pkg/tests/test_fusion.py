import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affectfusion import DIMENSIONS
from affectfusion.data.types import AnnotationTrack
from affectfusion.errors import ValidationError
from affectfusion.fusion import FusionWeights, fuse_predictions, search_weights, simplex_grid
from affectfusion.metrics import ccc


def _track(m, ts=None):
    m = np.asarray(m, dtype=float)
    ts = np.arange(len(m), dtype=float) if ts is None else ts
    return AnnotationTrack.from_matrix(ts, m)


def _weights(mods, vec):
    return FusionWeights(tuple(mods), {d: vec for d in DIMENSIONS})


def _noisy(gold, scale, seed):
    r = np.random.default_rng(seed)
    return _track(np.clip(gold.as_matrix() + r.normal(scale=scale, size=(len(gold), 3)), -1, 1))


# ------------------------------------------------------------------- fuse


def test_fuse_one_hot(rng):
    tracks = [_track(rng.uniform(-1, 1, (10, 3))) for _ in range(3)]
    out = fuse_predictions(tracks, _weights("abc", [0.0, 1.0, 0.0]))
    np.testing.assert_array_equal(out.as_matrix(), tracks[1].as_matrix())


def test_fuse_identical_tracks(rng):
    t = _track(rng.uniform(-1, 1, (10, 3)))
    out = fuse_predictions([t, t], _weights("ab", [0.3, 0.7]))
    np.testing.assert_allclose(out.as_matrix(), t.as_matrix(), atol=1e-15)


def test_fuse_hand_example():
    a, b = _track([[0.2, 0.2, 0.2]]), _track([[0.6, 0.6, 0.6]])
    out = fuse_predictions([a, b], _weights("ab", [0.25, 0.75]))
    np.testing.assert_allclose(out.as_matrix(), [[0.5, 0.5, 0.5]], atol=1e-15)


def test_fuse_permutation_equivariant(rng):
    tracks = [_track(rng.uniform(-1, 1, (8, 3))) for _ in range(3)]
    w = np.array([0.2, 0.5, 0.3])
    perm = [2, 0, 1]
    a = fuse_predictions(tracks, _weights("abc", w))
    b = fuse_predictions([tracks[i] for i in perm], _weights("cab", w[perm]))
    np.testing.assert_allclose(a.as_matrix(), b.as_matrix(), atol=1e-15)


def test_fuse_errors(rng):
    a = _track(rng.uniform(-1, 1, (4, 3)))
    b = _track(rng.uniform(-1, 1, (4, 3)), ts=np.arange(4) + 0.5)
    with pytest.raises(ValidationError, match="timestamps"):
        fuse_predictions([a, b], _weights("ab", [0.5, 0.5]))
    with pytest.raises(ValidationError, match="weights"):
        fuse_predictions([a], _weights("ab", [0.5, 0.5]))


def test_weights_validation_and_json():
    with pytest.raises(ValidationError):
        _weights("ab", [0.6, 0.6])
    with pytest.raises(ValidationError):
        _weights("ab", [1.2, -0.2])
    w = FusionWeights(("x", "y"), {"arousal": [1, 0], "valence": [0.5, 0.5], "liking": [0.25, 0.75]})
    doc = w.to_json()
    assert doc["liking"] == {"x": 0.25, "y": 0.75}
    back = FusionWeights.from_json(doc)
    assert back.modalities == ("x", "y")
    np.testing.assert_array_equal(back.weights["valence"], [0.5, 0.5])


# ------------------------------------------------------------------ search


def test_simplex_grid_invariants():
    g = simplex_grid(3, 0.05)
    assert len(g) == 231  # C(22, 2)
    assert np.all(g >= 0)
    np.testing.assert_allclose(g.sum(axis=1), 1.0, atol=1e-12)
    assert [tuple(r) for r in g] == sorted(tuple(r) for r in g)
    assert len({tuple(r) for r in g}) == len(g)
    with pytest.raises(ValidationError):
        simplex_grid(2, 0.3)


def test_search_single_modality(rng):
    gold = _track(rng.uniform(-1, 1, (40, 3)))
    pred = _noisy(gold, 0.3, 1)
    w, score = search_weights([pred], gold, modalities=["only"])
    for d in DIMENSIONS:
        assert list(w.weights[d]) == [1.0]
        assert score[d] == pytest.approx(ccc(gold.dimension(d), pred.dimension(d)), abs=1e-12)


def test_search_perfect_modality_dominates(rng):
    gold = _track(rng.uniform(-1, 1, (60, 3)))
    others = [_track(rng.uniform(-1, 1, (60, 3))) for _ in range(2)]
    w, score = search_weights([others[0], gold, others[1]], gold)
    for d in DIMENSIONS:
        np.testing.assert_array_equal(w.weights[d], [0.0, 1.0, 0.0])
        assert score[d] == pytest.approx(1.0, abs=1e-12)


def _oracle_sweep(preds, gold, step):
    """Independent sweep: itertools over integer compositions, metric from metrics.ccc."""
    n = int(round(1 / step))
    m = len(preds)
    best, best_w = -np.inf, None
    for combo in itertools.product(range(n + 1), repeat=m):
        if sum(combo) != n:
            continue
        w = np.array(combo) / n
        score = ccc(gold, sum(wi * p for wi, p in zip(w, preds)))
        if score > best + 1e-12:
            best, best_w = score, w
    return best_w, best


@pytest.mark.parametrize("seed", range(5))
def test_search_matches_oracle(seed):
    r = np.random.default_rng(seed)
    t = np.arange(300) * 0.1
    gold = _track(np.tanh(np.column_stack([np.sin(t * f) for f in (0.3, 0.5, 0.7)])))
    tracks = [_noisy(gold, s, seed * 10 + i) for i, s in enumerate(r.uniform(0.2, 0.6, 3))]
    w, score = search_weights(tracks, gold, step=0.05)
    for d in DIMENSIONS:
        ow, os = _oracle_sweep([tr.dimension(d) for tr in tracks], gold.dimension(d), 0.05)
        np.testing.assert_allclose(w.weights[d], ow, atol=1e-12)
        assert score[d] == pytest.approx(os, abs=1e-12)
        best_single = max(ccc(gold.dimension(d), tr.dimension(d)) for tr in tracks)
        assert score[d] >= best_single - 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4))
def test_search_dominance_property(seed, m):
    r = np.random.default_rng(seed)
    gold = _track(r.uniform(-1, 1, (30, 3)))
    tracks = [_noisy(gold, r.uniform(0.1, 2.0), seed + i) for i in range(m)]
    w, score = search_weights(tracks, gold, step=0.1)
    for d in DIMENSIONS:
        best_single = max(ccc(gold.dimension(d), tr.dimension(d)) for tr in tracks)
        assert score[d] >= best_single - 1e-12
        assert np.all(w.weights[d] >= 0) and abs(w.weights[d].sum() - 1) <= 1e-9
        fused = fuse_predictions(tracks, w)
        assert ccc(gold.dimension(d), fused.dimension(d)) == pytest.approx(score[d], abs=1e-9)


def test_search_errors(rng):
    gold = _track(rng.uniform(-1, 1, (10, 3)))
    with pytest.raises(ValidationError):
        search_weights([], gold)
    with pytest.raises(ValidationError, match="aligned"):
        search_weights([_track(rng.uniform(-1, 1, (9, 3)))], gold)
