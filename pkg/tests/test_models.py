import numpy as np
import pytest

from ftg.models import (
    MODEL_KINDS,
    EmbeddingModel,
    ModelError,
    init_model,
    relation_feature,
    score,
    score_all,
)


def reference_score(model, h_id, r_id, t_id):
    """Straight-line re-implementation of each scoring formula."""
    h = model.entity_matrix[h_id].astype(np.float64)
    r = model.relation_matrix[r_id].astype(np.float64)
    t = model.entity_matrix[t_id].astype(np.float64)
    if model.kind == "transe":
        return -np.linalg.norm(h + r - t)
    if model.kind == "distmult":
        return float(np.sum(h * r * t))
    if model.kind == "complex":
        half = len(h) // 2
        hc = h[:half] + 1j * h[half:]
        rc = r[:half] + 1j * r[half:]
        tc = t[:half] + 1j * t[half:]
        return float(np.real(np.sum(hc * rc * np.conj(tc))))
    if model.kind == "rotate":
        half = len(h) // 2
        hc = h[:half] + 1j * h[half:]
        tc = t[:half] + 1j * t[half:]
        rc = np.exp(1j * r)
        return float(model.gamma - np.sum(np.abs(hc * rc - tc)))
    raise AssertionError(model.kind)


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_score_matches_reference_formula(kind):
    model = init_model(kind, 12, 5, 16, gamma=4.0, seed=42, dtype=np.float64)
    rng = np.random.default_rng(7)
    for _ in range(100):
        h, t = rng.integers(0, 12, size=2)
        r = int(rng.integers(0, 5))
        got = score(model, int(h), r, int(t))
        want = reference_score(model, int(h), r, int(t))
        assert got == pytest.approx(want, rel=1e-6, abs=1e-9)


def test_transe_exact_translation():
    entity = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=np.float32)
    relation = np.array([[1.0, 0.0]], dtype=np.float32)
    model = EmbeddingModel("transe", entity, relation, gamma=1.0)
    assert score(model, 0, 0, 1) == 0.0
    assert all(score(model, 0, 0, 1) >= score(model, 0, 0, t) for t in range(2))


def test_rotate_identity_rotation():
    entity = np.tile(np.array([[0.3, -0.2, 0.5, 0.1]], dtype=np.float32), (3, 1))
    relation = np.zeros((1, 2), dtype=np.float32)
    model = EmbeddingModel("rotate", entity, relation, gamma=2.5)
    assert score(model, 0, 0, 0) == pytest.approx(2.5)
    # h == t with identity rotation attains the maximum over all tails
    scores = score_all(model, "tail", 0, 0)
    assert scores.max() == pytest.approx(2.5)


@pytest.mark.parametrize("kind", MODEL_KINDS)
@pytest.mark.parametrize("direction", ["tail", "head"])
def test_score_all_matches_individual_calls(kind, direction):
    model = init_model(kind, 9, 4, 8, gamma=3.0, seed=5)
    batch = score_all(model, direction, 2, 1)
    assert batch.shape == (9,)
    for e in range(9):
        if direction == "tail":
            one = score(model, 2, 1, e)
        else:
            one = score(model, e, 1, 2)
        assert batch[e] == pytest.approx(one, rel=1e-6, abs=1e-6)


def test_score_all_argmax_matches_loop(small_model):
    batch = score_all(small_model, "tail", 0, 0)
    loop = np.array([score(small_model, 0, 0, e) for e in range(small_model.n_entities)])
    assert int(batch.argmax()) == int(loop.argmax())


def test_id_out_of_range():
    model = init_model("transe", 4, 2, 8)
    with pytest.raises(ModelError, match="out of range"):
        score(model, 4, 0, 0)
    with pytest.raises(ModelError, match="out of range"):
        score(model, 0, 2, 0)
    with pytest.raises(ModelError, match="out of range"):
        score_all(model, "tail", 0, 5)


def test_dimension_validation():
    with pytest.raises(ModelError, match="even"):
        init_model("rotate", 4, 2, 7)
    with pytest.raises(ModelError, match="relation dimension"):
        EmbeddingModel("rotate", np.zeros((4, 8), np.float32), np.zeros((2, 8), np.float32), 1.0)
    with pytest.raises(ModelError, match="non-finite"):
        EmbeddingModel(
            "transe", np.full((2, 4), np.nan, np.float32), np.zeros((1, 4), np.float32), 1.0
        )
    with pytest.raises(ModelError, match="kind"):
        init_model("conve", 4, 2, 8)


def test_rotate_relation_unit_modulus():
    model = init_model("rotate", 4, 3, 8, seed=0)
    feat = relation_feature(model, 1)
    half = len(feat) // 2
    assert np.allclose(feat[:half] ** 2 + feat[half:] ** 2, 1.0, atol=1e-6)


def test_relation_feature_width_uniform():
    for kind in MODEL_KINDS:
        model = init_model(kind, 4, 3, 8, seed=0)
        assert relation_feature(model, 0).shape == (8,)
