import numpy as np
import pytest

from ftg.adapter import init_surrogate, load_surrogate, save_surrogate
from ftg.checkpoint import MAGIC, CheckpointError, load_checkpoint, save_checkpoint
from ftg.models import init_model


@pytest.fixture()
def ckpt(tmp_path, small_model):
    path = tmp_path / "filter.ckpt"
    save_checkpoint(small_model, path)
    return path


def test_round_trip_bit_identical(tmp_path, small_model):
    path = tmp_path / "m.ckpt"
    save_checkpoint(small_model, path)
    loaded = load_checkpoint(path)
    assert loaded.kind == small_model.kind
    assert loaded.gamma == small_model.gamma
    assert loaded.seed == small_model.seed
    assert loaded.entity_matrix.tobytes() == small_model.entity_matrix.tobytes()
    assert loaded.relation_matrix.tobytes() == small_model.relation_matrix.tobytes()


def test_save_load_save_identical_bytes(tmp_path, small_model):
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(small_model, p1)
    save_checkpoint(load_checkpoint(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_magic_prefix(ckpt):
    assert ckpt.read_bytes()[: len(MAGIC)] == MAGIC


def test_corrupt_magic(ckpt):
    data = bytearray(ckpt.read_bytes())
    data[0] ^= 0xFF
    ckpt.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="magic mismatch"):
        load_checkpoint(ckpt)


def test_truncated_matrix_names_byte_counts(ckpt):
    data = ckpt.read_bytes()
    ckpt.write_bytes(data[: len(data) - 10])
    with pytest.raises(CheckpointError, match=rf"expected {len(data)} bytes.*has {len(data) - 10}"):
        load_checkpoint(ckpt)


def test_truncated_header(tmp_path):
    path = tmp_path / "short.ckpt"
    path.write_bytes(MAGIC + b"\x01")
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_trailing_bytes_dimension_mismatch(ckpt):
    ckpt.write_bytes(ckpt.read_bytes() + b"\x00\x00\x00\x00")
    with pytest.raises(CheckpointError, match="dimension mismatch"):
        load_checkpoint(ckpt)


def test_metadata_dimension_mismatch(tmp_path):
    # metadata claims an odd d_s for a rotate model
    from ftg.checkpoint import write_container

    path = tmp_path / "bad.ckpt"
    meta = {"kind": "rotate", "n_entities": 2, "n_relations": 1, "d_s": 3, "gamma": 1.0, "seed": 0}
    write_container(path, meta, [np.zeros((2, 3), np.float32), np.zeros((1, 1), np.float32)])
    with pytest.raises(CheckpointError, match="dimension mismatch"):
        load_checkpoint(path)


@pytest.mark.parametrize("kind", ["transe", "distmult", "complex", "rotate"])
def test_all_kinds_round_trip(tmp_path, kind):
    model = init_model(kind, 6, 3, 8, gamma=2.0, seed=4)
    path = tmp_path / f"{kind}.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    assert np.array_equal(loaded.entity_matrix, model.entity_matrix)
    assert np.array_equal(loaded.relation_matrix, model.relation_matrix)


def test_surrogate_round_trip(tmp_path):
    reranker = init_surrogate(d_s=16, d_x=32, seed=5)
    path = tmp_path / "surrogate.ckpt"
    save_surrogate(reranker, path)
    loaded = load_surrogate(path)
    assert loaded.seed == 5
    assert np.array_equal(loaded.W_p, reranker.W_p)
    assert np.array_equal(loaded.W_c, reranker.W_c)
    assert path.read_bytes()[: len(MAGIC)] == MAGIC


def test_surrogate_rejects_model_checkpoint(ckpt):
    with pytest.raises(CheckpointError):
        load_surrogate(ckpt)
