"""Binary checkpoint container and embedding-model serialization.

Layout: magic bytes ``FTGKGE1\\n``, a 4-byte little-endian metadata length,
that many bytes of UTF-8 JSON metadata, then each matrix section as row-major
little-endian float32.  Round-tripping a float32 model is bit-exact.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .models import EmbeddingModel, ModelError

MAGIC = b"FTGKGE1\n"


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


def write_container(path, meta: dict, matrices: list[np.ndarray]):
    """Write metadata plus float32 matrix sections in order."""
    meta_bytes = json.dumps(meta).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        for mat in matrices:
            fh.write(np.ascontiguousarray(mat, dtype="<f4").tobytes())


def read_container(path, shapes_from_meta) -> tuple[dict, list[np.ndarray]]:
    """Read a container; ``shapes_from_meta(meta)`` gives the section shapes.

    Raises :class:`CheckpointError` with distinct messages for a magic
    mismatch, a truncated file (expected vs actual byte counts), and trailing
    bytes beyond what the metadata describes.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"magic mismatch: {data[:len(MAGIC)]!r} != {MAGIC!r}")
    offset = len(MAGIC)
    if len(data) < offset + 4:
        raise CheckpointError(f"truncated header: expected {offset + 4} bytes, file has {len(data)}")
    (meta_len,) = struct.unpack_from("<I", data, offset)
    offset += 4
    if len(data) < offset + meta_len:
        raise CheckpointError(
            f"truncated metadata: expected {offset + meta_len} bytes, file has {len(data)}"
        )
    try:
        meta = json.loads(data[offset : offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable metadata: {exc}") from exc
    offset += meta_len

    try:
        shapes = shapes_from_meta(meta)
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"metadata missing field: {exc}") from exc
    matrices = []
    for shape in shapes:
        nbytes = int(np.prod(shape)) * 4
        if len(data) < offset + nbytes:
            raise CheckpointError(
                f"truncated matrix section: expected {offset + nbytes} bytes, "
                f"file has {len(data)}"
            )
        flat = np.frombuffer(data, dtype="<f4", count=int(np.prod(shape)), offset=offset)
        matrices.append(flat.reshape(shape).copy())
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(
            f"dimension mismatch with metadata: {len(data) - offset} trailing bytes"
        )
    return meta, matrices


def save_checkpoint(model: EmbeddingModel, path):
    """Serialize an embedding model; float matrices are stored as float32."""
    meta = {
        "kind": model.kind,
        "n_entities": model.n_entities,
        "n_relations": model.n_relations,
        "d_s": model.d_s,
        "gamma": model.gamma,
        "seed": model.seed,
    }
    write_container(path, meta, [model.entity_matrix, model.relation_matrix])


def load_checkpoint(path) -> EmbeddingModel:
    def shapes(meta):
        d_s = meta["d_s"]
        d_r = d_s // 2 if meta["kind"] == "rotate" else d_s
        return [(meta["n_entities"], d_s), (meta["n_relations"], d_r)]

    meta, (entity, relation) = read_container(path, shapes)
    try:
        return EmbeddingModel(meta["kind"], entity, relation, meta["gamma"], meta["seed"])
    except ModelError as exc:
        raise CheckpointError(f"dimension mismatch with metadata: {exc}") from exc
