"""Soft graph token and the desk-scale surrogate reranker.

The graph token is the arithmetic mean of the structural embeddings of the
distinct entities in a serialized context (plus the center), mapped through a
trainable linear projection.  The surrogate reranker stands in for a text
generator at desk scale: it scores each candidate ``c`` with

    logit_c = < W_p [anchor || relation || pooled],  W_c e_c >

and is trained with softmax cross-entropy over the candidate set, target
index as label.  The embedding model stays frozen throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .checkpoint import CheckpointError, read_container, write_container
from .ego import SerializedContext, context_heuristic
from .filtering import CandidateSet, Query, topk_candidates
from .kg import KnowledgeGraph
from .models import EmbeddingModel, relation_feature


class AdapterError(ValueError):
    pass


@dataclass
class GraphToken:
    pooled: np.ndarray  # (d_s,) mean structural embedding
    projected: np.ndarray  # (d_x,)


@dataclass
class SurrogateReranker:
    W_p: np.ndarray  # (d_x, d_feat), d_feat = 3 * d_s
    W_c: np.ndarray  # (d_x, d_s)
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.W_p).all() and np.isfinite(self.W_c).all()):
            raise AdapterError("reranker matrices contain non-finite entries")
        if self.W_p.shape[0] != self.W_c.shape[0]:
            raise AdapterError(
                f"W_p and W_c disagree on d_x: {self.W_p.shape[0]} != {self.W_c.shape[0]}"
            )

    @property
    def d_x(self) -> int:
        return self.W_p.shape[0]

    @property
    def d_feat(self) -> int:
        return self.W_p.shape[1]

    @property
    def d_s(self) -> int:
        return self.W_c.shape[1]


@dataclass
class SurrogateConfig:
    d_x: int = 64
    k: int = 20
    lr: float = 0.5
    batch_size: int = 64
    steps: int = 500
    seed: int = 0
    epsilon: float = 0.0
    heuristic: str = "structure_pruned"
    budget_chars: int = 3500


def mean_pool(model: EmbeddingModel, context: SerializedContext | None, center: int) -> np.ndarray:
    """Mean structural embedding of the distinct context entities plus center.

    An empty (or missing) context pools the center embedding alone.  The
    result is float64 and permutation-invariant in the contributing entities.
    """
    model.check_entity(center)
    entities = {center}
    if context is not None:
        for trip in context.kept_triples:
            entities.add(trip.head)
            entities.add(trip.tail)
    ids = sorted(entities)
    return model.entity_matrix[ids].astype(np.float64).mean(axis=0)


def project(reranker: SurrogateReranker, features: np.ndarray) -> np.ndarray:
    """Linear map of a feature vector into the reranker's output space."""
    features = np.asarray(features)
    if features.shape[-1] != reranker.d_feat:
        raise AdapterError(
            f"feature length {features.shape[-1]} does not match d_feat {reranker.d_feat}"
        )
    return reranker.W_p @ features


def query_features(
    model: EmbeddingModel, query: Query, context: SerializedContext | None
) -> np.ndarray:
    """[anchor || relation || pooled] feature vector of length 3 * d_s.

    Rotate relations contribute their unit rotation coefficients (cos, sin)
    so the relation block is always d_s wide.
    """
    anchor = model.entity_matrix[query.anchor_id].astype(np.float64)
    rel = relation_feature(model, query.rel_id).astype(np.float64)
    pooled = mean_pool(model, context, query.anchor_id)
    return np.concatenate([anchor, rel, pooled])


def graph_token(
    reranker: SurrogateReranker,
    model: EmbeddingModel,
    query: Query,
    context: SerializedContext | None,
) -> GraphToken:
    pooled = mean_pool(model, context, query.anchor_id)
    return GraphToken(pooled, project(reranker, query_features(model, query, context)))


def surrogate_logits(
    reranker: SurrogateReranker,
    model: EmbeddingModel,
    query: Query,
    candidate_set: CandidateSet,
    context: SerializedContext | None = None,
) -> np.ndarray:
    """One logit per candidate, in candidate order."""
    if not candidate_set.candidates:
        raise AdapterError("candidate set is empty")
    z = project(reranker, query_features(model, query, context))
    cand = model.entity_matrix[candidate_set.entity_ids].astype(np.float64)
    return cand @ (reranker.W_c.T.astype(np.float64) @ z)


def init_surrogate(d_s: int, d_x: int = 64, seed: int = 0, dtype=np.float32) -> SurrogateReranker:
    rng = np.random.default_rng(seed)
    d_feat = 3 * d_s
    W_p = (rng.standard_normal((d_x, d_feat)) / np.sqrt(d_feat)).astype(dtype)
    W_c = (rng.standard_normal((d_x, d_s)) / np.sqrt(d_s)).astype(dtype)
    return SurrogateReranker(W_p, W_c, seed)


def cross_entropy_and_grads(W_p, W_c, features, cand_embs, labels):
    """Mean softmax cross-entropy over candidate logits, with gradients.

    ``features``: (B, d_feat); ``cand_embs``: (B, k, d_s); ``labels``: (B,).
    Computed in float64.
    """
    W_p = W_p.astype(np.float64, copy=False)
    W_c = W_c.astype(np.float64, copy=False)
    X = np.asarray(features, dtype=np.float64)
    C = np.asarray(cand_embs, dtype=np.float64)
    B = X.shape[0]

    Z = X @ W_p.T  # (B, d_x)
    CC = C @ W_c.T  # (B, k, d_x)
    logits = np.einsum("bkd,bd->bk", CC, Z)
    probs = softmax(logits, axis=1)
    loss = float(np.mean(logsumexp(logits, axis=1) - logits[np.arange(B), labels]))

    G = probs.copy()
    G[np.arange(B), labels] -= 1.0
    G /= B
    dZ = np.einsum("bk,bkd->bd", G, CC)  # (B, d_x)
    grad_W_p = dZ.T @ X
    M = np.einsum("bk,bks->bs", G, C)  # (B, d_s)
    grad_W_c = Z.T @ M
    return loss, grad_W_p, grad_W_c


def surrogate_dataset(
    model: EmbeddingModel, kg: KnowledgeGraph, queries: list[Query], config: SurrogateConfig
):
    """Precompute (features, candidate embeddings, labels) for a query list.

    Candidate sets come from the filter in train mode (target forced in when
    unrecalled), contexts from the configured heuristic.
    """
    feats, cands, labels = [], [], []
    for q in queries:
        if q.target_id is None:
            raise AdapterError(f"query {q.query_id} has no target")
        cs = topk_candidates(model, kg, q, config.k, mode="train")
        ctx = context_heuristic(
            kg, model, q, config.heuristic, config.seed, config.budget_chars, config.epsilon
        )
        ids = cs.entity_ids
        if q.target_id not in ids:
            raise AdapterError(f"target missing from train candidates for {q.query_id}")
        feats.append(query_features(model, q, ctx))
        cands.append(model.entity_matrix[ids].astype(np.float64))
        labels.append(ids.index(q.target_id))
    return np.stack(feats), np.stack(cands), np.asarray(labels)


def surrogate_cross_entropy(
    reranker: SurrogateReranker,
    model: EmbeddingModel,
    kg: KnowledgeGraph,
    queries: list[Query],
    config: SurrogateConfig,
) -> float:
    X, C, y = surrogate_dataset(model, kg, queries, config)
    loss, _, _ = cross_entropy_and_grads(reranker.W_p, reranker.W_c, X, C, y)
    return loss


def train_surrogate(
    model: EmbeddingModel,
    kg: KnowledgeGraph,
    train_queries: list[Query],
    config: SurrogateConfig,
    log=None,
) -> SurrogateReranker:
    """SGD on the candidate cross-entropy; the embedding model stays frozen.

    Deterministic for a fixed seed; ``steps = 0`` returns the seeded
    initialization unchanged.
    """
    reranker = init_surrogate(model.d_s, config.d_x, config.seed)
    if config.steps == 0:
        return reranker
    X, C, y = surrogate_dataset(model, kg, train_queries, config)
    W_p = reranker.W_p.astype(np.float64)
    W_c = reranker.W_c.astype(np.float64)
    rng = np.random.default_rng([config.seed, 0x53475247])
    for step in range(config.steps):
        idx = rng.integers(0, len(X), size=min(config.batch_size, len(X)))
        loss, gp, gc = cross_entropy_and_grads(W_p, W_c, X[idx], C[idx], y[idx])
        if not np.isfinite(loss):
            raise AdapterError(f"non-finite surrogate loss at step {step}")
        W_p -= config.lr * gp
        W_c -= config.lr * gc
        if log is not None and (step + 1) % max(1, config.steps // 4) == 0:
            log(f"surrogate step {step + 1}/{config.steps}: batch loss {loss:.4f}")
    return SurrogateReranker(W_p.astype(np.float32), W_c.astype(np.float32), config.seed)


def save_surrogate(reranker: SurrogateReranker, path):
    meta = {
        "kind": "surrogate",
        "d_x": reranker.d_x,
        "d_feat": reranker.d_feat,
        "d_s": reranker.d_s,
        "seed": reranker.seed,
    }
    write_container(path, meta, [reranker.W_p, reranker.W_c])


def load_surrogate(path) -> SurrogateReranker:
    def shapes(meta):
        if meta["kind"] != "surrogate":
            raise KeyError(f"kind {meta['kind']!r} is not a surrogate checkpoint")
        return [(meta["d_x"], meta["d_feat"]), (meta["d_x"], meta["d_s"])]

    meta, (W_p, W_c) = read_container(path, shapes)
    try:
        return SurrogateReranker(W_p, W_c, meta["seed"])
    except AdapterError as exc:
        raise CheckpointError(f"dimension mismatch with metadata: {exc}") from exc
