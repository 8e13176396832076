"""Embedding training: self-adversarial negative sampling with plain SGD.

The step loss for one positive triple with negatives ``1..n`` is

    L = -log sigmoid(gamma - d_pos)
        - sum_i w_i * log sigmoid(d_neg_i - gamma),
    w   = softmax over i of alpha * (gamma - d_neg_i)

with ``d`` the model distance from :func:`ftg.models.triple_distances` and
``alpha`` the adversarial temperature (``alpha = 0`` gives uniform weights).
Gradients are the exact derivatives of this expression, including the path
through the softmax weights, so central finite differences reproduce them.

Negatives corrupt the head or the tail uniformly at random and are not
filtered against known-true triples; occasional false negatives are accepted
to keep sampling O(1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, softmax

from .kg import KnowledgeGraph
from .models import EmbeddingModel, ModelError, init_model, triple_distances


class TrainingError(RuntimeError):
    """Training diverged or was configured inconsistently."""


@dataclass
class TrainConfig:
    d_s: int = 64
    lr: float = 2.0
    batch_size: int = 256
    negatives_per_positive: int = 8
    adversarial_temperature: float = 1.0
    gamma: float = 6.0
    steps: int = 2000
    seed: int = 0
    eval_every: int = 500

    def __post_init__(self):
        if self.d_s < 2 or self.lr <= 0 or self.batch_size < 1:
            raise TrainingError("d_s, lr, and batch_size must be positive")
        if self.negatives_per_positive < 1 or self.steps < 0:
            raise TrainingError("negatives_per_positive must be >= 1 and steps >= 0")
        if self.adversarial_temperature < 0 or self.gamma <= 0:
            raise TrainingError("adversarial temperature must be >= 0 and gamma > 0")


def _grad_distance(model: EmbeddingModel, h, r, t):
    """Per-row gradients (dd/dh, dd/dr, dd/dt) of the distance for row batches."""
    kind = model.kind
    if kind == "transe":
        v = h + r - t
        nrm = np.sqrt(np.einsum("...i,...i->...", v, v))
        safe = np.where(nrm > 0, nrm, 1.0)[..., None]
        u = np.where(nrm[..., None] > 0, v / safe, 0.0)
        return u, u.copy(), -u
    if kind == "distmult":
        return -(r * t), -(h * t), -(h * r)
    if kind == "complex":
        half = h.shape[-1] // 2
        a, b = h[..., :half], h[..., half:]
        c, d = r[..., :half], r[..., half:]
        e, f = t[..., :half], t[..., half:]
        gh = -np.concatenate([c * e + d * f, -d * e + c * f], axis=-1)
        gr = -np.concatenate([a * e + b * f, -b * e + a * f], axis=-1)
        gt = -np.concatenate([a * c - b * d, a * d + b * c], axis=-1)
        return gh, gr, gt
    if kind == "rotate":
        half = h.shape[-1] // 2
        h_re, h_im = h[..., :half], h[..., half:]
        t_re, t_im = t[..., :half], t[..., half:]
        cos, sin = np.cos(r), np.sin(r)
        rot_re = h_re * cos - h_im * sin
        rot_im = h_re * sin + h_im * cos
        m_re = rot_re - t_re
        m_im = rot_im - t_im
        mod = np.hypot(m_re, m_im)
        safe = np.where(mod > 0, mod, 1.0)
        u_re = np.where(mod > 0, m_re / safe, 0.0)
        u_im = np.where(mod > 0, m_im / safe, 0.0)
        gh = np.concatenate(
            [u_re * cos + u_im * sin, -u_re * sin + u_im * cos], axis=-1
        )
        gr = -u_re * rot_im + u_im * rot_re
        gt = np.concatenate([-u_re, -u_im], axis=-1)
        return gh, gr, gt
    raise ModelError(f"unknown model kind {kind!r}")


def _scatter_add(out: np.ndarray, idx: np.ndarray, rows: np.ndarray):
    """out[idx[i]] += rows[i], grouped with sort+reduceat (faster than add.at)."""
    perm = np.argsort(idx, kind="stable")
    sorted_idx = idx[perm]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(sorted_idx)) + 1])
    out[sorted_idx[starts]] += np.add.reduceat(rows[perm], starts, axis=0)


def sample_batch(kg: KnowledgeGraph, config: TrainConfig, rng: np.random.Generator):
    """Draw positives from the train split plus uniform head/tail corruptions."""
    idx = rng.integers(0, len(kg.train), size=config.batch_size)
    pos = kg.train[idx]
    n = config.negatives_per_positive
    neg_entities = rng.integers(0, kg.n_entities, size=(config.batch_size, n))
    corrupt_head = rng.random(size=(config.batch_size, n)) < 0.5
    return pos, neg_entities, corrupt_head


def batch_loss_and_grads(model: EmbeddingModel, pos, neg_entities, corrupt_head, alpha: float):
    """Mean loss over the batch plus dense gradients for both matrices.

    Element-wise work runs in the model's storage dtype; distance reductions
    and the loss itself accumulate in float64.
    """
    E = model.entity_matrix
    R = model.relation_matrix
    work = E.dtype
    gamma = model.gamma
    B, n = neg_entities.shape

    h_idx, r_idx, t_idx = pos[:, 0], pos[:, 1], pos[:, 2]
    neg_h = np.where(corrupt_head, neg_entities, h_idx[:, None])
    neg_t = np.where(corrupt_head, t_idx[:, None], neg_entities)
    neg_r = np.broadcast_to(r_idx[:, None], (B, n))

    d_pos = triple_distances(model, E[h_idx], R[r_idx], E[t_idx])
    d_neg = triple_distances(model, E[neg_h], R[neg_r], E[neg_t])

    w = softmax(alpha * (gamma - d_neg), axis=1)
    g = log_expit(d_neg - gamma)
    g_bar = (w * g).sum(axis=1, keepdims=True)

    loss_pos = -log_expit(gamma - d_pos)
    loss_neg = -(w * g).sum(axis=1)
    loss = float((loss_pos + loss_neg).mean() / 2.0)

    # d loss / d distance, with the mean over the batch and the 1/2 folded in.
    scale = 1.0 / (2.0 * B)
    dl_dpos = (expit(d_pos - gamma) * scale).astype(work)
    dl_dneg = (w * (alpha * (g - g_bar) - expit(gamma - d_neg)) * scale).astype(work)

    grad_E = np.zeros_like(E)
    grad_R = np.zeros_like(R)

    gh, gr, gt = _grad_distance(model, E[h_idx], R[r_idx], E[t_idx])
    _scatter_add(grad_E, h_idx, gh * dl_dpos[:, None])
    _scatter_add(grad_E, t_idx, gt * dl_dpos[:, None])
    _scatter_add(grad_R, r_idx, gr * dl_dpos[:, None])

    gh, gr, gt = _grad_distance(model, E[neg_h], R[neg_r], E[neg_t])
    flat = dl_dneg[..., None]
    _scatter_add(grad_E, neg_h.ravel(), (gh * flat).reshape(B * n, -1))
    _scatter_add(grad_E, neg_t.ravel(), (gt * flat).reshape(B * n, -1))
    _scatter_add(grad_R, neg_r.ravel(), (gr * flat).reshape(B * n, -1))

    return loss, grad_E, grad_R


def batch_loss(model: EmbeddingModel, pos, neg_entities, corrupt_head, alpha: float) -> float:
    loss, _, _ = batch_loss_and_grads(model, pos, neg_entities, corrupt_head, alpha)
    return loss


def heldout_batch(kg: KnowledgeGraph, config: TrainConfig):
    """A fixed evaluation mini-batch derived from the config seed.

    Drawn from the valid split when present, else from train; used to verify
    that training reduces the loss.
    """
    rng = np.random.default_rng([config.seed, 0x48454C44])
    source = kg.valid if len(kg.valid) else kg.train
    size = min(config.batch_size, len(source))
    idx = rng.integers(0, len(source), size=size)
    pos = source[idx]
    neg_entities = rng.integers(0, kg.n_entities, size=(size, config.negatives_per_positive))
    corrupt_head = rng.random(size=(size, config.negatives_per_positive)) < 0.5
    return pos, neg_entities, corrupt_head


def train(kg: KnowledgeGraph, config: TrainConfig, kind: str, log=None) -> EmbeddingModel:
    """Train a fresh model of the given kind on the KG's train split.

    Deterministic for a fixed seed.  Raises :class:`TrainingError` naming the
    step if the loss goes non-finite.  ``config.steps = 0`` returns the seeded
    initialization unchanged.
    """
    if len(kg.train) == 0:
        raise TrainingError("cannot train on an empty train split")
    model = init_model(kind, kg.n_entities, kg.n_relations, config.d_s, config.gamma, config.seed)
    if config.steps == 0:
        return model
    rng = np.random.default_rng([config.seed, 0x5454])
    held = heldout_batch(kg, config)
    for step in range(config.steps):
        pos, neg_entities, corrupt_head = sample_batch(kg, config, rng)
        loss, grad_E, grad_R = batch_loss_and_grads(
            model, pos, neg_entities, corrupt_head, config.adversarial_temperature
        )
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at step {step}")
        model.entity_matrix = model.entity_matrix - config.lr * grad_E
        model.relation_matrix = model.relation_matrix - config.lr * grad_R
        if log is not None and config.eval_every and (step + 1) % config.eval_every == 0:
            held_loss = batch_loss(model, *held, config.adversarial_temperature)
            log(f"step {step + 1}/{config.steps}: held-out loss {held_loss:.4f}")
    if not (
        np.isfinite(model.entity_matrix).all() and np.isfinite(model.relation_matrix).all()
    ):
        raise TrainingError(f"non-finite parameters after step {config.steps - 1}")
    return model
