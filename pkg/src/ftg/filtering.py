"""Filtered ranking and top-k candidate selection.

Implements the standard filtered protocol: all entities are scored, every
*other* known-true completion (from train, valid, and test) is removed, and
the target keeps its 1-based rank among what remains.  Ties break by
ascending entity id so rankings are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kg import KnowledgeGraph
from .models import EmbeddingModel, score_all

DIRECTIONS = ("tail", "head")


class FilterError(ValueError):
    pass


@dataclass(frozen=True)
class Query:
    """One completion query: predict the tail of (anchor, rel, ?) or the head
    of (?, rel, anchor)."""

    direction: str
    anchor_id: int
    rel_id: int
    target_id: int | None = None
    source_split: str = "test"

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise FilterError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")

    @property
    def query_id(self) -> str:
        return (
            f"{self.source_split}:{self.direction}:"
            f"{self.anchor_id}:{self.rel_id}:{self.target_id}"
        )


@dataclass
class FilteredRanking:
    """All non-removed entities ordered best-first, plus the target's rank."""

    entity_ids: np.ndarray
    scores: np.ndarray
    target_rank: int


@dataclass
class CandidateSet:
    query: Query
    candidates: list[tuple[int, float]]  # (entity_id, filter_score), score-descending
    k: int
    target_in_topk: bool
    raw_target_rank: int | None
    forced_inclusion: bool

    @property
    def entity_ids(self) -> list[int]:
        return [e for e, _ in self.candidates]


def queries_for_split(kg: KnowledgeGraph, split: str) -> list[Query]:
    """Both-direction queries for every triple of a split, in triple order."""
    out = []
    for h, r, t in kg.split(split).tolist():
        out.append(Query("tail", h, r, t, split))
        out.append(Query("head", t, r, h, split))
    return out


def _known_true(kg: KnowledgeGraph, query: Query) -> set[int]:
    if query.direction == "tail":
        return kg.true_tails.get((query.anchor_id, query.rel_id), set())
    return kg.true_heads.get((query.rel_id, query.anchor_id), set())


def rank_filtered(model: EmbeddingModel, kg: KnowledgeGraph, query: Query) -> FilteredRanking:
    """Full filtered ranking for a query with a known target."""
    if query.target_id is None:
        raise FilterError("rank_filtered needs a query with a target")
    scores = score_all(model, query.direction, query.anchor_id, query.rel_id)
    removed = _known_true(kg, query) - {query.target_id}
    keep = np.ones(kg.n_entities, dtype=bool)
    if removed:
        keep[list(removed)] = False
    ids = np.flatnonzero(keep)
    kept_scores = scores[ids]
    order = np.lexsort((ids, -kept_scores))
    ranked_ids = ids[order]
    ranked_scores = kept_scores[order]
    target_rank = int(np.flatnonzero(ranked_ids == query.target_id)[0]) + 1
    return FilteredRanking(ranked_ids, ranked_scores, target_rank)


def candidates_from_ranking(
    ranking: FilteredRanking, query: Query, k: int, mode: str = "eval"
) -> CandidateSet:
    """Top-k slice of an existing filtered ranking.

    In train mode a target missing from the top-k replaces the k-th entry
    (``forced_inclusion``), keeping every candidate set the same size; in
    eval mode an unrecalled target simply stays absent.
    """
    if mode not in ("train", "eval"):
        raise FilterError(f"mode must be 'train' or 'eval', got {mode!r}")
    if k < 1:
        raise FilterError(f"k must be >= 1, got {k}")
    top_ids = ranking.entity_ids[:k].tolist()
    top_scores = ranking.scores[:k].tolist()
    in_topk = ranking.target_rank <= min(k, len(ranking.entity_ids))
    forced = False
    if mode == "train" and not in_topk:
        pos = ranking.target_rank - 1
        top_ids[-1] = int(ranking.entity_ids[pos])
        top_scores[-1] = float(ranking.scores[pos])
        forced = True
    return CandidateSet(
        query=query,
        candidates=list(zip(top_ids, [float(s) for s in top_scores])),
        k=k,
        target_in_topk=in_topk,
        raw_target_rank=ranking.target_rank,
        forced_inclusion=forced,
    )


def topk_candidates(
    model: EmbeddingModel, kg: KnowledgeGraph, query: Query, k: int, mode: str = "eval"
) -> CandidateSet:
    if not 1 <= k <= kg.n_entities:
        raise FilterError(f"k={k} out of range [1, {kg.n_entities}]")
    return candidates_from_ranking(rank_filtered(model, kg, query), query, k, mode)


_HISTOGRAM_BUCKETS = ((1, 1), (2, 3), (4, 10), (11, 20), (21, 50), (51, 100), (101, 1000))


def _rank_histogram(ranks: list[int]) -> dict[str, int]:
    hist = {}
    for lo, hi in _HISTOGRAM_BUCKETS:
        label = str(lo) if lo == hi else f"{lo}-{hi}"
        hist[label] = sum(1 for r in ranks if lo <= r <= hi)
    hist[">1000"] = sum(1 for r in ranks if r > 1000)
    return hist


def recall_report(model: EmbeddingModel, kg: KnowledgeGraph, split: str, k: int) -> dict:
    """Recall@k (unforced) and a target-rank histogram, per direction."""
    queries = queries_for_split(kg, split)
    if not queries:
        raise FilterError(f"split {split!r} is empty")
    ranks = {"tail": [], "head": []}
    for q in queries:
        ranks[q.direction].append(rank_filtered(model, kg, q).target_rank)
    report = {"k": k}
    all_ranks = []
    for direction in DIRECTIONS:
        rs = ranks[direction]
        all_ranks.extend(rs)
        report[direction] = {
            "recall_at_k": sum(1 for r in rs if r <= k) / len(rs),
            "rank_histogram": _rank_histogram(rs),
        }
    report["combined"] = {"recall_at_k": sum(1 for r in all_ranks if r <= k) / len(all_ranks)}
    return report
