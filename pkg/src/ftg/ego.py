"""Ego-graph extraction, similarity pruning, and BFS serialization.

The 1-hop ego-graph of an entity is the set union of its outgoing and
incoming train triples.  Pruning keeps a triple (h', r', t') when the cosine
similarity between the concatenated embeddings (h' || r') and the query's
(anchor || rel) exceeds a threshold; kept triples are ordered by descending
similarity.  Serialization walks that order from the center, emitting each
triple's relation name and its not-yet-seen entity name, and stops before the
rendered text would exceed a character budget.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .filtering import Query
from .kg import KnowledgeGraph
from .models import EmbeddingModel

HEURISTIC_KINDS = ("structure_pruned", "random_walk", "full_1hop", "two_hop")


class EgoError(ValueError):
    pass


@dataclass(frozen=True)
class EgoTriple:
    head: int
    rel: int
    tail: int
    direction: str  # "out" if the traversal source is the head, else "in"

    def neighbor_of(self, center: int) -> int:
        return self.tail if self.head == center else self.head

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.head, self.rel, self.tail)


@dataclass
class EgoGraph:
    center: int
    triples: list[EgoTriple]


@dataclass
class PrunedEgo:
    triples: list[tuple[EgoTriple, float]]  # similarity-descending
    zero_norm_dropped: int = 0


@dataclass
class SerializedContext:
    center: int
    kept_triples: list[EgoTriple]
    token_sequence: list[str]  # starts with the center entity name
    text: str
    zero_norm_dropped: int = 0


def extract_ego(kg: KnowledgeGraph, entity_id: int) -> EgoGraph:
    """Union of incoming and outgoing train triples; a self-loop appears once."""
    if not 0 <= entity_id < kg.n_entities:
        raise EgoError(f"entity id {entity_id} out of range [0, {kg.n_entities})")
    triples = []
    seen = set()
    for r, t in kg.out_adj[entity_id]:
        trip = EgoTriple(entity_id, r, t, "out")
        if trip.key not in seen:
            seen.add(trip.key)
            triples.append(trip)
    for r, h in kg.in_adj[entity_id]:
        trip = EgoTriple(h, r, entity_id, "in")
        if trip.key not in seen:
            seen.add(trip.key)
            triples.append(trip)
    return EgoGraph(entity_id, triples)


def query_ego(kg: KnowledgeGraph, query: Query) -> EgoGraph:
    """Ego-graph of the query anchor minus the gold triple itself.

    When the queried triple happens to sit in the train split its edge is in
    the anchor's ego-graph and would leak the answer, so it is removed.
    """
    ego = extract_ego(kg, query.anchor_id)
    if query.target_id is None:
        return ego
    if query.direction == "tail":
        gold = (query.anchor_id, query.rel_id, query.target_id)
    else:
        gold = (query.target_id, query.rel_id, query.anchor_id)
    return EgoGraph(ego.center, [t for t in ego.triples if t.key != gold])


def _concat_vector(model: EmbeddingModel, entity_id: int, rel_id: int) -> np.ndarray:
    return np.concatenate(
        [
            model.entity_matrix[entity_id].astype(np.float64),
            model.relation_matrix[rel_id].astype(np.float64),
        ]
    )


def triple_similarity(
    model: EmbeddingModel, triple: EgoTriple, query: Query, center_side_in_binding: bool = False
) -> float | None:
    """Cosine of (h' || r') against (anchor || rel); None when undefined.

    ``center_side_in_binding`` switches in-triples to the center-side entity
    (their tail) instead of the literal head-side one.
    """
    entity = triple.head
    if center_side_in_binding and triple.direction == "in":
        entity = triple.tail
    v = _concat_vector(model, entity, triple.rel)
    q = _concat_vector(model, query.anchor_id, query.rel_id)
    nv, nq = np.linalg.norm(v), np.linalg.norm(q)
    if nv == 0.0 or nq == 0.0:
        return None
    # clamp rounding noise; a true cosine never leaves [-1, 1]
    return float(np.clip(np.dot(v, q) / (nv * nq), -1.0, 1.0))


def prune(
    ego: EgoGraph,
    model: EmbeddingModel,
    query: Query,
    epsilon: float,
    center_side_in_binding: bool = False,
) -> PrunedEgo:
    """Keep triples with similarity strictly above epsilon, best first.

    Ties break by (relation id, neighbor entity id).  Triples whose
    concatenated vector has zero norm have no defined cosine; they are
    dropped and counted.
    """
    if query.anchor_id != ego.center:
        raise EgoError("query anchor must be the ego-graph center")
    scored = []
    dropped = 0
    for trip in ego.triples:
        sim = triple_similarity(model, trip, query, center_side_in_binding)
        if sim is None:
            dropped += 1
            continue
        if sim > epsilon:
            scored.append((trip, sim))
    scored.sort(key=lambda pair: (-pair[1], pair[0].rel, pair[0].neighbor_of(ego.center)))
    return PrunedEgo(scored, dropped)


def _serialize_steps(kg: KnowledgeGraph, center: int, steps, budget_chars: int):
    """Shared serializer: steps are (triple, token_entity_id) in visit order."""
    center_name = kg.entity_names[center]
    tokens = [center_name]
    text = center_name
    seen = {center}
    kept = []
    for trip, entity_id in steps:
        new_tokens = [kg.relation_names[trip.rel]]
        if entity_id not in seen:
            new_tokens.append(kg.entity_names[entity_id])
        candidate_text = text + ", " + ", ".join(new_tokens)
        if len(candidate_text) > budget_chars:
            break
        tokens.extend(new_tokens)
        seen.add(entity_id)
        text = candidate_text
        kept.append(trip)
    return kept, tokens, text


def serialize_bfs(
    kg: KnowledgeGraph, center: int, kept_triples: list[EgoTriple], budget_chars: int
) -> SerializedContext:
    """Linearize center-incident triples in the given (pruning) order.

    The token sequence starts with the center name; each triple contributes
    its relation name and, if not seen before, its neighbor entity name.
    Rendering joins all tokens with ", ".  Triples stop being appended when
    the next one would push the rendered text past ``budget_chars``.
    """
    for trip in kept_triples:
        if center not in (trip.head, trip.tail):
            raise EgoError(f"triple {trip.key} is not incident to center {center}")
    steps = [(t, t.neighbor_of(center)) for t in kept_triples]
    kept, tokens, text = _serialize_steps(kg, center, steps, budget_chars)
    return SerializedContext(center, kept, tokens, text)


def _full_1hop_order(ego: EgoGraph) -> list[EgoTriple]:
    return sorted(ego.triples, key=lambda t: (t.rel, t.neighbor_of(ego.center)))


def _two_hop_steps(kg, model, query, ego, cap, center_side_in_binding):
    """Depth-2 BFS: per hop keep at most ``cap`` triples by similarity, then
    order the hop by (relation id, entity id) like the full 1-hop heuristic."""

    def best(triples, exclude_keys):
        scored = []
        for trip in triples:
            if trip.key in exclude_keys:
                continue
            sim = triple_similarity(model, trip, query, center_side_in_binding)
            if sim is None:
                continue
            scored.append((trip, sim))
        scored.sort(key=lambda pair: (-pair[1], pair[0].rel, pair[0].head, pair[0].tail))
        return [t for t, _ in scored[:cap]]

    taken = set()
    hop1 = best(ego.triples, taken)
    hop1.sort(key=lambda t: (t.rel, t.neighbor_of(ego.center)))
    taken |= {t.key for t in hop1}

    frontier = []
    for trip in hop1:
        nb = trip.neighbor_of(ego.center)
        if nb != ego.center and nb not in frontier:
            frontier.append(nb)

    hop2_pool = []
    pool_keys = set()
    for node in frontier:
        for trip in extract_ego(kg, node).triples:
            if trip.key not in taken and trip.key not in pool_keys:
                pool_keys.add(trip.key)
                hop2_pool.append((trip, node))
    by_source = {t.key: node for t, node in hop2_pool}
    hop2 = best([t for t, _ in hop2_pool], taken)
    hop2.sort(key=lambda t: (t.rel, t.neighbor_of(by_source[t.key])))

    steps = [(t, t.neighbor_of(ego.center)) for t in hop1]
    steps += [(t, t.neighbor_of(by_source[t.key])) for t in hop2]
    return steps


def context_heuristic(
    kg: KnowledgeGraph,
    model: EmbeddingModel,
    query: Query,
    kind: str,
    seed: int,
    budget_chars: int,
    epsilon: float = 0.0,
    two_hop_cap: int = 16,
    center_side_in_binding: bool = False,
) -> SerializedContext:
    """Build a serialized context with one of the supported heuristics.

    ``structure_pruned``: similarity pruning then BFS serialization.
    ``random_walk``: seeded walk over train adjacency from the anchor.
    ``full_1hop``: whole ego-graph in (relation id, entity id) order.
    ``two_hop``: depth-2 BFS with a per-hop similarity cap, same ordering.
    All kinds share the character budget and the gold-triple exclusion.
    """
    if kind not in HEURISTIC_KINDS:
        raise EgoError(f"unknown context heuristic {kind!r}; expected one of {HEURISTIC_KINDS}")
    ego = query_ego(kg, query)

    if kind == "structure_pruned":
        pruned = prune(ego, model, query, epsilon, center_side_in_binding)
        ctx = serialize_bfs(kg, ego.center, [t for t, _ in pruned.triples], budget_chars)
        ctx.zero_norm_dropped = pruned.zero_norm_dropped
        return ctx

    if kind == "full_1hop":
        return serialize_bfs(kg, ego.center, _full_1hop_order(ego), budget_chars)

    if kind == "two_hop":
        steps = _two_hop_steps(kg, model, query, ego, two_hop_cap, center_side_in_binding)
        kept, tokens, text = _serialize_steps(kg, ego.center, steps, budget_chars)
        return SerializedContext(ego.center, kept, tokens, text)

    # random_walk: uniform steps over train adjacency, gold edge excluded
    rng = np.random.default_rng([seed, query.anchor_id, query.rel_id])
    gold_keys = {t.key for t in extract_ego(kg, query.anchor_id).triples} - {
        t.key for t in ego.triples
    }
    current = ego.center
    steps = []
    for _ in range(budget_chars // 2 + 1):  # each step renders at least 2 chars
        edges = [EgoTriple(current, r, t, "out") for r, t in kg.out_adj[current]]
        edges += [EgoTriple(h, r, current, "in") for r, h in kg.in_adj[current]]
        edges = [e for e in edges if e.key not in gold_keys]
        if not edges:
            break
        pick = edges[int(rng.integers(0, len(edges)))]
        nxt = pick.neighbor_of(current)
        steps.append((pick, nxt))
        current = nxt
    kept, tokens, text = _serialize_steps(kg, ego.center, steps, budget_chars)
    return SerializedContext(ego.center, kept, tokens, text)
