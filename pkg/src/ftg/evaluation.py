"""Answer parsing, ranking merge, filtered metrics, and the full pipeline.

The merged ranking for a query is: parsed generated entities (first
occurrence wins), then the unparsed candidates in filter order, then the rest
of the filtered ranking in filter order.  It is always a permutation of the
filtered entity set, so MRR and Hits@N are well defined for any generator.
"""

from __future__ import annotations

import dataclasses
import logging
import re
import string
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .adapter import mean_pool
from .ego import HEURISTIC_KINDS, context_heuristic
from .filtering import (
    CandidateSet,
    FilteredRanking,
    Query,
    candidates_from_ranking,
    queries_for_split,
    rank_filtered,
    recall_report,
)
from .generators import Generator
from .instructions import InstructionSample, build_sample
from .kg import KnowledgeGraph
from .models import EmbeddingModel

logger = logging.getLogger(__name__)


class EvaluationError(ValueError):
    pass


@dataclass
class RankedPrediction:
    query: Query
    entity_ids: np.ndarray  # permutation of the filtered entity set
    provenance: list[str]  # per position: generated | candidate_tail | filter_tail

    @property
    def target_rank(self) -> int:
        return int(np.flatnonzero(self.entity_ids == self.query.target_id)[0]) + 1


@dataclass
class PipelineConfig:
    k: int = 20
    epsilon: float = 0.0
    heuristic: str = "structure_pruned"
    budget_chars: int = 3500
    n_return: int = 10
    seed: int = 0
    split: str = "test"
    two_hop_cap: int = 16
    retries: int = 3
    retry_backoff: float = 0.5


def normalize_answer(text: str) -> str:
    """Casefold, trim, collapse inner whitespace, strip surrounding punctuation."""
    text = re.sub(r"\s+", " ", text.strip()).casefold()
    return text.strip(string.punctuation + " ")


def parse_answer(text: str, candidates: list[tuple[str, int]]) -> int | None:
    """Map generated text back to a candidate entity id.

    ``candidates`` are (display name, entity id) pairs in filter order.
    Strategy: exact match on normalized names, else the longest candidate
    name occurring as a substring of the text; ties resolve to the highest
    filter rank.  Returns None when nothing matches.
    """
    norm = normalize_answer(text)
    if not norm:
        return None
    for name, entity_id in candidates:
        if normalize_answer(name) == norm:
            return entity_id
    best = None
    best_len = 0
    for name, entity_id in candidates:
        cand_norm = normalize_answer(name)
        if cand_norm and cand_norm in norm and len(cand_norm) > best_len:
            best, best_len = entity_id, len(cand_norm)
    return best


def merge_ranking(
    generator_outputs: list[str],
    sample: InstructionSample,
    candidate_set: CandidateSet,
    filter_ranking: FilteredRanking,
) -> RankedPrediction:
    """Extend generated answers to a total order over the filtered entities."""
    named = list(zip(sample.candidates, sample.candidate_ids))
    taken: set[int] = set()
    ids: list[int] = []
    provenance: list[str] = []
    for text in generator_outputs:
        entity = parse_answer(text, named)
        if entity is not None and entity not in taken:
            taken.add(entity)
            ids.append(entity)
            provenance.append("generated")
    for entity in candidate_set.entity_ids:
        if entity not in taken:
            taken.add(entity)
            ids.append(entity)
            provenance.append("candidate_tail")
    for entity in filter_ranking.entity_ids.tolist():
        if entity not in taken:
            taken.add(entity)
            ids.append(entity)
            provenance.append("filter_tail")
    return RankedPrediction(candidate_set.query, np.asarray(ids, dtype=np.int64), provenance)


def metrics_from_ranks(ranks) -> dict:
    ranks = np.asarray(ranks, dtype=np.float64)
    if len(ranks) == 0:
        raise EvaluationError("no ranks to aggregate")
    return {
        "mrr": float((1.0 / ranks).mean()),
        "hits1": float((ranks <= 1).mean()),
        "hits3": float((ranks <= 3).mean()),
        "hits10": float((ranks <= 10).mean()),
    }


def evaluate(predictions: list[RankedPrediction]) -> dict:
    """MRR and Hits@{1,3,10} per direction plus the combined micro-average."""
    if not predictions:
        raise EvaluationError("no predictions to evaluate")
    by_direction = {"tail": [], "head": []}
    for pred in predictions:
        if pred.query.target_id is None:
            raise EvaluationError(f"prediction {pred.query.query_id} has no target")
        by_direction[pred.query.direction].append(pred.target_rank)
    out = {}
    for direction, ranks in by_direction.items():
        if ranks:
            out[direction] = metrics_from_ranks(ranks)
    out["combined"] = metrics_from_ranks(
        by_direction["tail"] + by_direction["head"]
    )
    return out


def evaluate_filter(model: EmbeddingModel, kg: KnowledgeGraph, split: str = "test", k: int = 20):
    """Filter-only metrics (plus recall@k), the baseline every generator is
    merged against."""
    queries = queries_for_split(kg, split)
    if not queries:
        raise EvaluationError(f"split {split!r} is empty")
    ranks = {"tail": [], "head": []}
    for q in queries:
        ranks[q.direction].append(rank_filtered(model, kg, q).target_rank)
    metrics = {d: metrics_from_ranks(rs) for d, rs in ranks.items() if rs}
    metrics["combined"] = metrics_from_ranks(ranks["tail"] + ranks["head"])
    return {"metrics": metrics, "recall": recall_report(model, kg, split, k)}


def _generate_with_retry(generator: Generator, sample, config: PipelineConfig, warnings: dict):
    for attempt in range(config.retries):
        try:
            return generator.generate(sample)
        except Exception as exc:  # noqa: BLE001 - any generator failure falls back
            logger.warning("generator failed on %s (attempt %d): %s", sample.id, attempt + 1, exc)
            if attempt + 1 < config.retries and config.retry_backoff > 0:
                time.sleep(config.retry_backoff * (2**attempt))
    warnings["generator_failures"] = warnings.get("generator_failures", 0) + 1
    return []


def run_pipeline(
    kg: KnowledgeGraph,
    model: EmbeddingModel,
    generator: Generator,
    config: PipelineConfig,
) -> dict:
    """Filter, contextualize, prompt, parse, merge, and score a whole split.

    Candidate sets use eval mode (no forcing), so an unrecalled target simply
    cannot be answered correctly.  Generator transport failures retry with
    exponential backoff and then fall back to the filter ranking for that
    query, counted in the report warnings.
    """
    queries = queries_for_split(kg, config.split)
    if not queries:
        raise EvaluationError(f"split {config.split!r} is empty")
    warnings: dict = {}

    prepared = []
    for q in queries:
        ranking = rank_filtered(model, kg, q)
        cs = candidates_from_ranking(ranking, q, config.k, mode="eval")
        ctx = context_heuristic(
            kg,
            model,
            q,
            config.heuristic,
            config.seed,
            config.budget_chars,
            config.epsilon,
            config.two_hop_cap,
        )
        if ctx.zero_norm_dropped:
            warnings["zero_norm_triples_dropped"] = (
                warnings.get("zero_norm_triples_dropped", 0) + ctx.zero_norm_dropped
            )
        graph_vec = mean_pool(model, ctx, q.anchor_id)
        sample = build_sample(kg, q, cs, ctx, graph_vec)
        prepared.append((q, ranking, cs, sample))

    if generator.text_only and any(s.graph_vec is not None for _, _, _, s in prepared):
        warnings["graph_vec_ignored"] = len(prepared)
        logger.warning("generator %s is text-only; pooled graph vectors are ignored", generator.name)

    def run_one(item):
        _, _, _, sample = item
        return _generate_with_retry(generator, sample, config, warnings)

    workers = max(1, getattr(generator, "max_in_flight", 1))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(run_one, prepared))
    else:
        outputs = [run_one(item) for item in prepared]

    predictions = [
        merge_ranking(out, sample, cs, ranking)
        for out, (q, ranking, cs, sample) in zip(outputs, prepared)
    ]
    metrics = evaluate(predictions)
    forced = sum(1 for _, _, cs, _ in prepared if cs.forced_inclusion)
    recall = recall_report(model, kg, config.split, config.k)
    return {
        "generator": generator.name,
        "config": {
            "k": config.k,
            "epsilon": config.epsilon,
            "heuristic": config.heuristic,
            "budget_chars": config.budget_chars,
            "n_return": config.n_return,
            "seed": config.seed,
            "split": config.split,
        },
        "metrics": metrics,
        "recall": recall,
        "forced_inclusions": forced,
        "warnings": warnings,
    }


def ablate_context(
    kg: KnowledgeGraph,
    model: EmbeddingModel,
    generator: Generator,
    config: PipelineConfig,
) -> dict:
    """Run the pipeline once per context heuristic and collect the reports."""
    sections = {}
    for kind in HEURISTIC_KINDS:
        cfg = dataclasses.replace(config, heuristic=kind)
        sections[kind] = run_pipeline(kg, model, generator, cfg)
    return {"heuristics": sections}


def render_metrics_table(metrics: dict) -> str:
    """Fixed-width text table over the per-direction metric blocks."""
    rows = [f"{'direction':<10} {'MRR':>8} {'Hits@1':>8} {'Hits@3':>8} {'Hits@10':>8}"]
    for direction in ("tail", "head", "combined"):
        if direction not in metrics:
            continue
        m = metrics[direction]
        rows.append(
            f"{direction:<10} {m['mrr']:>8.4f} {m['hits1']:>8.4f} "
            f"{m['hits3']:>8.4f} {m['hits10']:>8.4f}"
        )
    return "\n".join(rows)
