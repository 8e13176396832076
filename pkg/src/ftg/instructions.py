"""Query verbalization, multiple-choice prompt assembly, and JSONL emission."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .ego import SerializedContext
from .filtering import CandidateSet, Query
from .kg import KnowledgeGraph

INSTRUCTION_TEXT = (
    "Please answer the following question and select only one answer from the "
    "candidates that is most relevant to the question."
)

JSONL_KEYS = (
    "id",
    "direction",
    "anchor",
    "relation",
    "instruction",
    "question",
    "context",
    "candidates",
    "candidate_ids",
    "answer",
    "forced_inclusion",
)


class InstructionError(ValueError):
    pass


@dataclass
class InstructionSample:
    """One multiple-choice record.

    ``candidates`` holds display names (duplicate surface names get a
    " (2)", " (3)", ... suffix so every choice string is unambiguous; ids are
    untouched).  ``answer`` is the target's display name for training samples
    and empty for evaluation emission.  ``gold_answer`` keeps the target's
    display name for in-process scoring instruments and is never serialized.
    """

    id: str
    direction: str
    anchor_id: int
    rel_id: int
    anchor: str
    relation: str
    instruction: str
    question: str
    context: str | None
    candidates: list[str]
    candidate_ids: list[int]
    answer: str
    forced_inclusion: bool
    graph_vec: np.ndarray | None = None
    gold_answer: str = ""


def verbalize(kg: KnowledgeGraph, query: Query) -> str:
    """Render a query as a question string.

    Tail queries become ``"<head name>, <relation name>?"``; head queries
    become ``"What/Who/When/Where/Why <relation name> <tail name>?"``.
    """
    if not 0 <= query.anchor_id < kg.n_entities:
        raise InstructionError(f"anchor id {query.anchor_id} out of range")
    if not 0 <= query.rel_id < kg.n_relations:
        raise InstructionError(f"relation id {query.rel_id} out of range")
    anchor = kg.entity_names[query.anchor_id]
    rel = kg.relation_names[query.rel_id]
    if query.direction == "tail":
        return f"{anchor}, {rel}?"
    return f"What/Who/When/Where/Why {rel} {anchor}?"


def display_names(kg: KnowledgeGraph, entity_ids: list[int]) -> list[str]:
    """Entity names with numeric suffixes wherever surface forms collide."""
    counts: dict[str, int] = {}
    names = []
    for e in entity_ids:
        base = kg.entity_names[e]
        counts[base] = counts.get(base, 0) + 1
        names.append(base if counts[base] == 1 else f"{base} ({counts[base]})")
    return names


def build_sample(
    kg: KnowledgeGraph,
    query: Query,
    candidate_set: CandidateSet,
    context: SerializedContext | None = None,
    graph_vec: np.ndarray | None = None,
    with_answer: bool = False,
) -> InstructionSample:
    """Assemble the instruction record for one query.

    The context section is included only when the heuristic kept at least one
    triple.  ``with_answer=True`` (training emission) requires the target to
    be among the candidates and fails loudly otherwise, since train-mode
    candidate forcing should have guaranteed it.
    """
    ids = candidate_set.entity_ids
    names = display_names(kg, ids)
    answer = ""
    gold = ""
    if query.target_id is not None and query.target_id in ids:
        gold = names[ids.index(query.target_id)]
    if with_answer:
        if query.target_id is None or query.target_id not in ids:
            raise InstructionError(
                f"target absent from candidates for train sample {query.query_id}"
            )
        answer = gold
    context_text = None
    if context is not None and context.kept_triples:
        context_text = context.text
    return InstructionSample(
        id=query.query_id,
        direction=query.direction,
        anchor_id=query.anchor_id,
        rel_id=query.rel_id,
        anchor=kg.entity_names[query.anchor_id],
        relation=kg.relation_names[query.rel_id],
        instruction=INSTRUCTION_TEXT,
        question=verbalize(kg, query),
        context=context_text,
        candidates=names,
        candidate_ids=list(ids),
        answer=answer,
        forced_inclusion=candidate_set.forced_inclusion,
        graph_vec=graph_vec,
        gold_answer=gold,
    )


def render_prompt(sample: InstructionSample) -> str:
    """Render the prompt sections in order; Context is omitted when absent."""
    lines = [
        f"Instruction: {sample.instruction}",
        f"Question: {sample.question}",
    ]
    if sample.context is not None:
        lines.append(f"Context: {sample.context}")
    lines.append(f"Candidates: {', '.join(sample.candidates)}")
    lines.append(f"Answer: {sample.answer}" if sample.answer else "Answer:")
    return "\n".join(lines)


def _round9(x: float) -> float:
    # 9 significant digits; the rounded value prints exactly under repr
    return float(f"{float(x):.9g}")


def sample_record(sample: InstructionSample, include_graph_vec: bool = False) -> dict:
    record = {
        "id": sample.id,
        "direction": sample.direction,
        "anchor": sample.anchor,
        "relation": sample.relation,
        "instruction": sample.instruction,
        "question": sample.question,
        "context": sample.context,
        "candidates": sample.candidates,
        "candidate_ids": sample.candidate_ids,
        "answer": sample.answer,
        "forced_inclusion": sample.forced_inclusion,
    }
    if include_graph_vec:
        vec = [] if sample.graph_vec is None else [_round9(v) for v in sample.graph_vec]
        record["graph_vec"] = vec
    return record


def emit_jsonl(samples: list[InstructionSample], path, include_graph_vec: bool = False):
    """One UTF-8 JSON object per line with a stable key order."""
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_record(sample, include_graph_vec), ensure_ascii=False))
            fh.write("\n")


def read_jsonl(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
