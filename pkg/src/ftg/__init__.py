"""Filter-then-generate knowledge graph completion.

A structure-embedding filter proposes top-k candidates for each completion
query, ego-graph context is pruned and serialized, multiple-choice
instructions are assembled, and pluggable generators are scored under the
filtered MRR / Hits@N protocol.
"""

__version__ = "0.1.0"

from .adapter import (
    GraphToken,
    SurrogateConfig,
    SurrogateReranker,
    graph_token,
    load_surrogate,
    mean_pool,
    project,
    save_surrogate,
    surrogate_logits,
    train_surrogate,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .ego import (
    EgoGraph,
    EgoTriple,
    SerializedContext,
    context_heuristic,
    extract_ego,
    prune,
    query_ego,
    serialize_bfs,
)
from .evaluation import (
    PipelineConfig,
    RankedPrediction,
    ablate_context,
    evaluate,
    evaluate_filter,
    merge_ranking,
    parse_answer,
    run_pipeline,
)
from .filtering import (
    CandidateSet,
    FilteredRanking,
    Query,
    queries_for_split,
    rank_filtered,
    recall_report,
    topk_candidates,
)
from .generators import (
    EchoTop1Generator,
    Generator,
    HttpChatGenerator,
    OracleGenerator,
    ReplayGenerator,
    SurrogateGenerator,
    make_generator,
)
from .instructions import (
    INSTRUCTION_TEXT,
    InstructionSample,
    build_sample,
    emit_jsonl,
    read_jsonl,
    render_prompt,
    verbalize,
)
from .kg import KGError, KnowledgeGraph, clustered_kg, kg_stats, load_tsv, synthetic_kg
from .models import EmbeddingModel, init_model, score, score_all
from .training import TrainConfig, train
