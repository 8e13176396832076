"""Command-line entry point orchestrating every pipeline stage.

All subcommands read one JSON config file; flags override config values.
Every run writes a ``resolved_config_<subcommand>.json`` snapshot into the
output directory so results can be reproduced exactly.

Exit codes: 0 success; 1 runtime failure; 2 bad config or arguments;
3 missing input artifact (e.g. checkpoint); 4 unknown heuristic/generator;
5 unwritable output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .adapter import SurrogateConfig, load_surrogate, save_surrogate, train_surrogate
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .ego import HEURISTIC_KINDS
from .evaluation import (
    PipelineConfig,
    ablate_context,
    evaluate_filter,
    render_metrics_table,
    run_pipeline,
)
from .filtering import candidates_from_ranking, queries_for_split, rank_filtered
from .generators import GeneratorError, make_generator
from .instructions import build_sample, emit_jsonl, sample_record
from .kg import KGError, clustered_kg, kg_stats, load_tsv, synthetic_kg
from .models import MODEL_KINDS
from .training import TrainConfig, train
from .util import stage_seed, write_json

EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_MISSING_ARTIFACT = 3
EXIT_UNKNOWN_NAME = 4
EXIT_OUTPUT = 5


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_RUNTIME):
        super().__init__(message)
        self.code = code


DEFAULT_CONFIG = {
    "dataset": {"synthetic": {"seed": 7, "n_entities": 200, "n_relations": 8, "n_triples": 4000}},
    "filter": {
        "kind": "rotate",
        "d_s": 64,
        "lr": 2.0,
        "batch_size": 256,
        "negatives_per_positive": 8,
        "adversarial_temperature": 1.0,
        "gamma": 6.0,
        "steps": 2000,
        "eval_every": 500,
    },
    "surrogate": {"d_x": 64, "lr": 0.5, "batch_size": 64, "steps": 500},
    "k": 20,
    "epsilon": 0.0,
    "heuristic": "structure_pruned",
    "budget_chars": 3500,
    "generator": "echo",
    "n_return": 10,
    "split": "test",
    "seed": 7,
    "out": "runs/ftg",
}


def load_config(args) -> dict:
    config = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                user = json.load(fh)
        except FileNotFoundError as exc:
            raise CliError(f"config file not found: {args.config}", EXIT_CONFIG) from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"config file is not valid JSON: {exc}", EXIT_CONFIG) from exc
        for key, value in user.items():
            if isinstance(value, dict) and isinstance(config.get(key), dict):
                config[key].update(value)
            else:
                config[key] = value
    for flag in ("out", "seed", "k", "epsilon", "heuristic", "generator", "n_return", "split"):
        value = getattr(args, flag.replace("-", "_"), None)
        if value is not None:
            config[flag] = value
    return config


def make_out_dir(config) -> Path:
    out = Path(config["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"output directory {out} is not writable: {exc}", EXIT_OUTPUT) from exc
    return out


def build_kg(config):
    ds = config["dataset"]
    if "synthetic" in ds:
        return synthetic_kg(**ds["synthetic"])
    if "clustered" in ds:
        return clustered_kg(**ds["clustered"])
    for key in ("train", "valid", "test"):
        if key not in ds:
            raise CliError(f"dataset config needs '{key}' path or a synthetic spec", EXIT_CONFIG)
        if not Path(ds[key]).exists():
            raise CliError(f"dataset file not found: {ds[key]}", EXIT_MISSING_ARTIFACT)
    return load_tsv(ds["train"], ds["valid"], ds["test"])


def filter_train_config(config) -> tuple[TrainConfig, str]:
    fc = dict(config["filter"])
    kind = fc.pop("kind", "rotate")
    if kind not in MODEL_KINDS:
        raise CliError(f"unknown filter kind {kind!r}", EXIT_UNKNOWN_NAME)
    fc.setdefault("seed", stage_seed(config["seed"], "filter"))
    return TrainConfig(**fc), kind


def pipeline_config(config) -> PipelineConfig:
    if config["heuristic"] not in HEURISTIC_KINDS:
        raise CliError(f"unknown context heuristic {config['heuristic']!r}", EXIT_UNKNOWN_NAME)
    return PipelineConfig(
        k=config["k"],
        epsilon=config["epsilon"],
        heuristic=config["heuristic"],
        budget_chars=config["budget_chars"],
        n_return=config["n_return"],
        seed=stage_seed(config["seed"], "context"),
        split=config["split"],
    )


def load_filter(out: Path):
    path = out / "filter.ckpt"
    if not path.exists():
        raise CliError(f"missing filter checkpoint {path}; run train-filter first", EXIT_MISSING_ARTIFACT)
    return load_checkpoint(path)


def resolve_generator(config, out: Path, kg=None, model=None):
    spec = config["generator"]
    reranker = None
    if spec.split(":")[0] == "surrogate":
        path = out / "surrogate.ckpt"
        if not path.exists():
            raise CliError(
                f"missing surrogate checkpoint {path}; run train-surrogate first",
                EXIT_MISSING_ARTIFACT,
            )
        reranker = load_surrogate(path)
    try:
        return make_generator(
            spec,
            n_return=config["n_return"],
            seed=stage_seed(config["seed"], "generator"),
            reranker=reranker,
            model=model,
            kg=kg,
        )
    except GeneratorError as exc:
        raise CliError(str(exc), EXIT_UNKNOWN_NAME) from exc


def snapshot(config, out: Path, subcommand: str):
    write_json(out / f"resolved_config_{subcommand}.json", {"subcommand": subcommand, **config})


def cmd_kg_stats(config, out):
    kg = build_kg(config)
    stats = kg_stats(kg)
    print(json.dumps(stats))
    return None


def cmd_train_filter(config, out):
    kg = build_kg(config)
    train_cfg, kind = filter_train_config(config)
    model = train(kg, train_cfg, kind, log=lambda msg: print(msg, file=sys.stderr))
    save_checkpoint(model, out / "filter.ckpt")
    return f"trained {kind} filter ({train_cfg.steps} steps) -> {out / 'filter.ckpt'}"


def cmd_eval_filter(config, out):
    kg = build_kg(config)
    model = load_filter(out)
    report = evaluate_filter(model, kg, config["split"], config["k"])
    write_json(out / "filter_metrics.json", report["metrics"])
    write_json(out / "filter_report.json", report)
    combined = report["metrics"]["combined"]
    return (
        f"filter MRR {combined['mrr']:.4f} Hits@1 {combined['hits1']:.4f} "
        f"-> {out / 'filter_metrics.json'}"
    )


def cmd_dump_candidates(config, out):
    kg = build_kg(config)
    model = load_filter(out)
    path = out / "candidates.jsonl"
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries_for_split(kg, config["split"]):
            ranking = rank_filtered(model, kg, q)
            cs = candidates_from_ranking(ranking, q, config["k"], mode="eval")
            record = {
                "query_id": q.query_id,
                "direction": q.direction,
                "anchor": kg.entity_names[q.anchor_id],
                "relation": kg.relation_names[q.rel_id],
                "target": kg.entity_names[q.target_id],
                "candidates": [
                    [kg.entity_names[e], float(f"{s:.9g}")] for e, s in cs.candidates
                ],
                "forced_inclusion": cs.forced_inclusion,
                "raw_target_rank": cs.raw_target_rank,
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            n += 1
    return f"wrote {n} candidate records -> {path}"


def cmd_build_instructions(config, out):
    from .adapter import mean_pool
    from .ego import context_heuristic

    kg = build_kg(config)
    model = load_filter(out)
    pipe = pipeline_config(config)
    include_vec = bool(config.get("include_graph_vec", False))
    written = []
    for split, mode, with_answer in (("train", "train", True), (config["split"], "eval", False)):
        samples = []
        for q in queries_for_split(kg, split):
            ranking = rank_filtered(model, kg, q)
            cs = candidates_from_ranking(ranking, q, pipe.k, mode=mode)
            ctx = context_heuristic(
                kg, model, q, pipe.heuristic, pipe.seed, pipe.budget_chars, pipe.epsilon
            )
            vec = mean_pool(model, ctx, q.anchor_id) if include_vec else None
            samples.append(build_sample(kg, q, cs, ctx, vec, with_answer=with_answer))
        path = out / f"instructions_{split}.jsonl"
        emit_jsonl(samples, path, include_graph_vec=include_vec)
        written.append(f"{len(samples)} -> {path}")
    return "; ".join(written)


def cmd_train_surrogate(config, out):
    kg = build_kg(config)
    model = load_filter(out)
    sc = dict(config.get("surrogate", {}))
    sc.setdefault("seed", stage_seed(config["seed"], "surrogate"))
    sc.setdefault("k", config["k"])
    sc.setdefault("epsilon", config["epsilon"])
    sc.setdefault("heuristic", config["heuristic"])
    sc.setdefault("budget_chars", config["budget_chars"])
    surrogate_cfg = SurrogateConfig(**sc)
    queries = queries_for_split(kg, "train")
    reranker = train_surrogate(
        model, kg, queries, surrogate_cfg, log=lambda msg: print(msg, file=sys.stderr)
    )
    save_surrogate(reranker, out / "surrogate.ckpt")
    return f"trained surrogate on {len(queries)} queries -> {out / 'surrogate.ckpt'}"


def cmd_eval_ftg(config, out):
    kg = build_kg(config)
    model = load_filter(out)
    generator = resolve_generator(config, out, kg=kg, model=model)
    report = run_pipeline(kg, model, generator, pipeline_config(config))
    write_json(out / "ftg_metrics.json", report["metrics"])
    write_json(out / "ftg_report.json", report)
    table = render_metrics_table(report["metrics"])
    (out / "ftg_report.txt").write_text(table + "\n", encoding="utf-8")
    combined = report["metrics"]["combined"]
    return (
        f"{generator.name} MRR {combined['mrr']:.4f} Hits@1 {combined['hits1']:.4f} "
        f"-> {out / 'ftg_metrics.json'}"
    )


def cmd_ablate_context(config, out):
    kg = build_kg(config)
    model = load_filter(out)
    generator = resolve_generator(config, out, kg=kg, model=model)
    report = ablate_context(kg, model, generator, pipeline_config(config))
    write_json(out / "ablation.json", report)
    parts = [
        f"{kind}: Hits@1 {sec['metrics']['combined']['hits1']:.4f}"
        for kind, sec in report["heuristics"].items()
    ]
    return "; ".join(parts) + f" -> {out / 'ablation.json'}"


COMMANDS = {
    "kg-stats": cmd_kg_stats,
    "train-filter": cmd_train_filter,
    "eval-filter": cmd_eval_filter,
    "dump-candidates": cmd_dump_candidates,
    "build-instructions": cmd_build_instructions,
    "train-surrogate": cmd_train_surrogate,
    "eval-ftg": cmd_eval_ftg,
    "ablate-context": cmd_ablate_context,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ftg", description="Filter-then-generate KGC pipeline"
    )
    parser.add_argument("--version", action="version", version=f"ftg {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--k", type=int)
        p.add_argument("--epsilon", type=float)
        p.add_argument("--heuristic", choices=HEURISTIC_KINDS)
        p.add_argument("--generator")
        p.add_argument("--n-return", type=int, dest="n_return")
        p.add_argument("--split", choices=("train", "valid", "test"))
        if name == "build-instructions":
            p.add_argument(
                "--include-graph-vec", action="store_true", dest="include_graph_vec"
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
        if getattr(args, "include_graph_vec", False):
            config["include_graph_vec"] = True
        out = make_out_dir(config)
        snapshot(config, out, args.subcommand)
        summary = COMMANDS[args.subcommand](config, out)
        if summary:
            print(summary)
        return 0
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (KGError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - keep the CLI's exit-code contract
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
