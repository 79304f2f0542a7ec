"""One binary, eight workflows: generate tasks, train experts, build and
extend libraries, route, merge, evaluate, and rank.

Conventions shared by every subcommand:
- exit 0 on success, 1 on any module error; diagnostics go to stderr and
  name the error class so scripts can branch on it
- all randomness flows from the --seed flag (or a seed stored in the input
  artifact) and is recorded in the outputs
- every written artifact gets a ``<path>.meta.json`` sidecar with the seed,
  component versions, and a checksum of each input file, so a rerun can be
  audited byte for byte; sidecars carry no timestamps
"""

from __future__ import annotations

import argparse
import json
import sys
import zlib
from pathlib import Path

from . import __version__
from .encoding import HashingTextEmbedder, load_external_vectors
from .library import (
    DEFAULT_Q,
    DEFAULT_S,
    LIBRARY_VERSION,
    DanglingExpertIdError,
    DuplicateExpertIdError,
    ExpertRecord,
    add_expert,
    append_entries,
    append_registry,
    build_library,
    load_library,
    load_registry,
    route,
    save_library,
    source_from_task_name,
    task_name_from_source,
)
from .merging import DEFAULT_LAMBDA_GRID, search_lambdas, write_search_log
from .metrics import evaluate_many, rank_experts, render_ranking_table
from .model import (
    ModelConfig,
    TrainConfig,
    default_sample_cap,
    init_params,
    train_de,
    train_pe,
)
from .params import (
    FORMAT_VERSION,
    MergeTerm,
    ParameterSet,
    SchemaMismatchError,
    load_params,
    merge,
    save_params,
    task_vector,
    zeros_like,
)
from .scoring import ModelScorer, is_adapter_set
from .synth import (
    SynthTaskSpec,
    generate_synth_tasks,
    make_compose_task,
    make_copy_task,
    make_copy_token_task,
    make_reverse_task,
)
from .tasks import load_taskset, save_taskset
from .tokenizer import HashTokenizer

_COMPACT = {"separators": (",", ":")}


# ------------------------------------------------------------------ plumbing


def _crc32(path) -> str:
    return format(zlib.crc32(Path(path).read_bytes()) & 0xFFFFFFFF, "08x")


def _meta_record(seed: int, inputs) -> str:
    meta = {
        "inputs": {str(p): _crc32(p) for p in sorted({str(p) for p in inputs})},
        "seed": int(seed),
        "versions": {
            "expertlib": __version__,
            "library_format": LIBRARY_VERSION,
            "params_format": FORMAT_VERSION,
        },
    }
    return json.dumps(meta, sort_keys=True, **_COMPACT) + "\n"


def _write_meta(artifact, seed: int, inputs) -> None:
    Path(f"{artifact}.meta.json").write_text(_meta_record(seed, inputs),
                                             encoding="utf-8")


def _embedding(flag: str):
    """Parse --embed into (embedder, vectors); builtin defers to the caller."""
    if flag == "builtin":
        return None, None
    if flag.startswith("external:"):
        return None, load_external_vectors(flag[len("external:"):])
    raise ValueError(f"--embed must be 'builtin' or 'external:<path>', got {flag!r}")


def _scorer(params: ParameterSet, base: ParameterSet | None,
            expert_id: str) -> ModelScorer:
    if is_adapter_set(params):
        if base is None:
            raise ValueError(
                f"expert {expert_id!r} is an adapter; --base is required"
            )
        return ModelScorer(base, params, expert_id=expert_id)
    return ModelScorer(params, expert_id=expert_id)


# -------------------------------------------------------------- subcommands


def cmd_gen_tasks(args) -> int:
    out = Path(args.out)
    tokenizer = HashTokenizer(vocab_size=args.vocab)
    spec = SynthTaskSpec(families=args.families, prompts_per_family=args.prompts,
                         instances_per_task=args.instances,
                         vocab_overlap=args.overlap, seed=args.seed)
    split_counts = {"train": None, "validation": args.val_instances,
                    "test": args.test_instances}
    for split, count in split_counts.items():
        split_dir = out / split
        split_dir.mkdir(parents=True, exist_ok=True)
        for task in generate_synth_tasks(spec, split=split, instances=count,
                                         tokenizer=tokenizer):
            save_taskset(task, split_dir / f"{task.name}.jsonl")
        if args.generative:
            n = spec.instances_per_task if count is None else count
            for make in (make_copy_task, make_reverse_task,
                         make_compose_task, make_copy_token_task):
                task = make(num_instances=n, seed=spec.seed, split=split,
                            tokenizer=tokenizer)
                save_taskset(task, split_dir / f"{task.name}.jsonl")
    (out / "meta.json").write_text(_meta_record(args.seed, []), encoding="utf-8")
    return 0


def cmd_init_model(args) -> int:
    config = ModelConfig(num_layers=args.layers, hidden_dim=args.dim,
                         adapter_dim=args.adapter_dim, num_heads=args.heads,
                         vocab_size=args.vocab, max_tokens=args.max_tokens)
    save_params(init_params(config, seed=args.seed), args.out)
    _write_meta(args.out, args.seed, [])
    return 0


def cmd_train_expert(args) -> int:
    base = load_params(args.base)
    task = load_taskset(args.task)
    cap = args.sample_cap if args.sample_cap else default_sample_cap(task.kind)
    cfg = TrainConfig(sample_cap=cap, epochs=args.epochs,
                      learning_rate=args.learning_rate, seed=args.seed)
    train = train_pe if args.kind == "pe" else train_de

    def log(line: str) -> None:
        print(line, file=sys.stderr)

    save_params(train(base, task, cfg, log=log), args.out)
    record = ExpertRecord(expert_id=args.expert_id or task.name, kind=args.kind,
                          source=source_from_task_name(task.name),
                          params_path=str(args.out))
    _register(args.registry, record)
    _write_meta(args.out, args.seed, [args.base, args.task])
    return 0


def _register(path, record: ExpertRecord) -> None:
    # Reruns are idempotent: an identical record is skipped so the registry
    # bytes stay stable; a conflicting one is an error.
    existing = load_registry(path) if Path(path).exists() else {}
    prior = existing.get(record.expert_id)
    if prior == record:
        return
    if prior is not None:
        raise DuplicateExpertIdError(
            f"registry already maps {record.expert_id!r} to other settings"
        )
    append_registry(path, record)


def cmd_build_library(args) -> int:
    registry = load_registry(args.registry)
    embedder, vectors = _embedding(args.embed)
    if embedder is None and vectors is None and args.dim:
        embedder = HashingTextEmbedder(dim=args.dim)
    experts = []
    inputs = [args.registry]
    for record in registry.values():
        if not Path(record.params_path).exists():
            raise DanglingExpertIdError(
                f"expert {record.expert_id!r} points at missing parameter "
                f"file {record.params_path!r}"
            )
        task_path = Path(args.tasks) / f"{task_name_from_source(record.source)}.jsonl"
        experts.append((record.expert_id, load_taskset(task_path)))
        inputs.append(task_path)
    library = build_library(experts, text_format=args.format, S=args.S,
                            seed=args.seed, embedder=embedder, vectors=vectors)
    save_library(library, args.out)
    _write_meta(args.out, args.seed, inputs)
    return 0


def cmd_add_expert(args) -> int:
    library = load_library(args.library)
    task = load_taskset(args.task)
    embedder, vectors = _embedding(args.embed)
    new_entries = add_expert(library, args.expert_id, task,
                             embedder=embedder, vectors=vectors)
    append_entries(args.library, new_entries)
    _write_meta(args.library, library.seed, [args.task])
    return 0


def cmd_route(args) -> int:
    library = load_library(args.library)
    task = load_taskset(args.task)
    embedder, vectors = _embedding(args.embed)
    decision = route(library, task, Q=args.Q, seed=args.seed,
                     embedder=embedder, vectors=vectors)
    line = json.dumps(decision.to_record(), **_COMPACT)
    print(line)
    if args.out:
        Path(args.out).write_text(line + "\n", encoding="utf-8")
        _write_meta(args.out, args.seed, [args.library, args.task])
    return 0


def cmd_eval(args) -> int:
    inputs = list(args.tasks)
    if args.decision:
        record = json.loads(Path(args.decision).read_text(encoding="utf-8"))
        expert_id = record["chosen_expert"]
        registry = load_registry(args.registry)
        if expert_id not in registry:
            raise DanglingExpertIdError(
                f"decision names {expert_id!r}, which is not in the registry"
            )
        params_path = registry[expert_id].params_path
        inputs += [args.decision, args.registry]
    else:
        params_path = args.params
        expert_id = args.expert_id or Path(params_path).stem
    params = load_params(params_path)
    inputs.append(params_path)
    base = None
    if args.base:
        base = load_params(args.base)
        inputs.append(args.base)
    scorer = _scorer(params, base, expert_id)
    tasksets = [load_taskset(p) for p in args.tasks]
    report = evaluate_many(scorer, tasksets, expert_id=expert_id, seed=args.seed)
    line = json.dumps(report.to_record(), **_COMPACT)
    print(line)
    if args.report:
        Path(args.report).write_text(line + "\n", encoding="utf-8")
        _write_meta(args.report, args.seed, inputs)
    return 0


def cmd_rank_experts(args) -> int:
    registry = load_registry(args.registry)
    base = load_params(args.base) if args.base else None
    inputs = [args.registry] + list(args.tasks)
    if args.base:
        inputs.append(args.base)
    scorers = {}
    for record in registry.values():
        params = load_params(record.params_path)
        inputs.append(record.params_path)
        scorers[record.expert_id] = _scorer(params, base, record.expert_id)
    tasksets = [load_taskset(p) for p in args.tasks]
    reports = rank_experts(scorers, tasksets, seed=args.seed)
    print(render_ranking_table(reports))
    if args.report:
        lines = [json.dumps(r.to_record(), **_COMPACT) for r in reports]
        Path(args.report).write_text("\n".join(lines) + "\n", encoding="utf-8")
        _write_meta(args.report, args.seed, inputs)
    return 0


def cmd_merge(args) -> int:
    registry = load_registry(args.registry)
    missing = [eid for eid in args.experts if eid not in registry]
    if missing:
        raise DanglingExpertIdError(f"expert ids not in registry: {missing}")
    records = [registry[eid] for eid in args.experts]
    kinds = {record.kind for record in records}
    if len(kinds) > 1:
        raise SchemaMismatchError(
            "cannot merge adapter (pe) and full (de) experts together"
        )
    kind = kinds.pop()
    base = load_params(args.base)
    expert_params = [load_params(record.params_path) for record in records]
    # Adapters are additive deltas already, so their merge base is zero;
    # full fine-tunes merge as task vectors over the shared base.
    theta_pre = zeros_like(expert_params[0]) if kind == "pe" else base
    taus = [task_vector(params, theta_pre) for params in expert_params]
    inputs = [args.base, args.registry]
    inputs += [record.params_path for record in records]

    if args.search:
        validation = load_taskset(args.search)
        inputs.append(args.search)

        def evaluator(candidate: ParameterSet, taskset) -> float:
            scorer = _scorer(candidate, base if kind == "pe" else None,
                             "candidate")
            return evaluate_many(scorer, [taskset], expert_id="candidate",
                                 seed=args.seed).mean

        result = search_lambdas(theta_pre, taus, validation, evaluator,
                                grid=tuple(args.grid))
        lambdas = result.lambdas
        log_path = args.log or f"{args.out}.search.jsonl"
        write_search_log(result, log_path)
        _write_meta(log_path, args.seed, inputs)
        print(json.dumps({"lambdas": list(lambdas), "score": result.score},
                         **_COMPACT))
    else:
        lambdas = args.lambdas or [1.0 / len(taus)] * len(taus)
        if len(lambdas) != len(taus):
            raise ValueError(
                f"got {len(lambdas)} lambdas for {len(taus)} experts"
            )
        print(json.dumps({"lambdas": [float(w) for w in lambdas]}, **_COMPACT))
    merged = merge(theta_pre, [MergeTerm(float(w), tau)
                               for w, tau in zip(lambdas, taus)])
    save_params(merged, args.out)
    _write_meta(args.out, args.seed, inputs)
    return 0


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expertlib",
        description="Train per-task experts, index them by instance "
                    "embeddings, route queries to them, and merge them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-tasks", help="write the synthetic task suite")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--families", type=int, default=12)
    p.add_argument("--prompts", type=int, default=4)
    p.add_argument("--instances", type=int, default=200,
                   help="training instances per task")
    p.add_argument("--val-instances", type=int, default=50)
    p.add_argument("--test-instances", type=int, default=50)
    p.add_argument("--overlap", type=float, default=0.1,
                   help="fraction of each family's query pool drawn from a "
                        "shared pool")
    p.add_argument("--vocab", type=int, default=512,
                   help="tokenizer vocabulary used for collision avoidance")
    p.add_argument("--generative", action="store_true",
                   help="also write the copy/reverse/compose/copytoken tasks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_gen_tasks)

    p = sub.add_parser("init-model", help="write randomly initialized base "
                                          "parameters")
    p.add_argument("--out", required=True)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--adapter-dim", type=int, default=8)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--vocab", type=int, default=512)
    p.add_argument("--max-tokens", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_init_model)

    p = sub.add_parser("train-expert", help="train one expert on one task")
    p.add_argument("--task", required=True, help="task JSON-lines file")
    p.add_argument("--base", required=True, help="base parameter file")
    p.add_argument("--kind", required=True, choices=("pe", "de"),
                   help="pe: adapter over a frozen base; de: full fine-tune")
    p.add_argument("--out", required=True, help="trained parameter file")
    p.add_argument("--registry", required=True,
                   help="expert registry to append to")
    p.add_argument("--expert-id", default=None,
                   help="defaults to the task name")
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--learning-rate", type=float, default=1e-4)
    p.add_argument("--sample-cap", type=int, default=None,
                   help="defaults to 50000 classification / 10000 generative")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_train_expert)

    p = sub.add_parser("build-library", help="embed sampled instances of "
                                             "every registered expert")
    p.add_argument("--registry", required=True)
    p.add_argument("--tasks", required=True,
                   help="directory holding <task-name>.jsonl files")
    p.add_argument("--out", required=True)
    p.add_argument("--S", type=int, default=DEFAULT_S,
                   help="instances sampled per expert")
    p.add_argument("--format", default="e", help="key text format variant")
    p.add_argument("--embed", default="builtin",
                   help="'builtin' or 'external:<vectors.jsonl>'")
    p.add_argument("--dim", type=int, default=None,
                   help="builtin embedding width (default 256)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_build_library)

    p = sub.add_parser("add-expert", help="append one expert's entries to an "
                                          "existing library")
    p.add_argument("--library", required=True)
    p.add_argument("--expert-id", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--embed", default="builtin")
    p.set_defaults(handler=cmd_add_expert)

    p = sub.add_parser("route", help="pick an expert for a target task")
    p.add_argument("--library", required=True)
    p.add_argument("--task", required=True)
    p.add_argument("--Q", type=int, default=DEFAULT_Q,
                   help="queries sampled from the target task")
    p.add_argument("--embed", default="builtin")
    p.add_argument("--out", default=None,
                   help="also write the decision JSON here")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_route)

    p = sub.add_parser("eval", help="score one expert on task files")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--params", help="expert parameter file")
    group.add_argument("--decision",
                       help="routing decision JSON; resolves the expert "
                            "through --registry")
    p.add_argument("--registry", default=None)
    p.add_argument("--base", default=None,
                   help="base parameters (required for adapter experts)")
    p.add_argument("--expert-id", default=None)
    p.add_argument("--report", default=None, help="write the report JSON here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("tasks", nargs="+", help="task JSON-lines files")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("rank-experts", help="rank every registered expert by "
                                            "mean metric over task files")
    p.add_argument("--registry", required=True)
    p.add_argument("--base", default=None)
    p.add_argument("--report", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("tasks", nargs="+")
    p.set_defaults(handler=cmd_rank_experts)

    p = sub.add_parser("merge", help="combine experts with weighted task "
                                     "vectors")
    p.add_argument("--base", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--experts", required=True, nargs="+",
                   help="registered expert ids to combine")
    p.add_argument("--out", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--lambdas", type=float, nargs="+", default=None,
                       help="one weight per expert; omitted and without "
                            "--search, uniform 1/N")
    group.add_argument("--search", default=None,
                       help="validation task file; grid-search the weights")
    p.add_argument("--grid", type=float, nargs="+",
                   default=list(DEFAULT_LAMBDA_GRID))
    p.add_argument("--log", default=None,
                   help="search log path (default <out>.search.jsonl)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_merge)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except Exception as exc:  # diagnostics name the error class, exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
