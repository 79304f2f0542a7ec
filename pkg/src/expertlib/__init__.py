"""Expert models as a library: train, store, route, and merge task experts."""

__version__ = "0.1.0"

from .params import (
    MergeTerm,
    ParameterSet,
    TaskVector,
    load_params,
    merge,
    save_params,
    task_vector,
    uniform_merge,
    zeros_like,
)
from .tasks import TaskInstance, TaskSet, load_taskset, save_taskset, split_taskset
from .encoding import (
    FORMAT_TEMPLATES,
    HashingTextEmbedder,
    load_external_vectors,
    render_key,
)
from .tokenizer import EOS_ID, UNK_ID, HashTokenizer
from .model import (
    ModelConfig,
    TrainConfig,
    finite_difference_check,
    forward_base,
    forward_with_adapter,
    greedy_decode,
    init_adapter,
    init_params,
    log_likelihood,
    train_de,
    train_pe,
)
from .scoring import ModelScorer, is_adapter_set
from .metrics import (
    EvalReport,
    accuracy,
    evaluate,
    evaluate_many,
    rank_classify,
    rank_experts,
    render_ranking_table,
    rouge_l,
)
from .synth import (
    SynthTaskSpec,
    generate_synth_tasks,
    make_compose_task,
    make_copy_task,
    make_copy_token_task,
    make_reverse_task,
)
from .library import (
    ExpertLibrary,
    ExpertRecord,
    LibraryEntry,
    RoutingDecision,
    add_expert,
    append_entries,
    append_registry,
    build_library,
    load_library,
    load_registry,
    nearest,
    oracle_route,
    route,
    save_library,
)
from .merging import (
    DEFAULT_LAMBDA_GRID,
    MergeSearchResult,
    compose_experts,
    read_search_log,
    search_lambdas,
    write_search_log,
)
from .estimators import ExpertRouter

__all__ = [
    "__version__",
    "MergeTerm",
    "ParameterSet",
    "TaskVector",
    "load_params",
    "merge",
    "save_params",
    "task_vector",
    "uniform_merge",
    "zeros_like",
    "TaskInstance",
    "TaskSet",
    "load_taskset",
    "save_taskset",
    "split_taskset",
    "FORMAT_TEMPLATES",
    "HashingTextEmbedder",
    "load_external_vectors",
    "render_key",
    "EOS_ID",
    "UNK_ID",
    "HashTokenizer",
    "ModelConfig",
    "TrainConfig",
    "finite_difference_check",
    "forward_base",
    "forward_with_adapter",
    "greedy_decode",
    "init_adapter",
    "init_params",
    "log_likelihood",
    "train_de",
    "train_pe",
    "ModelScorer",
    "is_adapter_set",
    "EvalReport",
    "accuracy",
    "evaluate",
    "evaluate_many",
    "rank_classify",
    "rank_experts",
    "render_ranking_table",
    "rouge_l",
    "SynthTaskSpec",
    "generate_synth_tasks",
    "make_compose_task",
    "make_copy_task",
    "make_copy_token_task",
    "make_reverse_task",
    "ExpertLibrary",
    "ExpertRecord",
    "LibraryEntry",
    "RoutingDecision",
    "add_expert",
    "append_entries",
    "append_registry",
    "build_library",
    "load_library",
    "load_registry",
    "nearest",
    "oracle_route",
    "route",
    "save_library",
    "DEFAULT_LAMBDA_GRID",
    "MergeSearchResult",
    "compose_experts",
    "read_search_log",
    "search_lambdas",
    "write_search_log",
    "ExpertRouter",
]
