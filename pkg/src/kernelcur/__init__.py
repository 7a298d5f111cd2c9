"""Evaluation, curation, and difficulty analysis for LLM-generated GPU-kernel
candidates paired with reasoning traces."""

from .analysis import (
    BinStat,
    BoxStat,
    CorrStat,
    accuracy_by_length_bins,
    analyze,
    box_stat,
    box_stats,
    pearson,
    regularized_incomplete_beta,
    student_t_two_sided_p,
)
from .curation import (
    CurationConfig,
    PromptTemplate,
    apply_task_type_heuristic,
    curate,
    default_template,
    export_sft,
    infer_task_type,
    record_lookup,
    select_part_a,
    select_part_b,
    select_part_c,
)
from .difficulty import (
    DifficultyConfig,
    DifficultyLabel,
    classify,
    task_arl,
    tier_report,
)
from .harness import (
    BatchAborted,
    ExternalRunner,
    HandshakeError,
    ProtocolViolation,
    ResultCache,
    RunConfig,
    RunnerRequest,
    RunnerResponse,
    evaluate,
    mock_runner,
    spawn_external_runner,
)
from .metrics import (
    MetricConfig,
    arl,
    exec_rate,
    fast_p,
    geomean_speedup,
    pass_at_k_exec,
    pass_at_k_fast1,
    speedup,
)
from .records import (
    CuratedSample,
    EvalResult,
    GenerationRecord,
    RecordError,
    TaskGroup,
    count_summary,
    group_by_task,
    read_curated,
    read_evals,
    read_records,
    write_evals,
    write_records,
)

__version__ = "0.1.0"
