"""Summary-based long-context recall tooling.

Three pieces share one data model and one backend interface: a training
data pipeline that distills verified summaries and refusal examples, a
segmented summarize-then-answer inference engine, and an evaluation harness
with recall-oriented metrics and a synthetic needle corpus generator.
"""

from .backends import (
    BackendError,
    BackendExhausted,
    ChatBackend,
    ChatExchange,
    Completion,
    HttpBackend,
    Message,
    MockBackend,
    MockRule,
    ProtocolError,
    user_exchange,
)
from .corpus import (
    DEFAULT_REFUSAL,
    Example,
    LengthPolicy,
    Paragraph,
    ParseError,
    QueryTooLong,
    SummaryLabel,
    TrainingRecord,
    measure_length,
    read_jsonl,
    segment_paragraphs,
    truncate_example,
    write_jsonl,
)
from .evaluation import EvalReport, MetricKind, MissingBinding, TaskResult, run_eval, weighted_avg
from .metrics import (
    accuracy_two_way,
    exact_match,
    llm_judge,
    normalize_answer,
    rouge_avg,
    rouge_l,
    rouge_n,
    sub_em,
)
from .pipeline import (
    AllParagraphsRemoved,
    EmptyLocatorReply,
    PipelineConfig,
    Verdict,
    assemble_dataset,
    build_empty_context,
    build_empty_set,
    build_valid_set,
    extract_summary,
    locate_answer_paragraphs,
    mix_with_base,
    verify_summary,
)
from .segmented import (
    SsaConfig,
    SsaTrace,
    aggregate_summaries,
    chunk_context,
    direct_answer,
    ssa_answer,
    summarize_chunk,
)
from .synthetic import gen_synthetic_recall

__version__ = "0.1.0"
