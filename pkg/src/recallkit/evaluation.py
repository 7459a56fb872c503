"""Task-level evaluation: metric bindings, aggregation, and reporting.

Each example's meta carries a ``task`` tag; a bindings map assigns one
metric per task. Predictions come from a JSONL file or from live inference
against a backend, in which case per-sample latency is recorded. Task
scores aggregate to a sample-weighted average.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .backends import BackendError, ChatBackend, user_exchange
from .corpus import Example, ParseError
from .metrics import accuracy_two_way, exact_match, llm_judge, rouge_avg, sub_em
from .prompts import render_answer_prompt

log = logging.getLogger(__name__)


class MissingBinding(Exception):
    """An example's task has no metric bound to it."""


class MetricKind(str, Enum):
    EXACT_MATCH = "exact_match"
    SUB_EM = "sub_em"
    ACCURACY_TWO_WAY = "accuracy_two_way"
    ROUGE_AVG = "rouge_avg"
    LLM_JUDGE = "llm_judge"


@dataclass
class Prediction:
    text: str
    latency_ms: float = 0.0


@dataclass
class TaskResult:
    """Aggregate score for one task."""

    task: str
    n: int
    score: float
    mean_latency_ms: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "task": self.task,
            "n": self.n,
            "score": self.score,
            "mean_latency_ms": self.mean_latency_ms,
        }


@dataclass
class EvalReport:
    """Per-task results plus the sample-weighted average."""

    results: list[TaskResult]
    weighted_avg: float

    def to_json_dict(self) -> dict:
        return {
            "results": [r.to_json_dict() for r in self.results],
            "weighted_avg": self.weighted_avg,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "EvalReport":
        results = [
            TaskResult(
                task=str(row["task"]),
                n=int(row["n"]),
                score=float(row["score"]),
                mean_latency_ms=float(row.get("mean_latency_ms", 0.0)),
            )
            for row in data["results"]
        ]
        return cls(results=results, weighted_avg=float(data["weighted_avg"]))

    def render_table(self) -> str:
        """Aligned text table: tasks as columns, scores as percentages."""
        headers = [r.task for r in self.results] + ["Avg"]
        counts = [str(r.n) for r in self.results] + [str(sum(r.n for r in self.results))]
        scores = [f"{r.score * 100:.1f}" for r in self.results] + [f"{self.weighted_avg * 100:.1f}"]
        latencies = [f"{r.mean_latency_ms:.1f}" for r in self.results] + ["-"]
        label_width = len("latency_ms")
        widths = [
            max(len(h), len(c), len(s), len(t))
            for h, c, s, t in zip(headers, counts, scores, latencies)
        ]
        def row(label: str, cells: list[str]) -> str:
            body = "  ".join(cell.rjust(w) for cell, w in zip(cells, widths))
            return f"{label.ljust(label_width)}  {body}"
        return "\n".join(
            [row("task", headers), row("n", counts), row("score", scores), row("latency_ms", latencies)]
        )


def weighted_avg(pairs: list[tuple[int, float]]) -> float:
    """Sample-size weighted mean of (n, score) pairs."""
    total = sum(n for n, _ in pairs)
    if total <= 0:
        raise ValueError("weighted average needs at least one sample")
    return sum(n * score for n, score in pairs) / total


def read_predictions(path: str | Path) -> dict[str, Prediction]:
    """Read {"id", "prediction"[, "latency_ms"]} JSONL into a map."""
    predictions: dict[str, Prediction] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as err:
                raise ParseError(f"invalid JSON: {err.msg}", lineno) from err
            if not isinstance(data, dict) or "id" not in data or "prediction" not in data:
                raise ParseError("prediction rows need 'id' and 'prediction'", lineno)
            predictions[str(data["id"])] = Prediction(
                text=str(data["prediction"]),
                latency_ms=float(data.get("latency_ms", 0.0)),
            )
    return predictions


def score_sample(
    metric: MetricKind, example: Example, pred: str, judge: ChatBackend | None = None
) -> float:
    if metric is MetricKind.EXACT_MATCH:
        return float(exact_match(pred, example.answer))
    if metric is MetricKind.SUB_EM:
        return float(sub_em(pred, example.answer))
    if metric is MetricKind.ACCURACY_TWO_WAY:
        return float(accuracy_two_way(pred, example.answer))
    if metric is MetricKind.ROUGE_AVG:
        return rouge_avg(pred, example.answer)
    if metric is MetricKind.LLM_JUDGE:
        if judge is None:
            raise ValueError("llm_judge metric needs a judge backend")
        return float(llm_judge(example.query, example.answer, pred, judge))
    raise ValueError(f"unhandled metric {metric}")


def run_eval(
    examples: list[Example],
    bindings: dict[str, MetricKind | str],
    predictions: dict[str, Prediction] | None = None,
    backend: ChatBackend | None = None,
    judge: ChatBackend | None = None,
    parallelism: int = 1,
    max_new: int = 512,
) -> EvalReport:
    """Score examples task by task and aggregate.

    With ``predictions`` given, those are scored as-is. Otherwise a backend
    is required: each example is answered live with the standard answering
    prompt over its full context, and per-sample latency is taken from the
    completions.
    """
    if not examples:
        raise ValueError("cannot evaluate an empty input set")
    metric_by_task = {task: MetricKind(metric) for task, metric in bindings.items()}

    for example in examples:
        task = example.meta.get("task", "")
        if not task:
            raise MissingBinding(f"example {example.id!r} carries no task tag")
        if task not in metric_by_task:
            raise MissingBinding(f"no metric bound for task {task!r}")

    if predictions is None:
        if backend is None:
            raise ValueError("run_eval needs either predictions or a backend")
        exchanges = [
            user_exchange(render_answer_prompt(e.context, e.query), max_new=max_new)
            for e in examples
        ]
        results = backend.complete_batch(exchanges, parallelism=parallelism)
        predictions = {}
        for example, result in zip(examples, results):
            if isinstance(result, BackendError):
                raise result
            predictions[example.id] = Prediction(result.text.strip(), result.latency_ms)
    else:
        missing = [e.id for e in examples if e.id not in predictions]
        if missing:
            raise ValueError(f"predictions missing for ids: {', '.join(missing[:5])}")

    needs_judge = any(m is MetricKind.LLM_JUDGE for m in metric_by_task.values())
    if needs_judge and judge is None:
        raise ValueError("llm_judge metric needs a judge backend")

    grouped: dict[str, list[tuple[float, float]]] = {}
    task_order: list[str] = []
    for example in examples:
        task = example.meta["task"]
        prediction = predictions[example.id]
        score = score_sample(metric_by_task[task], example, prediction.text, judge)
        if task not in grouped:
            grouped[task] = []
            task_order.append(task)
        grouped[task].append((score, prediction.latency_ms))

    results = []
    for task in task_order:
        scored = grouped[task]
        n = len(scored)
        results.append(
            TaskResult(
                task=task,
                n=n,
                score=sum(s for s, _ in scored) / n,
                mean_latency_ms=sum(l for _, l in scored) / n,
            )
        )
    overall = weighted_avg([(r.n, r.score) for r in results])
    return EvalReport(results=results, weighted_avg=overall)


def write_report(report: EvalReport, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report.to_json_dict(), indent=2) + "\n", encoding="utf-8")


def read_report(path: str | Path) -> EvalReport:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return EvalReport.from_json_dict(data)
