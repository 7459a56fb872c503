"""Command-line interface for the recall tooling.

Subcommands:
  synth       generate a deterministic synthetic recall corpus
  build-data  construct the summary-CoT training set from a labeled corpus
  infer       answer queries by segmented summarization or direct prompting
  evaluate    score predictions or a live backend against metric bindings

Settings layer as defaults < config file < flags. The config file is an
INI-style file with one section per module ([run], [backend], [corpus],
[pipeline], [ssa]) and plain key = value lines. Every run writes a manifest
JSON recording the effective settings plus SHA-256 digests of its inputs
and outputs. Exit codes: 0 on success, 1 on a domain error (reported as a
JSON object on stderr), 2 on a usage error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from .backends import BackendError, ChatBackend, HttpBackend, MockBackend
from .corpus import (
    CHARS_DIV4,
    DEFAULT_REFUSAL,
    Example,
    LengthPolicy,
    ParseError,
    QueryTooLong,
    TrainingRecord,
    WHITESPACE_WORDS,
    read_jsonl,
    truncate_example,
    write_jsonl,
)
from .evaluation import MissingBinding, read_predictions, run_eval, write_report
from .pipeline import (
    AllParagraphsRemoved,
    EmptyLocatorReply,
    PipelineConfig,
    SUMMARY_ONLY,
    SUMMARY_THEN_ANSWER,
    assemble_dataset,
    build_empty_set,
    build_valid_set,
    mix_with_base,
)
from .segmented import SsaConfig, direct_answer, ssa_answer
from .synthetic import gen_synthetic_recall

log = logging.getLogger(__name__)

_DOMAIN_ERRORS = (
    ParseError,
    QueryTooLong,
    BackendError,
    EmptyLocatorReply,
    AllParagraphsRemoved,
    MissingBinding,
    ValueError,
    OSError,
)

DEFAULTS = {
    "run.seed": 0,
    "backend.mock_rules": "",
    "backend.url": "",
    "backend.model": "",
    "backend.api_key_env": "RECALLKIT_API_KEY",
    "backend.timeout": 30.0,
    "backend.max_attempts": 5,
    "backend.backoff_base": 0.5,
    "backend.parallelism": 1,
    "corpus.length_unit": WHITESPACE_WORDS,
    "corpus.max_units": 6000,
    "pipeline.refusal_string": DEFAULT_REFUSAL,
    "pipeline.target_style": SUMMARY_THEN_ANSWER,
    "pipeline.cot_count": 10000,
    "pipeline.base_count": 100000,
    "pipeline.empty_fraction": 0.5,
    "ssa.chunk_units": 2000,
    "ssa.window_units": 6000,
    "ssa.drop_refusals": True,
}

# settings key -> argparse dest; only flags the user actually passed override.
_FLAG_MAP = {
    "run.seed": "seed",
    "backend.mock_rules": "mock_rules",
    "backend.url": "backend_url",
    "backend.model": "model",
    "backend.api_key_env": "api_key_env",
    "backend.timeout": "timeout",
    "backend.max_attempts": "max_attempts",
    "backend.backoff_base": "backoff_base",
    "backend.parallelism": "parallelism",
    "corpus.length_unit": "length_unit",
    "corpus.max_units": "max_units",
    "pipeline.cot_count": "cot_count",
    "pipeline.empty_fraction": "empty_fraction",
    "pipeline.target_style": "target_style",
    "ssa.chunk_units": "chunk_units",
    "ssa.window_units": "window_units",
}


def _coerce(raw: str):
    try:
        return json.loads(raw)
    except ValueError:
        return raw


def load_config(path: str | Path) -> dict:
    """Read an INI-style config into a flat {"section.key": value} map."""
    parser = configparser.ConfigParser(interpolation=None)
    with Path(path).open("r", encoding="utf-8") as fh:
        parser.read_file(fh)
    flat = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            flat[f"{section}.{key}"] = _coerce(raw)
    return flat


def merge_settings(args: argparse.Namespace) -> dict:
    settings = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        for key, value in load_config(config_path).items():
            if key not in settings:
                raise ValueError(f"unknown config key {key!r}")
            settings[key] = value
    for key, dest in _FLAG_MAP.items():
        value = getattr(args, dest, None)
        if value is not None:
            settings[key] = value
    return settings


def make_backend(settings: dict) -> ChatBackend:
    if settings["backend.mock_rules"]:
        return MockBackend.from_jsonl(settings["backend.mock_rules"])
    if settings["backend.url"]:
        return HttpBackend(
            url=str(settings["backend.url"]),
            model=str(settings["backend.model"]),
            api_key_env=str(settings["backend.api_key_env"]) or None,
            timeout=float(settings["backend.timeout"]),
            max_attempts=int(settings["backend.max_attempts"]),
            backoff_base=float(settings["backend.backoff_base"]),
        )
    raise ValueError("no backend configured: pass --mock-rules or --backend-url")


def _maybe_backend(settings: dict) -> ChatBackend | None:
    if settings["backend.mock_rules"] or settings["backend.url"]:
        return make_backend(settings)
    return None


def _policy(settings: dict) -> LengthPolicy:
    return LengthPolicy(
        unit=str(settings["corpus.length_unit"]),
        max_units=int(settings["corpus.max_units"]),
    )


def _sha256(path: str | Path) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_json(data: dict, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _write_rows(rows: list[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")


def _write_manifest(
    args: argparse.Namespace,
    settings: dict,
    inputs: list,
    outputs: list,
    out_path: str,
    wall_time_s: float,
) -> None:
    manifest = {
        "subcommand": args.command,
        "settings": settings,
        "seed": int(settings["run.seed"]),
        "inputs": {str(p): _sha256(p) for p in inputs if p and Path(p).exists()},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "wall_time_s": round(wall_time_s, 6),
    }
    manifest_path = getattr(args, "manifest", None) or f"{out_path}.manifest.json"
    _write_json(manifest, manifest_path)


def cmd_synth(args: argparse.Namespace, settings: dict) -> tuple[list, list, str]:
    settings["synth.pairs"] = args.pairs
    settings["synth.units"] = args.units
    policy = _policy(settings)
    examples = gen_synthetic_recall(int(settings["run.seed"]), args.pairs, args.units, policy)
    write_jsonl(examples, args.out)
    print(f"wrote {len(examples)} examples to {args.out}")
    return [args.config], [args.out], args.out


def cmd_build_data(args: argparse.Namespace, settings: dict) -> tuple[list, list, str]:
    policy = _policy(settings)
    corpus = read_jsonl(args.corpus, Example)
    truncation_rejections = []
    usable = []
    for example in corpus:
        try:
            usable.append(truncate_example(example, policy))
        except QueryTooLong:
            truncation_rejections.append({"id": example.id, "reason": "query_too_long"})

    backend = make_backend(settings)
    seed = int(settings["run.seed"])
    cfg = PipelineConfig(
        extractor=backend,
        verifier=backend,
        locator=backend,
        refusal_string=str(settings["pipeline.refusal_string"]),
        target_style=str(settings["pipeline.target_style"]),
        cot_count=int(settings["pipeline.cot_count"]),
        base_count=int(settings["pipeline.base_count"]),
        empty_fraction=float(settings["pipeline.empty_fraction"]),
        seed=seed,
    )
    parallelism = int(settings["backend.parallelism"])
    valid_pairs, rejections = build_valid_set(usable, cfg, parallelism)
    empty_pairs, skips = build_empty_set(usable, cfg, parallelism)
    records = assemble_dataset(valid_pairs, empty_pairs, cfg)
    admitted = len(records)

    base_records = []
    if args.base:
        base_records = read_jsonl(args.base, TrainingRecord)[: cfg.base_count]
        records = mix_with_base(base_records, records, seed)
    write_jsonl(records, args.out)

    audit = {
        "admitted": admitted,
        "rejected": truncation_rejections + rejections,
        "skipped": skips,
        "base_records": len(base_records),
        "total_records": len(records),
    }
    audit_path = args.audit or f"{args.out}.audit.json"
    _write_json(audit, audit_path)
    print(f"wrote {len(records)} training records to {args.out}")
    return (
        [args.config, args.corpus, args.base, settings["backend.mock_rules"]],
        [args.out, audit_path],
        args.out,
    )


def cmd_infer(args: argparse.Namespace, settings: dict) -> tuple[list, list, str]:
    examples = read_jsonl(args.input, Example)
    backend = make_backend(settings)
    policy = _policy(settings)
    parallelism = int(settings["backend.parallelism"])
    rows = []
    if args.mode == "ssa":
        cfg = SsaConfig(
            student=backend,
            chunk_units=int(settings["ssa.chunk_units"]),
            policy=policy,
            drop_refusals=bool(settings["ssa.drop_refusals"]),
            refusal_string=str(settings["pipeline.refusal_string"]),
        )
        for example in examples:
            trace = ssa_answer(example, cfg, parallelism)
            rows.append(
                {
                    "id": example.id,
                    "chunks": [[chunk, summary] for chunk, summary in trace.chunks],
                    "aggregate": trace.aggregate,
                    "answer": trace.answer,
                    "latency_ms": trace.latency_ms,
                }
            )
    else:
        window = int(settings["ssa.window_units"])
        for example in examples:
            started = time.perf_counter()
            answer = direct_answer(example, window, backend, policy)
            elapsed_ms = (time.perf_counter() - started) * 1000.0
            rows.append({"id": example.id, "answer": answer, "latency_ms": elapsed_ms})
    _write_rows(rows, args.out)
    print(f"wrote {len(rows)} traces to {args.out}")
    return (
        [args.config, args.input, settings["backend.mock_rules"]],
        [args.out],
        args.out,
    )


def cmd_evaluate(args: argparse.Namespace, settings: dict) -> tuple[list, list, str]:
    examples = read_jsonl(args.input, Example)
    if not args.bindings:
        raise MissingBinding("no metric bindings provided; pass --bindings")
    bindings = json.loads(Path(args.bindings).read_text(encoding="utf-8"))
    if not isinstance(bindings, dict):
        raise ValueError("bindings file must map task names to metric names")

    backend = _maybe_backend(settings)
    predictions = read_predictions(args.predictions) if args.predictions else None
    if predictions is None and backend is None:
        raise ValueError("evaluate needs --predictions or a configured backend")
    report = run_eval(
        examples,
        bindings,
        predictions=predictions,
        backend=backend,
        judge=backend,
        parallelism=int(settings["backend.parallelism"]),
    )
    write_report(report, args.out)
    print(report.render_table())
    return (
        [args.config, args.input, args.predictions, args.bindings, settings["backend.mock_rules"]],
        [args.out],
        args.out,
    )


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI config file layered under the flags")
    parser.add_argument("--seed", type=int, help="seed for all deterministic choices")
    parser.add_argument("--manifest", help="manifest path (default: <out>.manifest.json)")
    parser.add_argument("--length-unit", choices=[WHITESPACE_WORDS, CHARS_DIV4])
    parser.add_argument("--max-units", type=int, help="per-example length budget")
    parser.add_argument("-v", "--verbose", action="store_true")


def _add_backend(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mock-rules", help="JSONL rule file; replaces the live backend")
    parser.add_argument("--backend-url", help="chat-completions endpoint URL")
    parser.add_argument("--model", help="model name sent to the endpoint")
    parser.add_argument("--api-key-env", help="env var holding the API key")
    parser.add_argument("--timeout", type=float)
    parser.add_argument("--max-attempts", type=int)
    parser.add_argument("--backoff-base", type=float)
    parser.add_argument("--parallelism", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recallkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic recall corpus")
    p.add_argument("--pairs", type=int, required=True, help="number of needle pairs")
    p.add_argument("--units", type=int, required=True, help="haystack size in length units")
    p.add_argument("--out", required=True, help="output Example JSONL")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-data", help="construct the summary-CoT training set")
    p.add_argument("--corpus", required=True, help="labeled Example JSONL")
    p.add_argument("--base", help="base SFT TrainingRecord JSONL to mix in")
    p.add_argument("--out", required=True, help="output TrainingRecord JSONL")
    p.add_argument("--audit", help="audit log path (default: <out>.audit.json)")
    p.add_argument("--cot-count", type=int, help="constructed records to keep")
    p.add_argument("--empty-fraction", type=float, help="share of refusal records")
    p.add_argument("--target-style", choices=[SUMMARY_ONLY, SUMMARY_THEN_ANSWER])
    _add_common(p)
    _add_backend(p)
    p.set_defaults(func=cmd_build_data)

    p = sub.add_parser("infer", help="run segmented or direct answering")
    p.add_argument("--input", required=True, help="Example JSONL to answer")
    p.add_argument("--out", required=True, help="output trace JSONL")
    p.add_argument("--mode", choices=["ssa", "direct"], default="ssa")
    p.add_argument("--chunk-units", type=int, help="chunk budget for ssa mode")
    p.add_argument("--window-units", type=int, help="context window for direct mode")
    _add_common(p)
    _add_backend(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", help="score predictions or a live backend")
    p.add_argument("--input", required=True, help="Example JSONL with task tags")
    p.add_argument("--predictions", help="prediction JSONL; omit for live inference")
    p.add_argument("--bindings", help="JSON file mapping task names to metrics")
    p.add_argument("--out", required=True, help="output report JSON")
    _add_common(p)
    _add_backend(p)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    started = time.perf_counter()
    try:
        settings = merge_settings(args)
        inputs, outputs, out_path = args.func(args, settings)
        _write_manifest(args, settings, inputs, outputs, out_path, time.perf_counter() - started)
    except _DOMAIN_ERRORS as err:
        payload = {"error": type(err).__name__, "message": str(err)}
        print(json.dumps(payload), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
