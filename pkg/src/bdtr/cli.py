"""Command-line entry point: ``bdtr {validate,run,eval,sweep,compare}``.

Exit codes: 0 success, 1 runtime failure, 2 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import yaml

from .corpus import load_corpus, load_qa_dataset, unresolved_gold_ids
from .engine import STRATEGIES, EngineConfig
from .errors import BDTRError, DataError, GatewayConfigError, MalformedTrace, MissingTrace, PromptError
from .evaluation import DEFAULT_KS, MetricReport, complementarity, evaluate_run
from .gateway import HttpGateway, ScriptedGateway, load_script
from .prompts import PromptSet, check_prompt_dir
from .retrieval import LexicalIndex, RetrieverConfig, build_index
from .runner import TraceSink, run_samples, timing_summary
from .trace import RunTrace, load_traces, write_traces

logger = logging.getLogger("bdtr")

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2


class ConfigError(BDTRError):
    pass


@dataclass
class GatewaySettings:
    mode: str = "scripted"
    script_path: Path | None = None
    latency_ms: float = 0.0
    base_url: str | None = None
    model: str | None = None
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 8


@dataclass
class AppConfig:
    corpus_path: Path
    qa_path: Path
    output_dir: Path = Path("out")
    engine: EngineConfig = field(default_factory=EngineConfig)
    retriever: RetrieverConfig = field(default_factory=RetrieverConfig)
    gateway: GatewaySettings = field(default_factory=GatewaySettings)
    concurrency: int = 4
    recall_ks: tuple[int, ...] = DEFAULT_KS
    seed: int = 0  # reserved; nothing is sampled yet
    prompts_dir: Path | None = None
    index_path: Path | None = None


def _known(cls, data: dict, section: str) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {sorted(unknown)}")
    return data


def load_config(path: str | Path) -> AppConfig:
    """Read a YAML (or JSON) config; relative paths resolve against its directory."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    base = path.parent

    def p(value):
        return None if value is None else Path(os.path.normpath(base / value))

    raw = dict(raw)
    try:
        retr = RetrieverConfig(**_known(RetrieverConfig, raw.pop("retriever", {}) or {}, "retriever"))
        eng_raw = dict(raw.pop("engine", {}) or {})
        eng_raw.setdefault("retrieve_k", retr.k)
        engine = EngineConfig(**_known(EngineConfig, eng_raw, "engine"))
        gw_raw = dict(raw.pop("gateway", {}) or {})
        _known(GatewaySettings, gw_raw, "gateway")
        if "script_path" in gw_raw:
            gw_raw["script_path"] = p(gw_raw["script_path"])
        gateway = GatewaySettings(**gw_raw)
        for key in ("corpus_path", "qa_path"):
            if key not in raw:
                raise ConfigError(f"config is missing {key}")
        _known(AppConfig, raw, "config")
        cfg = AppConfig(
            corpus_path=p(raw["corpus_path"]),
            qa_path=p(raw["qa_path"]),
            output_dir=p(raw.get("output_dir", "out")),
            engine=engine,
            retriever=retr,
            gateway=gateway,
            concurrency=int(raw.get("concurrency", 4)),
            recall_ks=tuple(raw.get("recall_ks", DEFAULT_KS)),
            seed=int(raw.get("seed", 0)),
            prompts_dir=p(raw.get("prompts_dir")),
            index_path=p(raw.get("index_path")),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.gateway.mode not in ("scripted", "http"):
        raise ConfigError(f"gateway.mode must be 'scripted' or 'http', got {cfg.gateway.mode!r}")
    if cfg.concurrency < 1:
        raise ConfigError("concurrency must be >= 1")
    return cfg


def apply_overrides(cfg: AppConfig, args: argparse.Namespace) -> AppConfig:
    engine = cfg.engine
    if getattr(args, "strategy", None):
        engine = engine.with_(strategy=args.strategy)
    rounds = getattr(args, "rounds", None)
    if rounds and len(rounds) == 1:
        engine = engine.with_(rounds=rounds[0])
    cfg = replace(cfg, engine=engine)
    if getattr(args, "concurrency", None) is not None:
        cfg = replace(cfg, concurrency=args.concurrency)
    if getattr(args, "output_dir", None):
        cfg = replace(cfg, output_dir=Path(args.output_dir))
    if getattr(args, "ks", None):
        cfg = replace(cfg, recall_ks=tuple(args.ks))
    return cfg


# -- building blocks ---------------------------------------------------------


def validate_config(cfg: AppConfig) -> list[str]:
    problems: list[str] = []
    corpus = None
    for label, path in (("corpus", cfg.corpus_path), ("qa", cfg.qa_path)):
        if not path.exists():
            problems.append(f"{label} file not found: {path}")
    if cfg.corpus_path.exists():
        try:
            corpus = load_corpus(cfg.corpus_path)
            if len(corpus) == 0:
                problems.append(f"corpus is empty: {cfg.corpus_path}")
        except BDTRError as exc:
            problems.append(f"corpus: {exc}")
    if cfg.qa_path.exists():
        try:
            samples = load_qa_dataset(cfg.qa_path)
            seen: set[str] = set()
            for s in samples:
                if s.id in seen:
                    problems.append(f"qa: duplicate sample id {s.id!r}")
                seen.add(s.id)
            if corpus is not None:
                problems += [f"qa: sample {sid!r} gold id {gid!r} not in corpus" for sid, gid in unresolved_gold_ids(samples, corpus)]
        except BDTRError as exc:
            problems.append(f"qa: {exc}")
    if cfg.prompts_dir is not None:
        if not cfg.prompts_dir.is_dir():
            problems.append(f"prompts directory not found: {cfg.prompts_dir}")
        else:
            problems += [f"prompt {p}" for p in check_prompt_dir(cfg.prompts_dir)]
    gw = cfg.gateway
    if gw.mode == "scripted":
        if gw.script_path is None:
            problems.append("gateway.script_path is required in scripted mode")
        elif not gw.script_path.exists():
            problems.append(f"script file not found: {gw.script_path}")
        else:
            try:
                load_script(gw.script_path)
            except BDTRError as exc:
                problems.append(f"script: {exc}")
    else:
        if not gw.base_url or not gw.model:
            problems.append("gateway.base_url and gateway.model are required in http mode")
    return problems


def make_retriever(cfg: AppConfig) -> LexicalIndex:
    if cfg.index_path is not None and cfg.index_path.exists():
        return LexicalIndex.load(cfg.index_path)
    index = build_index(load_corpus(cfg.corpus_path), cfg.retriever)
    if cfg.index_path is not None:
        index.save(cfg.index_path)
    return index


def make_gateway(cfg: AppConfig):
    gw = cfg.gateway
    if gw.mode == "scripted":
        return ScriptedGateway.from_file(gw.script_path, latency=gw.latency_ms / 1000.0)
    return HttpGateway(
        base_url=gw.base_url,
        model=gw.model,
        api_key_env=gw.api_key_env,
        temperature=gw.temperature,
        timeout=gw.timeout,
        max_retries=gw.max_retries,
        max_in_flight=gw.max_in_flight,
    )


def make_prompts(cfg: AppConfig) -> PromptSet:
    return PromptSet.load_dir(cfg.prompts_dir)


def _systemic_failure(traces: Sequence[RunTrace]) -> str | None:
    if not traces:
        return None
    transport = ("GatewayFailure: Timeout", "GatewayFailure: Transport", "GatewayFailure: HTTPStatus")
    if all(t.status == "error" and (t.error or "").startswith(transport) for t in traces):
        return f"every sample failed at the gateway (first error: {traces[0].error})"
    return None


def execute(cfg: AppConfig, out_dir: Path, *, retriever=None, gateway=None, prompts=None) -> list[RunTrace]:
    """Run every QA sample and write ``traces.jsonl`` under ``out_dir``."""
    samples = load_qa_dataset(cfg.qa_path)
    retriever = retriever or make_retriever(cfg)
    gateway = gateway or make_gateway(cfg)
    prompts = prompts or make_prompts(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    partial = out_dir / "traces.partial.jsonl"
    partial.unlink(missing_ok=True)
    start = time.perf_counter()
    with TraceSink(partial) as sink:
        traces = run_samples(samples, retriever, gateway, cfg.engine, concurrency=cfg.concurrency, prompts=prompts, sink=sink)
    elapsed = time.perf_counter() - start
    write_traces(traces, out_dir / "traces.jsonl")
    partial.unlink()
    summary = {
        "strategy": cfg.engine.strategy,
        "rounds": cfg.engine.rounds,
        "samples": len(traces),
        "errors": sum(t.status != "ok" for t in traces),
        "concurrency": cfg.concurrency,
        "wall_seconds": elapsed,
        "stage_seconds": timing_summary(traces),
    }
    (out_dir / "run_summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    logger.info("%d samples in %.2fs (%d errors)", len(traces), elapsed, summary["errors"])
    return traces


def write_report(report: MetricReport, out_dir: Path, ks: Sequence[int], title: str = "") -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out_dir / "report.txt").write_text(report.to_text(title), encoding="utf-8")
    report.write_csv(out_dir / "per_sample.csv", ks=sorted(set(ks)))


# -- commands ----------------------------------------------------------------


def cmd_validate(cfg: AppConfig) -> int:
    problems = validate_config(cfg)
    for p in problems:
        print(p)
    print(f"{len(problems)} problems")
    return EXIT_INVALID if problems else EXIT_OK


def _precheck(cfg: AppConfig) -> int | None:
    problems = validate_config(cfg)
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        print(f"{len(problems)} problems; run aborted", file=sys.stderr)
        return EXIT_INVALID
    return None


def cmd_run(cfg: AppConfig) -> int:
    if (code := _precheck(cfg)) is not None:
        return code
    traces = execute(cfg, cfg.output_dir)
    failure = _systemic_failure(traces)
    if failure:
        print(f"error: {failure}", file=sys.stderr)
        return EXIT_RUNTIME
    errors = sum(t.status != "ok" for t in traces)
    print(f"wrote {len(traces)} traces to {cfg.output_dir / 'traces.jsonl'} ({errors} with errors)")
    return EXIT_OK


def cmd_eval(trace_path: Path, qa_path: Path, ks: Sequence[int], out_dir: Path) -> int:
    traces = load_traces(trace_path)
    samples = load_qa_dataset(qa_path)
    report = evaluate_run(traces, samples, ks)
    write_report(report, out_dir, ks)
    print(report.to_text(str(trace_path)), end="")
    return EXIT_OK


def cmd_sweep(cfg: AppConfig, rounds_list: Sequence[int]) -> int:
    if (code := _precheck(cfg)) is not None:
        return code
    if not rounds_list or any(r < 1 for r in rounds_list):
        print("error: --rounds must list positive integers", file=sys.stderr)
        return EXIT_INVALID
    samples = load_qa_dataset(cfg.qa_path)
    retriever, gateway, prompts = make_retriever(cfg), make_gateway(cfg), make_prompts(cfg)
    sweep_dir = cfg.output_dir / "sweep"
    results: dict[int, MetricReport] = {}
    for r in rounds_list:
        run_cfg = replace(cfg, engine=cfg.engine.with_(rounds=r))
        traces = execute(run_cfg, sweep_dir / f"R{r}", retriever=retriever, gateway=gateway, prompts=prompts)
        if (failure := _systemic_failure(traces)):
            print(f"error: {failure}", file=sys.stderr)
            return EXIT_RUNTIME
        results[r] = evaluate_run(traces, samples, cfg.recall_ks)
        write_report(results[r], sweep_dir / f"R{r}", cfg.recall_ks, f"R={r}")
    doc = {str(r): rep.to_dict() for r, rep in results.items()}
    (sweep_dir / "sweep.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with open(sweep_dir / "pool_size_curve.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        ks = sorted(set(cfg.recall_ks))
        w.writerow(["rounds", "mean_pool_size", "em", "f1", *[f"recall@{k}" for k in ks]])
        for r, rep in results.items():
            w.writerow([r, f"{rep.mean_pool_size:.4f}", f"{rep.em:.4f}", f"{rep.f1:.4f}",
                        *[f"{rep.recall_at_final.get(k, 0.0):.4f}" for k in ks]])
    text = "".join(rep.to_text(f"== R={r} ({cfg.engine.strategy})") for r, rep in results.items())
    (sweep_dir / "sweep.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_compare(cfg: AppConfig, strategies: Sequence[str]) -> int:
    if (code := _precheck(cfg)) is not None:
        return code
    samples = load_qa_dataset(cfg.qa_path)
    retriever, gateway, prompts = make_retriever(cfg), make_gateway(cfg), make_prompts(cfg)
    cmp_dir = cfg.output_dir / "compare"
    results: dict[str, MetricReport] = {}
    for name in strategies:
        run_cfg = replace(cfg, engine=cfg.engine.with_(strategy=name))
        traces = execute(run_cfg, cmp_dir / name, retriever=retriever, gateway=gateway, prompts=prompts)
        if (failure := _systemic_failure(traces)):
            print(f"error: {failure}", file=sys.stderr)
            return EXIT_RUNTIME
        results[name] = evaluate_run(traces, samples, cfg.recall_ks)
        write_report(results[name], cmp_dir / name, cfg.recall_ks, name)
    comp = complementarity({n: rep.em_by_sample() for n, rep in results.items()})
    doc = {"metrics": {n: rep.to_dict() for n, rep in results.items()}, "complementarity": comp.to_dict()}
    if len(strategies) < 2:
        doc["complementarity"].pop("pairwise")
    (cmp_dir / "compare.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    ks = sorted(set(cfg.recall_ks))
    lines = [f"{'strategy':<16}{'EM':>8}{'F1':>8}" + "".join(f"{'R@' + str(k):>8}" for k in ks)]
    for n, rep in results.items():
        lines.append(f"{n:<16}{rep.em:>8.4f}{rep.f1:>8.4f}" + "".join(f"{rep.recall_at_final.get(k, 0.0):>8.4f}" for k in ks))
    if len(strategies) >= 2:
        lines.append("")
        width = max(len(f"{a} vs {b}") for a, b in comp.pairwise) + 2
        lines.append(f"{'pair':<{width}}{'both':>6}{'only a':>8}{'only b':>8}")
        for (a, b), pc in comp.pairwise.items():
            lines.append(f"{a + ' vs ' + b:<{width}}{len(pc.both):>6}{len(pc.only_first):>8}{len(pc.only_second):>8}")
    text = "\n".join(lines) + "\n"
    (cmp_dir / "compare.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _strategy_list(text: str) -> list[str]:
    names = [x.strip() for x in text.split(",") if x.strip()]
    bad = [n for n in names if n not in STRATEGIES]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown strategies {bad}; choose from {', '.join(STRATEGIES)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdtr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, strategy=True):
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--concurrency", type=int)
        p.add_argument("--output-dir", type=Path)
        p.add_argument("--ks", type=_int_list)
        if strategy:
            p.add_argument("--strategy", choices=STRATEGIES)

    common(sub.add_parser("validate", help="check data files, prompts and gateway settings"))
    p = sub.add_parser("run", help="run one strategy over the QA set")
    common(p)
    p.add_argument("--rounds", type=_int_list)
    p = sub.add_parser("eval", help="score a trace file")
    p.add_argument("--config", type=Path)
    p.add_argument("--traces", type=Path)
    p.add_argument("--qa", type=Path)
    p.add_argument("--ks", type=_int_list)
    p.add_argument("--output-dir", type=Path)
    p = sub.add_parser("sweep", help="run one strategy at several round budgets")
    common(p)
    p.add_argument("--rounds", type=_int_list, required=True)
    p = sub.add_parser("compare", help="run several strategies and compare their success sets")
    common(p, strategy=False)
    p.add_argument("--strategies", type=_strategy_list, required=True)
    p.add_argument("--rounds", type=_int_list)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "eval":
            return _eval_from_args(args)
        cfg = apply_overrides(load_config(args.config), args)
        if args.command == "validate":
            return cmd_validate(cfg)
        if args.command == "run":
            if args.rounds and len(args.rounds) != 1:
                print("error: run takes a single --rounds value", file=sys.stderr)
                return EXIT_INVALID
            return cmd_run(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, args.rounds)
        if args.command == "compare":
            return cmd_compare(cfg, args.strategies)
    except (ConfigError, PromptError, DataError, MalformedTrace, MissingTrace) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except GatewayConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (BDTRError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_INVALID


def _eval_from_args(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else None
    traces = args.traces or (cfg.output_dir / "traces.jsonl" if cfg else None)
    qa = args.qa or (cfg.qa_path if cfg else None)
    if traces is None or qa is None:
        print("error: eval needs --traces and --qa, or --config", file=sys.stderr)
        return EXIT_INVALID
    ks = args.ks or (cfg.recall_ks if cfg else DEFAULT_KS)
    out_dir = args.output_dir or (cfg.output_dir if cfg else traces.parent)
    return cmd_eval(traces, qa, ks, out_dir)


if __name__ == "__main__":
    raise SystemExit(main())
