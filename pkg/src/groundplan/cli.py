"""Command line interface: ``groundplan {bank build, plan, eval, grid, report}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from groundplan.dsl import read_vocabulary, render_step
from groundplan.embedding import (
    CachedProvider,
    HashingProvider,
    RemoteEmbeddingProvider,
    write_cache,
)
from groundplan.environment import (
    execute_program,
    fixture_scene_names,
    load_fixture_scene,
    load_scene,
)
from groundplan.errors import GroundPlanError
from groundplan.evaluation.dataset import ingest_dataset, split
from groundplan.evaluation.harness import (
    DEFAULT_GRID,
    EvalSetup,
    evaluate,
    grid_search,
    load_records,
    run_ablations,
)
from groundplan.evaluation.metrics import rank_runs
from groundplan.evaluation.report import format_table, task_rows_tsv
from groundplan.lm import CorpusBackend, RemoteCompletionBackend, SamplingParams, ScriptedBackend
from groundplan.planner import Planner, PlannerConfig, QueryTask, load_fixed_examples
from groundplan.translator import TranslatorConfig, build_bank

log = logging.getLogger("groundplan")


def data_path(name: str) -> Path:
    return Path(str(resources.files("groundplan").joinpath("data", name)))


def _add_model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("backends")
    g.add_argument("--backend", choices=("corpus", "scripted", "remote"), default="corpus",
                   help="planning LM: packaged paraphrase corpus, JSONL replay, or HTTP endpoint")
    g.add_argument("--corpus", type=Path, default=None, help="corpus JSONL for --backend corpus")
    g.add_argument("--script", type=Path, help="recorded samples for --backend scripted")
    g.add_argument("--embedder", choices=("hashing", "cache", "remote"), default="hashing")
    g.add_argument("--embedding-cache", type=Path, help="EMB1 file for --embedder cache")
    g.add_argument("--vocab", type=Path, default=None, help="object vocabulary, one name per line")
    g.add_argument("--scene", action="append", default=None,
                   help="fixture scene name or YAML path (repeatable; default: all fixtures)")

    c = p.add_argument_group("planner")
    c.add_argument("--mode", choices=("translated", "vanilla"), default="translated")
    c.add_argument("--example-policy", choices=("dynamic", "fixed"), default="dynamic")
    c.add_argument("--fixed-example", type=int, default=1, choices=(1, 2, 3))
    c.add_argument("--no-trajectory-correction", action="store_true")
    c.add_argument("--max-steps", type=int, default=20)
    c.add_argument("--condition-on-instructions", action="store_true")
    c.add_argument("--beta", type=float, default=0.3)
    c.add_argument("--epsilon", type=float, default=0.4)
    c.add_argument("--zero-length-fraction", type=float, default=0.5)
    c.add_argument("-k", "--n-samples", type=int, default=10)
    c.add_argument("--temperature", type=float, default=0.3)
    c.add_argument("--top-p", type=float, default=0.9)
    c.add_argument("--frequency-penalty", type=float, default=0.0)
    c.add_argument("--presence-penalty", type=float, default=0.0)
    c.add_argument("--repetition-penalty", type=float, default=1.0)


def config_from_args(args) -> PlannerConfig:
    return PlannerConfig(
        mode=args.mode,
        example_policy=args.example_policy,
        fixed_example=args.fixed_example,
        trajectory_correction=not args.no_trajectory_correction,
        max_steps=args.max_steps,
        condition_on_instructions=args.condition_on_instructions,
        sampling=SamplingParams(
            temperature=args.temperature,
            top_p=args.top_p,
            n_samples=args.n_samples,
            frequency_penalty=args.frequency_penalty,
            presence_penalty=args.presence_penalty,
            repetition_penalty=args.repetition_penalty,
        ),
        translator=TranslatorConfig(
            beta=args.beta, epsilon=args.epsilon, zero_length_fraction=args.zero_length_fraction
        ),
    )


def make_provider(args):
    if args.embedder == "remote":
        return RemoteEmbeddingProvider()
    if args.embedder == "cache":
        if not args.embedding_cache:
            raise SystemExit("--embedder cache needs --embedding-cache")
        return CachedProvider.from_file(args.embedding_cache)
    return HashingProvider()


def make_backend(args):
    if args.backend == "remote":
        return RemoteCompletionBackend()
    if args.backend == "scripted":
        if not args.script:
            raise SystemExit("--backend scripted needs --script")
        return ScriptedBackend.from_file(args.script)
    return CorpusBackend.from_file(args.corpus or data_path("mock_corpus.jsonl"))


def load_scenes(names):
    out = []
    for name in names or fixture_scene_names():
        path = Path(name)
        out.append(load_scene(path) if path.suffix in (".yaml", ".yml") else load_fixture_scene(name))
    return out


def _vocabulary(args):
    return read_vocabulary(args.vocab or data_path("vocabulary.txt"))


def _dataset_tasks(args, backend):
    """Held-out tasks and demonstrations for ``eval`` and ``grid``."""
    entries = ingest_dataset(args.dataset or data_path("corpus_dataset.txt"))
    if args.holdout:
        parts = split(entries, args.seed, args.holdout)
        held, demos = parts.held_out, parts.demonstrations
        log.info("split: %d demonstration / %d held-out tasks", *parts.sizes())
    elif isinstance(backend, CorpusBackend):
        known = {name for name in backend.tasks}
        held = [e for e in entries if e.task_name.lower() in known]
        demos = [e for e in entries if e.task_name.lower() not in known]
    else:
        raise SystemExit("--holdout is required unless the corpus backend is used")
    return held, [e.demonstration() for e in demos]


def _setup(args, config_needs_bank=True):
    provider = make_provider(args)
    backend = make_backend(args)
    bank = build_bank(provider, _vocabulary(args)) if config_needs_bank else None
    return provider, backend, bank


def cmd_bank_build(args) -> int:
    provider = make_provider(args)
    bank = build_bank(provider, _vocabulary(args))
    bank.dump(args.out)
    print(f"wrote {len(bank)} admissible actions to {args.out}")
    if args.cache:
        write_cache(args.cache, list(bank.index.keys), bank.index.raw)
        print(f"wrote embedding cache to {args.cache}")
    return 0


def cmd_plan(args) -> int:
    config = config_from_args(args)
    provider, backend, bank = _setup(args)
    demos = []
    if config.example_policy == "dynamic":
        entries = ingest_dataset(args.dataset or data_path("corpus_dataset.txt"))
        demos = [e.demonstration() for e in entries if e.task_name.lower() != args.task.lower()]
    planner = Planner(backend, config, demos, provider, bank, fixed_examples=load_fixed_examples())
    result = planner.plan(QueryTask(args.task, args.instructions))
    scenes = load_scenes(args.scene)
    reports = {s.name: execute_program(s, result.program) for s in scenes}
    score = sum(r.success for r in reports.values()) / len(reports)
    if args.json:
        out = result.to_json()
        out["executability"] = score
        out["scenes"] = {
            name: {"success": r.success, "failure": r.failure.message if r.failure else None}
            for name, r in reports.items()
        }
        print(json.dumps(out, indent=2))
        return 0
    print(f"Task: {args.task}")
    print(f"Example: {result.example}")
    for i, (step, s) in enumerate(zip(result.program.steps, result.step_scores), 1):
        print(f"Step {i}: {render_step(step)}    [{s:.3f}]")
    print(f"termination: {result.termination_reason}")
    for name, r in reports.items():
        status = "ok" if r.success else f"fails at step {r.failure.step_index}: {r.failure.message}"
        print(f"  {name}: {status}")
    print(f"executability: {score:.2f}")
    return 0


def cmd_eval(args) -> int:
    config = config_from_args(args)
    provider, backend, bank = _setup(args)
    held, demos = _dataset_tasks(args, backend)
    setup = EvalSetup(backend, provider, bank, demos, load_scenes(args.scene), workers=args.workers)
    if args.ablations:
        records = run_ablations(config, held, setup)
    else:
        records = [evaluate(config, held, setup, label=args.label or config.mode)]
    print(format_table(records))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for r in records:
                fh.write(json.dumps(r.to_json()) + "\n")
    return 0


def cmd_grid(args) -> int:
    base = config_from_args(args)
    provider, backend, bank = _setup(args)
    held, demos = _dataset_tasks(args, backend)
    setup = EvalSetup(backend, provider, bank, demos, load_scenes(args.scene), workers=args.workers)
    grid = json.loads(args.grid) if args.grid else DEFAULT_GRID
    records = grid_search(grid, base, held, setup, args.out, resume=not args.restart,
                          parallel=args.parallel)
    ranked = rank_runs(records)
    for r in ranked:
        r.label = r.label or _describe(r.config)
    print(format_table(ranked))
    return 0


def _describe(config: dict) -> str:
    s, t = config["sampling"], config["translator"]
    return (f"{config['mode']} eps={t['epsilon']} T={s['temperature']} "
            f"k={s['n_samples']} {config['example_policy']}")


def cmd_report(args) -> int:
    records = load_records(args.runs)
    if not records:
        print(f"no run records in {args.runs}", file=sys.stderr)
        return 1
    if args.rank:
        records = rank_runs(records, (args.norm_exec, args.norm_lcs))
    for r in records:
        r.label = r.label or _describe(r.config)
    print(task_rows_tsv(records) if args.tsv else format_table(records))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groundplan", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    bank = sub.add_parser("bank", help="action bank utilities")
    bank_sub = bank.add_subparsers(dest="bank_command", required=True)
    build = bank_sub.add_parser("build", help="enumerate and embed the admissible actions")
    build.add_argument("--vocab", type=Path, default=None)
    build.add_argument("--embedder", choices=("hashing", "cache", "remote"), default="hashing")
    build.add_argument("--embedding-cache", type=Path)
    build.add_argument("--out", type=Path, required=True, help="TSV of phrase and program syntax")
    build.add_argument("--cache", type=Path, help="also write bank embeddings as an EMB1 file")
    build.set_defaults(func=cmd_bank_build)

    plan = sub.add_parser("plan", help="generate a plan for one task")
    plan.add_argument("--task", required=True)
    plan.add_argument("--instructions")
    plan.add_argument("--dataset", type=Path, help="demonstrations for dynamic example selection")
    plan.add_argument("--json", action="store_true")
    _add_model_args(plan)
    plan.set_defaults(func=cmd_plan)

    for name, func, helptext in (
        ("eval", cmd_eval, "evaluate one configuration on held-out tasks"),
        ("grid", cmd_grid, "resumable hyperparameter grid search"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--dataset", type=Path)
        p.add_argument("--holdout", type=int, help="number of held-out tasks for a random split")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=4)
        _add_model_args(p)
        p.set_defaults(func=func)
        if name == "eval":
            p.add_argument("--out", type=Path, help="write run records as JSON lines")
            p.add_argument("--label")
            p.add_argument("--ablations", action="store_true",
                           help="also run each component-removed configuration")
        else:
            p.add_argument("--out", type=Path, required=True, help="JSONL run log (resume source)")
            p.add_argument("--grid", help='JSON object of parameter lists, e.g. \'{"epsilon": [0, 0.4]}\'')
            p.add_argument("--restart", action="store_true", help="ignore finished runs in --out")
            p.add_argument("--parallel", type=int, default=1, help="configurations run at once")

    report = sub.add_parser("report", help="summarize run records")
    report.add_argument("runs", type=Path)
    report.add_argument("--rank", action="store_true", help="order by normalized exec + LCS")
    report.add_argument("--norm-exec", type=float, default=1.0)
    report.add_argument("--norm-lcs", type=float, default=0.489)
    report.add_argument("--tsv", action="store_true", help="per-task rows instead of the table")
    report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (GroundPlanError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
