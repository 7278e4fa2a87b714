"""Command line entry point: ``llana {gen-data,run,bench,plot-data}``.

Exit codes are 0 on success, 2 for usage or validation errors and 3 for
runtime or transport failures. Any flag may also come from a JSON file
given with ``--config``; flags on the command line win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from llana.analog import AnalogOracle, TabularOracle, default_netlist, gen_dataset, load_dataset, load_netlist
from llana.bench import BenchSettings, bench_surrogates, write_plot_data
from llana.icl import LlmSettings, TaskCard
from llana.llm import DEFAULT_CACHE_DIR, HttpBackend, LlmConfigurationError, LlmError, MockBackend
from llana.mockllm import heuristic_responder
from llana.optimizer import BudgetedRun, RunAborted, run_bo, run_llana, run_mobo
from llana.space import SizeError, ValidationError, split_dataset

logger = logging.getLogger("llana")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(ValueError):
    """Flags are individually valid but inconsistent."""


def _csv_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _csv_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_words(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("LLM backend")
    g.add_argument("--backend", choices=("mock", "http"), default="mock")
    g.add_argument("--base-url", default=None, help="chat-completions endpoint (or $LLANA_BASE_URL)")
    g.add_argument("--cache-dir", default=None, help=f"response cache (http default {DEFAULT_CACHE_DIR})")
    g.add_argument("--rate-limit", type=float, default=60.0, help="requests per minute")
    g.add_argument("--model", default=LlmSettings().model_name)
    g.add_argument("--temperature", type=float, default=1.0)
    g.add_argument("--k-samples", type=int, default=10, help="completions per surrogate prediction")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="llana", description="LLM-assisted Bayesian optimization toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate the synthetic net-weighting dataset")
    g.add_argument("--config", type=Path)
    g.add_argument("--rows", type=int, default=500)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True, help="output directory or .csv path")
    g.add_argument("--netlist", type=Path, default=None, help="netlist JSON (default: bundled op-amp)")
    g.add_argument("--beta", type=float, default=0.05, help="area factor of the placer")

    r = sub.add_parser("run", help="run one optimization")
    r.add_argument("--config", type=Path)
    r.add_argument("--surrogate", choices=("gp", "forest", "icl"), default="icl")
    r.add_argument("--sampler", choices=("icl", "uniform-pool"), default=None,
                   help="default: icl for the icl surrogate, uniform-pool otherwise")
    r.add_argument("--trials", type=int, default=30)
    r.add_argument("--n-random", type=int, default=5)
    r.add_argument("--m-candidates", type=int, default=20)
    r.add_argument("--alpha", type=float, default=-0.1, help="exploration factor of the target score")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--dataset", type=Path, default=None, help="replay a dataset CSV instead of placing live")
    r.add_argument("--objective", default=None, help="objective column (default: the first)")
    r.add_argument("--mobo", action="store_true", help="bi-objective GP run over both proxy metrics")
    r.add_argument("--reference", type=_csv_floats, default=None, help="MOBO reference point r1,r2")
    r.add_argument("--gp-restarts", type=int, default=8)
    r.add_argument("--out", type=Path, default=None, help="record path (default runs/run_seed<seed>.jsonl)")
    r.add_argument("--no-timings", action="store_true", help="write null timings for byte-stable records")
    r.add_argument("--jobs", type=int, default=1, help="in-flight LLM requests")
    _add_backend_flags(r)

    b = sub.add_parser("bench", help="surrogate quality and regret versus observed points")
    b.add_argument("--config", type=Path)
    b.add_argument("--dataset", type=Path, required=True)
    b.add_argument("--surrogates", type=_csv_words, default=("gp", "forest", "icl"))
    b.add_argument("--n-grid", type=_csv_ints, default=(5, 10, 15, 20, 25, 30))
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--train", type=int, default=400)
    b.add_argument("--test", type=int, default=100)
    b.add_argument("--objective", default=None)
    b.add_argument("--gp-restarts", type=int, default=8)
    b.add_argument("--bo-trials", type=int, default=None, help="regret loop length (default max of n-grid)")
    b.add_argument("--m-candidates", type=int, default=20)
    b.add_argument("--no-regret", action="store_true", help="skip the regret loops")
    b.add_argument("--jobs", type=int, default=1, help="parallel cells and in-flight LLM requests")
    b.add_argument("--out", type=Path, default=Path("bench"))
    _add_backend_flags(b)

    pd = sub.add_parser("plot-data", help="reshape bench reports into tidy series CSVs")
    pd.add_argument("--config", type=Path)
    pd.add_argument("--report", type=Path, required=True, help="directory holding report.csv and regret.csv")
    pd.add_argument("--out", type=Path, required=True)
    return parser


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    """Parse ``argv``, letting a ``--config`` JSON file supply defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    try:
        values = json.loads(args.config.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    if not isinstance(values, dict):
        parser.error("config file must hold a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in values.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "help"):
            parser.error(f"unknown config key {key!r} for {args.command}")
        action = known[dest]
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        # Route through the flag's own type so config and CLI validate alike.
        if action.type is not None and isinstance(value, str):
            value = action.type(value)
        elif action.type is not None and value is not None and action.type in (int, float):
            value = action.type(value)
        if action.choices is not None and value not in action.choices:
            parser.error(f"config {key}={value!r} is not one of {list(action.choices)}")
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def make_backend(args: argparse.Namespace, seed: int):
    if args.backend == "mock":
        return MockBackend(heuristic_responder, mock_seed=seed, cache_dir=args.cache_dir, jobs=args.jobs)
    return HttpBackend(
        base_url=args.base_url,
        cache_dir=args.cache_dir or DEFAULT_CACHE_DIR,
        rate_limit=args.rate_limit,
        jobs=args.jobs,
    )


def cmd_gen_data(args: argparse.Namespace) -> int:
    netlist = load_netlist(args.netlist) if args.netlist else default_netlist()
    path = gen_dataset(netlist, args.rows, args.seed, args.out, beta=args.beta)
    print(f"wrote {args.rows} rows to {path}")
    return EXIT_OK


def _pick_objective(names, wanted):
    if wanted is None:
        return names[0]
    if wanted not in names:
        raise UsageError(f"objective {wanted!r} not in {list(names)}")
    return wanted


def cmd_run(args: argparse.Namespace) -> int:
    sampler = args.sampler or ("icl" if args.surrogate == "icl" else "uniform-pool")
    run = BudgetedRun(args.trials, args.n_random, args.m_candidates, args.alpha, args.seed, args.surrogate, sampler)
    out = args.out or Path("runs") / f"run_seed{args.seed}.jsonl"
    timings = not args.no_timings

    if args.dataset is not None:
        rows, names, space = load_dataset(args.dataset)
        if args.mobo:
            raise UsageError("--mobo runs on the live placer, not on --dataset")
        oracle = TabularOracle(rows, space, names, _pick_objective(names, args.objective))
    else:
        oracle = AnalogOracle(objectives=("cmrr", "offset") if args.mobo else (args.objective or "cmrr",))
        space = oracle.space

    if args.mobo:
        if args.reference is None or len(args.reference) != 2:
            raise UsageError("--mobo needs --reference r1,r2")
        record = run_mobo(oracle, space, run, args.reference, gp_restarts=args.gp_restarts, out_path=out, timings=timings)
        print(f"final hypervolume {record.hypervolumes[-1]!r} with {len(record.archive.points)} Pareto points")
        print(f"record: {out}")
        return EXIT_OK
    if args.surrogate != "icl" and sampler != "icl":
        record = run_bo(oracle, space, run, gp_restarts=args.gp_restarts, out_path=out, timings=timings)
    else:
        llm = LlmSettings(args.model, args.temperature)
        n_samples = len(oracle.pool) if args.dataset is not None else 500
        card = TaskCard.for_space(space, metric_name=oracle.objective_names[0], n_samples=n_samples)
        record = run_llana(oracle, space, run, make_backend(args, args.seed), card, k_samples=args.k_samples,
                           llm=llm, gp_restarts=args.gp_restarts, out_path=out, timings=timings)
    print(f"final best {oracle.objective_names[0]} = {record.best!r}")
    print(f"record: {out}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    rows, names, space = load_dataset(args.dataset)
    objective = names.index(_pick_objective(names, args.objective))
    split = split_dataset(rows, args.train, args.test, args.seed)
    settings = BenchSettings(
        surrogates=args.surrogates,
        n_grid=args.n_grid,
        repeats=args.repeats,
        seed=args.seed,
        objective=objective,
        k_samples=args.k_samples,
        gp_restarts=args.gp_restarts,
        bo_trials=args.bo_trials,
        m_candidates=args.m_candidates,
        jobs=args.jobs,
        regret=not args.no_regret,
    )
    card = TaskCard.for_space(space, metric_name=names[objective], n_samples=len(rows))
    report = bench_surrogates(split, space, names, settings, make_backend(args, args.seed), card, out_dir=args.out)
    for err in report.errors:
        print(f"warning: {err}", file=sys.stderr)
    print(f"wrote {len(report.rows)} report rows and {len(report.regret_rows)} regret rows to {args.out}")
    return EXIT_RUNTIME if report.all_failed else EXIT_OK


def cmd_plot_data(args: argparse.Namespace) -> int:
    for name in ("report.csv", "regret.csv"):
        if not (args.report / name).is_file():
            raise FileNotFoundError(f"missing {args.report / name}")
    paths = write_plot_data(args.report, args.out)
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "run": cmd_run, "bench": cmd_bench, "plot-data": cmd_plot_data}


def main(argv: list[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit 2 already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except RunAborted as exc:
        print(f"error: {exc} (partial record persisted)", file=sys.stderr)
        return EXIT_RUNTIME
    except (UsageError, ValidationError, SizeError, LlmConfigurationError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LlmError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
