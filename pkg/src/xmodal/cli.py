"""Command-line entry point: ``xmodal <command> [flags]``.

Exit codes: 0 success, 2 usage error, 1 runtime error (one structured line
on stderr naming the stage and the cause).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .bench import (
    METHODS,
    SWEEP_GRIDS,
    AblationSpec,
    ExperimentConfig,
    Registry,
    SweepSpec,
    evaluate,
    report,
    run_ablation,
    run_config,
    run_sweep,
)
from .bench.records import RUNS_ENV

COMMANDS = ("gen-data", "calibrate", "train-source", "run-tgmb", "run-tgkt", "eval",
            "run-method", "ablate", "sweep", "report")


class CliError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# configuration


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, pairs: list[str]) -> dict:
    """``section.key=value`` (or top-level ``key=value``) pairs, JSON-typed values."""
    cfg = json.loads(json.dumps(cfg))
    for pair in pairs:
        if "=" not in pair:
            raise CliError(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        parts = key.split(".")
        node = cfg
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise CliError(f"unknown config section {p!r} in --set {key}")
            node = node[p]
        if parts[-1] not in node:
            raise CliError(f"unknown config key {key!r}")
        node[parts[-1]] = _parse_value(value)
    return cfg


def resolve_config(args, method: str | None = None) -> ExperimentConfig:
    """defaults < --config file < flags."""
    cfg = ExperimentConfig().to_dict()
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config file {path} not found")
        loaded = json.loads(path.read_text(encoding="utf-8"))
        for k, v in loaded.items():
            if isinstance(v, dict) and isinstance(cfg.get(k), dict):
                cfg[k].update(v)
            else:
                cfg[k] = v
    cfg = apply_overrides(cfg, args.set or [])
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.data is not None:
        cfg["data"] = str(Path(args.data).resolve())
    if method is not None:
        cfg["method"] = method
    return ExperimentConfig.from_dict(cfg)


def registry_for(args) -> Registry:
    root = os.environ.get(RUNS_ENV) or str(Path(args.out or ".") / "runs")
    return Registry(root)


def reports_dir(args) -> Path:
    return Path(args.out or ".") / "reports"


def _seeds(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers, got {text!r}")


def _floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"values must be comma-separated numbers, got {text!r}")


# ---------------------------------------------------------------------------
# commands


def _print_record(rec) -> None:
    accs = "  ".join(f"{k}={100 * v:.2f}%" for k, v in rec.accuracies.items())
    print(f"{rec.run_id}  {accs}")


def cmd_gen_data(args) -> int:
    from .forge import generate, save_dataset

    cfg = resolve_config(args)
    out = Path(args.out or "data")
    if out.exists() and any(out.iterdir()):
        raise CliError(f"output directory {out} is not empty")
    data = generate(cfg.effective_data_seed, cfg.gen)
    save_dataset(data, out)
    print(f"wrote dataset seed={data.seed} gamma={cfg.gen.gamma} to {out} "
          f"({len(data.tr_source)} source, {len(data.tr_target)} target, {len(data.ti_pairs)} TI pairs)")
    return 0


def cmd_calibrate(args) -> int:
    from .forge.calibrate import calibrate_gap, format_table

    cfg = resolve_config(args)
    gammas = args.gammas
    result = calibrate_gap(cfg.effective_data_seed, cfg.gen, gammas=gammas, source_cfg=cfg.source)
    reports = result if isinstance(result, list) else [result]
    print(format_table(reports))
    out = reports_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"calibration_s{cfg.effective_data_seed}.json"
    path.write_text(json.dumps([{**asdict(r), "in_band": r.in_band} for r in reports], indent=1) + "\n")
    return 0


def _prior_run(args, registry: Registry, need_translator: bool):
    if not args.from_run:
        if need_translator:
            raise CliError("missing translator: run-tgkt needs --from <run id> of a completed run-tgmb")
        return None
    try:
        rec = registry.load(args.from_run)
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from None
    if need_translator and rec.method not in ("tgmb", "tgkt"):
        raise CliError(f"missing translator: run {rec.run_id} is a {rec.method} run without tgmb artifacts")
    return str(registry.run_dir(rec.run_id).resolve())


def _run_stage(args, method: str, need_translator: bool = False) -> int:
    registry = registry_for(args)
    cfg = resolve_config(args, method)
    prior = _prior_run(args, registry, need_translator) if hasattr(args, "from_run") else None
    if prior is not None:
        cfg = replace(cfg, init_from=prior)
    rec = run_config(cfg, registry)
    _print_record(rec)
    return 0


def cmd_train_source(args) -> int:
    return _run_stage(args, "source_only")


def cmd_run_tgmb(args) -> int:
    return _run_stage(args, "tgmb")


def cmd_run_tgkt(args) -> int:
    return _run_stage(args, "tgkt", need_translator=True)


def cmd_run_method(args) -> int:
    return _run_stage(args, args.method)


def cmd_eval(args) -> int:
    from .bench.experiment import load_data
    from .nets import load_bundle, load_params

    registry = registry_for(args)
    try:
        rec = registry.load(args.run)
    except FileNotFoundError as exc:
        raise CliError(str(exc)) from None
    run_dir = registry.run_dir(rec.run_id)
    cfg = ExperimentConfig.from_dict(rec.config)
    if args.data is not None:
        cfg = replace(cfg, data=str(Path(args.data).resolve()))
    data = load_data(cfg)
    bundle = load_bundle(run_dir / "models" / "bundle")
    c_t = None
    if (run_dir / "models" / "target_classifier").is_dir():
        c_t = load_params(run_dir / "models" / "target_classifier", "classifier")
    from .adapt import holdout_split

    _, hold = holdout_split(len(data.tr_source), cfg.source.holdout_fraction, cfg.seed)
    out = {"source_test": evaluate(bundle, data, "source_test", holdout=hold),
           "source_only_target": evaluate(bundle, data, "source_only_target")}
    if rec.method in ("tgmb", "tgkt"):
        out["tgmb_translated"] = evaluate(bundle, data, "tgmb_translated")
    if rec.method in ("tgkt", "shot_like", "socket_like"):
        out["target_model"] = evaluate(bundle, data, "target_model", classifier=c_t)
    for k, v in out.items():
        print(f"{k:>20}: {100 * v:.2f}%")
    rd = reports_dir(args)
    rd.mkdir(parents=True, exist_ok=True)
    (rd / f"eval_{rec.run_id}.json").write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")
    return 0


def cmd_ablate(args) -> int:
    base = resolve_config(args)
    table = run_ablation(AblationSpec(args.stage), args.seeds, base, registry_for(args), reports_dir(args),
                         args.name, args.threads)
    print(Path(table.paths["md"]).read_text(encoding="utf-8"), end="")
    return 0


def cmd_sweep(args) -> int:
    base = resolve_config(args)
    spec = SweepSpec(args.param, tuple(args.values or ()), tuple(args.seeds))
    table = run_sweep(spec, base, registry_for(args), reports_dir(args), args.name, args.threads)
    print(Path(table.paths["md"]).read_text(encoding="utf-8"), end="")
    return 0


def cmd_report(args) -> int:
    registry = registry_for(args)
    ids = args.runs if args.runs is not None else [e["run_id"] for e in registry.index()]
    res = report(ids, registry, reports_dir(args), args.name)
    print(f"{res['records']} records -> {res['md']}, {res['csv']}")
    for m in res["missing"]:
        print(f"missing record: {m}")
    return 0


HANDLERS = {
    "gen-data": cmd_gen_data, "calibrate": cmd_calibrate, "train-source": cmd_train_source,
    "run-tgmb": cmd_run_tgmb, "run-tgkt": cmd_run_tgkt, "eval": cmd_eval, "run-method": cmd_run_method,
    "ablate": cmd_ablate, "sweep": cmd_sweep, "report": cmd_report,
}


# ---------------------------------------------------------------------------
# parser


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="JSON config file (stage-scoped sections)")
    g.add_argument("--seed", type=int, help="seed for data generation and training")
    g.add_argument("--out", help="output root (runs/ and reports/ live here; dataset dir for gen-data)")
    g.add_argument("--data", help="dataset directory written by gen-data")
    g.add_argument("--threads", type=int, default=1, help="parallel runs for ablate/sweep")
    g.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config entry, e.g. tgmb.lr_translator=1e-3 (repeatable)")
    g.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(prog="xmodal",
                                     description="Cross-modal adaptation with task-irrelevant paired data.")
    parser.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    add("gen-data", "generate a benchmark dataset")
    p = add("calibrate", "measure the modality gap of the generator")
    p.add_argument("--gammas", type=_floats, help="comma-separated gamma sweep")
    add("train-source", "train the source model")
    p = add("run-tgmb", "train the translator (source stage included unless --from)")
    p.add_argument("--from", dest="from_run", help="reuse the source model of this run")
    p = add("run-tgkt", "train the target model from a tgmb run")
    p.add_argument("--from", dest="from_run", help="run id holding the translator")
    p = add("eval", "score a completed run")
    p.add_argument("--run", required=True)
    p = add("run-method", "run one full method pipeline")
    p.add_argument("--method", required=True, choices=METHODS)
    p = add("ablate", "loss-term ablation table")
    p.add_argument("--stage", required=True, choices=("tgmb", "tgkt"))
    p.add_argument("--seeds", type=_seeds, default=[0, 1, 2, 3, 4])
    p.add_argument("--name")
    p = add("sweep", "single-weight sensitivity sweep")
    p.add_argument("--param", required=True, choices=sorted(SWEEP_GRIDS))
    p.add_argument("--values", type=_floats)
    p.add_argument("--seeds", type=_seeds, default=[0, 1, 2])
    p.add_argument("--name")
    p = add("report", "summarize run records")
    p.add_argument("--runs", type=lambda s: [r for r in s.split(",") if r], help="comma-separated run ids")
    p.add_argument("--name", default="report")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        print(json.dumps(ExperimentConfig().to_dict(), indent=1, sort_keys=True))
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        print("xmodal: error: a command is required", file=sys.stderr)
        return 2
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return HANDLERS[args.command](args)
    except (CliError, ValueError, FileNotFoundError, RuntimeError, OSError) as exc:
        cause = " ".join(str(exc).split())
        print(f"xmodal: error: stage={args.command} cause={type(exc).__name__}: {cause}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
