"""Command-line entry point.

Subcommands:
  run <config>        execute the experiment described by a config file
  gradcheck <fixture> estimator-vs-oracle sweep on a POMDP fixture
  validate <config>   check a config file and print its hash

Exit codes: 0 success, 1 configuration or input-data error, 2 runtime
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .envs.sonar import SonarParseError
from .experiments import (
    emit_curves,
    emit_gradcheck_tables,
    run_gradcheck,
    run_pendulum,
    run_sonar,
    write_run_metadata,
)
from .tabular import FixtureError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["output_dir"] = args.out
    if getattr(args, "log_raw", False):
        updates["log_raw"] = True
    if getattr(args, "runs", None) is not None:
        if config.sonar is None:
            raise ConfigError("--runs only applies to sonar configs")
        updates["sonar"] = dataclasses.replace(config.sonar, runs=args.runs)
    return dataclasses.replace(config, **updates) if updates else config


def _cmd_run(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    out_dir = Path(config.output_dir)
    if config.experiment == "sonar":
        records = run_sonar(config)
        csv_path, script = emit_curves(records, out_dir, index_name="epoch")
    elif config.experiment == "pendulum":
        records = [run_pendulum(config)]
        csv_path, script = emit_curves(records, out_dir, index_name="window")
    else:
        records = [run_gradcheck(config)]
        paths = emit_gradcheck_tables(records[0], out_dir)
        csv_path, script = paths[0], None
    meta = write_run_metadata(records, config, out_dir)
    print(f"config hash: {config.config_hash()}")
    print(f"wrote {csv_path}")
    if script is not None:
        print(f"wrote {script}")
    print(f"wrote {meta}")
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    raw = {
        "schema_version": 1,
        "experiment": "gradcheck",
        "seed": args.seed if args.seed is not None else 0,
        "gradcheck": {
            "fixture": args.fixture,
            "betas": [float(b) for b in args.betas],
            "steps": args.steps,
            "seeds": args.seeds,
        },
    }
    config = parse_config(raw, where="gradcheck arguments")
    if args.out is not None:
        config = dataclasses.replace(config, output_dir=args.out)
    record = run_gradcheck(config)
    paths = emit_gradcheck_tables(record, Path(config.output_dir))
    write_run_metadata([record], config, Path(config.output_dir))
    for i, beta in enumerate(record.series["beta"]):
        flag = "high-variance" if record.series["_quality_flags"][i] else "ok"
        print(f"beta {beta:g}: angle to oracle "
              f"{record.series['angle_mean_deg'][i]:.3f} deg "
              f"(min {record.series['angle_min_deg'][i]:.3f}, "
              f"max {record.series['angle_max_deg'][i]:.3f}) [{flag}]")
    print(f"decomposition ({int(record.scalars['decomposition_agents'])} agents): "
          f"max trace gap {record.scalars['decomposition_max_trace_gap']:.3e}, "
          f"max update gap {record.scalars['decomposition_max_update_gap']:.3e}")
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    config = load_config(args.config)
    problems = []
    if config.sonar is not None and not Path(config.sonar.data_path).exists():
        problems.append(f"sonar data file not found: {config.sonar.data_path}")
    if config.gradcheck is not None and not Path(config.gradcheck.fixture).exists():
        problems.append(f"gradcheck fixture not found: {config.gradcheck.fixture}")
    print(f"config ok: experiment={config.experiment} seed={config.seed} "
          f"hash={config.config_hash()}")
    for p in problems:
        print(f"warning: {p}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikerl",
        description="Reward-modulated learning in networks of stochastic "
                    "binary neurons: experiments and verification oracles.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the experiment in a config file")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    p_run.add_argument("--out", default=None, help="override the output directory")
    p_run.add_argument("--runs", type=int, default=None,
                       help="override the number of sonar runs")
    p_run.add_argument("--log-raw", action="store_true",
                       help="also write per-step raw logs")
    p_run.set_defaults(func=_cmd_run)

    p_gc = sub.add_parser("gradcheck",
                          help="estimator-vs-oracle sweep on a POMDP fixture")
    p_gc.add_argument("fixture")
    p_gc.add_argument("--betas", nargs="+", required=True)
    p_gc.add_argument("--steps", type=int, required=True)
    p_gc.add_argument("--seeds", type=int, default=10)
    p_gc.add_argument("--seed", type=int, default=None)
    p_gc.add_argument("--out", default=None)
    p_gc.set_defaults(func=_cmd_gradcheck)

    p_val = sub.add_parser("validate", help="check a config file")
    p_val.add_argument("config")
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FixtureError, SonarParseError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"runtime failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
