"""Command-line entry point: ``metakel <subcommand> [--config FILE] [overrides]``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments as ex
from .synth import generate_meta_data, realized_beta_min, sample_meta_tasks, write_meta_data_csv

# config field -> flag type
_OVERRIDES = {
    "family": str,
    "normalization": str,
    "p": int,
    "s": int,
    "B": float,
    "sigma": float,
    "m": int,
    "n": int,
    "lam": float,
    "delta": float,
    "T": int,
    "runs": int,
    "resolution": int,
    "noise": str,
    "kappa": float,
    "solver": str,
    "workers": int,
    "rff_features": int,
    "rff_groups": int,
    "rff_lengthscale": float,
    "test_count": int,
    "table_rows": int,
}


def _c1(value: str):
    return value if value in ("sum", "max", "min") else float(value)


def _float_list(value: str) -> list:
    return [float(v) for v in value.split(",") if v.strip()]


def _int_list(value: str) -> list:
    return [int(v) for v in value.split(",") if v.strip()]


def _transform(value: str) -> tuple:
    col, sep, kind = value.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected COLUMN=TRANSFORM, got {value!r}")
    return col, kind


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metakel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ex.KINDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with ExperimentConfig fields")
        p.add_argument("--seed", type=int, default=None, help="master seed (default: config value, else 0)")
        p.add_argument("--output-dir", default=None, help=f"output directory (env {ex.OUTPUT_ENV} takes precedence)")
        p.add_argument("--c1", type=_c1, default=None, help="number, or sum/max/min of the learned group norms")
        for flag, typ in _OVERRIDES.items():
            p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, type=typ, default=None)
        if name == "consistency":
            p.add_argument("--m-values", type=_int_list, default=None, help="comma-separated task counts")
        if name == "lambda-sweep":
            p.add_argument("--lambda-values", type=_float_list, default=None, help="comma-separated values")
        if name == "lookup-bo":
            p.add_argument("--meta-tables", default=None, help="CSV of meta tables (synthetic if omitted)")
            p.add_argument("--test-tables", default=None, help="CSV of test tables (synthetic if omitted)")
            p.add_argument("--transform", type=_transform, action="append", default=None,
                           metavar="COLUMN=KIND", help="identity or log2_div10, repeatable")
        if name == "gen-data":
            p.add_argument("--lookup", action="store_true", help="write synthetic lookup tables instead")
    return parser


def config_from_args(args: argparse.Namespace) -> ex.ExperimentConfig:
    base = ex.ExperimentConfig.load(args.config).to_dict() if args.config else {}
    base["kind"] = args.command
    for key in list(_OVERRIDES) + ["seed", "c1", "m_values", "lambda_values", "meta_tables", "test_tables"]:
        value = getattr(args, key, None)
        if value is not None:
            base[key] = value
    if getattr(args, "transform", None):
        base["transforms"] = {**base.get("transforms", {}), **dict(args.transform)}
    if args.output_dir is not None:
        base["output_dir"] = args.output_dir
    return ex.ExperimentConfig.from_dict(base)


def _gen_data(config: ex.ExperimentConfig, lookup: bool) -> list[Path]:
    out = ex.output_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    if lookup:
        paths = []
        for name, count, tag in (("lookup_meta", config.m, 3), ("lookup_test", config.test_count, 4)):
            path = out / f"{name}.csv"
            ex.write_lookup(path, ex.synthetic_lookup_tables(config, count, tag))
            ex.write_sidecar(path, config)
            paths.append(path)
        return paths
    atlas = ex.make_atlas(config)
    spec = ex.fixed_true_kernel(config, atlas)
    task_seed, data_seed = ex.seeds(config, 1).spawn(2)
    tasks = sample_meta_tasks(spec, config.m, config.B, task_seed)
    data = generate_meta_data(spec, tasks, config.n, config.sigma, data_seed, config.noise)
    path = out / "meta_data.csv"
    write_meta_data_csv(path, data)
    ex.write_sidecar(path, config)
    rows = tuple((j, float(spec.eta_star[j])) for j in range(atlas.p))
    ex.ResultTable("true_kernel", ("group", "eta_star"), rows).write(out, config)
    summary = ex.ResultTable("meta_data_summary", ("m", "n", "beta_min"), ((data.m, data.n, realized_beta_min(tasks)),))
    summary.write(out, config)
    return [path, out / "true_kernel.csv", out / "meta_data_summary.csv"]


def run(config: ex.ExperimentConfig, lookup: bool = False) -> list[Path]:
    """Run the experiment named by ``config.kind`` and write its tables."""
    out = ex.output_dir(config)
    kind = config.kind
    if kind == "gen-data":
        return _gen_data(config, lookup)
    if kind == "calibrate":
        tables = ex.run_calibration(config)
    elif kind == "regret":
        tables = (ex.run_regret(config),)
    elif kind == "consistency":
        tables = (ex.run_consistency(config),)
    elif kind == "lambda-sweep":
        tables = (ex.run_lambda_sweep(config),)
    else:
        tables = (ex.run_lookup_bo(config),)
    return [t.write(out, config) for t in tables]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        for path in run(config, getattr(args, "lookup", False)):
            print(path)
    except ex.InputError as exc:
        print(f"error: InputError: {exc}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
