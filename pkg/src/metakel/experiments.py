"""Experiment harness: calibration, regret, consistency, lambda sweep and lookup-table BO.

Every experiment is a pure function of an :class:`ExperimentConfig`. Replicate
``i`` of an experiment draws all of its randomness from
``SeedSequence([seed, tag, i])``, so results do not depend on execution order
or on the number of workers.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.stats import norm

from . import __version__
from .bo import meta_nu, oracle_nu, regret_summary, run_gp_ucb
from .features import (
    DomainSpec,
    FeatureAtlas,
    atlas_fourier_bands,
    atlas_legendre_1d,
    atlas_legendre_2d,
    atlas_random_fourier,
)
from .glasso import MetaDataset
from .gp import History, mean_var, posterior
from .metakernel import (
    MetaKernel,
    TheoryParams,
    fit_meta_kernel,
    k_full,
    kappa_population,
    lambda_min_bound,
)
from .synth import (
    TrueKernelSpec,
    draw_noise,
    generate_meta_data,
    sample_meta_tasks,
    sample_task_function,
    sample_true_kernel,
)

OUTPUT_ENV = "METAKEL_OUTPUT_DIR"
KINDS = ("calibrate", "regret", "consistency", "lambda-sweep", "lookup-bo", "gen-data")
_TAGS = {kind: i for i, kind in enumerate(KINDS)}
_DEFAULT_RUNS = {"calibrate": 50, "regret": 100, "consistency": 50, "lambda-sweep": 50, "lookup-bo": 10, "gen-data": 1}
_DEFAULT_T = {"regret": 500, "consistency": 100, "lambda-sweep": 100, "lookup-bo": 50}


class InputError(ValueError):
    """Invalid configuration or input file."""


@dataclass
class ExperimentConfig:
    """Settings for one experiment; defaults reproduce the 1D synthetic setup."""

    kind: str = "regret"
    family: str = "legendre1d"
    normalization: str = "orthonormal"
    p: int = 20
    s: int = 5
    B: float = 10.0
    sigma: float = 0.01
    m: int = 50
    n: int = 50
    lam: float = 0.03
    c1: Union[float, str] = "sum"
    delta: float = 0.1
    T: Optional[int] = None
    runs: Optional[int] = None
    seed: int = 0
    resolution: Optional[int] = None
    noise: str = "gaussian"
    kappa: Optional[float] = None
    solver: str = "fista"
    # calibration
    train_points: int = 4
    test_points: int = 1000
    prior_scale: Optional[float] = None
    # sweeps
    m_values: list = field(default_factory=lambda: [2, 5, 10, 25, 50])
    lambda_values: list = field(default_factory=lambda: [0.0005, 0.003, 0.03, 0.3])
    # random Fourier features (2D baseline and lookup tables)
    rff_features: int = 500
    rff_groups: int = 20
    rff_lengthscale: float = 0.3
    # Fourier bands
    band_width: int = 2
    base_freq: float = 1.0
    # lookup-table BO
    meta_tables: Optional[str] = None
    test_tables: Optional[str] = None
    transforms: dict = field(default_factory=dict)
    test_count: int = 10
    table_rows: int = 200
    workers: int = 1
    output_dir: str = "results"

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, mapping: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise InputError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**mapping)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                mapping = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(mapping, dict):
            raise InputError(f"config {path} must hold a JSON object")
        return cls.from_dict(mapping)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    @property
    def steps(self) -> int:
        return self.T if self.T is not None else _DEFAULT_T.get(self.kind, 100)

    @property
    def replicates(self) -> int:
        return self.runs if self.runs is not None else _DEFAULT_RUNS[self.kind]

    @property
    def scale(self) -> float:
        return self.prior_scale if self.prior_scale is not None else self.B**2

    def validate(self) -> None:
        def need(cond, message):
            if not cond:
                raise InputError(message)

        need(self.kind in KINDS, f"unknown experiment kind {self.kind!r}")
        need(self.family in ("legendre1d", "legendre2d", "rff", "fourier_bands"), f"unknown family {self.family!r}")
        need(self.normalization in ("unit", "orthonormal"), f"unknown normalization {self.normalization!r}")
        need(self.p >= 1, "p must be at least 1")
        need(1 <= self.s <= self._group_count(), "s must lie in [1, number of groups]")
        need(self.B > 0, "B must be positive")
        need(self.sigma >= 0, "sigma must be non-negative")
        need(self.m >= 1 and self.n >= 1, "m and n must be at least 1")
        need(self.lam > 0, "lambda must be positive")
        need(isinstance(self.c1, str) and self.c1 in ("sum", "max", "min") or
             not isinstance(self.c1, str) and self.c1 > 0, "c1 must be positive or one of sum/max/min")
        need(0 < self.delta < 1, "delta must lie in (0, 1)")
        need(self.T is None or self.T >= 1, "T must be at least 1")
        need(self.runs is None or self.runs >= 1, "runs must be at least 1")
        need(self.resolution is None or self.resolution >= 2, "resolution must be at least 2")
        need(self.noise in ("gaussian", "uniform"), f"unknown noise {self.noise!r}")
        need(self.kappa is None or self.kappa > 0, "kappa must be positive")
        need(self.solver in ("fista", "bcd"), f"unknown solver {self.solver!r}")
        need(self.train_points >= 1 and self.test_points >= 1, "need at least one train and test point")
        need(self.prior_scale is None or self.prior_scale > 0, "prior_scale must be positive")
        need(len(self.m_values) > 0 and all(int(v) >= 1 for v in self.m_values), "m_values must be positive")
        need(len(self.lambda_values) > 0 and all(v > 0 for v in self.lambda_values), "lambda_values must be positive")
        need(self.rff_features >= 1 and self.rff_groups >= 1, "RFF sizes must be positive")
        need(self.rff_features % self.rff_groups == 0, "rff_features must be a multiple of rff_groups")
        need(self.rff_lengthscale > 0, "rff_lengthscale must be positive")
        need(self.band_width >= 1 and self.base_freq > 0, "invalid Fourier band parameters")
        need(all(v in ("identity", "log2_div10") for v in self.transforms.values()), "transforms are identity or log2_div10")
        need(self.test_count >= 1 and self.table_rows >= 1, "test_count and table_rows must be positive")
        need(self.workers >= 1, "workers must be at least 1")

    def _group_count(self) -> int:
        if self.family == "legendre2d":
            return self.p + 1
        if self.family == "rff":
            return self.rff_groups
        return self.p


# building blocks -------------------------------------------------------------


def seeds(config: ExperimentConfig, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([config.seed, _TAGS[config.kind], *path])


def make_atlas(config: ExperimentConfig) -> FeatureAtlas:
    if config.family == "legendre1d":
        return atlas_legendre_1d(config.p, config.normalization)
    if config.family == "legendre2d":
        return atlas_legendre_2d(config.p, config.normalization)
    if config.family == "rff":
        return atlas_random_fourier(
            config.rff_features, 2, config.rff_lengthscale, config.rff_groups, config.seed
        )
    return atlas_fourier_bands(config.p, config.band_width, config.base_freq)


def candidate_grid(config: ExperimentConfig, atlas: FeatureAtlas) -> np.ndarray:
    """1000 points on a line, or a 64 x 64 grid in two dimensions."""
    if config.resolution is not None:
        return atlas.domain.grid_points(config.resolution)
    return atlas.domain.grid_points(1000 if atlas.domain.dim == 1 else 64)


def se_baseline(config: ExperimentConfig, input_dim: int, domain: Optional[DomainSpec] = None) -> MetaKernel:
    """Squared-exponential kernel through random Fourier features, weight ``2/G`` per group."""
    lower = upper = None
    if domain is not None:
        lower, upper = domain.lower, domain.upper
    atlas = atlas_random_fourier(
        config.rff_features, input_dim, config.rff_lengthscale, config.rff_groups, config.seed + 1, lower, upper
    )
    return MetaKernel(atlas, np.full(atlas.p, 2.0 / atlas.p), 1.0, name="se_rff")


def theory(config: ExperimentConfig, kappa: float = 1.0) -> TheoryParams:
    return TheoryParams(config.sigma, config.delta, config.B, config.s, kappa)


@dataclass(frozen=True, eq=False)
class MetaInstance:
    """Meta-data, the fitted kernel and the inputs needed for its exploration schedule."""

    data: MetaDataset
    k_hat: MetaKernel
    kappa: float


def meta_instance(config: ExperimentConfig, spec: TrueKernelSpec, m: int, seed: np.random.SeedSequence, lam: Optional[float] = None) -> MetaInstance:
    task_seed, data_seed = seed.spawn(2)
    tasks = sample_meta_tasks(spec, m, config.B, task_seed)
    data = generate_meta_data(spec, tasks, config.n, config.sigma, data_seed, config.noise)
    lam = config.lam if lam is None else lam
    k_hat, _ = fit_meta_kernel(data, spec.atlas, lam, config.c1, config.solver)
    kappa = config.kappa if config.kappa is not None else kappa_population(spec.atlas, m, k_hat.active_set)
    return MetaInstance(data, k_hat, kappa)


def hat_schedule(config: ExperimentConfig, inst: MetaInstance, atlas: FeatureAtlas):
    """Meta-learned exploration schedule, or the known-kernel one when no restricted eigenvalue is available."""
    if inst.kappa > 0:
        return meta_nu(theory(config, inst.kappa), inst.k_hat, inst.data.m, inst.data.n, atlas.p, atlas.d_max)
    return oracle_nu(theory(config), inst.k_hat)


def _nu_full(config: ExperimentConfig, kf: MetaKernel):
    # ||f||_{k_full}^2 = p sum_j eta*_j ||beta_j||^2 <= p B^2
    return oracle_nu(theory(config), kf, config.B * math.sqrt(kf.atlas.p))


def _map(fn, args: list, workers: int) -> list:
    if workers <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args))


# result tables -----------------------------------------------------------------


@dataclass(frozen=True)
class ResultTable:
    name: str
    columns: tuple
    rows: tuple

    def column(self, key: str) -> np.ndarray:
        i = self.columns.index(key)
        return np.array([row[i] for row in self.rows])

    def write(self, directory, config: ExperimentConfig) -> Path:
        """Write ``<name>.csv`` and a ``<name>.meta.json`` sidecar; returns the CSV path."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{self.name}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_fmt(v) for v in row])
        write_sidecar(path, config)
        return path


def write_sidecar(csv_path, config: ExperimentConfig) -> Path:
    """``<name>.meta.json`` next to a CSV: its header, the config and the package version."""
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as fh:
        header = next(csv.reader(fh))
    meta = {"version": f"metakel {__version__}", "table": csv_path.stem, "columns": header, "config": config.to_dict()}
    side = csv_path.with_name(f"{csv_path.stem}.meta.json")
    with open(side, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return side


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def output_dir(config: ExperimentConfig) -> Path:
    return Path(os.environ.get(OUTPUT_ENV) or config.output_dir)


def _curve_table(name: str, traces: dict, field_name: str = "cumulative_inference_regret") -> ResultTable:
    """One row per step with mean/std columns for every kernel."""
    columns = ["t"]
    stats = []
    for kernel, runs in traces.items():
        summary = regret_summary(runs)
        cum = np.stack([getattr(tr, field_name) for tr in runs])
        stats.append((summary.simple_mean, summary.simple_std, cum.mean(axis=0), cum.std(axis=0)))
        columns += [f"{kernel}_simple_mean", f"{kernel}_simple_std", f"{kernel}_cumulative_mean", f"{kernel}_cumulative_std"]
    T = len(stats[0][0])
    rows = []
    for t in range(T):
        row = [t + 1]
        for block in stats:
            row += [float(a[t]) for a in block]
        rows.append(tuple(row))
    return ResultTable(name, tuple(columns), tuple(rows))


# calibration -----------------------------------------------------------------

ALPHAS = tuple(round(0.05 * i, 2) for i in range(20))


def calibration_replicate(args) -> dict:
    """Coverage per level and sharpness for ``k_star``, ``k_hat`` and ``k_full`` on one fresh instance.

    Each GP uses the prior ``prior_scale * k`` and the noise parameter of the
    step after the training points.
    """
    config, r = args
    atlas = make_atlas(config)
    kernel_seed, meta_seed, fn_seed, draw_seed = seeds(config, r).spawn(4)
    spec = sample_true_kernel(atlas, config.s, kernel_seed)
    inst = meta_instance(config, spec, config.m, meta_seed)
    f = sample_task_function(spec, config.B, fn_seed)
    rng = np.random.default_rng(draw_seed)
    domain = atlas.domain
    X_train = domain.sample(rng, config.train_points)
    y_train = f(X_train) + draw_noise(rng, config.train_points, config.sigma, config.noise)
    X_test = domain.sample(rng, config.test_points)
    f_test = f(X_test)
    z = norm.ppf((1.0 + np.asarray(ALPHAS)) / 2.0)
    out = {}
    for mk in (spec.kernel(), inst.k_hat, k_full(atlas)):
        post = posterior(mk.scaled(config.scale), History(X_train, y_train))
        mu, var = mean_var(post, X_test)
        err = np.abs(f_test - mu)
        coverage = (err[None, :] <= z[:, None] * np.sqrt(var)[None, :]).mean(axis=1)
        out[mk.name] = (coverage, float(var.mean()))
    return out


def run_calibration(config: ExperimentConfig) -> tuple[ResultTable, ResultTable]:
    config = config.replace(kind="calibrate")
    results = _map(calibration_replicate, [(config, r) for r in range(config.replicates)], config.workers)
    names = list(results[0])
    cov = {k: np.stack([res[k][0] for res in results]) for k in names}
    sharp = {k: np.array([res[k][1] for res in results]) for k in names}
    columns = ["alpha"] + [f"{k}_{s}" for k in names for s in ("coverage_mean", "coverage_std")]
    rows = []
    for i, alpha in enumerate(ALPHAS):
        row = [alpha]
        for k in names:
            row += [float(cov[k][:, i].mean()), float(cov[k][:, i].std())]
        rows.append(tuple(row))
    coverage = ResultTable("calibration_coverage", tuple(columns), tuple(rows))
    sharp_cols = ["runs"] + [f"{k}_{s}" for k in names for s in ("sharpness_mean", "sharpness_std")]
    sharp_row = [config.replicates] + [float(v) for k in names for v in (sharp[k].mean(), sharp[k].std())]
    return coverage, ResultTable("calibration_sharpness", tuple(sharp_cols), (tuple(sharp_row),))


# regret ------------------------------------------------------------------------


def fixed_true_kernel(config: ExperimentConfig, atlas: FeatureAtlas) -> TrueKernelSpec:
    """The true kernel shared by all instances of a regret-type experiment."""
    return sample_true_kernel(atlas, config.s, seeds(config, 0))


def regret_instance(args) -> dict:
    config, i = args
    atlas = make_atlas(config)
    spec = fixed_true_kernel(config, atlas)
    meta_seed, fn_seed, noise_seed = seeds(config, 1, i).spawn(3)
    inst = meta_instance(config, spec, config.m, meta_seed)
    f = sample_task_function(spec, config.B, fn_seed)
    cand = candidate_grid(config, atlas)
    ks, kf = spec.kernel(), k_full(atlas)
    th = theory(config)
    runs = [
        (ks, oracle_nu(th, ks)),
        (inst.k_hat, hat_schedule(config, inst, atlas)),
        (kf, _nu_full(config, kf)),
    ]
    if atlas.domain.dim == 2:
        se = se_baseline(config, 2)
        runs.append((se, oracle_nu(th, se)))
    out = {}
    for mk, nu in runs:
        out[mk.name] = run_gp_ucb(
            f, mk, th, config.steps, cand, config.m, config.n, atlas.p, atlas.d_max,
            seed=noise_seed, nu=nu, noise=config.noise,
        )
    return out


def run_regret(config: ExperimentConfig) -> ResultTable:
    config = config.replace(kind="regret")
    results = _map(regret_instance, [(config, i) for i in range(config.replicates)], config.workers)
    traces = {k: [res[k] for res in results] for k in results[0]}
    return _curve_table("regret", traces)


def final_regrets(config: ExperimentConfig) -> dict:
    """``R_T`` and ``r_T`` per instance and kernel, for statistics beyond mean/std."""
    config = config.replace(kind="regret")
    results = _map(regret_instance, [(config, i) for i in range(config.replicates)], config.workers)
    return {
        k: {
            "cumulative": np.array([res[k].cumulative_inference_regret[-1] for res in results]),
            "simple": np.array([res[k].simple_regret[-1] for res in results]),
        }
        for k in results[0]
    }


# consistency and lambda sweep --------------------------------------------------------


def _sweep_instance(args) -> tuple:
    """Cumulative inference regret at ``T`` of ``k_hat`` (and once of ``k_star``) for one instance."""
    config, i, m, lam, with_oracle = args
    atlas = make_atlas(config)
    spec = fixed_true_kernel(config, atlas)
    fn_seed, noise_seed = seeds(config, 1, i).spawn(2)
    meta_seed = seeds(config, 2, i, m, int(round(lam * 1e9)))
    inst = meta_instance(config, spec, m, meta_seed, lam)
    f = sample_task_function(spec, config.B, fn_seed)
    cand = candidate_grid(config, atlas)
    th = theory(config)
    hat = run_gp_ucb(
        f, inst.k_hat, th, config.steps, cand, m, config.n, atlas.p, atlas.d_max,
        seed=noise_seed, nu=hat_schedule(config, inst, atlas), noise=config.noise,
    )
    star = None
    if with_oracle:
        ks = spec.kernel()
        star = run_gp_ucb(
            f, ks, th, config.steps, cand, m, config.n, atlas.p, atlas.d_max,
            seed=noise_seed, nu=oracle_nu(th, ks), noise=config.noise,
        ).cumulative_inference_regret[-1]
    return hat.cumulative_inference_regret[-1], star


def run_consistency(config: ExperimentConfig, m_values=None) -> ResultTable:
    """Mean ``R_T(k_hat)`` per number of meta-tasks, with the oracle ``R_T(k_star)`` alongside.

    Rewards and observation noise are shared across the sweep; only the
    meta-data changes with ``m``.
    """
    config = config.replace(kind="consistency")
    m_values = [int(v) for v in (m_values if m_values is not None else config.m_values)]
    if not m_values:
        raise InputError("m_values must not be empty")
    N = config.replicates
    args = [(config, i, m, config.lam, k == 0) for k, m in enumerate(m_values) for i in range(N)]
    results = _map(_sweep_instance, args, config.workers)
    oracle = np.array([results[i][1] for i in range(N)])
    rows = []
    for k, m in enumerate(m_values):
        hat = np.array([results[k * N + i][0] for i in range(N)])
        rows.append((m, float(hat.mean()), float(hat.std()), float(oracle.mean()), float(oracle.std()), N))
    columns = ("m", "k_hat_mean", "k_hat_std", "k_star_mean", "k_star_std", "runs")
    return ResultTable("consistency", columns, tuple(rows))


def run_lambda_sweep(config: ExperimentConfig, lambda_values=None) -> ResultTable:
    """Mean ``R_T(k_hat)`` per regularization strength, flagging values below the recovery floor."""
    config = config.replace(kind="lambda-sweep")
    lambda_values = [float(v) for v in (lambda_values if lambda_values is not None else config.lambda_values)]
    if not lambda_values or any(v <= 0 for v in lambda_values):
        raise InputError("lambda values must be positive")
    atlas = make_atlas(config)
    floor = lambda_min_bound(config.sigma, config.m, config.n, atlas.p, atlas.d_max, config.delta)
    N = config.replicates
    args = [(config, i, config.m, lam, False) for lam in lambda_values for i in range(N)]
    results = _map(_sweep_instance, args, config.workers)
    rows = []
    for k, lam in enumerate(lambda_values):
        hat = np.array([results[k * N + i][0] for i in range(N)])
        rows.append((lam, float(hat.mean()), float(hat.std()), floor, lam < floor, N))
    columns = ("lambda", "k_hat_mean", "k_hat_std", "lambda_floor", "below_floor", "runs")
    return ResultTable("lambda_sweep", columns, tuple(rows))


# lookup tables -----------------------------------------------------------------------


TRANSFORMS = {
    "identity": lambda v: v,
    "log2_div10": lambda v: np.log2(v) / 10.0,
}


@dataclass(frozen=True, eq=False)
class LookupTable:
    """Pre-evaluated configurations ``X`` with objective values to maximize."""

    X: np.ndarray
    objective: np.ndarray
    columns: tuple
    task: Optional[str] = None
    transforms: tuple = ()

    def __post_init__(self):
        if len(self.X) == 0:
            raise InputError("lookup table is empty")
        if self.X.ndim != 2 or len(self.X) != len(self.objective):
            raise InputError("lookup table rows and objective values disagree")

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def ingest_lookup(path, transforms: Optional[dict] = None) -> list[LookupTable]:
    """Read a lookup CSV: hyperparameter columns, an ``objective`` column, optionally ``task``.

    Returns one table per task (a single table without a task column).
    ``transforms`` maps column names to ``identity`` or ``log2_div10``.
    """
    transforms = dict(transforms or {})
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            body = list(reader)
    except OSError as exc:
        raise InputError(f"cannot read lookup table {path}: {exc}") from exc
    if not header:
        raise InputError(f"{path}: missing header row")
    header = [h.strip() for h in header]
    if "objective" not in header:
        raise InputError(f"{path}: no 'objective' column")
    hp_cols = [h for h in header if h not in ("objective", "task")]
    if not hp_cols:
        raise InputError(f"{path}: no hyperparameter columns")
    for col, kind in transforms.items():
        if col not in hp_cols:
            raise InputError(f"{path}: transform given for unknown column {col!r}")
        if kind not in TRANSFORMS:
            raise InputError(f"{path}: unknown transform {kind!r} for column {col!r}")
    obj_i = header.index("objective")
    task_i = header.index("task") if "task" in header else None
    hp_i = [header.index(c) for c in hp_cols]
    groups: dict = {}
    for lineno, row in enumerate(body, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise InputError(f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
        try:
            x = [float(row[i]) for i in hp_i]
            y = float(row[obj_i])
        except ValueError as exc:
            raise InputError(f"{path}: row {lineno} is not numeric ({exc})") from exc
        for col, kind in transforms.items():
            j = hp_cols.index(col)
            if kind == "log2_div10" and not x[j] > 0:
                raise InputError(f"{path}: row {lineno} column {col!r} must be positive for log2_div10")
            x[j] = float(TRANSFORMS[kind](x[j]))
        if not (np.all(np.isfinite(x)) and np.isfinite(y)):
            raise InputError(f"{path}: row {lineno} has non-finite values")
        key = row[task_i].strip() if task_i is not None else None
        groups.setdefault(key, ([], []))
        groups[key][0].append(x)
        groups[key][1].append(y)
    if not groups:
        raise InputError(f"{path}: no data rows")
    applied = tuple(sorted(transforms.items()))
    return [
        LookupTable(np.array(xs), np.array(ys), tuple(hp_cols), key, applied)
        for key, (xs, ys) in groups.items()
    ]


def write_lookup(path, tables: list[LookupTable]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task", *tables[0].columns, "objective"])
        for k, table in enumerate(tables):
            name = table.task if table.task is not None else str(k)
            for x, y in zip(table.X, table.objective):
                w.writerow([name, *(repr(float(v)) for v in x), repr(float(y))])


def synthetic_lookup_tables(config: ExperimentConfig, count: int, tag: int) -> list[LookupTable]:
    """Tables tabulating draws from a sparse truth over the RFF atlas, on uniform random rows."""
    atlas = atlas_random_fourier(config.rff_features, 2, config.rff_lengthscale, config.rff_groups, config.seed)
    spec = sample_true_kernel(atlas, config.s, seeds(config, 0))
    tables = []
    for k in range(count):
        fn_seed, row_seed = seeds(config, tag, k).spawn(2)
        f = sample_task_function(spec, config.B, fn_seed)
        X = atlas.domain.sample(np.random.default_rng(row_seed), config.table_rows)
        tables.append(LookupTable(X, f(X), ("hp1", "hp2"), f"{'meta' if tag == 3 else 'test'}{k}"))
    return tables


def _bounding_box(tables: list[LookupTable]) -> DomainSpec:
    X = np.vstack([t.X for t in tables])
    lo, hi = X.min(axis=0), X.max(axis=0)
    pad = np.where(hi > lo, 0.0, 0.5)
    return DomainSpec.box(lo - pad, hi + pad)


def _lookup_run(args) -> dict:
    config, k_hat, se, table, k, r = args
    th = theory(config)
    seed = seeds(config, 5, k, r)
    out = {}
    for mk in (k_hat, se):
        out[mk.name] = run_gp_ucb(
            _table_reward(table), mk, th, config.steps, table.X, 1, 1, mk.atlas.p, mk.atlas.d_max,
            seed=seed, nu=oracle_nu(th, mk), noise=config.noise,
        )
    return out


class _table_reward:
    """Noiseless objective of a table, looked up by row."""

    def __init__(self, table: LookupTable):
        self.table = table

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape == self.table.X.shape and np.array_equal(X, self.table.X):
            return self.table.objective.copy()
        d = np.abs(X[:, None, :] - self.table.X[None, :, :]).max(axis=2)
        return self.table.objective[d.argmin(axis=1)]


def run_lookup_bo(config: ExperimentConfig, meta_tables: list | None = None, test_tables: list | None = None) -> ResultTable:
    """Meta-learn from lookup tables, then GP-UCB on each test table over its rows.

    Without tables, synthetic ones are generated from a sparse truth on the
    RFF atlas (``m`` meta tables and ``test_count`` test tables). The
    cumulative columns hold the cumulative regret ``sum_t f* - f(x_t)``.
    """
    config = config.replace(kind="lookup-bo")
    if meta_tables is None:
        meta_tables = (
            ingest_lookup(config.meta_tables, config.transforms) if config.meta_tables
            else synthetic_lookup_tables(config, config.m, 3)
        )
    if test_tables is None:
        test_tables = (
            ingest_lookup(config.test_tables, config.transforms) if config.test_tables
            else synthetic_lookup_tables(config, config.test_count, 4)
        )
    dims = {t.dim for t in meta_tables} | {t.dim for t in test_tables}
    if len(dims) != 1:
        raise InputError(f"lookup tables disagree on dimension: {sorted(dims)}")
    dim = dims.pop()
    domain = _bounding_box(list(meta_tables) + list(test_tables))
    atlas = atlas_random_fourier(
        config.rff_features, dim, config.rff_lengthscale, config.rff_groups, config.seed, domain.lower, domain.upper
    )
    n = min(config.n, *(len(t.X) for t in meta_tables))
    rng = np.random.default_rng(seeds(config, 6))
    pairs = []
    for t in meta_tables:
        rows = np.sort(rng.choice(len(t.X), size=n, replace=False))
        pairs.append((t.X[rows], t.objective[rows]))
    k_hat, _ = fit_meta_kernel(MetaDataset.from_tasks(pairs), atlas, config.lam, config.c1, config.solver)
    se = se_baseline(config, dim, domain)
    args = [(config, k_hat, se, t, k, r) for k, t in enumerate(test_tables) for r in range(config.replicates)]
    results = _map(_lookup_run, args, config.workers)
    traces = {name: [res[name] for res in results] for name in (k_hat.name, se.name)}
    return _curve_table("lookup_bo", traces, "cumulative_regret")
