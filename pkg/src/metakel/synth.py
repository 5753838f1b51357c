"""Synthetic ground truth: a sparse true kernel, task functions and meta-data."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .features import FeatureAtlas
from .glasso import MetaDataset
from .metakernel import MetaKernel


@dataclass(frozen=True, eq=False)
class TrueKernelSpec:
    atlas: FeatureAtlas
    eta_star: np.ndarray
    seed: object = None

    @property
    def J_star(self) -> tuple:
        return tuple(int(j) for j in np.flatnonzero(self.eta_star > 0))

    @property
    def s(self) -> int:
        return len(self.J_star)

    def kernel(self) -> MetaKernel:
        """The oracle kernel ``sum_j eta*_j k_j``."""
        return MetaKernel(self.atlas, self.eta_star, 1.0, name="k_star")


@dataclass(frozen=True, eq=False)
class TaskFunction:
    """``f(x) = sum_j sqrt(eta*_j) phi_j(x) @ beta^(j)`` with ``||beta|| = B``."""

    spec: TrueKernelSpec
    beta: np.ndarray

    @property
    def coefficients(self) -> np.ndarray:
        """Weights on the raw stacked features, ``sqrt(eta*) * beta``."""
        return np.sqrt(np.repeat(self.spec.eta_star, self.spec.atlas.dims)) * self.beta

    @property
    def support(self) -> tuple:
        atlas = self.spec.atlas
        return tuple(j for j in range(atlas.p) if np.any(self.beta[atlas.group_slice(j)] != 0))

    @property
    def rkhs_norm(self) -> float:
        return float(np.linalg.norm(self.beta))

    def __call__(self, X) -> np.ndarray:
        return self.spec.atlas.features(X) @ self.coefficients

    def blockwise(self, X) -> np.ndarray:
        """Same values summed group by group; used to cross-check ``__call__``."""
        atlas = self.spec.atlas
        F = atlas.features(X)
        total = np.zeros(len(F))
        for j in range(atlas.p):
            sl = atlas.group_slice(j)
            total += np.sqrt(self.spec.eta_star[j]) * (F[:, sl] @ self.beta[sl])
        return total


def sample_true_kernel(atlas: FeatureAtlas, s: int, seed) -> TrueKernelSpec:
    """Random ``s``-sparse weights, uniform on the support and summing to one."""
    if not 1 <= s <= atlas.p:
        raise ValueError(f"s must lie in [1, {atlas.p}], got {s}")
    rng = np.random.default_rng(seed)
    support = np.sort(rng.choice(atlas.p, size=s, replace=False))
    eta = np.zeros(atlas.p)
    eta[support] = rng.uniform(size=s)
    eta /= eta.sum()
    return TrueKernelSpec(atlas, eta, seed)


def _random_subset_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    # uniform over the non-empty subsets
    while True:
        mask = rng.random(size) < 0.5
        if mask.any():
            return mask


def _fill(spec: TrueKernelSpec, groups, B: float, rng: np.random.Generator) -> TaskFunction:
    atlas = spec.atlas
    beta = np.zeros(atlas.d)
    for j in groups:
        sl = atlas.group_slice(j)
        beta[sl] = rng.uniform(size=sl.stop - sl.start)
    norm = np.linalg.norm(beta)
    while norm == 0.0:  # measure-zero event
        for j in groups:
            sl = atlas.group_slice(j)
            beta[sl] = rng.uniform(size=sl.stop - sl.start)
        norm = np.linalg.norm(beta)
    return TaskFunction(spec, beta * (B / norm))


def sample_task_function(spec: TrueKernelSpec, B: float, seed) -> TaskFunction:
    """One task: a random non-empty subset of the true groups, uniform entries, norm ``B``."""
    if not B > 0:
        raise ValueError("B must be positive")
    rng = np.random.default_rng(seed)
    J = np.asarray(spec.J_star)
    return _fill(spec, J[_random_subset_mask(rng, len(J))], B, rng)


make_reward = sample_task_function


def sample_meta_tasks(spec: TrueKernelSpec, m: int, B: float, seed) -> list[TaskFunction]:
    """``m`` task functions whose supports jointly cover every true group.

    Subsets are redrawn as a whole until the coverage condition holds.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if not B > 0:
        raise ValueError("B must be positive")
    rng = np.random.default_rng(seed)
    J = np.asarray(spec.J_star)
    while True:
        masks = np.array([_random_subset_mask(rng, len(J)) for _ in range(m)])
        if masks.any(axis=0).all():
            break
    return [_fill(spec, J[mask], B, rng) for mask in masks]


def generate_meta_data(
    spec: TrueKernelSpec,
    tasks: list[TaskFunction],
    n: int,
    sigma: float,
    seed,
    noise: str = "gaussian",
) -> MetaDataset:
    """Uniform inputs from the atlas domain and noisy labels for every task."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    rng = np.random.default_rng(seed)
    domain = spec.atlas.domain
    X = np.stack([domain.sample(rng, n) for _ in tasks])
    y = np.stack([f(X[s]) for s, f in enumerate(tasks)])
    y = y + draw_noise(rng, y.shape, sigma, noise)
    return MetaDataset(X, y)


def draw_noise(rng: np.random.Generator, shape, sigma: float, kind: str = "gaussian") -> np.ndarray:
    if kind == "gaussian":
        return sigma * rng.standard_normal(shape)
    if kind == "uniform":
        # same variance as the Gaussian case
        half = sigma * np.sqrt(3.0)
        return rng.uniform(-half, half, size=shape)
    raise ValueError(f"unknown noise distribution {kind!r}")


def realized_beta_min(tasks: list[TaskFunction]) -> float:
    """Smallest pooled true group norm over the true support (an empirical ``c1``)."""
    spec = tasks[0].spec
    table = np.stack([t.beta for t in tasks])
    norms = np.sqrt(np.add.reduceat((table**2).sum(axis=0), spec.atlas.group_offsets))
    return float(norms[list(spec.J_star)].min())


def write_meta_data_csv(path, data: MetaDataset) -> None:
    """Long-form CSV with columns ``task, x0, ..., y``."""
    cols = [f"x{i}" for i in range(data.input_dim)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task", *cols, "y"])
        for s in range(data.m):
            for i in range(data.n):
                w.writerow([s, *(repr(float(v)) for v in data.X[s, i]), repr(float(data.y[s, i]))])


def read_meta_data_csv(path) -> MetaDataset:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    xcols = sorted((c for c in rows[0] if c.startswith("x")), key=lambda c: int(c[1:]))
    tasks: dict[int, list] = {}
    for row in rows:
        tasks.setdefault(int(row["task"]), []).append(row)
    pairs = []
    for key in sorted(tasks):
        chunk = tasks[key]
        pairs.append(([[float(r[c]) for c in xcols] for r in chunk], [float(r["y"]) for r in chunk]))
    return MetaDataset.from_tasks(pairs)
