"""Multi-task group Lasso over a block-diagonal design.

The problem solved here is

    min_B  1/(mn) sum_s ||y_s - Phi_s b_s||^2 + lam * sum_j ||B^(j)||_2

where ``B`` is the (m, d) table whose row ``s`` holds task ``s``'s
coefficients and ``B^(j)`` pools group ``j``'s columns across *all* tasks.
The (mn, md) stacked design is never formed; every product is taken per task
block.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .features import FeatureAtlas

SNAP_TO_ZERO = 1e-14
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 50_000


@dataclass(frozen=True, eq=False)
class MetaDataset:
    """``m`` tasks with ``n`` samples each: inputs (m, n, d0), labels (m, n)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim == 2:
            X = X[:, :, None]
        if X.ndim != 3 or y.ndim != 2 or X.shape[:2] != y.shape:
            raise ValueError(f"inconsistent meta-data shapes {X.shape} and {y.shape}")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("meta-data needs m >= 1 tasks and n >= 1 samples")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def from_tasks(cls, tasks) -> "MetaDataset":
        """Build from a list of ``(X_s, y_s)`` pairs of equal sample count."""
        sizes = {len(y_s) for _, y_s in tasks}
        if len(sizes) != 1:
            raise ValueError(f"tasks must share the sample count, got sizes {sorted(sizes)}")
        return cls(np.stack([np.asarray(X_s, float).reshape(len(y_s), -1) for X_s, y_s in tasks]),
                   np.stack([np.asarray(y_s, float) for _, y_s in tasks]))

    @property
    def m(self) -> int:
        return self.y.shape[0]

    @property
    def n(self) -> int:
        return self.y.shape[1]

    @property
    def input_dim(self) -> int:
        return self.X.shape[2]

    def subset(self, m: int) -> "MetaDataset":
        return MetaDataset(self.X[:m], self.y[:m])


@dataclass(frozen=True, eq=False)
class GroupLassoProblem:
    Phi: np.ndarray  # (m, n, d) per-task feature blocks
    y: np.ndarray  # (m, n)
    dims: tuple
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("the regularization strength must be positive")
        if self.Phi.ndim != 3 or self.Phi.shape[:2] != self.y.shape:
            raise ValueError(f"design {self.Phi.shape} does not match labels {self.y.shape}")
        if sum(self.dims) != self.Phi.shape[2]:
            raise ValueError("group dimensions do not add up to the feature count")

    @classmethod
    def from_data(cls, data: MetaDataset, atlas: FeatureAtlas, lam: float) -> "GroupLassoProblem":
        flat = data.X.reshape(-1, data.input_dim)
        Phi = atlas.features(flat).reshape(data.m, data.n, atlas.d)
        return cls(Phi, data.y, tuple(int(d) for d in atlas.dims), float(lam))

    @property
    def m(self) -> int:
        return self.Phi.shape[0]

    @property
    def n(self) -> int:
        return self.Phi.shape[1]

    @property
    def d(self) -> int:
        return self.Phi.shape[2]

    @property
    def p(self) -> int:
        return len(self.dims)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dims)[:-1]]).astype(int)

    def with_lambda(self, lam: float) -> "GroupLassoProblem":
        return GroupLassoProblem(self.Phi, self.y, self.dims, lam)

    def predict(self, beta: np.ndarray) -> np.ndarray:
        return np.einsum("snd,sd->sn", self.Phi, beta)

    def correlation(self, residual: np.ndarray) -> np.ndarray:
        """``(2/mn) Phi^T r`` arranged as an (m, d) table."""
        return (2.0 / (self.m * self.n)) * np.einsum("snd,sn->sd", self.Phi, residual)

    def null_lambda(self) -> float:
        """Smallest ``lam`` for which ``B = 0`` is optimal."""
        return float(pooled_norms(self.correlation(self.y), self.offsets).max())


@dataclass(frozen=True, eq=False)
class GroupLassoFit:
    beta: np.ndarray
    group_norms: np.ndarray
    active_set: tuple
    objective_value: float
    kkt_residual: float
    iterations: int
    converged: bool
    solver: str
    restart_objectives: list = field(default_factory=list, repr=False)


def pooled_norms(table: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Euclidean norm of every column group of an (m, d) table, pooled over rows."""
    return np.sqrt(np.add.reduceat((table**2).sum(axis=0), offsets))


def _check_beta(problem: GroupLassoProblem, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (problem.m, problem.d):
        raise ValueError(f"coefficients must have shape {(problem.m, problem.d)}, got {beta.shape}")
    return beta


def objective(problem: GroupLassoProblem, beta) -> float:
    beta = _check_beta(problem, beta)
    resid = problem.y - problem.predict(beta)
    fit = float((resid**2).sum()) / (problem.m * problem.n)
    return fit + problem.lam * float(pooled_norms(beta, problem.offsets).sum())


def group_prox(v, threshold: float) -> np.ndarray:
    """Proximal map of ``threshold * ||.||_2``: block soft-thresholding."""
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    v = np.asarray(v, dtype=float)
    norm = float(np.linalg.norm(v))
    if norm <= threshold:
        return np.zeros_like(v)
    return v * (1.0 - threshold / norm)


def _prox_table(beta: np.ndarray, threshold: float, offsets: np.ndarray, dims) -> np.ndarray:
    norms = pooled_norms(beta, offsets)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(norms > threshold, 1.0 - threshold / norms, 0.0)
    return beta * np.repeat(scale, dims)[None, :]


def _snap(beta: np.ndarray, offsets: np.ndarray, dims) -> np.ndarray:
    norms = pooled_norms(beta, offsets)
    tiny = np.repeat(norms < SNAP_TO_ZERO, dims)
    if tiny.any():
        beta = beta.copy()
        beta[:, tiny] = 0.0
    return beta


def _kkt_from_corr(G: np.ndarray, beta: np.ndarray, problem: GroupLassoProblem) -> float:
    offsets = problem.offsets
    norms = pooled_norms(beta, offsets)
    worst = 0.0
    for j, (start, width) in enumerate(zip(offsets, problem.dims)):
        g = G[:, start:start + width]
        if norms[j] > 0:
            r = np.linalg.norm(g - problem.lam * beta[:, start:start + width] / norms[j])
        else:
            r = max(0.0, np.linalg.norm(g) - problem.lam)
        worst = max(worst, float(r))
    return worst


def kkt_residual(problem: GroupLassoProblem, beta) -> float:
    """Largest violation of the group-Lasso optimality conditions (0 iff optimal)."""
    beta = _check_beta(problem, beta)
    G = problem.correlation(problem.y - problem.predict(beta))
    return _kkt_from_corr(G, beta, problem)


def block_lipschitz(problem: GroupLassoProblem) -> float:
    """Lipschitz constant of the smooth part: (2/mn) max_s ||Phi_s||_2^2."""
    top = np.linalg.svd(problem.Phi, compute_uv=False)[:, 0]
    return 2.0 * float(top.max()) ** 2 / (problem.m * problem.n)


def _make_fit(problem, beta, iterations, converged, solver, restarts=()):
    beta = _snap(beta, problem.offsets, problem.dims)
    norms = pooled_norms(beta, problem.offsets)
    return GroupLassoFit(
        beta=beta,
        group_norms=norms,
        active_set=tuple(int(j) for j in np.flatnonzero(norms > 0)),
        objective_value=objective(problem, beta),
        kkt_residual=kkt_residual(problem, beta),
        iterations=iterations,
        converged=converged,
        solver=solver,
        restart_objectives=list(restarts),
    )


def solve_fista(
    problem: GroupLassoProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    beta0: Optional[np.ndarray] = None,
    check_every: int = 10,
) -> GroupLassoFit:
    """Accelerated proximal gradient with function-value restarts.

    Momentum is reset whenever the objective would increase; the iterate then
    takes a plain proximal step from the last accepted point, so the sequence
    of accepted objectives is non-increasing.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    offsets, dims, lam = problem.offsets, problem.dims, problem.lam
    mn = problem.m * problem.n
    L = block_lipschitz(problem)
    if L == 0.0:
        return _make_fit(problem, np.zeros((problem.m, problem.d)), 0, True, "fista")
    step = 1.0 / L

    def smooth_and_resid(b):
        r = problem.y - problem.predict(b)
        return float((r**2).sum()) / mn, r

    def total(b, smooth):
        return smooth + lam * float(pooled_norms(b, offsets).sum())

    x = np.zeros((problem.m, problem.d)) if beta0 is None else _check_beta(problem, beta0).copy()
    s_x, r_x = smooth_and_resid(x)
    F_x = total(x, s_x)
    z, r_z, t = x, r_x, 1.0
    restarts = [F_x]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        x_new = _prox_table(z + step * problem.correlation(r_z), step * lam, offsets, dims)
        s_new, r_new = smooth_and_resid(x_new)
        F_new = total(x_new, s_new)
        if F_new > F_x:
            t = 1.0
            x_new = _prox_table(x + step * problem.correlation(r_x), step * lam, offsets, dims)
            s_new, r_new = smooth_and_resid(x_new)
            F_new = total(x_new, s_new)
            restarts.append(F_new)
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * (x_new - x)
        r_z = problem.y - problem.predict(z)
        x, r_x, F_x, t = x_new, r_new, F_new, t_new
        if it % check_every == 0:
            xs = _snap(x, offsets, dims)
            if _kkt_from_corr(problem.correlation(problem.y - problem.predict(xs)), xs, problem) <= tol:
                converged = True
                break
    return _make_fit(problem, x, it, converged, "fista", restarts)


def solve_bcd(
    problem: GroupLassoProblem,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    beta0: Optional[np.ndarray] = None,
) -> GroupLassoFit:
    """Cyclic block-coordinate descent, one proximal step per group and sweep.

    ``max_iter`` counts full sweeps over the ``p`` groups.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    mn = problem.m * problem.n
    lam = problem.lam
    beta = np.zeros((problem.m, problem.d)) if beta0 is None else _check_beta(problem, beta0).copy()
    resid = problem.y - problem.predict(beta)
    cols = [slice(int(o), int(o) + int(w)) for o, w in zip(problem.offsets, problem.dims)]
    L_group = []
    for c in cols:
        top = np.linalg.svd(problem.Phi[:, :, c], compute_uv=False)[:, 0]
        L_group.append(2.0 * float(top.max()) ** 2 / mn)
    converged = False
    sweep = 0
    for sweep in range(1, max_iter + 1):
        for c, Lj in zip(cols, L_group):
            if Lj == 0.0:
                continue
            block = problem.Phi[:, :, c]
            old = beta[:, c]
            grad = -(2.0 / mn) * np.einsum("snk,sn->sk", block, resid)
            new = group_prox((old - grad / Lj).ravel(), lam / Lj).reshape(old.shape)
            delta = new - old
            if np.any(delta):
                resid -= np.einsum("snk,sk->sn", block, delta)
                beta[:, c] = new
        snapped = _snap(beta, problem.offsets, problem.dims)
        if _kkt_from_corr(problem.correlation(problem.y - problem.predict(snapped)), snapped, problem) <= tol:
            converged = True
            break
    return _make_fit(problem, beta, sweep, converged, "bcd")


def solve(problem: GroupLassoProblem, solver: str = "fista", **kwargs) -> GroupLassoFit:
    if solver == "fista":
        return solve_fista(problem, **kwargs)
    if solver == "bcd":
        return solve_bcd(problem, **kwargs)
    raise ValueError(f"unknown solver {solver!r}")
