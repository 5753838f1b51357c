"""Meta-learned kernels and the finite-sample quantities that come with them.

A :class:`MetaKernel` is a non-negative combination of the base kernels of an
atlas, ``k(x, x') = sum_j eta_j phi_j(x) @ phi_j(x')``. Fitting one from
meta-data sets ``eta_j = ||B^(j)||_2 / c1`` where ``B`` solves the multi-task
group Lasso.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .features import FeatureAtlas
from .glasso import GroupLassoFit, GroupLassoProblem, MetaDataset, solve


@dataclass(frozen=True, eq=False)
class MetaKernel:
    atlas: FeatureAtlas
    eta: np.ndarray
    c1: float = 1.0
    name: str = "kernel"

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        if eta.shape != (self.atlas.p,):
            raise ValueError(f"need one weight per group ({self.atlas.p}), got {eta.shape}")
        if np.any(eta < 0) or not np.all(np.isfinite(eta)):
            raise ValueError("kernel weights must be finite and non-negative")
        if not self.c1 > 0:
            raise ValueError("c1 must be positive")
        object.__setattr__(self, "eta", eta)

    @property
    def active_set(self) -> tuple:
        return tuple(int(j) for j in np.flatnonzero(self.eta > 0))

    @property
    def d_hat(self) -> int:
        return int(sum(self.atlas.dims[j] for j in self.active_set))

    def column_weights(self) -> np.ndarray:
        return np.repeat(self.eta, self.atlas.dims)

    def weighted_features(self, X, active_only: bool = True) -> np.ndarray:
        """Features scaled by ``sqrt(eta_j)`` so that ``K = F @ F.T``."""
        w = self.column_weights()
        F = self.atlas.features(X) * np.sqrt(w)
        if active_only:
            F = F[:, w > 0]
        return F

    def matrix(self, X, X2=None) -> np.ndarray:
        F = self.weighted_features(X)
        F2 = F if X2 is None else self.weighted_features(X2)
        return F @ F2.T

    def diag(self, X) -> np.ndarray:
        return (self.weighted_features(X) ** 2).sum(axis=1)

    def scaled(self, factor: float) -> "MetaKernel":
        return MetaKernel(self.atlas, self.eta * factor, self.c1, self.name)


def kernel_eval(mk: MetaKernel, x, x2) -> float:
    """``k(x, x')`` for a single pair of points."""
    return float(mk.matrix(x, x2)[0, 0])


def k_full(atlas: FeatureAtlas) -> MetaKernel:
    """Uniform combination ``(1/p) sum_j k_j``; uses no meta-data."""
    return MetaKernel(atlas, np.full(atlas.p, 1.0 / atlas.p), 1.0, name="k_full")


def resolve_c1(c1: Union[float, str], group_norms: np.ndarray) -> float:
    """Turn a ``c1`` setting into a number.

    ``"max"`` uses the largest learned group norm, so every weight is at most
    one; ``"min"`` uses the smallest non-zero one, an empirical beta-min
    constant. A number is used as given.
    """
    if isinstance(c1, str):
        active = group_norms[group_norms > 0]
        if len(active) == 0:
            return 1.0
        if c1 == "max":
            return float(active.max())
        if c1 == "min":
            return float(active.min())
        if c1 == "sum":
            return float(active.sum())
        raise ValueError(f"unknown c1 rule {c1!r}")
    if not c1 > 0:
        raise ValueError("c1 must be positive")
    return float(c1)


def fit_meta_kernel(
    data: MetaDataset,
    atlas: FeatureAtlas,
    lam: float,
    c1: Union[float, str] = 1.0,
    solver: str = "fista",
    tol: float = 1e-8,
    max_iter: int = 50_000,
) -> tuple[MetaKernel, GroupLassoFit]:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    problem = GroupLassoProblem.from_data(data, atlas, lam)
    fit = solve(problem, solver, tol=tol, max_iter=max_iter)
    c1_value = resolve_c1(c1, fit.group_norms)
    return MetaKernel(atlas, fit.group_norms / c1_value, c1_value, name="k_hat"), fit


def eta_trick_penalty(group_norms, eta, lam: float) -> float:
    """``(lam/2) sum_j ||B^(j)||^2 / eta_j + (lam/2) ||eta||_1`` with 0/0 := 0."""
    w = np.asarray(group_norms, dtype=float)
    eta = np.asarray(eta, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        quad = np.where(w == 0, 0.0, w**2 / eta)
    return 0.5 * lam * float(quad.sum() + eta.sum())


def eta_from_beta(beta: np.ndarray, offsets) -> np.ndarray:
    """Closed-form minimizer of :func:`eta_trick_penalty` over ``eta >= 0``."""
    beta = np.atleast_2d(beta)
    return np.sqrt(np.add.reduceat((beta**2).sum(axis=0), np.asarray(offsets, int)))


# theory quantities -----------------------------------------------------------


@dataclass(frozen=True)
class TheoryParams:
    sigma: float
    delta: float
    B: float
    s: int
    kappa: float

    def __post_init__(self):
        _check_delta(self.delta)
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if not self.B > 0:
            raise ValueError("B must be positive")
        if self.s < 1:
            raise ValueError("s must be at least 1")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")


def _check_delta(delta: float) -> None:
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def _noise_bracket(m: int, p: int, d_max: int, delta: float) -> float:
    log_term = math.log(2 * p / delta)
    return math.sqrt(1.0 + (2.0 / m) * (log_term + math.sqrt(m * d_max * log_term)))


def lambda_min_bound(sigma: float, m: int, n: int, p: int, d_max: int, delta: float) -> float:
    """Smallest regularization for which recovery is guaranteed w.p. 1 - delta."""
    _check_delta(delta)
    return 4.0 * sigma / math.sqrt(m * n) * _noise_bracket(m, p, d_max, delta)


def epsilon_nm(sigma, s, kappa, m, n, p, d_max, delta) -> float:
    """Group-wise estimation error bound ``32 sigma s / (kappa^2 sqrt(mn)) * bracket``."""
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    _check_delta(delta)
    return 32.0 * sigma * s / (kappa**2 * math.sqrt(m * n)) * _noise_bracket(m, p, d_max, delta)


def sparsity_bound(s: int, m: int, n: int, kappa: float) -> float:
    """``64 s / (mn kappa^2)``.

    Implemented as stated. For large ``mn`` this drops below ``s`` even though
    the recovered support is expected to contain the true one, so it should be
    read as a rate rather than a usable count.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    return 64.0 * s / (m * n * kappa**2)


def kappa_proxy(data: MetaDataset, atlas: FeatureAtlas) -> float:
    """``min_s sigma_min(Phi_s) / sqrt(mn)``, a lower bound on the restricted eigenvalue.

    Returns 0 for rank-deficient task blocks (including ``n < d``).
    """
    problem = GroupLassoProblem.from_data(data, atlas, 1.0)
    if problem.n < problem.d:
        return 0.0
    sv = np.linalg.svd(problem.Phi, compute_uv=False)
    smallest = sv[:, -1]
    if np.any(smallest <= 1e-12 * sv[:, 0]):
        return 0.0
    return float(smallest.min()) / math.sqrt(problem.m * problem.n)


def rkhs_norm_bound(B: float, epsilon: float, c1: float) -> float:
    """``B / sqrt(1 - epsilon/c1)``: bound on ``||f||`` under the learned kernel."""
    if epsilon < 0 or not c1 > 0:
        raise ValueError("need epsilon >= 0 and c1 > 0")
    if epsilon >= c1:
        raise ValueError("epsilon must be smaller than c1 for the bound to apply")
    return B / math.sqrt(1.0 - epsilon / c1)



def kappa_population(atlas: FeatureAtlas, m: int, groups=None, resolution: int | None = None) -> float:
    """Restricted-eigenvalue value implied by the uniform input design.

    ``sqrt(lambda_min(E[phi_J phi_J^T]) / m)`` with the expectation taken over a
    regular grid of the domain and ``J`` the given groups (all by default).
    This is what the definition gives for ``n -> infinity`` with the
    block-diagonal multi-task design; the finite-sample
    :func:`kappa_proxy` is often degenerate for high-degree features.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    if resolution is None:
        resolution = 4096 if atlas.domain.dim == 1 else 64
    grid = atlas.domain.grid_points(resolution)
    F = atlas.features(grid)
    if groups is not None:
        groups = list(groups)
        if not groups:
            return 0.0
        F = F[:, np.isin(atlas.group_index, groups)]
    second_moment = F.T @ F / len(F)
    floor = float(np.linalg.eigvalsh(second_moment)[0])
    return math.sqrt(max(floor, 0.0) / m)
