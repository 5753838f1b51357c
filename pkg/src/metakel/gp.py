"""GP regression with a finite-dimensional kernel, confidence bands and exploration coefficients.

The observation-noise parameter of the posterior is ``sigma_bar^2 = 1 + 2/t``
when querying at step ``t`` (so after ``t - 1`` observations). The kernel
(dual) form is the reference; :func:`primal_mean_var` is the equivalent
weight-space form, used by the BO loop where the feature dimension is small.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .metakernel import MetaKernel, TheoryParams, epsilon_nm

VARIANCE_CLAMP = 1e-10


def sigma_bar_sq(t: int) -> float:
    """Noise parameter ``1 + 2/t`` used when choosing the ``t``-th point."""
    if t < 1:
        raise ValueError("t must be at least 1")
    return 1.0 + 2.0 / t


@dataclass(frozen=True, eq=False)
class History:
    """Observed pairs ``(x_tau, y_tau)``; ``append`` returns a new history."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(len(y), -1) if len(y) else X.reshape(0, 1)
        if len(X) != len(y):
            raise ValueError(f"history has {len(X)} inputs but {len(y)} labels")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def empty(cls, input_dim: int) -> "History":
        return cls(np.zeros((0, input_dim)), np.zeros(0))

    def __len__(self) -> int:
        return len(self.y)

    def append(self, x, y: float) -> "History":
        x = np.asarray(x, dtype=float).reshape(1, -1)
        return History(np.vstack([self.X, x]), np.append(self.y, float(y)))


@dataclass(frozen=True, eq=False)
class GpPosterior:
    kernel: MetaKernel
    history: History
    t: int
    sigma_bar_sq: float
    chol: tuple  # cho_factor output for K + sigma_bar^2 I, or None when empty
    alpha: np.ndarray

    @property
    def n_obs(self) -> int:
        return len(self.history)


def posterior(kernel: MetaKernel, history: History, t: int | None = None, noise_var: float | None = None) -> GpPosterior:
    """Condition a zero-mean GP with ``kernel`` on ``history`` for query step ``t``.

    ``t`` defaults to ``len(history) + 1``. ``noise_var`` replaces
    ``1 + 2/t`` when given.
    """
    if t is None:
        t = len(history) + 1
    if len(history) != t - 1:
        raise ValueError(f"step {t} needs a history of length {t - 1}, got {len(history)}")
    s2 = sigma_bar_sq(t) if noise_var is None else float(noise_var)
    if not s2 > 0:
        raise ValueError("noise variance must be positive")
    if len(history) == 0:
        return GpPosterior(kernel, history, t, s2, None, np.zeros(0))
    kernel.atlas.domain.check(history.X)
    K = kernel.matrix(history.X)
    K[np.diag_indices_from(K)] += s2
    try:
        chol = cho_factor(K, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"kernel matrix not positive definite at step {t}") from exc
    return GpPosterior(kernel, history, t, s2, chol, cho_solve(chol, history.y))


def _clamp(var: np.ndarray) -> np.ndarray:
    low = var.min() if var.size else 0.0
    assert low >= -VARIANCE_CLAMP, f"posterior variance {low:.3e} below clamp tolerance"
    return np.maximum(var, 0.0)


def mean_var(post: GpPosterior, X) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at the rows of ``X``."""
    mk = post.kernel
    prior = mk.diag(X)
    if post.chol is None:
        return np.zeros(len(prior)), prior
    kx = mk.matrix(X, post.history.X)
    mean = kx @ post.alpha
    L = post.chol[0]
    v = solve_triangular(L, kx.T, lower=True, check_finite=False)
    return mean, _clamp(prior - (v * v).sum(axis=0))


def primal_mean_var(F_query: np.ndarray, gram: np.ndarray, fty: np.ndarray, noise_var: float):
    """Weight-space posterior from sufficient statistics.

    ``gram = F.T @ F`` and ``fty = F.T @ y`` for history features ``F`` in the
    weighted feature space; ``F_query`` holds query features in the same space.
    """
    A = gram + noise_var * np.eye(len(gram))
    L = np.linalg.cholesky(A)
    w = solve_triangular(L.T, solve_triangular(L, fty, lower=True), lower=False)
    V = solve_triangular(L, F_query.T, lower=True, check_finite=False)
    return F_query @ w, _clamp(noise_var * (V * V).sum(axis=0))


def mean_var_primal(post: GpPosterior, X) -> tuple[np.ndarray, np.ndarray]:
    """Same quantities as :func:`mean_var` computed in feature space."""
    mk = post.kernel
    Fq = mk.weighted_features(X)
    F = mk.weighted_features(post.history.X) if post.n_obs else np.zeros((0, Fq.shape[1]))
    return primal_mean_var(Fq, F.T @ F, F.T @ post.history.y, post.sigma_bar_sq)


# confidence sets ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConfidenceBand:
    X: np.ndarray
    mean: np.ndarray
    halfwidth: np.ndarray
    level: float

    @property
    def lower(self) -> np.ndarray:
        return self.mean - self.halfwidth

    @property
    def upper(self) -> np.ndarray:
        return self.mean + self.halfwidth

    def contains(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return (values >= self.lower) & (values <= self.upper)


def confidence_band(post: GpPosterior, nu: float, X, level: float = float("nan")) -> ConfidenceBand:
    if nu < 0:
        raise ValueError("nu must be non-negative")
    mean, var = mean_var(post, X)
    return ConfidenceBand(np.asarray(X, dtype=float), mean, nu * np.sqrt(var), level)


def split_delta(delta: float) -> tuple[float, float]:
    """Even split of the failure probability between meta-learning and the bandit."""
    return delta / 2.0, delta / 2.0


def nu_oracle(B: float, sigma: float, d: int, t: int, delta: float, c1: float = 1.0) -> float:
    """``B + sigma sqrt(d log(1 + t / (c1 sigma_bar^2)) + 2 + 2 log(1/delta))`` for a known kernel."""
    gamma = d * math.log1p(t / (c1 * sigma_bar_sq(t)))
    return B + sigma * math.sqrt(gamma + 2.0 + 2.0 * math.log(1.0 / delta))


def nu_t(theory: TheoryParams, mk: MetaKernel, t: int, m: int, n: int, p: int, d_max: int) -> float:
    """Exploration coefficient for GP-UCB with a meta-learned kernel.

    ``theory.delta`` is split evenly: half bounds the meta-learning error
    ``epsilon``, half goes to the bandit confidence sequence. The ``c1`` in the
    information-gain term is :func:`effective_c1` of ``mk``.
    """
    d_meta, d_bandit = split_delta(theory.delta)
    eps = epsilon_nm(theory.sigma, theory.s, theory.kappa, m, n, p, d_max, d_meta)
    B_hat = theory.B * (1.0 + eps / (2.0 * mk.c1))
    return nu_oracle(B_hat, theory.sigma, mk.d_hat, t, d_bandit, effective_c1(mk))


def effective_c1(mk: MetaKernel) -> float:
    """Largest ``c`` with ``eta_j sup_x k_j(x, x) <= 1/c`` for every group.

    The information-gain bound is stated with ``c1`` but its proof only uses
    ``eta_j k_j(x, x) <= 1/c1``; this is the constant for which that holds for
    the kernel at hand.
    """
    peak = float(np.max(mk.eta * mk.atlas.kernel_sup()))
    return 1.0 / peak if peak > 0 else math.inf


def info_gain_bound(d_hat: int, t: int, c1: float, sigma_bar_sq: float) -> float:
    """``(d_hat/2) log(1 + t / (c1 sigma_bar^2))``."""
    if t < 0 or d_hat < 0 or not c1 > 0 or not sigma_bar_sq > 0:
        raise ValueError("arguments must be positive")
    return 0.5 * d_hat * math.log1p(t / (c1 * sigma_bar_sq))


def empirical_info_gain(mk: MetaKernel, X, sigma_bar_sq: float) -> float:
    """``(1/2) log det(I + K / sigma_bar^2)`` for the points ``X``."""
    K = mk.matrix(X)
    sign, logdet = np.linalg.slogdet(np.eye(len(K)) + K / sigma_bar_sq)
    assert sign > 0
    return 0.5 * logdet
