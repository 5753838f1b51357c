"""GP-UCB over a finite candidate set, with regret accounting."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .gp import GpPosterior, effective_c1, mean_var, nu_oracle, nu_t, primal_mean_var, sigma_bar_sq
from .metakernel import MetaKernel, TheoryParams
from .synth import draw_noise


@dataclass(frozen=True, eq=False)
class BoTrace:
    """One GP-UCB run. Arrays are indexed by step ``t = 1..T`` (position ``t - 1``).

    ``inference_regret[t-1]`` is ``f(x*) - max_x mu_{t-1}(x)``, computed from
    the posterior that chose ``x_t``; ``cumulative_inference_regret`` is its
    running sum. ``play_regret`` is the alternative ``f(x*) - f(argmax mu_{t-1})``.
    """

    X: np.ndarray
    indices: np.ndarray
    y: np.ndarray
    nu: np.ndarray
    f_values: np.ndarray
    simple_regret: np.ndarray
    inference_regret: np.ndarray
    cumulative_inference_regret: np.ndarray
    play_regret: np.ndarray
    f_star: float
    x_star: np.ndarray
    kernel_name: str = ""

    @property
    def T(self) -> int:
        return len(self.y)

    @property
    def cumulative_regret(self) -> np.ndarray:
        """Running sum of ``f(x*) - f(x_t)``."""
        return np.cumsum(self.f_star - self.f_values)


def ucb_select(post: GpPosterior, nu: float, candidates) -> int:
    """Index of the candidate maximizing ``mu + nu sigma``; ties go to the lowest index."""
    candidates = np.asarray(candidates, dtype=float)
    if len(candidates) == 0:
        raise ValueError("candidate set is empty")
    mean, var = mean_var(post, candidates)
    return int(np.argmax(mean + nu * np.sqrt(var)))


def oracle_nu(theory: TheoryParams, mk: MetaKernel, B: Optional[float] = None) -> Callable[[int], float]:
    """Schedule for a kernel known up front: ``B`` (default ``theory.B``) and no meta-learning error."""
    B = theory.B if B is None else B
    c1 = effective_c1(mk)
    return lambda t: nu_oracle(B, theory.sigma, mk.d_hat, t, theory.delta, c1)


def meta_nu(theory: TheoryParams, mk: MetaKernel, m: int, n: int, p: int, d_max: int) -> Callable[[int], float]:
    return lambda t: nu_t(theory, mk, t, m, n, p, d_max)


class _Posterior:
    """Posterior over the candidates, in whichever form is cheaper."""

    def __init__(self, mk: MetaKernel, candidates: np.ndarray):
        self.F = mk.weighted_features(candidates)
        self.prior = (self.F**2).sum(axis=1)
        self.rows: list[int] = []
        self.y: list[float] = []
        d = self.F.shape[1]
        self.gram = np.zeros((d, d))
        self.fty = np.zeros(d)

    def add(self, idx: int, y: float) -> None:
        f = self.F[idx]
        self.gram += np.outer(f, f)
        self.fty += y * f
        self.rows.append(idx)
        self.y.append(y)

    def mean_var(self, noise_var: float):
        t = len(self.rows)
        d = self.F.shape[1]
        if t == 0 or d == 0:
            return np.zeros(len(self.F)), self.prior.copy()
        if d <= t:
            return primal_mean_var(self.F, self.gram, self.fty, noise_var)
        Fh = self.F[self.rows]
        K = Fh @ Fh.T + noise_var * np.eye(t)
        L = np.linalg.cholesky(K)
        kx = self.F @ Fh.T
        alpha = np.linalg.solve(L.T, np.linalg.solve(L, np.asarray(self.y)))
        V = np.linalg.solve(L, kx.T)
        var = self.prior - (V * V).sum(axis=0)
        assert var.min() >= -1e-10 * max(1.0, self.prior.max())
        return kx @ alpha, np.maximum(var, 0.0)


def run_gp_ucb(
    reward: Callable[[np.ndarray], np.ndarray],
    kernel: MetaKernel,
    theory: TheoryParams,
    T: int,
    candidates,
    m: int,
    n: int,
    p: int,
    d_max: int,
    seed=None,
    nu: Optional[Callable[[int], float]] = None,
    noise: str = "gaussian",
) -> BoTrace:
    """Run GP-UCB for ``T`` steps on the candidate set.

    ``nu`` defaults to the meta-learned schedule :func:`metakel.gp.nu_t`;
    pass :func:`oracle_nu` for kernels that did not come from meta-data.
    Observations are ``reward(x) + noise`` with scale ``theory.sigma``.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    candidates = kernel.atlas.domain.check(candidates)
    if len(candidates) == 0:
        raise ValueError("candidate set is empty")
    rng = np.random.default_rng(seed)
    schedule = nu if nu is not None else meta_nu(theory, kernel, m, n, p, d_max)
    f_cand = np.asarray(reward(candidates), dtype=float)
    star = int(np.argmax(f_cand))
    f_star = float(f_cand[star])

    state = _Posterior(kernel, candidates)
    idx = np.empty(T, dtype=int)
    ys = np.empty(T)
    nus = np.empty(T)
    inference = np.empty(T)
    play = np.empty(T)
    for t in range(1, T + 1):
        mean, var = state.mean_var(sigma_bar_sq(t))
        nu_value = float(schedule(t))
        i = int(np.argmax(mean + nu_value * np.sqrt(var)))
        j = int(np.argmax(mean))
        inference[t - 1] = f_star - float(mean[j])
        play[t - 1] = f_star - f_cand[j]
        y = f_cand[i] + float(draw_noise(rng, 1, theory.sigma, noise)[0])
        state.add(i, y)
        idx[t - 1], ys[t - 1], nus[t - 1] = i, y, nu_value

    f_values = f_cand[idx]
    return BoTrace(
        X=candidates[idx],
        indices=idx,
        y=ys,
        nu=nus,
        f_values=f_values,
        simple_regret=f_star - np.maximum.accumulate(f_values),
        inference_regret=inference,
        cumulative_inference_regret=np.cumsum(inference),
        play_regret=play,
        f_star=f_star,
        x_star=candidates[star],
        kernel_name=kernel.name,
    )


@dataclass(frozen=True)
class RegretSummary:
    simple_mean: np.ndarray
    simple_std: np.ndarray
    cumulative_mean: np.ndarray
    cumulative_std: np.ndarray
    runs: int


def regret_summary(traces: list[BoTrace]) -> RegretSummary:
    """Pointwise mean and (population) standard deviation across traces."""
    if not traces:
        raise ValueError("no traces to summarize")
    lengths = {tr.T for tr in traces}
    if len(lengths) != 1:
        raise ValueError(f"traces have different lengths {sorted(lengths)}")
    r = np.stack([tr.simple_regret for tr in traces])
    R = np.stack([tr.cumulative_inference_regret for tr in traces])
    return RegretSummary(r.mean(axis=0), r.std(axis=0), R.mean(axis=0), R.std(axis=0), len(traces))
