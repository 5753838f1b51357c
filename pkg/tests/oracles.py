"""Independent reference computations used by the tests."""
import math

import numba
import numpy as np

from metakel.glasso import GroupLassoProblem


def random_problem(rng, max_m=10, max_n=10, max_p=6, max_dj=3, lam=None):
    m = int(rng.integers(1, max_m + 1))
    n = int(rng.integers(1, max_n + 1))
    p = int(rng.integers(1, max_p + 1))
    dims = tuple(int(v) for v in rng.integers(1, max_dj + 1, size=p))
    Phi = rng.standard_normal((m, n, sum(dims)))
    y = rng.standard_normal((m, n))
    problem = GroupLassoProblem(Phi, y, dims, 1.0)
    if lam is None:
        lam = problem.null_lambda() * rng.uniform(0.05, 0.9)
    return problem.with_lambda(lam)


def objective_expanded(problem, beta):
    """The group Lasso objective written out as explicit loops."""
    m, n, _ = problem.Phi.shape
    fit = 0.0
    for s in range(m):
        for i in range(n):
            pred = sum(problem.Phi[s, i, k] * beta[s, k] for k in range(problem.d))
            fit += (problem.y[s, i] - pred) ** 2
    pen = 0.0
    start = 0
    for w in problem.dims:
        pen += math.sqrt(sum(beta[s, k] ** 2 for s in range(m) for k in range(start, start + w)))
        start += w
    return fit / (m * n) + problem.lam * pen


@numba.njit(cache=True)
def _subgradient(Q, r, yy, offsets, dims, lam, mn, radius, steps, step0):
    m, d = r.shape
    b = np.zeros((m, d))
    best = yy / mn
    g = np.zeros((m, d))
    for k in range(1, steps + 1):
        quad = 0.0
        for s in range(m):
            for a in range(d):
                acc = 0.0
                for c in range(d):
                    acc += Q[s, a, c] * b[s, c]
                quad += b[s, a] * (acc - 2.0 * r[s, a])
                g[s, a] = 2.0 * (acc - r[s, a]) / mn
        pen = 0.0
        for j in range(len(dims)):
            nrm = 0.0
            for s in range(m):
                for a in range(offsets[j], offsets[j] + dims[j]):
                    nrm += b[s, a] ** 2
            nrm = math.sqrt(nrm)
            pen += nrm
            if nrm > 0.0:
                for s in range(m):
                    for a in range(offsets[j], offsets[j] + dims[j]):
                        g[s, a] += lam * b[s, a] / nrm
        value = (quad + yy) / mn + lam * pen
        if value < best:
            best = value
        h = step0 / math.sqrt(k)
        total = 0.0
        for s in range(m):
            for a in range(d):
                b[s, a] -= h * g[s, a]
                total += b[s, a] ** 2
        total = math.sqrt(total)
        if total > radius:
            for s in range(m):
                for a in range(d):
                    b[s, a] *= radius / total
    return best


def subgradient_reference(problem, steps=1_000_000):
    """Best objective seen by projected subgradient descent with steps ``h / sqrt(k)``.

    The projection is onto the Euclidean ball of radius ``F(0) / lam``, which
    contains every minimizer since ``lam ||B||_2 <= lam sum_j ||B^(j)|| <= F(0)``.
    """
    mn = problem.m * problem.n
    Q = np.einsum("snd,sne->sde", problem.Phi, problem.Phi)
    r = np.einsum("snd,sn->sd", problem.Phi, problem.y)
    yy = float((problem.y**2).sum())
    radius = (yy / mn) / problem.lam
    L = 2.0 * max(np.linalg.eigvalsh(Q[s])[-1] for s in range(problem.m)) / mn
    offsets = np.asarray(problem.offsets, dtype=np.int64)
    dims = np.asarray(problem.dims, dtype=np.int64)
    return _subgradient(Q, r, yy, offsets, dims, problem.lam, mn, radius, steps, 1.0 / max(L, 1e-12))


def eta_numeric(w, lam):
    """Minimize ``(lam/2) w^2 / eta + (lam/2) eta`` over ``eta > 0`` numerically."""
    from scipy.optimize import minimize_scalar

    if w == 0.0:
        return 0.0, 0.0
    res = minimize_scalar(
        lambda e: 0.5 * lam * w**2 / e + 0.5 * lam * e,
        bounds=(w * 1e-3, w * 1e3),
        method="bounded",
        options={"xatol": 1e-12 * max(w, 1.0)},
    )
    return float(res.fun), float(res.x)
