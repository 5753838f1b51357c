"""Base feature maps and their group layout.

Every base kernel ``k_j`` is represented by a finite feature map ``phi_j`` so
that ``k_j(x, x') = phi_j(x) @ phi_j(x')``. A :class:`FeatureAtlas` bundles the
``p`` maps, evaluates all of them at once and records where each group sits in
the concatenated feature vector.

Groups are addressed by *position* ``0..p-1`` throughout the package; the
``labels`` attribute carries the conventional index of each group (Legendre
degree ``1..p`` for the 1-D atlas, ``0..p`` for the 2-D tensor atlas, band
index for the Fourier bands).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

_DOMAIN_SLACK = 1e-12


class Family(str, enum.Enum):
    LEGENDRE_1D = "legendre1d"
    LEGENDRE_2D = "legendre2d"
    RANDOM_FOURIER = "rff"
    FOURIER_BANDS = "fourier_bands"


class Normalization(str, enum.Enum):
    """Scaling of the Legendre features.

    ``UNIT`` uses the raw polynomials, so ``|P_j| <= 1`` and every base kernel
    is bounded by one. ``ORTHONORMAL`` rescales each polynomial to unit norm in
    ``L2`` of the box with Lebesgue measure (``sqrt((2j+1)/2) P_j`` per axis);
    the base kernels are then no longer bounded by one at the box corners.
    """

    UNIT = "unit"
    ORTHONORMAL = "orthonormal"


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """A compact input domain: an axis-aligned box or a finite point set."""

    kind: str
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    points: Optional[np.ndarray] = None

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "DomainSpec":
        lo = np.atleast_1d(np.asarray(lower, dtype=float))
        hi = np.atleast_1d(np.asarray(upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-d and of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo >= hi):
            raise ValueError("box requires lower < upper in every coordinate")
        return cls("box", lower=lo, upper=hi)

    @classmethod
    def grid(cls, points) -> "DomainSpec":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or len(pts) == 0:
            raise ValueError("finite grid must be a non-empty (N, d0) array")
        if len(np.unique(pts, axis=0)) != len(pts):
            raise ValueError("finite grid contains duplicate points")
        return cls("grid", points=pts)

    @property
    def dim(self) -> int:
        if self.kind == "box":
            return len(self.lower)
        return self.points.shape[1]

    def contains(self, X) -> np.ndarray:
        X = self._as_points(X)
        if self.kind == "box":
            return np.all(
                (X >= self.lower - _DOMAIN_SLACK) & (X <= self.upper + _DOMAIN_SLACK),
                axis=1,
            )
        # membership in a finite set, up to float round-off
        dist = np.abs(X[:, None, :] - self.points[None, :, :]).max(axis=2)
        return dist.min(axis=1) <= 1e-9

    def check(self, X) -> np.ndarray:
        """Return ``X`` as an (N, d0) array or raise if any point is outside."""
        X = self._as_points(X)
        inside = self.contains(X)
        if not np.all(inside):
            bad = int(np.flatnonzero(~inside)[0])
            raise ValueError(f"point {X[bad].tolist()} (row {bad}) lies outside the domain")
        return X

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` points uniformly from the domain."""
        if self.kind == "box":
            return rng.uniform(self.lower, self.upper, size=(size, self.dim))
        return self.points[rng.integers(len(self.points), size=size)]

    def grid_points(self, resolution: int) -> np.ndarray:
        """A regular candidate grid with ``resolution`` points per axis."""
        if self.kind == "grid":
            return self.points.copy()
        axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def _as_points(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 0:
            X = X.reshape(1, 1)
        elif X.ndim == 1:
            X = X[:, None] if self.dim == 1 else X[None, :]
        if X.shape[1] != self.dim:
            raise ValueError(f"expected points of dimension {self.dim}, got {X.shape[1]}")
        return X


def legendre_table(max_degree: int, x) -> np.ndarray:
    """Evaluate ``P_0..P_max_degree`` at ``x`` with the three-term recurrence.

    Returns an array of shape ``x.shape + (max_degree + 1,)``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (max_degree + 1,))
    out[..., 0] = 1.0
    if max_degree >= 1:
        out[..., 1] = x
    for r in range(1, max_degree):
        out[..., r + 1] = ((2 * r + 1) * x * out[..., r] - r * out[..., r - 1]) / (r + 1)
    return out


def legendre_eval(degree: int, x: float) -> float:
    """Legendre polynomial ``P_degree(x)`` for ``x`` in [-1, 1]."""
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if not -1.0 - _DOMAIN_SLACK <= x <= 1.0 + _DOMAIN_SLACK:
        raise ValueError(f"Legendre polynomials are evaluated on [-1, 1], got {x}")
    return float(legendre_table(degree, x)[degree])


@dataclass(frozen=True, eq=False)
class FeatureAtlas:
    """The ``p`` base feature maps and their layout in the stacked vector."""

    family: Family
    dims: tuple
    domain: DomainSpec
    labels: tuple
    normalization: Normalization = Normalization.UNIT
    # family parameters
    frequencies: Optional[np.ndarray] = field(default=None, repr=False)
    phases: Optional[np.ndarray] = field(default=None, repr=False)
    lengthscale: Optional[float] = None
    band_width: Optional[int] = None
    base_freq: Optional[float] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if len(self.dims) == 0 or any(int(d) < 1 for d in self.dims):
            raise ValueError("an atlas needs at least one group of positive dimension")
        if len(self.labels) != len(self.dims):
            raise ValueError("one label per group is required")

    @property
    def p(self) -> int:
        return len(self.dims)

    @property
    def d(self) -> int:
        return int(sum(self.dims))

    @property
    def d_max(self) -> int:
        return int(max(self.dims))

    @property
    def group_offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dims)[:-1]]).astype(int)

    @property
    def group_index(self) -> np.ndarray:
        """Group position of every column of the stacked feature vector."""
        return np.repeat(np.arange(self.p), self.dims)

    def group_slice(self, j: int) -> slice:
        start = int(self.group_offsets[j])
        return slice(start, start + int(self.dims[j]))

    def features(self, X, check: bool = True) -> np.ndarray:
        """Stacked features of every row of ``X``; shape (N, d)."""
        X = self.domain.check(X) if check else self.domain._as_points(X)
        if self.family is Family.LEGENDRE_1D:
            return self._legendre_1d(X[:, 0])
        if self.family is Family.LEGENDRE_2D:
            return self._legendre_2d(X)
        if self.family is Family.RANDOM_FOURIER:
            scale = np.repeat(1.0 / np.sqrt(np.asarray(self.dims, float)), self.dims)
            return scale * np.cos(X @ self.frequencies.T + self.phases)
        if self.family is Family.FOURIER_BANDS:
            arg = X[:, :1] * self.frequencies[None, :]
            out = np.empty((len(X), 2 * len(self.frequencies)))
            out[:, 0::2] = np.sin(arg)
            out[:, 1::2] = np.cos(arg)
            return out / np.sqrt(self.band_width)
        raise AssertionError(self.family)

    def group_features(self, X, j: int) -> np.ndarray:
        return self.features(X)[:, self.group_slice(j)]

    def base_kernel_diag(self, X) -> np.ndarray:
        """``k_j(x, x)`` for every row of ``X`` and every group; shape (N, p)."""
        F = self.features(X)
        return np.add.reduceat(F**2, self.group_offsets, axis=1)

    def kernel_sup(self) -> np.ndarray:
        """Upper bound on ``k_j(x, x)`` over the domain, per group.

        Exact for the Legendre families (attained at the corners); the
        trigonometric families are bounded by one.
        """
        if self.normalization is Normalization.UNIT or self.family in (Family.RANDOM_FOURIER, Family.FOURIER_BANDS):
            return np.ones(self.p)
        j = np.asarray(self.labels, dtype=float)
        if self.family is Family.LEGENDRE_1D:
            return (2 * j + 1) / 2.0
        q = self.p - 1
        return (2 * j + 1) * (2 * (q - j) + 1) / 4.0

    def _legendre_1d(self, x):
        degrees = np.asarray(self.labels)
        vals = legendre_table(int(degrees.max()), x)[:, degrees]
        if self.normalization is Normalization.ORTHONORMAL:
            vals = vals * np.sqrt((2 * degrees + 1) / 2.0)
        return vals

    def _legendre_2d(self, X):
        p = self.p - 1
        table1 = legendre_table(p, X[:, 0])
        table2 = legendre_table(p, X[:, 1])
        j = np.arange(p + 1)
        vals = table1[:, j] * table2[:, p - j]
        if self.normalization is Normalization.ORTHONORMAL:
            vals = vals * np.sqrt((2 * j + 1) * (2 * (p - j) + 1) / 4.0)
        return vals


def stack_features(atlas: FeatureAtlas, x) -> np.ndarray:
    """Concatenation of every ``phi_j(x)`` for a single point ``x``."""
    F = atlas.features(x)
    if len(F) != 1:
        raise ValueError("stack_features takes a single point")
    return F[0]


def atlas_legendre_1d(p: int, normalization="unit") -> FeatureAtlas:
    """Groups ``P_1..P_p`` on [-1, 1], one feature each."""
    if p < 1:
        raise ValueError("p must be at least 1")
    return FeatureAtlas(
        family=Family.LEGENDRE_1D,
        dims=(1,) * p,
        domain=DomainSpec.box([-1.0], [1.0]),
        labels=tuple(range(1, p + 1)),
        normalization=Normalization(normalization),
    )


def atlas_legendre_2d(p: int, normalization="unit") -> FeatureAtlas:
    """Groups ``P_j(x1) P_{p-j}(x2)`` for ``j = 0..p`` on [-1, 1]^2."""
    if p < 1:
        raise ValueError("p must be at least 1")
    return FeatureAtlas(
        family=Family.LEGENDRE_2D,
        dims=(1,) * (p + 1),
        domain=DomainSpec.box([-1.0, -1.0], [1.0, 1.0]),
        labels=tuple(range(p + 1)),
        normalization=Normalization(normalization),
    )


def atlas_random_fourier(
    count_features: int,
    input_dim: int,
    lengthscale: float,
    groups: int,
    seed: int,
    lower=None,
    upper=None,
) -> FeatureAtlas:
    """Random Fourier features of a squared-exponential kernel, split into groups.

    Frequencies are drawn from ``N(0, lengthscale^-2 I)`` and phases from
    ``U(0, 2 pi)``. A feature in group ``j`` is ``cos(w @ x + b) / sqrt(d_j)``,
    which keeps ``k_j(x, x) <= 1``; the sum of all groups with weight
    ``2 / groups`` each approximates the SE kernel itself.
    """
    if count_features < 1 or groups < 1 or input_dim < 1:
        raise ValueError("feature count, group count and input dimension must be positive")
    if count_features % groups:
        raise ValueError(f"{count_features} features cannot be split evenly into {groups} groups")
    if lengthscale <= 0:
        raise ValueError("lengthscale must be positive")
    rng = np.random.default_rng(seed)
    omega = rng.normal(scale=1.0 / lengthscale, size=(count_features, input_dim))
    phase = rng.uniform(0.0, 2 * np.pi, size=count_features)
    lower = [-1.0] * input_dim if lower is None else lower
    upper = [1.0] * input_dim if upper is None else upper
    return FeatureAtlas(
        family=Family.RANDOM_FOURIER,
        dims=(count_features // groups,) * groups,
        domain=DomainSpec.box(lower, upper),
        labels=tuple(range(groups)),
        frequencies=omega,
        phases=phase,
        lengthscale=float(lengthscale),
        seed=seed,
    )


def atlas_fourier_bands(p: int, band_width: int, base_freq: float, lower=-1.0, upper=1.0) -> FeatureAtlas:
    """Sin/cos pairs covering the band ``[j d f0, (j+1) d f0)`` for ``j = 1..p``.

    Group ``j`` holds the ``d`` frequencies ``(j d + r) f0``, ``r = 0..d-1``; the
    ``1/sqrt(d)`` scale makes ``k_j(x, x) = 1`` everywhere.
    """
    if p < 1 or band_width < 1:
        raise ValueError("p and band width must be at least 1")
    if not base_freq > 0:
        raise ValueError("base frequency must be positive")
    j = np.arange(1, p + 1)[:, None]
    freqs = ((j * band_width + np.arange(band_width)[None, :]) * base_freq).ravel()
    return FeatureAtlas(
        family=Family.FOURIER_BANDS,
        dims=(2 * band_width,) * p,
        domain=DomainSpec.box([lower], [upper]),
        labels=tuple(range(1, p + 1)),
        frequencies=freqs,
        band_width=int(band_width),
        base_freq=float(base_freq),
    )
