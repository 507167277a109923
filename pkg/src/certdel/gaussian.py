"""Discrete Gaussians over Z_q^m and lattice cosets.

The Gaussian function is rho_sigma(x) = exp(-pi ||x||^2 / sigma^2).  The
distributions here live on centered vectors of Z_q^m, truncated to the ball
of radius sigma * sqrt(m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import modq
from .errors import BudgetExceeded, ParameterError

DEFAULT_BUDGET = 2**22
# relative mass we are willing to drop when cutting an infinite lattice sum
TAIL_TOL = 1e-15


def rho(sigma: float, x) -> np.ndarray:
    """Gaussian function evaluated along the last axis of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        return math.exp(-math.pi * float(x) ** 2 / sigma**2)
    return np.exp(-math.pi * np.sum(x * x, axis=-1) / sigma**2)


def tail_bound(c: float, m: int) -> float:
    """Upper bound (2 pi e c^2)^{m/2} exp(-pi c^2 m) on the relative Gaussian mass
    of a shifted lattice outside the ball of radius c * sqrt(m) * sigma.

    Valid for c >= 1/sqrt(2 pi).
    """
    if c < 1 / math.sqrt(2 * math.pi):
        raise ParameterError("tail bound requires c >= 1/sqrt(2 pi)")
    log = 0.5 * m * math.log(2 * math.pi * math.e * c * c) - math.pi * c * c * m
    return math.exp(log)


def tail_radius_factor(m: int, tol: float = TAIL_TOL) -> float:
    """Smallest c (on a 0.05 grid) with tail_bound(c, m) <= tol."""
    c = 1.0
    while tail_bound(c, m) > tol:
        c += 0.05
    return c


def rho_integer_lattice(sigma: float, m: int) -> float:
    """rho_sigma(Z^m) = (sum_k rho_sigma(k))^m, summed until terms vanish."""
    s = 1.0
    k = 1
    while True:
        t = math.exp(-math.pi * k * k / sigma**2)
        s += 2 * t
        if t < 1e-18 * s:
            break
        k += 1
    return s**m


def _ball_points(radius: float, m: int, center=None, budget: int = DEFAULT_BUDGET) -> np.ndarray:
    """Integer points x in Z^m with ||x - center|| <= radius."""
    center = np.zeros(m) if center is None else np.asarray(center, dtype=np.float64)
    lo = np.ceil(center - radius).astype(np.int64)
    hi = np.floor(center + radius).astype(np.int64)
    size = int(np.prod(hi - lo + 1))
    if size > budget:
        raise BudgetExceeded("ball enumeration", size, budget)
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    grid = np.stack([g.reshape(-1) for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    d = grid - center
    keep = np.einsum("ij,ij->i", d, d) <= radius * radius + 1e-9
    return grid[keep]


def _periodic_1d(sigma: float, q: int, x: np.ndarray, tol: float):
    """sum_k rho_sigma(x + q k) per entry of the centered array x, and an error bound."""
    # terms with |x + qk| >= q (K - 1/2) are dropped; choose K so they are tiny
    K = 1
    while True:
        d = q * (K + 0.5)
        first = math.exp(-math.pi * d * d / sigma**2)
        ratio = math.exp(-math.pi * (2 * d * q + q * q) / sigma**2)
        err = 2 * first / (1 - ratio) if ratio < 1 else float("inf")
        if err <= tol:
            break
        K += 1
    ks = np.arange(-K, K + 1)
    vals = np.exp(-math.pi * (x[..., None] + q * ks) ** 2 / sigma**2).sum(axis=-1)
    return vals, err


def rho_periodic_certified(sigma: float, q: int, x, tol: float = 1e-12):
    """Periodic Gaussian sum_{k in Z^m} rho_sigma(x + q k) with an error bound.

    The sum factorizes over coordinates, so it is evaluated as a product of
    one dimensional periodic sums.  Returns ``(value, err)`` with the true
    value within ``err`` of ``value`` and ``err <= tol``.  ``x`` may have a
    leading batch axis.
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    batch = x.ndim == 2
    X = x if batch else x[None, :]
    m = X.shape[1]
    Xc = X - q * np.round(X / q)  # periodic, so any representative works
    per_tol = tol / m
    while True:
        vals, err1 = _periodic_1d(sigma, q, Xc, per_tol)
        # prod(v + d) - prod(v) <= m d (max v + d)^(m-1)
        factor = max(float(np.max(vals)) + err1, 1.0)
        err = m * err1 * factor ** (m - 1)
        if err <= tol:
            break
        per_tol = tol / (m * factor ** (m - 1))
    out = np.prod(vals, axis=1)
    return (out if batch else float(out[0])), err


def rho_periodic(sigma: float, q: int, x, tol: float = 1e-12):
    """rho_{sigma,q}(x) with certified absolute error <= tol."""
    return rho_periodic_certified(sigma, q, x, tol)[0]


@dataclass(frozen=True)
class GaussParams:
    sigma: float
    q: int
    m: int

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError("sigma must be positive")
        if self.m < 1:
            raise ParameterError("dimension must be >= 1")
        modq.check_modulus(self.q)

    @property
    def radius(self) -> float:
        return self.sigma * math.sqrt(self.m)


@dataclass(frozen=True)
class FiniteDistribution:
    """A distribution over a finite list of integer vectors."""

    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        sup = np.asarray(self.support, dtype=np.int64)
        if sup.ndim == 1:
            sup = sup[:, None]
        p = np.asarray(self.probs, dtype=np.float64)
        if len(p) != len(sup):
            raise ValueError("support and probabilities differ in length")
        if len(p) == 0:
            raise ValueError("empty distribution")
        if (p < 0).any():
            raise ValueError("negative probability")
        s = p.sum()
        if not abs(s - 1.0) < 1e-9:
            raise ValueError(f"probabilities sum to {s}, not 1")
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "probs", p / s)

    def __len__(self):
        return len(self.probs)

    def as_dict(self) -> dict:
        return {tuple(int(v) for v in row): float(p) for row, p in zip(self.support, self.probs)}

    def sample(self, rng: np.random.Generator, size: int | None = None):
        """Inverse-CDF sampling; one uniform double per sample."""
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        u = rng.random(1 if size is None else size)
        idx = np.searchsorted(cdf, u, side="right")
        idx = np.minimum(idx, len(cdf) - 1)
        out = self.support[idx]
        return out[0] if size is None else out

    def tv(self, other: "FiniteDistribution") -> float:
        return tv_distance(self.as_dict(), other.as_dict())


def tv_distance(p: dict, r: dict) -> float:
    """Total variation distance (half the l1 distance) between two dict pmfs."""
    keys = set(p) | set(r)
    return 0.5 * sum(abs(p.get(k, 0.0) - r.get(k, 0.0)) for k in keys)


def empirical(samples) -> dict:
    samples = np.asarray(samples)
    if samples.ndim == 1:
        samples = samples[:, None]
    keys, counts = np.unique(samples, axis=0, return_counts=True)
    n = counts.sum()
    return {tuple(int(v) for v in k): c / n for k, c in zip(keys, counts)}


def _box_axis(q: int, radius: float) -> np.ndarray:
    """Centered residues with |x| <= radius."""
    r = int(math.floor(min(radius + 1e-9, q / 2)))
    vals = np.arange(-r, r + 1, dtype=np.int64)
    return vals[2 * vals > -q]


def truncated_gaussian_pmf(params: GaussParams, budget: int = DEFAULT_BUDGET) -> FiniteDistribution:
    """D_{Z_q^m, sigma} restricted to centered x with ||x|| <= sigma sqrt(m)."""
    axis = _box_axis(params.q, params.radius)
    size = len(axis) ** params.m
    if size > budget:
        raise BudgetExceeded("truncated gaussian support", size, budget)
    grid = np.stack(
        [g.reshape(-1) for g in np.meshgrid(*([axis] * params.m), indexing="ij")], axis=1
    )
    norms2 = np.einsum("ij,ij->i", grid, grid).astype(np.float64)
    keep = norms2 <= params.radius**2 + 1e-9
    sup = grid[keep]
    w = rho(params.sigma, sup)
    return FiniteDistribution(sup, w / w.sum())


def sample_truncated_gaussian(
    params: GaussParams,
    rng: np.random.Generator,
    size: int | None = None,
    budget: int = DEFAULT_BUDGET,
):
    """Exact sampler for the truncated discrete Gaussian.

    Small supports use inverse-CDF over the enumerated pmf.  Large ones draw
    each coordinate from the one dimensional Gaussian on the box and reject
    vectors outside the ball, which is exact because rho factorizes.
    """
    axis = _box_axis(params.q, params.radius)
    if len(axis) ** params.m <= budget:
        return truncated_gaussian_pmf(params, budget).sample(rng, size)
    w = rho(params.sigma, axis[:, None])
    one_d = FiniteDistribution(axis, w / w.sum())
    count = 1 if size is None else size
    out = np.empty((count, params.m), dtype=np.int64)
    filled = 0
    r2 = params.radius**2 + 1e-9
    while filled < count:
        need = count - filled
        batch = one_d.sample(rng, max(2 * need, 16) * params.m).reshape(-1, params.m)
        ok = batch[np.einsum("ij,ij->i", batch, batch) <= r2]
        take = ok[:need]
        out[filled:filled + len(take)] = take
        filled += len(take)
    return out[0] if size is None else out


def gaussian_tail_mass(sigma: float, q: int, m: int, c: float) -> float:
    """Relative rho-mass of centered Z_q^m outside radius c sqrt(m) sigma."""
    axis = modq.centered(np.arange(q), q).astype(np.float64)
    grid = np.stack([g.reshape(-1) for g in np.meshgrid(*([axis] * m), indexing="ij")], axis=1)
    w = rho(sigma, grid)
    outside = np.einsum("ij,ij->i", grid, grid) > (c * math.sqrt(m) * sigma) ** 2
    return float(w[outside].sum() / rho_integer_lattice(sigma, m))


def coset_gaussian_pmf(A, y, sigma: float, q: int, budget: int = DEFAULT_BUDGET) -> FiniteDistribution:
    """Gaussian weights rho_sigma(x) over centered x in Z_q^m with A x = y.

    Points with norm above ||x_min|| + C sigma sqrt(m) are excluded, where
    x_min is the shortest coset point and C is chosen so the tail bound is
    below 1e-15.  Measuring from x_min keeps cosets that lie entirely
    outside the ball around the origin.
    """
    A = np.asarray(A)
    m = A.shape[1]
    pts = modq.coset_points(A, y, q, budget=budget)
    if len(pts) == 0:
        raise ParameterError("syndrome is not in the image of A")
    C = tail_radius_factor(m)
    norms = modq.vec_norm(pts)
    keep = norms <= norms.min() + C * sigma * math.sqrt(m) + 1e-9
    pts = pts[keep]
    w = rho(sigma, pts)
    return FiniteDistribution(pts, w / w.sum())


def poisson_check(A, v, w, sigma: float, q: int, tol: float = 1e-9):
    """Both sides of the Poisson summation identity for a q-ary lattice coset.

    lhs = sum_{x in Z^m, A x = v mod q} rho_sigma(x) exp(-2 pi i <w, x> / q)
    rhs = sigma^m / q^n * sum_{y in Z_q^n} rho_{q/sigma, q}(w + y A) exp(2 pi i <y, v> / q)

    Returns ``(lhs, rhs, err)`` where ``err`` bounds the combined truncation
    error of the two evaluations.
    """
    A = np.asarray(A, dtype=np.int64)
    n, m = A.shape
    v = np.asarray(v, dtype=np.int64).reshape(n)
    w = np.asarray(w, dtype=np.int64).reshape(m)
    total = rho_integer_lattice(sigma, m)
    c = 1.0
    while tail_bound(c, m) * total > tol:
        c += 0.05
    pts = _ball_points(c * math.sqrt(m) * sigma, m)
    on = np.all(np.mod(pts @ A.T - v, q) == 0, axis=1)
    pts = pts[on]
    phase = np.exp(-2j * math.pi * np.mod(pts @ w, q) / q)
    lhs = complex(np.sum(rho(sigma, pts) * phase))
    err_l = tail_bound(c, m) * total
    ys = modq.all_vectors(q, n)
    args = np.mod(w[None, :] + ys @ A, q)
    args = modq.centered(args, q)
    per, err_p = rho_periodic_certified(q / sigma, q, args, tol=tol)
    ph = np.exp(2j * math.pi * np.mod(ys @ v, q) / q)
    scale = sigma**m / q**n
    rhs = complex(scale * np.sum(per * ph))
    err = err_l + scale * len(ys) * err_p
    return lhs, rhs, err


def shifted_tv_bound(e0, sigma: float, m: int) -> float:
    """2 (1 - exp(-2 pi sqrt(m) ||e0|| / sigma)): TV bound between D and D + e0."""
    nrm = float(np.linalg.norm(np.asarray(e0, dtype=np.float64)))
    return 2.0 * (1.0 - math.exp(-2 * math.pi * math.sqrt(m) * nrm / sigma))


def shifted_tv_exact(e0, params: GaussParams, budget: int = DEFAULT_BUDGET) -> float:
    """Exact TV between the truncated Gaussian and its translate by the integer vector e0."""
    d = truncated_gaussian_pmf(params, budget).as_dict()
    e0 = tuple(int(v) for v in np.asarray(e0).reshape(-1))
    shifted = {tuple(a + b for a, b in zip(k, e0)): p for k, p in d.items()}
    return tv_distance(d, shifted)


def periodic_truncation_ratio(x, sigma: float, q: int) -> float:
    """rho_{sigma,q}(x) / rho_sigma(x) for a centered x."""
    x = np.asarray(x, dtype=np.float64)
    return rho_periodic(sigma, q, x) / float(rho(sigma, x))


def periodic_ratio_bound(sigma: float, q: int, m: int) -> float:
    """Upper bound 1 + 2^{-(q^2 / (2 sigma^2) - m)} on the periodic/plain ratio
    for centered x with ||x|| < q/4."""
    return 1.0 + 2.0 ** (-(0.5 * (q / sigma) ** 2 - m))


__all__ = [
    "rho", "rho_periodic", "rho_periodic_certified", "tail_bound", "GaussParams",
    "FiniteDistribution", "truncated_gaussian_pmf", "sample_truncated_gaussian",
    "coset_gaussian_pmf", "poisson_check", "shifted_tv_bound", "shifted_tv_exact",
    "tv_distance", "empirical", "gaussian_tail_mass", "periodic_truncation_ratio",
    "periodic_ratio_bound", "rho_integer_lattice",
]
