"""Primal and dual Gaussian states over Z_q^m.

For A in Z_q^{n x m} and y in Z_q^n the dual state is

    |psi_hat_y>  proportional to  sum_{x in Z_q^m, A x = y} rho_sigma(x) |x>

and the primal state is

    |psi_y>  proportional to  sum_{s in Z_q^n} sum_{e} rho_{q/sigma}(e) omega^{-<s,y>} |s A + e>

with e ranging over centered vectors of norm at most (q/sigma) sqrt(m).
The two are exchanged by the q-ary Fourier transform up to a small error:
FT |psi_y> is close to |psi_hat_y>.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import modq
from .errors import BudgetExceeded, ParameterError, RankError
from .gaussian import (
    DEFAULT_BUDGET,
    FiniteDistribution,
    _ball_points,
    rho,
    rho_periodic_certified,
)
from .qudit import (
    RegisterLayout,
    SparseState,
    _labels_to_index,
    inverse_qft,
    measure_computational,
    qft,
    trace_distance,
)

REGISTER = "X"


@dataclass(frozen=True)
class DualGaussianState:
    state: SparseState
    A: np.ndarray = field(repr=False)
    y: np.ndarray
    sigma: float

    @property
    def q(self) -> int:
        return self.state.q


@dataclass(frozen=True)
class PrimalGaussianState:
    state: SparseState
    A: np.ndarray = field(repr=False)
    y: np.ndarray
    sigma: float

    @property
    def q(self) -> int:
        return self.state.q


def in_duality_window(sigma: float, m: int, q: int) -> bool:
    """sqrt(8m) < sigma < q / sqrt(8m)."""
    r = math.sqrt(8 * m)
    return r < sigma < q / r


def kappa(m: int) -> float:
    """sqrt(1 - (1 + 2^{-3m})^{-1}), the analytic primal-side distance term."""
    t = 2.0 ** (-3 * m)
    return math.sqrt(t / (1.0 + t))


def _check(A, q):
    A = modq.centered(np.asarray(A, dtype=np.int64), q)
    if A.ndim != 2:
        raise ParameterError("A must be a matrix")
    modq.check_modulus(q)
    return A


def make_dual_state(A, y, sigma: float, q: int, budget: int = DEFAULT_BUDGET) -> DualGaussianState:
    """Dual Gaussian state by direct amplitude assignment on the coset A x = y."""
    A = _check(A, q)
    y = modq.centered(np.asarray(y, dtype=np.int64).reshape(A.shape[0]), q)
    pts = modq.coset_points(A, y, q, budget=budget)
    if len(pts) == 0:
        raise ParameterError("empty support: y is not in the column span of A")
    layout = RegisterLayout.single(q, REGISTER, A.shape[1])
    state = SparseState(layout, pts, rho(sigma, pts)).normalized()
    return DualGaussianState(state, A, y, float(sigma))


def syndrome_distribution(A, sigma: float, q: int, budget: int = DEFAULT_BUDGET) -> FiniteDistribution:
    """Exact law of y = A x when x is measured from the uniform-box Gaussian superposition.

    P(y) is proportional to sum_{A x = y} rho_sigma(x)^2 over centered x in
    Z_q^m; the product weights are convolved one column at a time.
    """
    A = _check(A, q)
    n, m = A.shape
    if q**n > budget:
        raise BudgetExceeded("syndrome distribution", q**n, budget)
    xs = modq.centered(np.arange(q), q)
    w = rho(sigma, xs[:, None]) ** 2
    dist = np.zeros((q,) * n)
    dist[(0,) * n] = 1.0
    for k in range(m):
        col = np.mod(A[:, k], q)
        new = np.zeros_like(dist)
        for xv, wv in zip(xs, w):
            shift = tuple(int(s) for s in np.mod(col * xv, q))
            new += wv * np.roll(dist, shift, axis=tuple(range(n)))
        dist = new / new.sum()
    ys = modq.all_vectors(q, n)
    probs = dist[tuple(np.mod(ys, q).T)]
    keep = probs > 0
    return FiniteDistribution(ys[keep], probs[keep] / probs[keep].sum())


def gen_dual(A, sigma: float, q: int, rng: np.random.Generator, budget: int = DEFAULT_BUDGET):
    """Prepare sum_x rho_sigma(x)|x>|A x>, measure the image register, return (state, y).

    When q^m fits the budget the two-register superposition is built and the
    image register measured.  Otherwise y is drawn from the exact syndrome
    law with the same single uniform draw, so both paths agree for a given
    seed, and the coset state is built directly.
    """
    A = _check(A, q)
    n, m = A.shape
    if q**m <= budget:
        xs = modq.all_vectors(q, m)
        ys = modq.matmul_mod(xs, A.T, q)
        layout = RegisterLayout(q, ((REGISTER, m), ("Y", n)))
        full = SparseState(layout, np.concatenate([xs, ys], axis=1), rho(sigma, xs)).normalized()
        y, post = measure_computational(full, "Y", rng)
        pts = post.register(REGISTER)
        state = SparseState(RegisterLayout.single(q, REGISTER, m), pts, post.amps).normalized()
        return DualGaussianState(state, A, modq.centered(y, q), float(sigma)), modq.centered(y, q)
    y = syndrome_distribution(A, sigma, q, budget).sample(rng)
    return make_dual_state(A, y, sigma, q, budget), y


def sample_syndrome(A, sigma: float, q: int, rng: np.random.Generator, size: int | None = None):
    """Draw image-register outcomes of gen_dual without building any state."""
    return syndrome_distribution(A, sigma, q).sample(rng, size)


def gen_primal(A, sigma: float, q: int, rng: np.random.Generator, budget: int = DEFAULT_BUDGET):
    """Primal Gaussian state from a freshly generated dual state.

    The dual state is mapped with FT^dagger, which yields the primal state
    with phases omega^{-<s,y>} (FT itself would give the conjugate phases).
    """
    A = _check(A, q)
    if not modq.generates_full_group(A, q):
        raise RankError("columns of A must generate Z_q^n")
    dual, y = gen_dual(A, sigma, q, rng, budget)
    state = inverse_qft(dual.state, REGISTER, budget=budget)
    return PrimalGaussianState(state, A, y, float(sigma)), y


def _primal_error_support(sigma: float, q: int, m: int) -> np.ndarray:
    radius = (q / sigma) * math.sqrt(m)
    pts = _ball_points(min(radius, q * math.sqrt(m)), m)
    # keep centered representatives only
    inbox = np.all((2 * pts > -q) & (2 * pts <= q), axis=1)
    return pts[inbox]


def make_primal_state(A, y, sigma: float, q: int, budget: int = DEFAULT_BUDGET, periodic: bool = False):
    """Primal Gaussian state evaluated from its defining sum.

    With ``periodic=True`` the noise weights are the periodic Gaussian
    rho_{q/sigma, q} over all of Z_q^m instead of the truncated ball.
    """
    A = _check(A, q)
    n, m = A.shape
    y = modq.centered(np.asarray(y, dtype=np.int64).reshape(n), q)
    if q**m > budget:
        raise BudgetExceeded("primal state", q**m, budget)
    layout = RegisterLayout.single(q, REGISTER, m)
    S = modq.all_vectors(q, n)
    sA = modq.matmul_mod(S, A, q)
    ph = np.exp(-2j * math.pi * np.mod(S @ y, q) / q)
    if periodic:
        res = modq.centered(np.arange(q), q)
        f, _ = rho_periodic_certified(q / sigma, q, res[:, None])
        dense = np.zeros((q,) * m, dtype=np.complex128)
        for shift, p in zip(sA, ph):
            term = np.array(p)
            for i in range(m):
                # entry at residue r (index r mod q) gets f(r - shift_i)
                term = np.multiply.outer(term, np.roll(f, int(shift[i]) % q))
            dense += term
        # dense is indexed by residues mod q; reorder to the layout order
        pts = modq.all_vectors(q, m)
        vec = dense[tuple(np.mod(pts, q).T)]
    else:
        E = _primal_error_support(sigma, q, m)
        w = rho(q / sigma, E)
        if len(S) * len(E) > budget:
            raise BudgetExceeded("primal state terms", len(S) * len(E), budget)
        labels = modq.centered((sA[:, None, :] + E[None, :, :]).reshape(-1, m), q)
        vec = np.zeros(q**m, dtype=np.complex128)
        np.add.at(vec, _labels_to_index(labels, layout), np.outer(ph, w).reshape(-1))
    state = SparseState.from_dense(layout, vec).normalized()
    return PrimalGaussianState(state, A, y, float(sigma))


def periodic_dual_state(A, y, sigma: float, q: int, budget: int = DEFAULT_BUDGET) -> SparseState:
    """Coset state with periodic Gaussian amplitudes rho_{sigma,q}(x)."""
    A = _check(A, q)
    pts = modq.coset_points(A, y, q, budget=budget)
    vals, _ = rho_periodic_certified(sigma, q, pts)
    layout = RegisterLayout.single(q, REGISTER, A.shape[1])
    return SparseState(layout, pts, vals).normalized()


@dataclass(frozen=True)
class DualityReport:
    td: float
    bound: float
    trunc_term: float
    kappa: float
    chain_bound: float
    in_window: bool
    ok: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def duality_check(A, y, sigma: float, q: int, mode: str = "strict", budget: int = DEFAULT_BUDGET) -> DualityReport:
    """Compare FT|psi_y> with |psi_hat_y> and assemble the analytic bound.

    bound = trunc_term + kappa(m) where trunc_term is the computed trace
    distance between the plain and periodic dual states (the tail part) and
    kappa(m) is the closed-form primal-side term.  ``chain_bound`` is the
    fully computed version of the same triangle inequality.

    In strict mode the parameters must lie in the window and the check must
    pass, otherwise ParameterError / AssertionError is raised.
    """
    A = _check(A, q)
    n, m = A.shape
    window = in_duality_window(sigma, m, q) and modq.generates_full_group(A, q)
    if mode == "strict" and not window:
        raise ParameterError(f"sigma={sigma} outside (sqrt(8m), q/sqrt(8m)) for m={m}, q={q} or A not full rank")
    primal = make_primal_state(A, y, sigma, q, budget)
    dual = make_dual_state(A, y, sigma, q, budget)
    td = trace_distance(qft(primal.state, REGISTER, budget=budget), dual.state)
    dual_per = periodic_dual_state(A, y, sigma, q, budget)
    trunc = trace_distance(dual_per, dual.state)
    primal_per = make_primal_state(A, y, sigma, q, budget, periodic=True)
    chain = trunc + trace_distance(primal_per.state, primal.state)
    k = kappa(m)
    bound = trunc + k
    ok = td <= bound
    if mode == "strict" and not ok:
        raise AssertionError(f"duality check failed: td={td} > bound={bound}")
    return DualityReport(td, bound, trunc, k, chain, window, ok)
