"""Arithmetic over Z_q with centered representatives.

Vectors and matrices are plain numpy integer arrays.  Every function that
returns ring elements returns them in the centered range (-q/2, q/2], so two
arrays represent the same element exactly when they compare equal.

Moduli up to about 2**62 are supported.  Products that could overflow int64
are computed with :func:`matmul_mod`, which splits operands into limbs small
enough that a float64 BLAS product is exact and then recombines the partial
products with Python integers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Iterator

import numpy as np

from .errors import DimensionError, ParameterError

# float64 has a 53-bit significand; keep a bit of headroom
_FLOAT_EXACT_BITS = 52
_INT64_SAFE = 2**62


def is_prime(q: int) -> bool:
    """Deterministic Miller-Rabin, exact for all 64-bit inputs."""
    q = int(q)
    if q < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
    for p in small:
        if q % p == 0:
            return q == p
    d, s = q - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in small:
        x = pow(a, d, q)
        if x in (1, q - 1):
            continue
        for _ in range(s - 1):
            x = x * x % q
            if x == q - 1:
                break
        else:
            return False
    return True


def next_prime(k: int) -> int:
    """Smallest prime >= k."""
    k = max(2, int(k))
    while not is_prime(k):
        k += 1
    return k


def prev_prime(k: int) -> int:
    """Largest prime <= k."""
    k = int(k)
    while k >= 2 and not is_prime(k):
        k -= 1
    if k < 2:
        raise ParameterError("no prime below 2")
    return k


def check_modulus(q: int) -> int:
    q = int(q)
    if not is_prime(q):
        raise ParameterError(f"modulus q={q} must be prime")
    if q >= _INT64_SAFE:
        raise ParameterError(f"modulus q={q} too large (must be < 2**62)")
    return q


def log2_ceil(q: int) -> int:
    """Exact ceil(log2 q) for q >= 2."""
    return (int(q) - 1).bit_length()


def centered(x, q: int):
    """Reduce ``x`` into (-q/2, q/2].

    Accepts Python ints, numpy integer arrays, or object arrays of Python ints.
    """
    if isinstance(x, (int, np.integer)):
        r = int(x) % q
        return r - q if 2 * r > q else r
    a = np.asarray(x)
    if a.dtype == object:
        r = a % q
        return np.where(2 * r > q, r - q, r)
    r = np.mod(a.astype(np.int64, copy=False), q)
    r = np.where(2 * r > q, r - q, r)
    return r.astype(np.int64)


def to_nonneg(x, q: int) -> np.ndarray:
    """Representatives in [0, q) as int64."""
    return np.mod(np.asarray(x, dtype=np.int64), q)


def _as_object(a: np.ndarray) -> np.ndarray:
    return a.astype(object)


def matmul_mod(A, B, q: int) -> np.ndarray:
    """Exact ``A @ B mod q`` returned centered, for any q < 2**62.

    Works for 1-d operands as well (vector-matrix, matrix-vector, dot).
    """
    q = int(q)
    A = to_nonneg(A, q)
    B = to_nonneg(B, q)
    k = A.shape[-1]
    if B.ndim >= 1 and B.shape[0 if B.ndim == 1 else -2] != k:
        raise DimensionError(f"inner dimensions differ: {A.shape} @ {B.shape}")
    if k == 0:
        return np.zeros(A.shape[:-1] + B.shape[1:], dtype=np.int64)
    bits_a = max(int(A.max(initial=0)).bit_length(), 1)
    bits_b = max(int(B.max(initial=0)).bit_length(), 1)
    budget = _FLOAT_EXACT_BITS - max(k, 1).bit_length()
    if bits_a + bits_b <= budget:
        out = np.rint(A.astype(np.float64) @ B.astype(np.float64)).astype(np.int64)
        return centered(out, q)
    if k <= 4 and A.ndim == 2 and B.ndim == 2:
        # thin inner dimension: a few exact Python-int outer products are cheapest
        Ao, Bo = _as_object(A), _as_object(B)
        acc = sum(Ao[:, t, None] * Bo[None, t, :] for t in range(k)) % q
        r = np.where(2 * acc > q, acc - q, acc)
        return r.astype(np.int64)
    # split both operands into limbs; each partial product is exact in float64
    wb = min(bits_b, max(budget // 2, 1))
    wa = budget - wb
    limbs_a = _split(A, wa)
    limbs_b = _split(B, wb)
    big = q >= 2**31
    acc = None
    for i, la in enumerate(limbs_a):
        for j, lb in enumerate(limbs_b):
            part = np.rint(la @ lb).astype(np.int64) % q
            shift = pow(2, wa * i + wb * j, q)
            if big:
                term = _as_object(part) * shift % q
            else:
                term = part * shift % q
            acc = term if acc is None else (acc + term) % q
    if big:
        r = acc % q
        r = np.where(2 * r > q, r - q, r)
        return r.astype(np.int64)
    return centered(acc, q)


def _split(A: np.ndarray, w: int) -> list:
    limbs = []
    mask = (1 << w) - 1
    rest = A.copy()
    while True:
        limbs.append((rest & mask).astype(np.float64))
        rest = rest >> w
        if not rest.any():
            break
    return limbs


def binary_limbs(A, q: int, k: int) -> tuple:
    """Split A (entries in [0, q)) so that each limb times a 0/1 matrix with
    inner dimension k is exact in float64.  Returns (limbs, width)."""
    A = to_nonneg(A, q)
    w = max(_FLOAT_EXACT_BITS - max(k, 1).bit_length(), 1)
    return _split(A, w), w


def matmul_binary(limbs_w: tuple, bits, q: int) -> np.ndarray:
    """``A @ bits mod q`` (centered) from precomputed :func:`binary_limbs`."""
    limbs, w = limbs_w
    bits = np.asarray(bits, dtype=np.float64)
    acc = None
    for i, la in enumerate(limbs):
        part = np.rint(la @ bits).astype(np.int64)
        if i == 0:
            acc = _as_object(part) if q >= 2**31 else part % q
            continue
        shift = pow(2, w * i, q)
        if q >= 2**31:
            acc = acc + _as_object(part) * shift
        else:
            acc = (acc + (part % q) * shift) % q
    return centered(acc % q, q)


def mat_vec(A, x, q: int) -> np.ndarray:
    """``A x mod q`` for A of shape (n, m) and x of length m (or shape (m, k))."""
    A = np.asarray(A)
    x = np.asarray(x)
    if A.ndim != 2 or x.shape[0] != A.shape[1]:
        raise DimensionError(f"cannot multiply {A.shape} by {x.shape}")
    return matmul_mod(A, x, q)


def ajtai_hash(A, x, q: int) -> np.ndarray:
    """The Ajtai function x -> A x (mod q)."""
    return mat_vec(A, x, q)


def random_matrix(rng: np.random.Generator, shape, q: int) -> np.ndarray:
    """Uniform centered matrix over Z_q."""
    return centered(rng.integers(0, q, size=shape, dtype=np.int64), q)


# -- gadget ---------------------------------------------------------------


@dataclass(frozen=True)
class GadgetSpec:
    """Gadget matrix G = I_blocks (x) (1, 2, ..., 2^(ell-1)) over Z_q."""

    blocks: int
    q: int
    ell: int = field(init=False)

    def __post_init__(self):
        if self.blocks < 1:
            raise ParameterError("gadget needs at least one block")
        if self.q < 2:
            raise ParameterError("modulus must be >= 2")
        object.__setattr__(self, "ell", log2_ceil(self.q))

    @property
    def N(self) -> int:
        return self.blocks * self.ell

    def decrypt_column(self) -> int:
        """Index of the last-block column whose power of two is farthest from 0 mod q."""
        vals = [abs(centered(1 << j, self.q)) for j in range(self.ell)]
        j = int(np.argmax(vals))
        return (self.blocks - 1) * self.ell + j


def gadget_matrix(gs: GadgetSpec) -> np.ndarray:
    """Block-diagonal powers of two, shape (blocks, N).

    Entries are the powers 2^j themselves (all < q).
    """
    G = np.zeros((gs.blocks, gs.N), dtype=np.int64)
    pw = np.array([1 << j for j in range(gs.ell)], dtype=np.int64)
    for i in range(gs.blocks):
        G[i, i * gs.ell:(i + 1) * gs.ell] = pw
    return G


def bit_decompose(v, gs: GadgetSpec) -> np.ndarray:
    """G^{-1}: binary decomposition, least significant bit first within each block.

    ``v`` may be a vector of length ``blocks`` (returns length N) or a matrix
    with ``blocks`` rows (decomposes each column, returns N x cols).  A
    leading batch axis is also allowed: shape (..., blocks, cols).
    """
    v = to_nonneg(v, gs.q)
    if v.shape[-2 if v.ndim >= 2 else 0] != gs.blocks:
        raise DimensionError(f"expected {gs.blocks} rows, got shape {v.shape}")
    shifts = np.arange(gs.ell, dtype=np.int64)
    if v.ndim == 1:
        return ((v[:, None] >> shifts) & 1).reshape(-1)
    # (..., blocks, cols) -> (..., blocks, ell, cols) -> (..., N, cols)
    bits = (v[..., :, None, :] >> shifts[:, None]) & 1
    return bits.reshape(v.shape[:-2] + (gs.N, v.shape[-1]))


# -- linear algebra over F_q ---------------------------------------------------


def _row_reduce(M: np.ndarray, q: int):
    """Reduced row echelon form over F_q with Python ints. Returns (R, pivots)."""
    R = [[int(v) % q for v in row] for row in np.asarray(M)]
    rows = len(R)
    cols = len(R[0]) if rows else 0
    pivots = []
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if R[i][c]), None)
        if piv is None:
            continue
        R[r], R[piv] = R[piv], R[r]
        inv = pow(R[r][c], -1, q)
        R[r] = [v * inv % q for v in R[r]]
        for i in range(rows):
            if i != r and R[i][c]:
                f = R[i][c]
                R[i] = [(a - f * b) % q for a, b in zip(R[i], R[r])]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    return R, pivots


def rank_mod(A, q: int) -> int:
    check_modulus(q)
    A = np.asarray(A)
    if A.size == 0:
        return 0
    return len(_row_reduce(A, q)[1])


def generates_full_group(A, q: int) -> bool:
    """True iff the columns of A span Z_q^n, i.e. rank over F_q equals n."""
    A = np.asarray(A)
    return rank_mod(A, q) == A.shape[0]


def solve_mod(A, y, q: int) -> np.ndarray | None:
    """One solution x of A x = y (mod q), or None if inconsistent."""
    check_modulus(q)
    A = np.asarray(A)
    y = np.asarray(y).reshape(-1)
    n, m = A.shape
    aug = np.concatenate([to_nonneg(A, q), to_nonneg(y, q)[:, None]], axis=1)
    R, pivots = _row_reduce(aug, q)
    if m in pivots:
        return None
    x = [0] * m
    for row, c in zip(R, pivots):
        x[c] = row[m]
    return centered(np.array(x, dtype=np.int64), q)


def kernel_basis(A, q: int) -> np.ndarray:
    """Basis (as rows) of {x : A x = 0 mod q}, shape (m - rank, m)."""
    check_modulus(q)
    A = np.asarray(A)
    n, m = A.shape
    R, pivots = _row_reduce(A, q)
    free = [c for c in range(m) if c not in pivots]
    basis = []
    for f in free:
        v = [0] * m
        v[f] = 1
        for row, c in zip(R, pivots):
            v[c] = (-row[f]) % q
        basis.append(v)
    if not basis:
        return np.zeros((0, m), dtype=np.int64)
    return centered(np.array(basis, dtype=np.int64), q)


def coset_points(A, y, q: int, budget: int = 2**22) -> np.ndarray:
    """All centered x in Z_q^m with A x = y, as rows (sorted lexicographically)."""
    from .errors import BudgetExceeded

    x0 = solve_mod(A, y, q)
    m = np.asarray(A).shape[1]
    if x0 is None:
        return np.zeros((0, m), dtype=np.int64)
    K = kernel_basis(A, q)
    size = q ** K.shape[0]
    if size > budget:
        raise BudgetExceeded("coset enumeration", size, budget)
    if K.shape[0] == 0:
        return x0[None, :]
    coeffs = np.array(list(product(range(q), repeat=K.shape[0])), dtype=np.int64)
    pts = centered(x0[None, :] + coeffs @ to_nonneg(K, q), q)
    order = np.lexsort(pts.T[::-1])
    return pts[order]


def all_vectors(q: int, m: int) -> np.ndarray:
    """Every centered vector of Z_q^m in lexicographic order, shape (q^m, m)."""
    vals = np.array(sorted(centered(np.arange(q), q)), dtype=np.int64)
    grids = np.meshgrid(*([vals] * m), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1) if m else np.zeros((1, 0), np.int64)


def iter_vectors(q: int, m: int) -> Iterator[tuple]:
    vals = sorted(int(v) for v in centered(np.arange(q), q))
    return product(vals, repeat=m)


def vec_norm(x) -> float:
    """Euclidean norm of centered representatives (last axis)."""
    return np.linalg.norm(np.asarray(x, dtype=np.float64), axis=-1)
