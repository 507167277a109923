"""Exact simulation of multi-register qudit states over Z_q.

A :class:`SparseState` stores the nonzero amplitudes of a pure state as a
label matrix (one row per basis state, one column per qudit, centered
residues) together with a complex amplitude vector.  Rows are kept sorted
lexicographically, duplicates are merged and amplitudes below
:data:`PRUNE` are dropped, so two equal states have identical arrays.

Small mixed states live in :class:`DensityOp` as dense matrices indexed by
the lexicographic enumeration of the full layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import modq
from .errors import BudgetExceeded, DimensionError

PRUNE = 1e-15
SUPPORT_BUDGET = 2**20
DENSE_BUDGET = 2**22
DENSITY_DIM_BUDGET = 4096


@dataclass(frozen=True)
class RegisterLayout:
    """Ordered named registers, each holding ``width`` qudits of dimension q."""

    q: int
    registers: tuple

    def __post_init__(self):
        regs = tuple((str(n), int(w)) for n, w in self.registers)
        names = [n for n, _ in regs]
        if len(set(names)) != len(names):
            raise DimensionError(f"duplicate register names in {names}")
        if any(w < 1 for _, w in regs):
            raise DimensionError("register widths must be >= 1")
        if self.q < 2:
            raise DimensionError("q must be >= 2")
        object.__setattr__(self, "registers", regs)

    @classmethod
    def single(cls, q: int, name: str, width: int) -> "RegisterLayout":
        return cls(q, ((name, width),))

    @property
    def names(self) -> list:
        return [n for n, _ in self.registers]

    @property
    def width(self) -> int:
        return sum(w for _, w in self.registers)

    @property
    def dim(self) -> int:
        return self.q**self.width

    def reg_width(self, name: str) -> int:
        for n, w in self.registers:
            if n == name:
                return w
        raise KeyError(f"no register named {name!r}")

    def cols(self, name: str) -> slice:
        off = 0
        for n, w in self.registers:
            if n == name:
                return slice(off, off + w)
            off += w
        raise KeyError(f"no register named {name!r}")

    def cols_of(self, names) -> np.ndarray:
        return np.concatenate([np.arange(self.width)[self.cols(n)] for n in names]) if names else np.zeros(0, int)

    def concat(self, other: "RegisterLayout") -> "RegisterLayout":
        if other.q != self.q:
            raise DimensionError("layouts over different moduli")
        return RegisterLayout(self.q, self.registers + other.registers)

    def without(self, names) -> "RegisterLayout":
        names = set(names)
        return RegisterLayout(self.q, tuple(r for r in self.registers if r[0] not in names))


def _keys(labels: np.ndarray, q: int):
    """Integer sort keys that order rows lexicographically, or None if they would overflow."""
    w = labels.shape[1]
    if w * math.log2(q) >= 62:
        return None
    half = (q - 1) // 2
    key = np.zeros(len(labels), dtype=np.int64)
    for c in range(w):
        key = key * q + (labels[:, c] + half)
    return key


def _unique_rows(labels: np.ndarray, q: int):
    """(unique rows sorted lexicographically, inverse index)."""
    key = _keys(labels, q)
    if key is None:
        uniq, inv = np.unique(labels, axis=0, return_inverse=True)
        return uniq, inv.reshape(-1)
    ukey, first, inv = np.unique(key, return_index=True, return_inverse=True)
    return labels[first], inv.reshape(-1)


def _canonical(labels: np.ndarray, amps: np.ndarray, q: int, prune: float = PRUNE):
    """Sort rows, merge duplicates and drop negligible amplitudes."""
    if len(labels) == 0:
        return labels.reshape(0, labels.shape[1]), amps[:0]
    if labels.shape[1] == 0:
        total = amps.sum()
        keep = abs(total) >= prune
        return labels[:1] if keep else labels[:0], np.array([total])[: int(keep)]
    uniq, inv = _unique_rows(labels, q)
    if len(uniq) != len(labels):
        merged = np.zeros(len(uniq), dtype=np.complex128)
        np.add.at(merged, inv, amps)
    else:
        merged = np.empty(len(uniq), dtype=np.complex128)
        merged[inv] = amps
    keep = np.abs(merged) >= prune
    return uniq[keep], merged[keep]


class SparseState:
    """Immutable pure state as a sparse amplitude table."""

    __slots__ = ("layout", "labels", "amps")

    def __init__(self, layout: RegisterLayout, labels, amps, canonical: bool = False):
        labels = np.asarray(labels, dtype=np.int64).reshape(-1, layout.width)
        amps = np.asarray(amps, dtype=np.complex128).reshape(-1)
        if len(labels) != len(amps):
            raise DimensionError("labels and amplitudes differ in length")
        if not canonical:
            labels = modq.centered(labels, layout.q) if labels.size else labels
            labels, amps = _canonical(labels, amps, layout.q)
        labels.setflags(write=False)
        amps.setflags(write=False)
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "amps", amps)

    def __setattr__(self, key, value):
        raise AttributeError("SparseState is immutable")

    # -- constructors --------------------------------------------------------

    @classmethod
    def basis(cls, layout: RegisterLayout, values: dict) -> "SparseState":
        row = np.zeros(layout.width, dtype=np.int64)
        for name, v in values.items():
            row[layout.cols(name)] = np.asarray(v, dtype=np.int64).reshape(-1)
        return cls(layout, row[None, :], [1.0])

    @classmethod
    def zero(cls, layout: RegisterLayout) -> "SparseState":
        return cls.basis(layout, {})

    @classmethod
    def from_dict(cls, layout: RegisterLayout, amps: dict) -> "SparseState":
        if not amps:
            return cls(layout, np.zeros((0, layout.width)), [])
        keys = list(amps)
        return cls(layout, np.array(keys, dtype=np.int64), [amps[k] for k in keys])

    @classmethod
    def from_dense(cls, layout: RegisterLayout, vec) -> "SparseState":
        vec = np.asarray(vec, dtype=np.complex128).reshape(-1)
        if len(vec) != layout.dim:
            raise DimensionError(f"dense vector has length {len(vec)}, layout needs {layout.dim}")
        keep = np.abs(vec) >= PRUNE
        return cls(layout, _index_to_labels(np.nonzero(keep)[0], layout), vec[keep])

    # -- views ---------------------------------------------------------------

    def __len__(self):
        return len(self.amps)

    @property
    def q(self) -> int:
        return self.layout.q

    def to_dict(self) -> dict:
        return {tuple(int(v) for v in row): complex(a) for row, a in zip(self.labels, self.amps)}

    def register(self, name: str) -> np.ndarray:
        """Label columns of one register, shape (K, width)."""
        return self.labels[:, self.layout.cols(name)]

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amps) ** 2)))

    def normalized(self) -> "SparseState":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return SparseState(self.layout, self.labels, self.amps / n, canonical=True)

    def scaled(self, c: complex) -> "SparseState":
        return SparseState(self.layout, self.labels, self.amps * c)

    def to_dense(self, budget: int = DENSE_BUDGET) -> np.ndarray:
        dim = self.layout.dim
        if dim > budget:
            raise BudgetExceeded("dense vector", dim, budget)
        vec = np.zeros(dim, dtype=np.complex128)
        vec[_labels_to_index(self.labels, self.layout)] = self.amps
        return vec

    def __repr__(self):
        return f"SparseState(registers={self.layout.registers}, q={self.q}, support={len(self)})"


def _digits(labels: np.ndarray, q: int) -> np.ndarray:
    """Map centered labels to their position in the sorted centered alphabet."""
    half = (q - 1) // 2  # number of negative residues
    return labels + half


def _labels_to_index(labels: np.ndarray, layout: RegisterLayout) -> np.ndarray:
    d = _digits(labels, layout.q)
    idx = np.zeros(len(labels), dtype=np.int64)
    for c in range(layout.width):
        idx = idx * layout.q + d[:, c]
    return idx


def _index_to_labels(idx: np.ndarray, layout: RegisterLayout) -> np.ndarray:
    q = layout.q
    half = (q - 1) // 2
    out = np.zeros((len(idx), layout.width), dtype=np.int64)
    rest = np.asarray(idx, dtype=np.int64).copy()
    for c in range(layout.width - 1, -1, -1):
        out[:, c] = rest % q - half
        rest //= q
    return out


# -- combinators -------------------------------------------------------------


def tensor(a: SparseState, b: SparseState, budget: int = SUPPORT_BUDGET) -> SparseState:
    size = len(a) * len(b)
    if size > budget:
        raise BudgetExceeded("tensor product support", size, budget)
    layout = a.layout.concat(b.layout)
    la = np.repeat(a.labels, len(b), axis=0)
    lb = np.tile(b.labels, (len(a), 1))
    amps = np.outer(a.amps, b.amps).reshape(-1)
    return SparseState(layout, np.concatenate([la, lb], axis=1), amps)


def add_register(state: SparseState, name: str, width: int) -> SparseState:
    """Append a fresh register initialised to |0...0>."""
    layout = state.layout.concat(RegisterLayout.single(state.q, name, width))
    zeros = np.zeros((len(state), width), dtype=np.int64)
    return SparseState(layout, np.concatenate([state.labels, zeros], axis=1), state.amps, canonical=True)


def drop_register(state: SparseState, name: str) -> SparseState:
    """Discard a register that is in a fixed computational basis state.

    Raises ValueError if the register is entangled with the rest (takes more
    than one value on the support).
    """
    vals = state.register(name)
    if len(vals) and (vals != vals[0]).any():
        raise ValueError(f"register {name!r} is not in a product basis state")
    keep = np.setdiff1d(np.arange(state.layout.width), state.layout.cols_of([name]))
    return SparseState(state.layout.without([name]), state.labels[:, keep], state.amps)


def permute_labels(state: SparseState, fn) -> SparseState:
    """Apply a basis permutation given as a vectorised map on label rows."""
    new = np.asarray(fn(state.labels.copy()), dtype=np.int64)
    new = modq.centered(new, state.q)
    if len(_unique_rows(new, state.q)[0]) != len(new):
        raise ValueError("map is not injective on the support")
    return SparseState(state.layout, new, state.amps)


# -- Paulis and Fourier transform ---------------------------------------------


def pauli_x(state: SparseState, register: str, shift) -> SparseState:
    """X^b |a> = |a + b mod q> on one register."""
    cols = state.layout.cols(register)
    shift = np.asarray(shift, dtype=np.int64).reshape(-1)
    if len(shift) != cols.stop - cols.start:
        raise DimensionError(f"shift of length {len(shift)} for register of width {cols.stop - cols.start}")
    labels = state.labels.copy()
    labels[:, cols] = modq.centered(labels[:, cols] + shift, state.q)
    return SparseState(state.layout, labels, state.amps)


def _phase(k, q: int) -> np.ndarray:
    """omega_q^k evaluated from the exact reduced angle 2 pi (k mod q) / q."""
    k = np.mod(np.asarray(k, dtype=np.int64), q)
    return np.exp(2j * math.pi * k / q)


def pauli_z(state: SparseState, register: str, phase) -> SparseState:
    """Z^b |a> = omega^{<a, b>} |a> on one register."""
    cols = state.layout.cols(register)
    phase = np.asarray(phase, dtype=np.int64).reshape(-1)
    if len(phase) != cols.stop - cols.start:
        raise DimensionError(f"phase of length {len(phase)} for register of width {cols.stop - cols.start}")
    k = np.mod(state.labels[:, cols], state.q) @ np.mod(phase, state.q)
    return SparseState(state.layout, state.labels, state.amps * _phase(k, state.q), canonical=True)


def qft(state: SparseState, register: str, inverse: bool = False, budget: int = DENSE_BUDGET) -> SparseState:
    """q-ary Fourier transform on one register.

    FT |x> = q^{-w/2} sum_y omega^{<y, x>} |y>; ``inverse=True`` applies FT^dagger.
    Rows are grouped by the labels of the other registers and each group is
    transformed with an FFT over the register's w axes.
    """
    q = state.q
    layout = state.layout
    cols = np.arange(layout.width)[layout.cols(register)]
    rest = np.setdiff1d(np.arange(layout.width), cols)
    w = len(cols)
    if len(rest):
        groups, ginv = _unique_rows(state.labels[:, rest], q)
    else:
        groups = np.zeros((1, 0), dtype=np.int64)
        ginv = np.zeros(len(state), dtype=np.int64)
    size = len(groups) * q**w
    if size > budget:
        raise BudgetExceeded(f"qft on register {register!r}", size, budget)
    dense = np.zeros((len(groups),) + (q,) * w, dtype=np.complex128)
    idx = (ginv,) + tuple(np.mod(state.labels[:, c], q) for c in cols)
    dense[idx] = state.amps
    axes = tuple(range(1, w + 1))
    if inverse:
        out = np.fft.fftn(dense, axes=axes) / q ** (w / 2)
    else:
        out = np.fft.ifftn(dense, axes=axes) * q ** (w / 2)
    flat = out.reshape(len(groups), -1)
    g_idx, y_idx = np.nonzero(np.abs(flat) >= PRUNE)
    ys = np.stack(np.unravel_index(y_idx, (q,) * w), axis=1) if w else np.zeros((len(y_idx), 0), np.int64)
    labels = np.empty((len(g_idx), layout.width), dtype=np.int64)
    labels[:, rest] = groups[g_idx]
    labels[:, cols] = modq.centered(ys, q)
    return SparseState(layout, labels, flat[g_idx, y_idx])


def inverse_qft(state: SparseState, register: str, budget: int = DENSE_BUDGET) -> SparseState:
    return qft(state, register, inverse=True, budget=budget)


def qft_matrix(q: int, m: int = 1) -> np.ndarray:
    """Dense FT_q on m qudits, rows/cols in lexicographic centered order."""
    pts = modq.all_vectors(q, m)
    k = np.mod(pts @ pts.T, q)
    return _phase(k, q) / q ** (m / 2)


def pauli_x_matrix(q: int, b) -> np.ndarray:
    b = np.atleast_1d(np.asarray(b, dtype=np.int64))
    pts = modq.all_vectors(q, len(b))
    layout = RegisterLayout.single(q, "r", len(b))
    src = _labels_to_index(pts, layout)
    dst = _labels_to_index(modq.centered(pts + b, q), layout)
    M = np.zeros((len(pts), len(pts)), dtype=np.complex128)
    M[dst, src] = 1
    return M


def pauli_z_matrix(q: int, b) -> np.ndarray:
    b = np.atleast_1d(np.asarray(b, dtype=np.int64))
    pts = modq.all_vectors(q, len(b))
    return np.diag(_phase(pts @ b, q))


# -- measurement -------------------------------------------------------------


def outcome_distribution(state: SparseState, register: str) -> dict:
    """Exact computational-basis outcome probabilities for one register."""
    vals = state.register(register)
    uniq, inv = _unique_rows(vals, state.q)
    p = np.zeros(len(uniq))
    np.add.at(p, inv, np.abs(state.amps) ** 2)
    p /= p.sum()
    return {tuple(int(v) for v in u): float(pp) for u, pp in zip(uniq, p)}


def fourier_distribution(state: SparseState, register: str, budget: int = DENSE_BUDGET) -> dict:
    """Exact Fourier-basis outcome probabilities p(w) = |<w| FT |psi>|^2."""
    return outcome_distribution(qft(state, register, budget=budget), register)


def _sample_outcome(state: SparseState, register: str, rng: np.random.Generator):
    vals = state.register(register)
    uniq, inv = _unique_rows(vals, state.q)
    p = np.zeros(len(uniq))
    np.add.at(p, inv, np.abs(state.amps) ** 2)
    total = p.sum()
    cdf = np.cumsum(p) / total
    cdf[-1] = 1.0
    k = int(min(np.searchsorted(cdf, rng.random(), side="right"), len(uniq) - 1))
    return uniq[k], inv == k, float(p[k] / total)


def measure_computational(state: SparseState, register: str, rng: np.random.Generator):
    """Born-rule measurement of one register in the computational basis.

    Returns ``(outcome, post_state)`` with the post-state renormalised.
    """
    outcome, mask, _ = _sample_outcome(state, register, rng)
    post = SparseState(state.layout, state.labels[mask], state.amps[mask], canonical=True)
    return outcome.copy(), post.normalized()


def measure_fourier(state: SparseState, register: str, rng: np.random.Generator, budget: int = DENSE_BUDGET):
    """Measure one register in the Fourier basis {FT^dagger |w>}.

    The outcome distribution is p(w) = |<w| FT |psi>|^2.  The returned
    post-state is expressed in the computational frame again.
    """
    rotated = qft(state, register, budget=budget)
    outcome, post = measure_computational(rotated, register, rng)
    return outcome, inverse_qft(post, register, budget=budget)


def project(state: SparseState, register: str, predicate) -> SparseState:
    """Unnormalised projection onto the register labels where predicate(labels) is True."""
    mask = np.asarray(predicate(state.register(register)), dtype=bool)
    return SparseState(state.layout, state.labels[mask], state.amps[mask], canonical=True)


# -- overlaps and distances ------------------------------------------------------


def inner(a: SparseState, b: SparseState) -> complex:
    """<a|b> (conjugate-linear in the first argument)."""
    if a.layout != b.layout:
        raise DimensionError("states have different layouts")
    if len(a) == 0 or len(b) == 0:
        return 0j
    both = np.concatenate([a.labels, b.labels])
    uniq, inv = _unique_rows(both, a.q)
    va = np.zeros(len(uniq), dtype=np.complex128)
    vb = np.zeros(len(uniq), dtype=np.complex128)
    va[inv[: len(a)]] = a.amps
    vb[inv[len(a):]] = b.amps
    return complex(np.vdot(va, vb))


def trace_distance(a, b) -> float:
    """Trace distance between two states.

    Pure states use sqrt(1 - |<a|b>|^2) after normalisation; density
    operators use the eigenvalues of the difference.
    """
    if isinstance(a, SparseState) and isinstance(b, SparseState):
        ov = abs(inner(a.normalized(), b.normalized())) ** 2
        return float(math.sqrt(max(0.0, 1.0 - min(ov, 1.0))))
    if isinstance(a, SparseState):
        a = DensityOp.from_state(a)
    if isinstance(b, SparseState):
        b = DensityOp.from_state(b)
    if a.layout != b.layout:
        raise DimensionError("states have different layouts")
    ev = np.linalg.eigvalsh(a.matrix - b.matrix)
    return float(min(1.0, 0.5 * np.sum(np.abs(ev))))


def ensemble_trace_distance(ens_a, ens_b) -> float:
    """Trace distance between sum_i |a_i><a_i| and sum_j |b_j><b_j|.

    The vectors are unnormalised SparseStates (weights folded into the
    amplitudes).  Works on the span of all vectors, so the cost depends on the
    joint support and the number of vectors, not the full dimension.
    """
    vecs = list(ens_a) + list(ens_b)
    if not vecs:
        return 0.0
    layout = vecs[0].layout
    if any(v.layout != layout for v in vecs):
        raise DimensionError("states have different layouts")
    nonempty = [v.labels for v in vecs if len(v)]
    if not nonempty:
        return 0.0
    uniq, inv = _unique_rows(np.concatenate(nonempty), layout.q)
    M = np.zeros((len(uniq), len(vecs)), dtype=np.complex128)
    off = 0
    for k, v in enumerate(vecs):
        M[inv[off:off + len(v)], k] = v.amps
        off += len(v)
    Q, R = np.linalg.qr(M)
    ra = R[:, : len(ens_a)]
    rb = R[:, len(ens_a):]
    D = ra @ ra.conj().T - rb @ rb.conj().T
    ev = np.linalg.eigvalsh(D)
    return float(min(1.0, 0.5 * np.sum(np.abs(ev))))


# -- density operators -----------------------------------------------------------


class DensityOp:
    """Dense density matrix over a (small) register layout."""

    __slots__ = ("layout", "matrix")

    def __init__(self, layout: RegisterLayout, matrix, budget: int = DENSITY_DIM_BUDGET):
        if layout.dim > budget:
            raise BudgetExceeded("density operator dimension", layout.dim, budget)
        M = np.asarray(matrix, dtype=np.complex128)
        if M.shape != (layout.dim, layout.dim):
            raise DimensionError(f"matrix shape {M.shape} does not match dimension {layout.dim}")
        object.__setattr__(self, "layout", layout)
        object.__setattr__(self, "matrix", M)

    def __setattr__(self, key, value):
        raise AttributeError("DensityOp is immutable")

    @classmethod
    def from_state(cls, state: SparseState, budget: int = DENSITY_DIM_BUDGET) -> "DensityOp":
        if state.layout.dim > budget:
            raise BudgetExceeded("density operator dimension", state.layout.dim, budget)
        v = state.normalized().to_dense()
        return cls(state.layout, np.outer(v, v.conj()), budget)

    @classmethod
    def maximally_mixed(cls, layout: RegisterLayout, budget: int = DENSITY_DIM_BUDGET) -> "DensityOp":
        if layout.dim > budget:
            raise BudgetExceeded("density operator dimension", layout.dim, budget)
        return cls(layout, np.eye(layout.dim) / layout.dim, budget)

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def is_valid(self, tol: float = 1e-9) -> bool:
        M = self.matrix
        herm = np.max(np.abs(M - M.conj().T)) <= 1e-10
        ev = np.linalg.eigvalsh((M + M.conj().T) / 2)
        return bool(herm and ev.min() >= -tol and abs(self.trace() - 1) <= 1e-10)

    def max_offdiag(self) -> float:
        M = self.matrix.copy()
        np.fill_diagonal(M, 0)
        return float(np.max(np.abs(M))) if M.size else 0.0

    def basis_labels(self) -> np.ndarray:
        return _index_to_labels(np.arange(self.layout.dim), self.layout)


def dephase_uniform(rho: DensityOp, register: str) -> DensityOp:
    """Uniform Z twirl on one register: kills coherences between distinct register values."""
    labels = rho.basis_labels()[:, rho.layout.cols(register)]
    idx = _labels_to_index(labels, RegisterLayout.single(rho.layout.q, "r", labels.shape[1]))
    same = idx[:, None] == idx[None, :]
    return DensityOp(rho.layout, np.where(same, rho.matrix, 0))


def twirl_explicit(rho: DensityOp, register: str, weights: dict) -> DensityOp:
    """sum_z weights[z] Z^z rho Z^{-z} on one register, by direct summation."""
    out = np.zeros_like(rho.matrix)
    q = rho.layout.q
    labels = rho.basis_labels()[:, rho.layout.cols(register)]
    for z, p in weights.items():
        d = _phase(labels @ np.asarray(z, dtype=np.int64), q)
        out += p * (d[:, None] * rho.matrix * d.conj()[None, :])
    return DensityOp(rho.layout, out)


def dephase_characteristic(rho: DensityOp, register: str, weights: dict) -> DensityOp:
    """Same channel as :func:`twirl_explicit`, applied through the characteristic function.

    (Z^z rho Z^{-z})_{x,x'} = omega^{<z, x - x'>} rho_{x,x'}, so the mixture
    multiplies entry (x, x') by phi(x - x') = sum_z p(z) omega^{<z, x - x'>},
    which is computed for all differences with one FFT.
    """
    q = rho.layout.q
    w = rho.layout.reg_width(register)
    p = np.zeros((q,) * w)
    for z, pz in weights.items():
        p[tuple(np.mod(np.asarray(z, dtype=np.int64), q))] += pz
    phi = np.fft.ifftn(p) * q**w  # phi[d] = sum_z p(z) omega^{<z,d>}
    labels = np.mod(rho.basis_labels()[:, rho.layout.cols(register)], q)
    diff = np.mod(labels[:, None, :] - labels[None, :, :], q)
    factor = phi[tuple(diff[..., k] for k in range(w))]
    return DensityOp(rho.layout, rho.matrix * factor)


def lwe_phase_distribution(A, alpha: float, q: int, budget: int = DENSE_BUDGET) -> dict:
    """Distribution of z = s0 A + e0 (mod q): s0 uniform, e0 truncated Gaussian of width alpha q."""
    from .gaussian import GaussParams, truncated_gaussian_pmf

    A = np.asarray(A, dtype=np.int64)
    n, m = A.shape
    if q**m > budget:
        raise BudgetExceeded("LWE phase distribution", q**m, budget)
    errs = truncated_gaussian_pmf(GaussParams(alpha * q, q, m))
    S = modq.all_vectors(q, n)
    base = modq.centered(S @ A, q)
    p = np.zeros((q,) * m)
    for e, pe in zip(errs.support, errs.probs):
        z = np.mod(base + e, q)
        np.add.at(p, tuple(z[:, k] for k in range(m)), pe / len(S))
    out = {}
    for idx in zip(*np.nonzero(p)):
        out[tuple(int(v) for v in modq.centered(np.array(idx), q))] = float(p[idx])
    return out


def dephase_lwe(rho: DensityOp, A, alpha: float, register: str | None = None) -> DensityOp:
    """LWE dephasing channel: average of Z^{s0 A + e0} conjugations."""
    register = register or rho.layout.names[0]
    weights = lwe_phase_distribution(A, alpha, rho.layout.q)
    return dephase_characteristic(rho, register, weights)


def reduced_density(state: SparseState, keep, budget: int = DENSITY_DIM_BUDGET) -> np.ndarray:
    """Reduced density matrix on the registers named in ``keep`` (dense)."""
    layout = state.layout
    kcols = layout.cols_of(list(keep))
    rcols = np.setdiff1d(np.arange(layout.width), kcols)
    sub = RegisterLayout(layout.q, tuple(r for r in layout.registers if r[0] in keep))
    if sub.dim > budget:
        raise BudgetExceeded("reduced density dimension", sub.dim, budget)
    kidx = _labels_to_index(state.labels[:, kcols], sub)
    if len(rcols):
        _, ridx = _unique_rows(state.labels[:, rcols], layout.q)
    else:
        ridx = np.zeros(len(state), dtype=np.int64)
    V = np.zeros((sub.dim, int(ridx.max(initial=-1)) + 1), dtype=np.complex128)
    V[kidx, ridx] = state.amps
    return V @ V.conj().T


# -- snapshots ---------------------------------------------------------------------


def to_snapshot(state: SparseState) -> str:
    """Text serialisation: one line per amplitude, basis tuples sorted."""
    lines = [
        "# qudit-snapshot v1",
        f"q {state.q}",
        "registers " + " ".join(f"{n}:{w}" for n, w in state.layout.registers),
    ]
    for row, a in zip(state.labels, state.amps):
        parts = []
        for n, _ in state.layout.registers:
            parts.append(f"{n}=" + ",".join(str(int(v)) for v in row[state.layout.cols(n)]))
        lines.append(" ".join(parts) + f" {float(a.real)!r} {float(a.imag)!r}")
    return "\n".join(lines) + "\n"


def from_snapshot(text: str) -> SparseState:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if len(lines) < 2 or not lines[0].startswith("q ") or not lines[1].startswith("registers"):
        raise ValueError("malformed snapshot header")
    q = int(lines[0].split()[1])
    regs = []
    for tok in lines[1].split()[1:]:
        n, w = tok.rsplit(":", 1)
        regs.append((n, int(w)))
    layout = RegisterLayout(q, tuple(regs))
    labels, amps = [], []
    for ln in lines[2:]:
        toks = ln.split()
        row = []
        for tok, (n, w) in zip(toks[:-2], regs):
            name, vals = tok.split("=", 1)
            if name != n:
                raise ValueError(f"register {name!r} out of order")
            vec = [int(v) for v in vals.split(",")]
            if len(vec) != w:
                raise ValueError(f"register {n!r} expects {w} entries")
            row.extend(vec)
        labels.append(row)
        amps.append(complex(float(toks[-2]), float(toks[-1])))
    if not labels:
        return SparseState(layout, np.zeros((0, layout.width)), [])
    return SparseState(layout, np.array(labels), amps)
