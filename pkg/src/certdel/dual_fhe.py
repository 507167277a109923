"""Dual-Regev leveled FHE and its certified-deletion variant.

Classical scheme: pk A in Z_q^{(m+1) x n} with sk^T A = 0, ciphertexts
C = A S + E + x G in Z_q^{(m+1) x N} and NAND(C_i, C_j) = G - C_i G^{-1}(C_j).

Quantum scheme: a ciphertext for bit x is a *system* of N registers, the
i-th holding X^{x g_i} applied to a primal Gaussian state for A^T.  NAND
gates act coherently on basis labels and are recorded in a transcript so
that the rewinding protocol can undo them after the output bit has been
extracted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import modq
from .dual_regev import decode_bit
from .errors import BudgetExceeded, CertDelError, DimensionError, ParameterError
from .gaussian import GaussParams, sample_truncated_gaussian
from .gaussian_states import gen_primal
from .qudit import (
    SUPPORT_BUDGET,
    RegisterLayout,
    SparseState,
    add_register,
    drop_register,
    ensemble_trace_distance,
    fourier_distribution,
    measure_computational,
    measure_fourier,
    pauli_x,
    tensor,
)


@dataclass(frozen=True)
class FheParams:
    n: int
    q: int
    m: int
    alpha: float
    L: int = 1
    mode: str = "strict"
    lam: int | None = None

    def __post_init__(self):
        modq.check_modulus(self.q)
        if self.n < 1 or self.m < 1 or self.L < 0:
            raise ParameterError("n, m must be positive and L non-negative")
        if not self.alpha > 0:
            raise ParameterError("alpha must be positive")
        if self.mode not in ("strict", "sandbox"):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.mode == "strict":
            problems = self.window_violations()
            if problems:
                raise ParameterError("strict parameters violated: " + "; ".join(problems))

    @property
    def gadget(self) -> modq.GadgetSpec:
        return modq.GadgetSpec(self.m + 1, self.q)

    @property
    def N(self) -> int:
        return self.gadget.N

    @property
    def sigma(self) -> float:
        return 1.0 / self.alpha

    @property
    def norm_bound(self) -> float:
        return math.sqrt(self.m + 1) / (math.sqrt(2) * self.alpha)

    @staticmethod
    def window(q: int, m: int, L: int) -> tuple:
        """(lower, upper) limits for alpha q."""
        N = (m + 1) * modq.log2_ceil(q)
        lo = math.sqrt(8 * (m + 1) * N)
        hi = q / (math.sqrt(8) * (m + 1) * N * float(N + 1) ** L)
        return lo, hi

    def window_violations(self) -> list:
        out = []
        if self.m < 2 * self.n * math.log2(self.q):
            out.append(f"m={self.m} < 2 n log2 q = {2 * self.n * math.log2(self.q):.2f}")
        lo, hi = self.window(self.q, self.m, self.L)
        aq = self.alpha * self.q
        if not lo <= aq <= hi:
            out.append(f"alpha q={aq:.4g} not in [{lo:.4g}, {hi:.4g}]")
        return out

    def as_dict(self) -> dict:
        return {"n": self.n, "q": self.q, "m": self.m, "alpha": self.alpha, "L": self.L, "mode": self.mode}

    @classmethod
    def from_dict(cls, d: dict) -> "FheParams":
        return cls(int(d["n"]), int(d["q"]), int(d["m"]), float(d["alpha"]), int(d.get("L", 1)), d.get("mode", "strict"))


def strict_fhe_params(L: int, n: int = 1) -> FheParams:
    """Smallest power-of-two-sized modulus for which the strict window is nonempty.

    Uses m = ceil(2 n log2 q) and alpha q at the lower end of the window.
    """
    for k in range(8, 63):
        q = modq.prev_prime(2**k - 1)
        m = math.ceil(2 * n * math.log2(q))
        lo, hi = FheParams.window(q, m, L)
        if lo <= hi:
            aq = math.ceil(lo * 1e6) / 1e6
            return FheParams(n, q, m, aq / q, L, "strict")
    raise ParameterError(f"no strict window below 2**62 for L={L}, n={n}")


@dataclass(frozen=True)
class FheKeyPair:
    pk: np.ndarray  # (m+1) x n
    sk: np.ndarray  # (m+1,)
    params: FheParams = field(repr=False)


def fhe_keygen(params: FheParams, rng: np.random.Generator, max_retries: int = 64) -> FheKeyPair:
    """A = [A_bar | A_bar x_bar]^T with sk = (-x_bar, 1), so sk^T A = 0."""
    n, m, q = params.n, params.m, params.q
    for _ in range(max_retries):
        A_bar = modq.random_matrix(rng, (n, m), q)
        x_bar = rng.integers(0, 2, size=m, dtype=np.int64)
        A = np.concatenate([A_bar, modq.mat_vec(A_bar, x_bar, q)[:, None]], axis=1).T.copy()
        if modq.generates_full_group(A.T, q):
            return FheKeyPair(A, np.concatenate([-x_bar, [1]]).astype(np.int64), params)
    raise CertDelError(f"no full-rank public key after {max_retries} attempts")


# -- classical scheme -------------------------------------------------------------


@dataclass(frozen=True)
class ClassicalFheCiphertext:
    C: np.ndarray
    tracker: float

    @property
    def shape(self):
        return self.C.shape


def sample_error_matrix(params: FheParams, rng: np.random.Generator, shape) -> np.ndarray:
    """Entrywise truncated Gaussians of width alpha q (rho of a matrix factorizes)."""
    gp = GaussParams(params.alpha * params.q, params.q, 1)
    rows, cols = shape
    return sample_truncated_gaussian(gp, rng, rows * cols).reshape(rows, cols)


def classical_fhe_encrypt(pk, x: int, params: FheParams, rng: np.random.Generator, E=None, S=None) -> ClassicalFheCiphertext:
    """C = A S + E + x G.  ``E`` and ``S`` may be forced for testing."""
    if x not in (0, 1):
        raise ValueError("plaintext must be a bit")
    q, N = params.q, params.N
    S = modq.random_matrix(rng, (params.n, N), q) if S is None else np.asarray(S, dtype=np.int64)
    E = sample_error_matrix(params, rng, (params.m + 1, N)) if E is None else np.asarray(E, dtype=np.int64)
    G = modq.gadget_matrix(params.gadget)
    C = modq.centered(modq.matmul_mod(pk, S, q) + E + x * G, q)
    tracker = float(np.max(np.abs(E))) if E.size else 0.0
    return ClassicalFheCiphertext(C, tracker)


def nand_matrix(Ci, Cj, params: FheParams, block: int = 512) -> np.ndarray:
    """G - C_i G^{-1}(C_j) mod q, blocked over the columns of C_j."""
    Ci = np.asarray(Ci, dtype=np.int64)
    Cj = np.asarray(Cj, dtype=np.int64)
    gs = params.gadget
    if Ci.shape != (gs.blocks, gs.N) or Cj.shape != Ci.shape:
        raise DimensionError(f"ciphertext shapes {Ci.shape}, {Cj.shape} do not match ({gs.blocks}, {gs.N})")
    G = modq.gadget_matrix(gs)
    limbs = modq.binary_limbs(Ci, params.q, gs.N)
    out = np.empty_like(Ci)
    for start in range(0, gs.N, block):
        sl = slice(start, min(start + block, gs.N))
        bits = modq.bit_decompose(Cj[:, sl], gs)
        out[:, sl] = modq.centered(G[:, sl] - modq.matmul_binary(limbs, bits, params.q), params.q)
    return out


def classical_nand(ci: ClassicalFheCiphertext, cj: ClassicalFheCiphertext, params: FheParams) -> ClassicalFheCiphertext:
    C = nand_matrix(ci.C, cj.C, params)
    return ClassicalFheCiphertext(C, ci.tracker * params.N + cj.tracker)


def decrypt_target(params: FheParams) -> int:
    """sk^T g for the decryption column g, i.e. the power of two it carries."""
    gs = params.gadget
    j = gs.decrypt_column() - (gs.blocks - 1) * gs.ell
    return modq.centered(1 << j, params.q)


def classical_fhe_decrypt(sk, C, params: FheParams) -> int:
    """Decode sk^T c for the last-block gadget column farthest from 0."""
    C = C.C if isinstance(C, ClassicalFheCiphertext) else np.asarray(C)
    col = params.gadget.decrypt_column()
    v = int(modq.matmul_mod(sk, C[:, col], params.q))
    return decode_bit(v, params.q, decrypt_target(params))


# -- circuits -------------------------------------------------------------------------


@dataclass(frozen=True)
class NandGate:
    i: str
    j: str
    out: str

    def as_dict(self) -> dict:
        return {"i": self.i, "j": self.j, "out": self.out}


@dataclass(frozen=True)
class CircuitTranscript:
    gates: tuple = ()

    def __len__(self):
        return len(self.gates)

    def to_json(self) -> str:
        return json.dumps([g.as_dict() for g in self.gates])

    @classmethod
    def from_json(cls, text: str) -> "CircuitTranscript":
        return cls(tuple(parse_circuit(json.loads(text))))

    def output(self) -> str | None:
        return self.gates[-1].out if self.gates else None


def parse_circuit(gates) -> list:
    out = []
    for g in gates:
        if isinstance(g, NandGate):
            out.append(g)
            continue
        if not isinstance(g, dict) or set(g) != {"i", "j", "out"}:
            raise ValueError(f"malformed gate {g!r}: expected keys i, j, out")
        out.append(NandGate(str(g["i"]), str(g["j"]), str(g["out"])))
    return out


def circuit_depth(gates, inputs) -> int:
    """Validate the circuit against the available input systems and return its depth."""
    depth = {name: 0 for name in inputs}
    for g in parse_circuit(gates):
        for src in (g.i, g.j):
            if src not in depth:
                raise ValueError(f"gate {g} reads unknown system {src!r}")
        if g.out in depth:
            raise ValueError(f"gate {g} writes to existing system {g.out!r}")
        depth[g.out] = 1 + max(depth[g.i], depth[g.j])
    return max(depth.values(), default=0)


def classical_eval(gates, cts: dict, params: FheParams) -> dict:
    """Apply NAND gates to a dict of classical ciphertexts; returns the extended dict."""
    cts = dict(cts)
    d = circuit_depth(gates, cts)
    if d > params.L:
        raise ValueError(f"circuit depth {d} exceeds L={params.L}")
    for g in parse_circuit(gates):
        cts[g.out] = classical_nand(cts[g.i], cts[g.j], params)
    return cts


# -- quantum scheme -------------------------------------------------------------------------


def register_names(system: str, N: int) -> tuple:
    return tuple(f"{system}[{k}]" for k in range(N))


@dataclass(frozen=True)
class FheVerificationKey:
    A: np.ndarray
    ys: dict  # system -> (n x N) matrix with columns y_i
    params: FheParams = field(repr=False)

    def merged(self, other: "FheVerificationKey") -> "FheVerificationKey":
        return FheVerificationKey(self.A, {**self.ys, **other.ys}, self.params)


@dataclass(frozen=True)
class QuantumFheCiphertext:
    state: SparseState
    systems: tuple  # ((name, (register, ...)), ...)
    inputs: tuple  # names of the encrypted input systems (C_in)

    def registers(self, system: str) -> tuple:
        for name, regs in self.systems:
            if name == system:
                return regs
        raise KeyError(f"no system named {system!r}")

    @property
    def system_names(self) -> list:
        return [n for n, _ in self.systems]


def quantum_fhe_encrypt(pk, x: int, params: FheParams, rng: np.random.Generator, system: str = "C1", budget: int = SUPPORT_BUDGET):
    """N registers, register i holding X^{x g_i} |psi_{y_i}> for A^T."""
    if x not in (0, 1):
        raise ValueError("plaintext must be a bit")
    At = np.asarray(pk).T
    G = modq.gadget_matrix(params.gadget)
    regs = register_names(system, params.N)
    state = None
    ys = []
    for k, name in enumerate(regs):
        primal, y = gen_primal(At, params.sigma, params.q, rng)
        s = primal.state
        layout = RegisterLayout.single(params.q, name, params.m + 1)
        s = SparseState(layout, s.labels, s.amps, canonical=True)
        s = pauli_x(s, name, x * G[:, k])
        state = s if state is None else tensor(state, s, budget)
        ys.append(y)
    vk = FheVerificationKey(np.asarray(pk), {system: np.stack(ys, axis=1)}, params)
    return vk, QuantumFheCiphertext(state, ((system, regs),), (system,))


def quantum_fhe_encrypt_bits(pk, bits, params: FheParams, rng: np.random.Generator, budget: int = SUPPORT_BUDGET):
    """Encrypt several bits into systems C1, C2, ... as a product state."""
    vk = ct = None
    for k, x in enumerate(bits, start=1):
        v, c = quantum_fhe_encrypt(pk, int(x), params, rng, system=f"C{k}", budget=budget)
        if ct is None:
            vk, ct = v, c
        else:
            vk = vk.merged(v)
            ct = QuantumFheCiphertext(tensor(ct.state, c.state, budget), ct.systems + c.systems, ct.inputs + c.inputs)
    return vk, ct


def _system_matrix(labels: np.ndarray, layout: RegisterLayout, regs, width: int) -> np.ndarray:
    """Labels of a system as a batch of (m+1) x N matrices."""
    cols = layout.cols_of(list(regs))
    return labels[:, cols].reshape(len(labels), len(regs), width).transpose(0, 2, 1)


def u_nand(ct: QuantumFheCiphertext, sys_i: str, sys_j: str, sys_out: str, params: FheParams,
           inverse: bool = False, budget: int = SUPPORT_BUDGET) -> QuantumFheCiphertext:
    """|X>|Y>|Z> -> |X>|Y>|Z + G - X G^{-1}(Y)> (or its inverse).

    The forward direction appends ``sys_out`` as fresh |0> registers.  The
    inverse subtracts and then discards ``sys_out``, which must have returned
    to |0>.
    """
    state = ct.state
    if len(state) > budget:
        raise BudgetExceeded(f"u_nand support (|{sys_i}|*|{sys_j}| joint)", len(state), budget)
    gs = params.gadget
    width = params.m + 1
    regs_i, regs_j = ct.registers(sys_i), ct.registers(sys_j)
    if inverse:
        regs_out = ct.registers(sys_out)
        systems = tuple(s for s in ct.systems if s[0] != sys_out)
    else:
        if sys_out in ct.system_names:
            raise ValueError(f"output system {sys_out!r} already exists")
        regs_out = register_names(sys_out, gs.N)
        for r in regs_out:
            state = add_register(state, r, width)
        systems = ct.systems + ((sys_out, regs_out),)
    layout = state.layout
    G = modq.gadget_matrix(gs)
    q = params.q
    out_cols = layout.cols_of(list(regs_out))

    def fn(labels):
        X = _system_matrix(labels, layout, regs_i, width)
        Y = _system_matrix(labels, layout, regs_j, width)
        Z = _system_matrix(labels, layout, regs_out, width)
        XG = np.matmul(np.mod(X, q), modq.bit_decompose(Y, gs))
        delta = G[None, :, :] - XG
        Znew = modq.centered(Z - delta if inverse else Z + delta, q)
        labels[:, out_cols] = Znew.transpose(0, 2, 1).reshape(len(labels), -1)
        return labels

    from .qudit import permute_labels

    state = permute_labels(state, fn)
    if inverse:
        for r in regs_out:
            state = drop_register(state, r)
    return QuantumFheCiphertext(state, systems, ct.inputs)


def eval_circuit(gates, ct: QuantumFheCiphertext, params: FheParams, budget: int = SUPPORT_BUDGET):
    """Apply NAND gates in order; returns (ciphertext, transcript)."""
    gates = parse_circuit(gates)
    d = circuit_depth(gates, ct.system_names)
    if d > params.L:
        raise ValueError(f"circuit depth {d} exceeds L={params.L}")
    for g in gates:
        ct = u_nand(ct, g.i, g.j, g.out, params, budget=budget)
    return ct, CircuitTranscript(tuple(gates))


def rewind(ct: QuantumFheCiphertext, transcript: CircuitTranscript, params: FheParams) -> QuantumFheCiphertext:
    """Undo every gate of the transcript in reverse order."""
    for g in reversed(transcript.gates):
        ct = u_nand(ct, g.i, g.j, g.out, params, inverse=True)
    return ct


# -- extraction -------------------------------------------------------------------------


def _decrypt_labels(labels, layout, regs, sk, params: FheParams) -> np.ndarray:
    col = params.gadget.decrypt_column()
    cvals = labels[:, layout.cols(regs[col])]
    v = modq.matmul_mod(cvals, sk, params.q)
    target = decrypt_target(params)
    return np.array([decode_bit(int(x), params.q, target) for x in np.atleast_1d(v)], dtype=np.int64)


def coherent_decrypt(state: SparseState, regs, sk, params: FheParams, register: str = "M", inverse: bool = False) -> SparseState:
    """|C>|M> -> |C>|M + Dec(C)> on a fresh (or existing) one-qudit register M."""
    if not inverse:
        state = add_register(state, register, 1)
    layout = state.layout
    mcol = layout.cols(register).start

    def fn(labels):
        bits = _decrypt_labels(labels, layout, regs, sk, params)
        labels[:, mcol] = labels[:, mcol] - bits if inverse else labels[:, mcol] + bits
        return labels

    from .qudit import permute_labels

    state = permute_labels(state, fn)
    if inverse:
        state = drop_register(state, register)
    return state


@dataclass
class ExtractResult:
    ciphertext: QuantumFheCiphertext
    y: int
    message_log: list
    outcome_probs: dict
    epsilon: float
    branches: dict  # y -> unnormalised final C_in state for that outcome


def extract_protocol(ct: QuantumFheCiphertext, transcript: CircuitTranscript, sk, params: FheParams,
                     rng: np.random.Generator, output: str | None = None) -> ExtractResult:
    """Rewinding protocol between sender (holding ct) and receiver (holding sk).

    1. sender sends C_out to the receiver;
    2. receiver computes Dec(C_out) into a fresh register M, measures M to get
       y, uncomputes M, discards it and returns C_out;
    3. sender undoes every NAND of the transcript in reverse order, which
       leaves the input systems C_in.
    """
    out = output or transcript.output() or ct.inputs[0]
    regs = ct.registers(out)
    log = [{"phase": 1, "from": "sender", "to": "receiver", "message": "C_out", "system": out,
            "registers": list(regs)}]
    # receiver
    state = coherent_decrypt(ct.state, regs, sk, params)
    mvals = state.register("M")[:, 0]
    weights = np.abs(state.amps) ** 2
    total = weights.sum()
    probs = {b: float(weights[mvals == b].sum() / total) for b in (0, 1)}
    y_arr, post = measure_computational(state, "M", rng)
    y = int(y_arr[0])
    branches = {}
    for b in (0, 1):
        mask = mvals == b
        if not mask.any():
            continue
        part = SparseState(state.layout, state.labels[mask], state.amps[mask] / math.sqrt(total), canonical=True)
        part = coherent_decrypt(part, regs, sk, params, inverse=True)
        branches[b] = part
    returned = coherent_decrypt(post, regs, sk, params, inverse=True)
    log.append({"phase": 2, "from": "receiver", "to": "sender", "message": "C_out~", "system": out,
                "registers": list(regs), "measured": "M", "ancilla_discarded": True})
    # sender
    final = rewind(QuantumFheCiphertext(returned, ct.systems, ct.inputs), transcript, params)
    for b in list(branches):
        branches[b] = rewind(QuantumFheCiphertext(branches[b], ct.systems, ct.inputs), transcript, params).state
    log.append({"phase": 3, "actor": "sender", "action": "uncompute",
                "gates": [g.as_dict() for g in reversed(transcript.gates)]})
    eps = min(probs.values())
    return ExtractResult(final, y, log, probs, eps, branches)


def rewind_trace_distance(result: ExtractResult, original: QuantumFheCiphertext) -> float:
    """Trace distance between the outcome-averaged final state and the original ciphertext."""
    return ensemble_trace_distance(list(result.branches.values()), [original.state])


# -- decryption, deletion, verification -------------------------------------------------


def fhe_decrypt(sk, ct: QuantumFheCiphertext, system: str, params: FheParams, rng: np.random.Generator) -> int:
    """Measure every register of ``system`` and decrypt the resulting matrix."""
    state = ct.state
    cols = []
    for r in ct.registers(system):
        c, state = measure_computational(state, r, rng)
        cols.append(c)
    return classical_fhe_decrypt(sk, np.stack(cols, axis=1), params)


def fhe_decrypt_distribution(sk, ct: QuantumFheCiphertext, system: str, params: FheParams) -> dict:
    bits = _decrypt_labels(ct.state.labels, ct.state.layout, ct.registers(system), sk, params)
    w = np.abs(ct.state.amps) ** 2
    w = w / w.sum()
    return {0: float(w[bits == 0].sum()), 1: float(w[bits == 1].sum())}


@dataclass(frozen=True)
class FheCertificate:
    pis: dict  # system -> (m+1) x N matrix whose columns are pi_i


def fhe_delete(ct: QuantumFheCiphertext, rng: np.random.Generator, systems=None) -> FheCertificate:
    """Fourier-basis measurement of every register of the input systems."""
    systems = systems or ct.inputs
    state = ct.state
    pis = {}
    for sysname in systems:
        cols = []
        for r in ct.registers(sysname):
            pi, state = measure_fourier(state, r, rng)
            cols.append(pi)
        pis[sysname] = np.stack(cols, axis=1)
    return FheCertificate(pis)


def certificate_distributions(ct: QuantumFheCiphertext, system: str) -> list:
    """Exact Fourier outcome law of each register of a system (marginals)."""
    return [fourier_distribution(ct.state, r) for r in ct.registers(system)]


def fhe_verify(vk: FheVerificationKey, cert: FheCertificate, params: FheParams | None = None) -> bool:
    """Accept iff A^T pi_i = y_i and ||pi_i|| <= sqrt(m+1)/(sqrt(2) alpha) for every column of every system."""
    params = params or vk.params
    q = params.q
    At = np.asarray(vk.A).T
    for system, Y in vk.ys.items():
        P = cert.pis.get(system)
        if P is None:
            return False
        P = modq.centered(np.asarray(P, dtype=np.int64), q)
        if P.shape != (params.m + 1, params.N):
            return False
        if not np.array_equal(modq.matmul_mod(At, P, q), modq.centered(Y, q)):
            return False
        if np.any(np.linalg.norm(P.astype(np.float64), axis=0) > params.norm_bound):
            return False
    return True


# -- serialisation --------------------------------------------------------------------------


def fhe_keypair_to_json(kp: FheKeyPair) -> str:
    p = kp.params
    return json.dumps({"scheme": "fhe", "params": p.as_dict(), "q": p.q, "n": p.n, "m": p.m,
                       "pk": kp.pk.tolist(), "sk": kp.sk.tolist()}, indent=1)


def fhe_keypair_from_json(text: str) -> FheKeyPair:
    d = json.loads(text)
    return FheKeyPair(np.array(d["pk"], dtype=np.int64), np.array(d["sk"], dtype=np.int64), FheParams.from_dict(d["params"]))


def fhe_vk_to_json(vk: FheVerificationKey) -> str:
    p = vk.params
    return json.dumps({"params": p.as_dict(), "q": p.q, "n": p.n, "m": p.m, "A": vk.A.tolist(),
                       "ys": {k: np.asarray(v).tolist() for k, v in vk.ys.items()}}, indent=1)


def fhe_vk_from_json(text: str) -> FheVerificationKey:
    d = json.loads(text)
    return FheVerificationKey(np.array(d["A"], dtype=np.int64),
                              {k: np.array(v, dtype=np.int64) for k, v in d["ys"].items()},
                              FheParams.from_dict(d["params"]))
