"""Security experiments and numerical checks of the entropic/channel results.

Each experiment is a challenger that follows the numbered steps of its game
definition and records one transcript entry per step.  Adversaries are
plugged in through :class:`AdversaryHooks`.

The checks at the bottom compare exact finite-dimensional quantities against
analytic bounds: LWE dephasing invariance of the dual Gaussian state, the
uncertainty relation for Fourier basis projections and the leftover hash
lemma.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import dual_fhe, dual_regev, modq
from .errors import ParameterError
from .gaussian import GaussParams, shifted_tv_bound, truncated_gaussian_pmf
from .gaussian_states import REGISTER, duality_check, gen_dual, in_duality_window, make_dual_state
from .qudit import (
    DensityOp,
    SparseState,
    add_register,
    dephase_lwe,
    fourier_distribution,
    measure_computational,
    measure_fourier,
    permute_labels,
    qft_matrix,
    trace_distance,
)

# ---------------------------------------------------------------------------
# transcripts


TRANSCRIPT_SCHEMAS = {
    "gauss-collapse": [
        (1, "challenger", "sample_hash_prepare_superposition"),
        (2, "challenger", "measure_image_register"),
        (3, "challenger", "branch_and_send"),
        (4, "adversary", "output_bit"),
    ],
    "strong-gauss-collapse": [
        (1, "challenger", "sample_planted_matrix_prepare_superposition"),
        (2, "challenger", "measure_image_register"),
        (3, "challenger", "branch_and_send"),
        (4, "adversary", "send_witness"),
        (5, "challenger", "check_witness_release_trapdoor"),
        (6, "adversary", "output_bit"),
    ],
    "ind-cpa-cd": [
        (1, "challenger", "keygen_send_pk"),
        (2, "adversary", "send_plaintext_pair"),
        (3, "challenger", "encrypt_send_ciphertext"),
        (4, "adversary", "send_certificate"),
        (5, "challenger", "verify_send_sk_or_bottom"),
        (6, "adversary", "output_guess"),
    ],
}


def audit_transcript(experiment: str, transcript: list) -> list:
    """Return a list of schema violations (empty when the transcript is faithful).

    A transcript must list the numbered steps in order with the right actor
    and action.  It may stop early only at a step that records an abort.
    """
    schema = TRANSCRIPT_SCHEMAS[experiment]
    problems = []
    for k, entry in enumerate(transcript):
        if k >= len(schema):
            problems.append(f"extra step {entry.get('step')}")
            break
        step, actor, action = schema[k]
        if (entry.get("step"), entry.get("actor"), entry.get("action")) != (step, actor, action):
            problems.append(f"step {k + 1}: expected {(step, actor, action)}, got "
                            f"{(entry.get('step'), entry.get('actor'), entry.get('action'))}")
    if len(transcript) < len(schema):
        last = transcript[-1] if transcript else {}
        if not last.get("abort"):
            problems.append(f"transcript stops after {len(transcript)} steps without an abort")
    return problems


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _entry(step, actor, action, **data) -> dict:
    d = {"step": step, "actor": actor, "action": action}
    d.update({k: _jsonable(v) for k, v in data.items()})
    return d


@dataclass
class AdversaryHooks:
    """Adversary strategy as callbacks.

    receive(state, public, rng) -> memory
    respond(memory, rng) -> (message, memory)     witness or certificate, None to abstain
    guess(memory, info, rng) -> bit               info is the released secret or None
    choose(pk, rng) -> (m0, m1)                   plaintext pair (IND-CPA-CD only)
    """

    name: str
    receive: Callable
    guess: Callable
    respond: Callable | None = None
    choose: Callable | None = None


@dataclass
class GameResult:
    experiment: str
    b: int
    b_prime: int
    transcript: list
    aborted: bool = False
    released: object = None
    metrics: dict = field(default_factory=dict)

    def record(self) -> dict:
        return {"experiment": self.experiment, "b": self.b, "b_prime": self.b_prime,
                "aborted": self.aborted, "released": self.released is not None, **self.metrics}


# ---------------------------------------------------------------------------
# Gaussian-collapsing experiment


@dataclass(frozen=True)
class CollapseParams:
    n: int
    m: int
    q: int
    sigma: float
    mode: str = "sandbox"

    def __post_init__(self):
        modq.check_modulus(self.q)
        if self.mode == "strict" and not in_duality_window(self.sigma, self.m, self.q):
            raise ParameterError(f"sigma={self.sigma} outside the window for m={self.m}, q={self.q}")

    @property
    def witness_bound(self) -> float:
        return math.sqrt(self.m) * self.sigma / math.sqrt(2)

    @property
    def lwe_radius(self) -> float:
        """Norm bound for the noise of a Fourier outcome of the dual state."""
        return math.sqrt(self.m) * self.q / (self.sigma * math.sqrt(2))

    def as_dict(self) -> dict:
        return {"n": self.n, "m": self.m, "q": self.q, "sigma": self.sigma, "mode": self.mode}


def gauss_collapse_exp(b: int, adversary: AdversaryHooks, params: CollapseParams, rng: np.random.Generator) -> GameResult:
    tr = []
    A = modq.random_matrix(rng, (params.n, params.m), params.q)
    tr.append(_entry(1, "challenger", "sample_hash_prepare_superposition", A=A, sigma=params.sigma))
    dual, y = gen_dual(A, params.sigma, params.q, rng)
    tr.append(_entry(2, "challenger", "measure_image_register", y=y))
    state = dual.state
    if b == 1:
        _, state = measure_computational(state, REGISTER, rng)
    tr.append(_entry(3, "challenger", "branch_and_send", measured=bool(b == 1), sent=["X", "y", "h"]))
    mem = adversary.receive(state, {"A": A, "y": y, "params": params}, rng)
    b_prime = int(adversary.guess(mem, None, rng))
    tr.append(_entry(4, "adversary", "output_bit", b_prime=b_prime))
    return GameResult("gauss-collapse", b, b_prime, tr, metrics=dict(mem.get("metrics", {})))


def _lwe_distance(w, A, q: int) -> float:
    """min over s of ||w - s A|| on centered representatives (exhaustive in s)."""
    S = modq.all_vectors(q, A.shape[0])
    diffs = modq.centered(np.asarray(w)[None, :] - modq.matmul_mod(S, A, q), q)
    return float(np.min(np.linalg.norm(diffs.astype(float), axis=1)))


def fourier_test_adversary() -> AdversaryHooks:
    """Fourier-measure X and answer 0 iff the outcome is an LWE-like vector."""

    def receive(state, public, rng):
        w, _ = measure_fourier(state, REGISTER, rng)
        p = public["params"]
        d = _lwe_distance(w, public["A"], p.q)
        return {"w": w, "metrics": {"lwe_distance": d, "lwe_like": d <= p.lwe_radius}}

    def guess(mem, info, rng):
        return 0 if mem["metrics"]["lwe_like"] else 1

    return AdversaryHooks("fourier-test", receive, guess)


def collapse_test_rates(params: CollapseParams, A, y) -> dict:
    """Exact probability that the Fourier test answers 0 in each branch."""
    dual = make_dual_state(A, y, params.sigma, params.q)
    d0 = fourier_distribution(dual.state, REGISTER)
    p0 = sum(p for w, p in d0.items() if _lwe_distance(w, A, params.q) <= params.lwe_radius)
    # a measured pre-image has a uniform Fourier outcome
    pts = modq.all_vectors(params.q, params.m)
    hits = sum(1 for w in pts if _lwe_distance(w, A, params.q) <= params.lwe_radius)
    return {"accept_b0": float(p0), "accept_b1": hits / len(pts)}


# ---------------------------------------------------------------------------
# strong Gaussian-collapsing experiment


def strong_gauss_collapse_exp(b: int, adversary: AdversaryHooks, params: CollapseParams, rng: np.random.Generator) -> GameResult:
    n, m, q = params.n, params.m, params.q
    tr = []
    A_bar = modq.random_matrix(rng, (n, m - 1), q)
    x_bar = rng.integers(0, 2, size=m - 1, dtype=np.int64)
    A = np.concatenate([A_bar, modq.mat_vec(A_bar, x_bar, q)[:, None]], axis=1)
    t = np.concatenate([x_bar, [-1]]).astype(np.int64)
    tr.append(_entry(1, "challenger", "sample_planted_matrix_prepare_superposition", A=A, sigma=params.sigma))
    dual, y = gen_dual(A, params.sigma, q, rng)
    tr.append(_entry(2, "challenger", "measure_image_register", y=y))
    state = dual.state
    if b == 1:
        _, state = measure_computational(state, REGISTER, rng)
    tr.append(_entry(3, "challenger", "branch_and_send", measured=bool(b == 1), sent=["X", "A", "y"]))
    mem = adversary.receive(state, {"A": A, "y": y, "params": params}, rng)
    w, mem = adversary.respond(mem, rng)
    w = None if w is None else modq.centered(np.asarray(w, dtype=np.int64).reshape(-1), q)
    tr.append(_entry(4, "adversary", "send_witness", w=w))
    valid = (
        w is not None
        and len(w) == m
        and np.array_equal(modq.mat_vec(A, w, q), y)
        and float(np.linalg.norm(w.astype(float))) <= params.witness_bound
    )
    if not valid:
        tr.append(_entry(5, "challenger", "check_witness_release_trapdoor", valid=False, abort=True, sent=None))
        return GameResult("strong-gauss-collapse", b, 0, tr, aborted=True, released=None,
                          metrics={"witness_valid": False})
    tr.append(_entry(5, "challenger", "check_witness_release_trapdoor", valid=True, abort=False, sent={"t": t}))
    b_prime = int(adversary.guess(mem, t, rng))
    tr.append(_entry(6, "adversary", "output_bit", b_prime=b_prime))
    return GameResult("strong-gauss-collapse", b, b_prime, tr, released=t,
                      metrics={"witness_valid": True, "trapdoor_kernel": bool(not modq.mat_vec(A, t, q).any())})


def honest_witness_adversary() -> AdversaryHooks:
    """Measures X in the computational basis and submits the pre-image."""

    def receive(state, public, rng):
        x, _ = measure_computational(state, REGISTER, rng)
        return {"w": x}

    def respond(mem, rng):
        return mem["w"], mem

    return AdversaryHooks("honest-witness", receive, lambda mem, info, rng: 0, respond)


def invalid_witness_adversary(kind: str) -> AdversaryHooks:
    """Adversaries whose witnesses should be rejected (used for leak audits).

    kind: "random" (uniform vector), "zero", "wrong-syndrome" (valid short
    pre-image plus a unit vector), "long" (a pre-image of maximal norm),
    "none" (never answers).
    """

    def receive(state, public, rng):
        return {"state": state, "public": public}

    def respond(mem, rng):
        p = mem["public"]["params"]
        A, y = mem["public"]["A"], mem["public"]["y"]
        if kind == "random":
            return modq.random_matrix(rng, (p.m,), p.q), mem
        if kind == "zero":
            return np.zeros(p.m, dtype=np.int64), mem
        if kind == "none":
            return None, mem
        if kind == "wrong-syndrome":
            x, _ = measure_computational(mem["state"], REGISTER, rng)
            cols = np.flatnonzero(np.mod(A, p.q).any(axis=0))
            e = np.zeros(p.m, dtype=np.int64)
            e[rng.choice(cols) if len(cols) else 0] = 1
            return x + e, mem
        if kind == "long":
            pts = modq.coset_points(A, y, p.q)
            return pts[np.argmax(np.linalg.norm(pts.astype(float), axis=1))], mem
        raise ValueError(kind)

    return AdversaryHooks(f"invalid-{kind}", receive, lambda mem, info, rng: int(rng.integers(0, 2)), respond)


INVALID_KINDS = ("random", "zero", "wrong-syndrome", "long", "none")


def trapdoor_leaks(result: GameResult) -> bool:
    """True if a rejected witness still let the trapdoor out."""
    if not result.aborted:
        return False
    if result.released is not None:
        return True
    for entry in result.transcript:
        if entry.get("sent") is not None and entry["step"] >= 5:
            return True
        if "t" in entry:
            return True
    return False


# ---------------------------------------------------------------------------
# IND-CPA-CD experiment


def ind_cpa_cd_exp(b: int, adversary: AdversaryHooks, scheme: str, params, rng: np.random.Generator) -> GameResult:
    tr = []
    if scheme == "pke":
        kp = dual_regev.keygen(params, rng)
    elif scheme == "fhe":
        kp = dual_fhe.fhe_keygen(params, rng)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    tr.append(_entry(1, "challenger", "keygen_send_pk", pk=kp.pk))
    m0, m1 = adversary.choose(kp.pk, rng) if adversary.choose else (0, 1)
    tr.append(_entry(2, "adversary", "send_plaintext_pair", m0=int(m0), m1=int(m1)))
    mb = (m0, m1)[b]
    if scheme == "pke":
        vk, ct = dual_regev.encrypt(kp.pk, mb, params, rng)
        state = ct.state
    else:
        vk, ct = dual_fhe.quantum_fhe_encrypt(kp.pk, mb, params, rng)
        state = ct
    tr.append(_entry(3, "challenger", "encrypt_send_ciphertext", sent="CT"))
    public = {"pk": kp.pk, "params": params, "scheme": scheme}
    mem = adversary.receive(state, public, rng)
    cert, mem = adversary.respond(mem, rng) if adversary.respond else (None, mem)
    tr.append(_entry(4, "adversary", "send_certificate", certificate=_cert_repr(cert)))
    if cert is None:
        ok = False
    elif scheme == "pke":
        ok = dual_regev.verify(vk, cert, params)
    else:
        ok = dual_fhe.fhe_verify(vk, cert, params)
    released = kp.sk if ok else None
    tr.append(_entry(5, "challenger", "verify_send_sk_or_bottom", verified=bool(ok),
                     sent="sk" if ok else "bottom"))
    b_prime = int(adversary.guess(mem, released, rng))
    tr.append(_entry(6, "adversary", "output_guess", b_prime=b_prime))
    return GameResult("ind-cpa-cd", b, b_prime, tr, released=released,
                      metrics={"verified": bool(ok), **mem.get("metrics", {})})


def _cert_repr(cert):
    if cert is None:
        return None
    if isinstance(cert, dual_regev.DeletionCertificate):
        return cert.pi
    if isinstance(cert, dual_fhe.FheCertificate):
        return {k: v for k, v in cert.pis.items()}
    return cert


def honest_deleter_adversary() -> AdversaryHooks:
    """Deletes honestly, then uses sk (if released) to decrypt what is left."""

    def receive(state, public, rng):
        return {"state": state, "public": public}

    def respond(mem, rng):
        if mem["public"]["scheme"] == "pke":
            pi, post = measure_fourier(mem["state"], REGISTER, rng)
            mem["post"] = post
            return dual_regev.DeletionCertificate(pi), mem
        ct = mem["state"]
        cert = dual_fhe.fhe_delete(ct, rng)
        mem["post"] = ct  # the classical certificate is all that is kept
        return cert, mem

    def guess(mem, sk, rng):
        if sk is None:
            return int(rng.integers(0, 2))
        params = mem["public"]["params"]
        if mem["public"]["scheme"] == "pke":
            c, _ = measure_computational(mem["post"], REGISTER, rng)
            return dual_regev.classical_decrypt(sk, c, params.q)
        # measuring the deleted registers yields noise only
        return int(rng.integers(0, 2))

    return AdversaryHooks("honest-deleter", receive, guess, respond)


def never_delete_adversary() -> AdversaryHooks:
    def receive(state, public, rng):
        return {}

    return AdversaryHooks("never-delete", receive, lambda mem, info, rng: int(rng.integers(0, 2)),
                          lambda mem, rng: (None, mem))


def shift_by_lwe_state(state: SparseState, pk, params: dual_regev.PkeParams, rng: np.random.Generator) -> SparseState:
    """Reversibly copy the ciphertext, shifted by a fresh LWE sample, into a register B."""
    z = dual_regev.classical_encrypt(pk, 0, params, rng)
    joint = add_register(state, "B", params.width)
    layout = joint.layout
    xc, bc = layout.cols(REGISTER), layout.cols("B")

    def fn(labels):
        labels[:, bc] = labels[:, bc] + labels[:, xc] + z
        return labels

    return permute_labels(joint, fn)


def shift_by_lwe_adversary() -> AdversaryHooks:
    """Shift-by-LWE-sample attack: keep a re-randomised copy in B, Fourier-measure X.

    The adversary's two measurements (Fourier on X for the certificate and
    computational on B after sk arrives) act on disjoint registers and so
    commute.  The simulation measures B first, which collapses X to a single
    point and keeps the Fourier measurement cheap.  The joint law of
    (certificate, B outcome) is the same either way.
    """

    def receive(state, public, rng):
        if public["scheme"] != "pke":
            raise ValueError("shift-by-LWE attack is implemented for the PKE scheme")
        joint = shift_by_lwe_state(state, public["pk"], public["params"], rng)
        return {"joint": joint, "public": public}

    def respond(mem, rng):
        c, post = measure_computational(mem["joint"], "B", rng)
        pi, _ = measure_fourier(post, REGISTER, rng)
        mem["c"] = c
        return dual_regev.DeletionCertificate(pi), mem

    def guess(mem, sk, rng):
        if sk is None:
            return int(rng.integers(0, 2))
        return dual_regev.classical_decrypt(sk, mem["c"], mem["public"]["params"].q)

    return AdversaryHooks("shift-by-lwe", receive, guess, respond)


def _acceptance_exact(state: SparseState, vk, params: dual_regev.PkeParams) -> float:
    """Probability that a Fourier measurement of X yields an accepted certificate.

    States whose X register is a function of the remaining registers (one X
    value per rest-group) have a uniform Fourier marginal, so the answer is
    the fraction of accepted vectors in Z_q^{m+1}.
    """
    layout = state.layout
    rest = np.ones(layout.width, dtype=bool)
    rest[layout.cols(REGISTER)] = False
    if rest.any():
        groups = np.unique(state.labels[:, rest], axis=0)
        if len(groups) == len(state):
            q, w = params.q, params.width
            valid = modq.coset_points(vk.A, vk.y, q, budget=q**w)
            ok = np.linalg.norm(valid.astype(float), axis=1) <= params.norm_bound
            return float(ok.sum()) / q**w
    dist = fourier_distribution(state, REGISTER)
    return float(sum(p for pi, p in dist.items() if dual_regev.verify(vk, pi)))


def certificate_acceptance(params: dual_regev.PkeParams, rng: np.random.Generator, b: int = 0) -> dict:
    """Exact verification acceptance for the honest deleter and for the shift attack."""
    kp = dual_regev.keygen(params, rng)
    vk, ct = dual_regev.encrypt(kp.pk, b, params, rng)
    honest = _acceptance_exact(ct.state, vk, params)
    joint = shift_by_lwe_state(ct.state, kp.pk, params, rng)
    attack = _acceptance_exact(joint, vk, params)
    return {"honest": honest, "shift_by_lwe": attack}


# ---------------------------------------------------------------------------
# trial runner


def run_trials(fn: Callable, trials: int, seed: int, jobs: int = 1) -> list:
    """Run fn(trial_index, rng) with independent child generators.

    Results do not depend on ``jobs``: each trial's generator is derived from
    the seed and its index only.
    """
    seqs = np.random.SeedSequence(seed).spawn(trials)
    args = list(enumerate(seqs))
    if jobs <= 1:
        return [fn(i, np.random.default_rng(s)) for i, s in args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_call, [fn] * trials, args))


def _call(fn, arg):
    i, s = arg
    return fn(i, np.random.default_rng(s))


# ---------------------------------------------------------------------------
# LWE dephasing invariance


@dataclass(frozen=True)
class DephasingReport:
    td: float
    bound: float
    duality_bound: float
    in_window: bool
    ok: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def dephasing_bound(A, y, sigma: float, alpha: float, q: int, duality_bound: float | None = None) -> tuple:
    """Assemble the bound from the proof chain.

    For each error e0 the state Z^{s0 A + e0}|psi_hat> is within
    2 * eta + sqrt(2 * TV(e0)) of |psi_hat> (up to a phase), where eta is the
    duality bound and TV(e0) the shifted-Gaussian bound for the primal noise,
    whose squared amplitudes have width q / (sigma sqrt 2).  Averaging over
    e0 bounds the channel's trace distance by convexity.
    """
    A = np.asarray(A)
    m = A.shape[1]
    if duality_bound is None:
        duality_bound = duality_check(A, y, sigma, q, mode="sandbox").bound
    errs = truncated_gaussian_pmf(GaussParams(alpha * q, q, m))
    width = q / (sigma * math.sqrt(2))
    total = 0.0
    for e0, p in zip(errs.support, errs.probs):
        tv = min(1.0, shifted_tv_bound(e0, width, m))
        total += p * min(1.0, 2 * duality_bound + math.sqrt(2 * tv))
    return float(min(1.0, total)), float(duality_bound)


def dephasing_invariance_check(A, y, sigma: float, alpha: float, q: int, mode: str = "strict") -> DephasingReport:
    A = modq.centered(np.asarray(A, dtype=np.int64), q)
    m = A.shape[1]
    window = in_duality_window(sigma, m, q) and modq.generates_full_group(A, q)
    if mode == "strict" and not window:
        raise ParameterError("dephasing check outside the duality window")
    dual = make_dual_state(A, y, sigma, q)
    rho = DensityOp.from_state(dual.state)
    td = trace_distance(dephase_lwe(rho, A, alpha), rho)
    bound, eta = dephasing_bound(A, y, sigma, alpha, q)
    ok = td <= bound
    if mode == "strict" and not ok:
        raise AssertionError(f"dephasing invariance violated: td={td} > bound={bound}")
    return DephasingReport(td, bound, eta, window, ok)


# ---------------------------------------------------------------------------
# uncertainty relation


@dataclass
class UncertaintyReport:
    epsilon: float
    hmin_bound: float
    pguess_ideal: float
    pguess_upper: float
    bound: float
    method: str
    ok: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def fourier_projector(q: int, m: int, S) -> np.ndarray:
    """FT^dagger Pi_S FT as a dense matrix (lexicographic centered order)."""
    F = qft_matrix(q, m)
    pts = modq.all_vectors(q, m)
    keys = {tuple(int(v) for v in modq.centered(np.asarray(s), q)) for s in S}
    diag = np.array([1.0 if tuple(int(v) for v in p) in keys else 0.0 for p in pts])
    return F.conj().T @ np.diag(diag) @ F


def _pguess_pure(vecs: list, iters: int = 2000, tol: float = 1e-13):
    """Optimal guessing probability for the ensemble of unnormalised pure states.

    Returns (lower, upper, method).  Exact closed forms are used for one or
    two states and for mutually orthogonal states; otherwise a fixed-point
    iteration gives a measurement (lower bound) and a dual-feasible operator
    certifies an upper bound.
    """
    vecs = [v for v in vecs if np.linalg.norm(v) > 1e-15]
    if not vecs:
        return 0.0, 0.0, "empty"
    norms = [float(np.vdot(v, v).real) for v in vecs]
    if len(vecs) == 1:
        return norms[0], norms[0], "single"
    V = np.stack(vecs, axis=1)
    gram = V.conj().T @ V
    off = gram - np.diag(np.diag(gram))
    if np.max(np.abs(off)) <= 1e-14:
        s = float(sum(norms))
        return s, s, "orthogonal"
    sv = np.linalg.svd(V, compute_uv=False)
    if len(sv) < 2 or sv[1] <= 1e-12 * sv[0]:
        # all conditionals parallel: B carries no information about X
        return max(norms), max(norms), "parallel"
    if len(vecs) == 2:
        r0 = np.outer(vecs[0], vecs[0].conj())
        r1 = np.outer(vecs[1], vecs[1].conj())
        ev = np.linalg.eigvalsh(r0 - r1)
        p = 0.5 * (norms[0] + norms[1] + float(np.sum(np.abs(ev))))
        return p, p, "helstrom"
    # work in an orthonormal basis of the numerical span of the vectors
    U, sv, _ = np.linalg.svd(V, full_matrices=False)
    r = int(np.sum(sv > 1e-12 * sv[0]))
    R = U[:, :r].conj().T @ V
    rhos = [np.outer(R[:, k], R[:, k].conj()) for k in range(R.shape[1])]
    d = r

    def inv_sqrt(Hm):
        w, W = np.linalg.eigh((Hm + Hm.conj().T) / 2)
        cut = 1e-12 * max(w.max(), 1e-300)
        return W @ np.diag([1 / math.sqrt(x) if x > cut else 0.0 for x in w]) @ W.conj().T

    # start from the pretty good measurement
    g = inv_sqrt(sum(rhos))
    Ms = [g @ r_ @ g for r_ in rhos]
    best_lower = 0.0
    upper = float("inf")
    for _ in range(iters):
        lower = float(sum(np.trace(M @ r_).real for M, r_ in zip(Ms, rhos)))
        best_lower = max(best_lower, lower)
        Y = sum(r_ @ M for M, r_ in zip(Ms, rhos))
        Y = (Y + Y.conj().T) / 2
        lam = max(float(np.linalg.eigvalsh(r_ - Y).max()) for r_ in rhos)
        upper = min(upper, float(np.trace(Y).real) + max(lam, 0.0) * d)
        if upper - best_lower <= tol:
            break
        # fixed-point step M_x <- G^{-1/2} rho_x M_x rho_x G^{-1/2}
        g = inv_sqrt(sum(r_ @ M @ r_ for M, r_ in zip(Ms, rhos)))
        Ms = [g @ r_ @ M @ r_ @ g for M, r_ in zip(Ms, rhos)]
    return best_lower, upper, "iterative"


def uncertainty_check(alphas, aux_states, S, q: int, m: int, tol: float = 1e-12) -> UncertaintyReport:
    """Check p_guess(X|B) <= |S|^2 / q^m on the ideal (projected) state.

    ``alphas`` has length q^m (lexicographic centered order of Z_q^m) and
    ``aux_states`` is a (q^m, d_B) array of normalised auxiliary vectors.
    """
    alphas = np.asarray(alphas, dtype=np.complex128).reshape(-1)
    aux = np.asarray(aux_states, dtype=np.complex128)
    D = q**m
    if len(alphas) != D or aux.shape[0] != D:
        raise ValueError("amplitude table and aux states must cover Z_q^m")
    psi = (alphas[:, None] * aux)  # psi[x, :] = alpha_x |psi^x>
    norm = np.linalg.norm(psi)
    psi = psi / norm
    P = fourier_projector(q, m, S)
    proj = P @ psi
    pass_prob = float(np.linalg.norm(proj) ** 2)
    eps = max(0.0, 1.0 - pass_prob)
    size = len({tuple(int(v) for v in modq.centered(np.asarray(s), q)) for s in S})
    bound = size**2 / q**m
    hmin_bound = m * math.log2(q) - 2 * math.log2(size)
    if pass_prob <= 1e-15:
        return UncertaintyReport(eps, hmin_bound, 0.0, 0.0, bound, "vacuous", True)
    ideal = proj / math.sqrt(pass_prob)
    lower, upper, method = _pguess_pure([ideal[x] for x in range(D)])
    ok = upper <= bound + tol
    return UncertaintyReport(eps, hmin_bound, lower, upper, bound, method, ok)


# ---------------------------------------------------------------------------
# leftover hash lemma


def subset_sum_distribution(A, q: int) -> np.ndarray:
    """Exact law of A x over Z_q^n for x uniform in {0,1}^m (dense, residue indexed)."""
    A = np.mod(np.asarray(A, dtype=np.int64), q)
    n, m = A.shape
    dist = np.zeros((q,) * n)
    dist[(0,) * n] = 1.0
    for k in range(m):
        shift = tuple(int(v) for v in A[:, k])
        dist = 0.5 * dist + 0.5 * np.roll(dist, shift, axis=tuple(range(n)))
    return dist


def lhl_check(n: int, m: int, q: int, trials: int, rng: np.random.Generator) -> float:
    """Empirical TV between the last public-key column A_bar x_bar and uniform on Z_q^n.

    Each trial samples a fresh A_bar and binary x_bar, as key generation does.
    """
    counts = np.zeros((q,) * n)
    for _ in range(trials):
        A = rng.integers(0, q, size=(n, m))
        x = rng.integers(0, 2, size=m)
        counts[tuple(np.mod(A @ x, q))] += 1
    return 0.5 * float(np.abs(counts / trials - 1.0 / q**n).sum())


def lhl_conditional_tv(n: int, m: int, q: int, trials: int, rng: np.random.Generator) -> float:
    """Average over sampled A of the exact TV between A x (x binary) and uniform.

    This is the statistical distance between (A, A x) and (A, u), a stronger
    quantity than the marginal measured by :func:`lhl_check`.
    """
    total = 0.0
    for _ in range(trials):
        A = rng.integers(0, q, size=(n, m))
        dist = subset_sum_distribution(A, q)
        total += 0.5 * float(np.abs(dist - 1.0 / q**n).sum())
    return total / trials


def _random_unit(rng, d):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def _random_subset(rng, q, m, size):
    pts = modq.all_vectors(q, m)
    return [pts[i] for i in rng.choice(len(pts), size=size, replace=False)]


def uncertainty_suite(rng: np.random.Generator, count: int = 20) -> list:
    """Test states for the uncertainty relation: (kind, q, m, S, alphas, aux).

    Kinds cycle through product states with the X part in the image of the
    Fourier projection, orthogonal auxiliary states, binary (Helstrom)
    instances, entangled random states and the full-set vacuous case.
    """
    cases = []
    kinds = ("product", "orthogonal-aux", "helstrom-binary", "entangled", "full-set")
    for k in range(count):
        kind = kinds[k % len(kinds)]
        if kind == "product":
            q, m, dB = 5, 1, 3
            S = _random_subset(rng, q, m, 2)
            phi = fourier_projector(q, m, S) @ _random_unit(rng, q**m)
            phi /= np.linalg.norm(phi)
            chi = _random_unit(rng, dB)
            alphas, aux = phi, np.tile(chi, (q**m, 1))
        elif kind == "orthogonal-aux":
            q, m = 3, 2
            D = q**m
            S = _random_subset(rng, q, m, 1 + k % 3)
            U, _ = np.linalg.qr(rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D)))
            alphas, aux = _random_unit(rng, D), U.T
        elif kind == "helstrom-binary":
            # a binary X support with distinguishable conditionals only fits
            # in the image of the projection when S is all of Z_2
            q, m, dB = 2, 1, 2
            S = list(modq.all_vectors(q, m))
            alphas = _random_unit(rng, 2)
            aux = np.stack([_random_unit(rng, dB) for _ in range(2)])
        elif kind == "entangled":
            q, m, dB = 3, 2, 4
            S = _random_subset(rng, q, m, 1 + k % 4)
            alphas = _random_unit(rng, q**m)
            aux = np.stack([_random_unit(rng, dB) for _ in range(q**m)])
        else:
            q, m, dB = 3, 1, 2
            S = list(modq.all_vectors(q, m))
            alphas = _random_unit(rng, q**m)
            aux = np.stack([_random_unit(rng, dB) for _ in range(q**m)])
        cases.append((kind, q, m, S, alphas, aux))
    return cases
