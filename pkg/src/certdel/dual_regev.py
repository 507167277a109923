"""Dual-Regev public-key encryption with certified deletion.

Keys: A = [A_bar | A_bar x_bar] in Z_q^{n x (m+1)} with x_bar binary, and
sk = (-x_bar, 1) so that A sk = 0.  A ciphertext for bit b is the primal
Gaussian state of width sigma = 1/alpha shifted by X^{(0,...,0, b floor(q/2))}.
Decryption measures in the computational basis; deletion measures in the
Fourier basis and the outcome pi is a short solution of A pi = y.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import modq
from .errors import CertDelError, ParameterError
from .gaussian import GaussParams, sample_truncated_gaussian
from .gaussian_states import REGISTER, gen_primal
from .qudit import SparseState, fourier_distribution, measure_computational, measure_fourier, pauli_x


@dataclass(frozen=True)
class PkeParams:
    n: int
    q: int
    m: int
    alpha: float
    mode: str = "strict"
    lam: int | None = None

    def __post_init__(self):
        modq.check_modulus(self.q)
        if self.n < 1 or self.m < 1:
            raise ParameterError("n and m must be positive")
        if not self.alpha > 0:
            raise ParameterError("alpha must be positive")
        if self.mode not in ("strict", "sandbox"):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.mode == "strict":
            problems = self.window_violations()
            if problems:
                raise ParameterError("strict parameters violated: " + "; ".join(problems))

    @property
    def sigma(self) -> float:
        return 1.0 / self.alpha

    @property
    def width(self) -> int:
        return self.m + 1

    @property
    def half(self) -> int:
        return self.q // 2

    def window_violations(self) -> list:
        out = []
        if self.m < 2 * self.n * math.log2(self.q):
            out.append(f"m={self.m} < 2 n log2 q = {2 * self.n * math.log2(self.q):.2f}")
        r = math.sqrt(8 * (self.m + 1))
        if not r <= self.sigma <= self.q / r:
            out.append(f"1/alpha={self.sigma:.4g} not in [{r:.4g}, {self.q / r:.4g}]")
        return out

    @property
    def norm_bound(self) -> float:
        """sqrt(m+1) / (sqrt(2) alpha)."""
        return math.sqrt(self.m + 1) / (math.sqrt(2) * self.alpha)

    def as_dict(self) -> dict:
        return {"n": self.n, "q": self.q, "m": self.m, "alpha": self.alpha, "mode": self.mode}

    @classmethod
    def from_dict(cls, d: dict) -> "PkeParams":
        return cls(int(d["n"]), int(d["q"]), int(d["m"]), float(d["alpha"]), d.get("mode", "strict"))


@dataclass(frozen=True)
class PkeKeyPair:
    pk: np.ndarray
    sk: np.ndarray
    params: PkeParams = field(repr=False)

    @property
    def x_bar(self) -> np.ndarray:
        return -self.sk[:-1]


@dataclass(frozen=True)
class VerificationKey:
    A: np.ndarray
    y: np.ndarray
    params: PkeParams = field(repr=False)


@dataclass(frozen=True)
class PkeCiphertext:
    state: SparseState
    vk: VerificationKey


@dataclass(frozen=True)
class DeletionCertificate:
    pi: np.ndarray


def keygen(params: PkeParams, rng: np.random.Generator, max_retries: int = 64) -> PkeKeyPair:
    """Sample A_bar, x_bar and plant A_bar x_bar as the last column.

    A is resampled until its columns generate Z_q^n, which encryption needs.
    """
    n, m, q = params.n, params.m, params.q
    for _ in range(max_retries):
        A_bar = modq.random_matrix(rng, (n, m), q)
        x_bar = rng.integers(0, 2, size=m, dtype=np.int64)
        col = modq.mat_vec(A_bar, x_bar, q)
        A = np.concatenate([A_bar, col[:, None]], axis=1)
        if modq.generates_full_group(A, q):
            sk = np.concatenate([-x_bar, [1]]).astype(np.int64)
            return PkeKeyPair(A, sk, params)
    raise CertDelError(f"no full-rank public key after {max_retries} attempts")


def decode_bit(v: int, q: int, target: int | None = None) -> int:
    """0 if v is strictly closer to 0 than to target (circularly mod q), else 1."""
    target = q // 2 if target is None else target
    d0 = abs(modq.centered(int(v), q))
    d1 = abs(modq.centered(int(v) - int(target), q))
    return 0 if d0 < d1 else 1


def _shift(params: PkeParams, b: int) -> np.ndarray:
    v = np.zeros(params.width, dtype=np.int64)
    v[-1] = b * params.half
    return v


def encrypt(pk, b: int, params: PkeParams, rng: np.random.Generator, budget: int | None = None):
    """Returns (vk, ciphertext).  ``budget`` caps the dense size used to build the state."""
    if b not in (0, 1):
        raise ValueError("plaintext must be a bit")
    kw = {} if budget is None else {"budget": budget}
    primal, y = gen_primal(pk, params.sigma, params.q, rng, **kw)
    state = pauli_x(primal.state, REGISTER, _shift(params, b))
    vk = VerificationKey(np.asarray(pk), y, params)
    return vk, PkeCiphertext(state, vk)


def decrypt(sk, ct: PkeCiphertext, rng: np.random.Generator) -> int:
    """Measure in the computational basis and decode c . sk."""
    c, _ = measure_computational(ct.state, REGISTER, rng)
    q = ct.state.q
    return decode_bit(int(modq.matmul_mod(c, sk, q)), q)


def decrypt_distribution(sk, ct: PkeCiphertext) -> dict:
    """Exact probability of each decrypted bit."""
    q = ct.state.q
    vals = modq.matmul_mod(ct.state.register(REGISTER), sk, q)
    p = np.abs(ct.state.amps) ** 2
    bits = np.array([decode_bit(int(v), q) for v in vals])
    return {0: float(p[bits == 0].sum()), 1: float(p[bits == 1].sum())}


def delete_with_state(ct: PkeCiphertext, rng: np.random.Generator):
    """Fourier measurement; returns the certificate and the post-measurement state."""
    pi, post = measure_fourier(ct.state, REGISTER, rng)
    return DeletionCertificate(pi), post


def delete(ct: PkeCiphertext, rng: np.random.Generator) -> DeletionCertificate:
    return delete_with_state(ct, rng)[0]


def certificate_distribution(ct: PkeCiphertext) -> dict:
    """Exact law of the deletion certificate."""
    return fourier_distribution(ct.state, REGISTER)


def verify(vk: VerificationKey, pi, params: PkeParams | None = None) -> bool:
    """Accept iff A pi = y (mod q) and ||pi|| <= sqrt(m+1)/(sqrt(2) alpha)."""
    params = params or vk.params
    pi = np.asarray(pi.pi if isinstance(pi, DeletionCertificate) else pi, dtype=np.int64).reshape(-1)
    q = params.q
    if len(pi) != params.width:
        return False
    pi = modq.centered(pi, q)
    if not np.array_equal(modq.mat_vec(vk.A, pi, q), modq.centered(vk.y, q)):
        return False
    return float(np.linalg.norm(pi.astype(np.float64))) <= params.norm_bound


def verify_acceptance_probability(vk: VerificationKey, ct: PkeCiphertext) -> float:
    dist = certificate_distribution(ct)
    return sum(p for pi, p in dist.items() if verify(vk, pi))


# -- classical twin --------------------------------------------------------------


def classical_encrypt(pk, b: int, params: PkeParams, rng: np.random.Generator, zero_noise: bool = False):
    """c = s0 A + e0 + (0, ..., 0, b floor(q/2)) with e0 of width alpha q / sqrt(2)."""
    if b not in (0, 1):
        raise ValueError("plaintext must be a bit")
    q = params.q
    s0 = modq.random_matrix(rng, (params.n,), q)
    if zero_noise:
        e0 = np.zeros(params.width, dtype=np.int64)
    else:
        gp = GaussParams(params.alpha * q / math.sqrt(2), q, params.width)
        e0 = sample_truncated_gaussian(gp, rng)
    return modq.centered(modq.matmul_mod(s0, pk, q) + e0 + _shift(params, b), q)


def classical_decrypt(sk, c, q: int) -> int:
    return decode_bit(int(modq.matmul_mod(c, sk, q)), q)


# -- serialisation ------------------------------------------------------------------


def _mat(a) -> list:
    return np.asarray(a, dtype=np.int64).tolist()


def keypair_to_json(kp: PkeKeyPair) -> str:
    p = kp.params
    d = {"scheme": "pke", "params": p.as_dict(), "q": p.q, "n": p.n, "m": p.m, "pk": _mat(kp.pk), "sk": _mat(kp.sk)}
    return json.dumps(d, indent=1)


def keypair_from_json(text: str) -> PkeKeyPair:
    d = json.loads(text)
    params = PkeParams.from_dict(d["params"])
    return PkeKeyPair(np.array(d["pk"], dtype=np.int64), np.array(d["sk"], dtype=np.int64), params)


def vk_to_json(vk: VerificationKey) -> str:
    p = vk.params
    return json.dumps({"params": p.as_dict(), "q": p.q, "n": p.n, "m": p.m, "A": _mat(vk.A), "y": _mat(vk.y)}, indent=1)


def vk_from_json(text: str) -> VerificationKey:
    d = json.loads(text)
    return VerificationKey(np.array(d["A"], dtype=np.int64), np.array(d["y"], dtype=np.int64), PkeParams.from_dict(d["params"]))


def certificate_to_json(cert: DeletionCertificate, params: PkeParams) -> str:
    return json.dumps({"q": params.q, "n": params.n, "m": params.m, "pi": _mat(cert.pi)})


def certificate_from_json(text: str) -> DeletionCertificate:
    return DeletionCertificate(np.array(json.loads(text)["pi"], dtype=np.int64))
