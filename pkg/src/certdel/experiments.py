"""Named experiments producing versioned JSON reports.

Every runner takes a parameter dict, a seed, a trial count and a worker
count, and returns ``(params, metrics, passed, records)``.  ``records`` are
per-trial rows for CSV export (may be empty).  Thresholds are sampling-noise
or numerical-tolerance statements at toy sizes, not security claims.
"""

from __future__ import annotations

import functools
import math

import numpy as np

from . import dual_fhe, dual_regev, games, modq
from .errors import ParameterError
from .gaussian import poisson_check
from .gaussian_states import duality_check

REPORT_VERSION = 1

NOTE = ("Thresholds are sampling-noise and numerical-tolerance checks at toy parameters; "
        "they are not asymptotic security statements.")


def _merge(defaults: dict, overrides: dict | None) -> dict:
    out = dict(defaults)
    for k, v in (overrides or {}).items():
        if k not in defaults:
            raise ParameterError(f"unknown parameter {k!r}; expected one of {sorted(defaults)}")
        out[k] = v
    return out


# -- lemma checks ------------------------------------------------------------------


def run_duality(p, seed, trials, jobs, mode):
    p = _merge({"n": 1, "m": 2, "q": 29, "sigma": 4.6}, p)
    rng = np.random.default_rng(seed)
    q = p["q"]
    A = modq.random_matrix(rng, (p["n"], p["m"]), q)
    while not modq.generates_full_group(A, q):
        A = modq.random_matrix(rng, (p["n"], p["m"]), q)
    records = []
    for _ in range(trials):
        y = modq.random_matrix(rng, (p["n"],), q)
        rep = duality_check(A, y, p["sigma"], q, mode=mode)
        records.append({"y": " ".join(map(str, y)), **rep.as_dict()})
    metrics = {
        "A": A.tolist(),
        "instances": trials,
        "td": max(r["td"] for r in records),
        "bound": min(r["bound"] for r in records),
        "violations": sum(not r["ok"] for r in records),
    }
    return p, metrics, metrics["violations"] == 0, records


def run_poisson(p, seed, trials, jobs, mode):
    p = _merge({"n": 1, "m": 2, "q": 13, "sigma": 3.0, "tol": 1e-6}, p)
    rng = np.random.default_rng(seed)
    q = p["q"]
    records = []
    for _ in range(trials):
        A = modq.random_matrix(rng, (p["n"], p["m"]), q)
        v = modq.random_matrix(rng, (p["n"],), q)
        w = modq.random_matrix(rng, (p["m"],), q)
        lhs, rhs, err = poisson_check(A, v, w, p["sigma"], q)
        records.append({"abs_err": abs(lhs - rhs), "certified": err, "lhs_re": lhs.real, "lhs_im": lhs.imag})
    abs_err = max(r["abs_err"] for r in records)
    return p, {"instances": trials, "abs_err": abs_err}, abs_err <= p["tol"], records


def run_lhl(p, seed, trials, jobs, mode):
    p = _merge({"n": 1, "m": 9, "q": 13, "threshold": 0.05}, p)
    if mode == "strict" and p["m"] < 2 * p["n"] * math.log2(p["q"]):
        raise ParameterError("strict mode needs m >= 2 n log2 q")
    rng_emp, rng_cond = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    tv = games.lhl_check(p["n"], p["m"], p["q"], trials, rng_emp)
    # informational: exact TV of A x given A, averaged over a smaller sample of A
    cond = games.lhl_conditional_tv(p["n"], p["m"], p["q"], min(trials, 1000), rng_cond)
    return p, {"tv": tv, "conditional_tv": cond}, tv <= p["threshold"], []


def run_dephasing(p, seed, trials, jobs, mode):
    p = _merge({"n": 1, "m": 2, "q": 29, "sigma": 4.6, "inv_alpha": 46.0}, p)
    rng = np.random.default_rng(seed)
    q = p["q"]
    A = modq.random_matrix(rng, (p["n"], p["m"]), q)
    while not modq.generates_full_group(A, q):
        A = modq.random_matrix(rng, (p["n"], p["m"]), q)
    records = []
    for _ in range(trials):
        y = modq.random_matrix(rng, (p["n"],), q)
        rep = games.dephasing_invariance_check(A, y, p["sigma"], 1.0 / p["inv_alpha"], q, mode=mode)
        records.append({"y": " ".join(map(str, y)), **rep.as_dict()})
    metrics = {"A": A.tolist(), "instances": trials,
               "td": float(max(r["td"] for r in records)), "bound": float(min(r["bound"] for r in records)),
               "violations": sum(not r["ok"] for r in records)}
    return p, metrics, metrics["violations"] == 0, records


def run_uncertainty(p, seed, trials, jobs, mode):
    p = _merge({}, p)
    rng = np.random.default_rng(seed)
    records = []
    for kind, q, m, S, alphas, aux in games.uncertainty_suite(rng, trials):
        rep = games.uncertainty_check(alphas, aux, S, q, m)
        records.append({"kind": kind, "q": q, "m": m, "S_size": len(S), **rep.as_dict()})
    viol = sum(not r["ok"] for r in records)
    return p, {"instances": len(records), "violations": viol,
               "max_ratio": max(r["pguess_upper"] / r["bound"] for r in records)}, viol == 0, records


# -- games ------------------------------------------------------------------------


def _collapse_trial(i, rng, params):
    b = i % 2
    res = games.gauss_collapse_exp(b, games.fourier_test_adversary(), params, rng)
    return {"b": b, "b_prime": res.b_prime, "audit": len(games.audit_transcript(res.experiment, res.transcript))}


def run_gauss_collapse(p, seed, trials, jobs, mode):
    p = _merge({"n": 1, "m": 3, "q": 29, "sigma": 12.0}, p)
    params = games.CollapseParams(p["n"], p["m"], p["q"], p["sigma"], mode)
    recs = games.run_trials(functools.partial(_collapse_trial, params=params), trials, seed, jobs)
    zero = [r for r in recs if r["b"] == 0]
    one = [r for r in recs if r["b"] == 1]
    acc0 = sum(r["b_prime"] == 0 for r in zero) / max(1, len(zero))
    acc1 = sum(r["b_prime"] == 0 for r in one) / max(1, len(one))
    audit = sum(r["audit"] for r in recs)
    metrics = {"lwe_like_rate_b0": acc0, "lwe_like_rate_b1": acc1, "gap": acc0 - acc1, "audit_violations": audit}
    return p, metrics, audit == 0 and acc0 - acc1 >= 0.5, recs


def _strong_trial(i, rng, params, kind):
    b = 0 if kind == "honest" else i % 2
    adv = games.honest_witness_adversary() if kind == "honest" else games.invalid_witness_adversary(
        games.INVALID_KINDS[i % len(games.INVALID_KINDS)])
    res = games.strong_gauss_collapse_exp(b, adv, params, rng)
    return {"adversary": adv.name, "b": b, "aborted": res.aborted, "released": res.released is not None,
            "leak": games.trapdoor_leaks(res),
            "kernel": res.metrics.get("trapdoor_kernel", True),
            "audit": len(games.audit_transcript(res.experiment, res.transcript))}


def run_strong_gauss_collapse(p, seed, trials, jobs, mode):
    p = _merge({"n": 1, "m": 2, "q": 29, "sigma": 4.6, "adversarial_trials": 1000}, p)
    params = games.CollapseParams(p["n"], p["m"], p["q"], p["sigma"], mode)
    s_honest, s_adv = np.random.SeedSequence(seed).spawn(2)
    honest = games.run_trials(functools.partial(_strong_trial, params=params, kind="honest"),
                              trials, int(s_honest.generate_state(1)[0]), jobs)
    adv = games.run_trials(functools.partial(_strong_trial, params=params, kind="invalid"),
                           p["adversarial_trials"], int(s_adv.generate_state(1)[0]), jobs)
    release = sum(r["released"] for r in honest) / max(1, len(honest))
    metrics = {
        "honest_release_rate": release,
        "adversarial_trials": len(adv),
        "rejected": sum(r["aborted"] for r in adv),
        "leaks": sum(r["leak"] for r in adv),
        "trapdoor_not_in_kernel": sum(not r["kernel"] for r in honest + adv),
        "audit_violations": sum(r["audit"] for r in honest + adv),
    }
    ok = (release >= 0.99 and metrics["leaks"] == 0 and metrics["audit_violations"] == 0
          and metrics["trapdoor_not_in_kernel"] == 0)
    return p, metrics, ok, honest + adv


_ADVERSARIES = {
    "honest-deleter": games.honest_deleter_adversary,
    "never-delete": games.never_delete_adversary,
    "shift-by-lwe": games.shift_by_lwe_adversary,
}


def _cpa_trial(i, rng, scheme, params, adversary):
    b = i % 2
    res = games.ind_cpa_cd_exp(b, _ADVERSARIES[adversary](), scheme, params, rng)
    return {"b": b, "b_prime": res.b_prime, "verified": res.metrics["verified"],
            "released": res.released is not None,
            "audit": len(games.audit_transcript(res.experiment, res.transcript))}


def _scheme_params(p, mode):
    if p["scheme"] == "pke":
        return dual_regev.PkeParams(p["n"], p["q"], p["m"], p["alpha"], mode)
    return dual_fhe.FheParams(p["n"], p["q"], p["m"], p["alpha"], p.get("L", 1), mode)


def run_ind_cpa_cd(p, seed, trials, jobs, mode):
    p = _merge({"scheme": "pke", "n": 1, "q": 29, "m": 2, "alpha": 0.125, "L": 1,
                "adversary": "honest-deleter", "threshold": 0.05, "acceptance_instances": 5}, p)
    params = _scheme_params(p, mode)
    recs = games.run_trials(functools.partial(_cpa_trial, scheme=p["scheme"], params=params,
                                              adversary=p["adversary"]), trials, seed, jobs)
    by = {b: [r for r in recs if r["b"] == b] for b in (0, 1)}
    rate = {b: sum(r["b_prime"] for r in by[b]) / max(1, len(by[b])) for b in (0, 1)}
    adv = abs(rate[1] - rate[0])
    metrics = {
        "advantage": adv,
        "verify_rate": sum(r["verified"] for r in recs) / max(1, len(recs)),
        "sk_released_without_verification": sum(r["released"] and not r["verified"] for r in recs),
        "audit_violations": sum(r["audit"] for r in recs),
    }
    if p["scheme"] == "pke":
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(trials + 1)[-1])
        acc = [games.certificate_acceptance(params, rng) for _ in range(p["acceptance_instances"])]
        metrics["accept_honest"] = float(np.mean([a["honest"] for a in acc]))
        metrics["accept_shift_by_lwe"] = float(np.mean([a["shift_by_lwe"] for a in acc]))
    ok = (adv <= p["threshold"] and metrics["audit_violations"] == 0
          and metrics["sk_released_without_verification"] == 0)
    return p, metrics, ok, recs


def _fhe_trial(i, rng, params, gate):
    kp = dual_fhe.fhe_keygen(params, rng)
    xi, xj = int(rng.integers(0, 2)), int(rng.integers(0, 2))
    bits = [xi] if gate["i"] == gate["j"] else [xi, xj]
    if gate["i"] == gate["j"]:
        xj = xi
    vk, ct = dual_fhe.quantum_fhe_encrypt_bits(kp.pk, bits, params, rng)
    ev, transcript = dual_fhe.eval_circuit([gate], ct, params)
    res = dual_fhe.extract_protocol(ev, transcript, kp.sk, params, rng)
    td = dual_fhe.rewind_trace_distance(res, ct)
    cert = dual_fhe.fhe_delete(res.ciphertext, rng)
    return {"xi": xi, "xj": xj, "y": res.y, "correct": res.y == 1 - xi * xj, "td": td,
            "epsilon": res.epsilon, "td_allowance": max(0.05, math.sqrt(res.epsilon)),
            "verified": dual_fhe.fhe_verify(vk, cert, params)}


def run_fhe_pipeline(p, seed, trials, jobs, mode):
    p = _merge({"n": 1, "q": 2, "m": 1, "alpha": 0.05, "L": 1,
                "gate": {"i": "C1", "j": "C2", "out": "C3"}}, p)
    params = dual_fhe.FheParams(p["n"], p["q"], p["m"], p["alpha"], p["L"], mode)
    recs = games.run_trials(functools.partial(_fhe_trial, params=params, gate=p["gate"]), trials, seed, jobs)
    metrics = {
        "correct_rate": sum(r["correct"] for r in recs) / len(recs),
        "verify_rate": sum(r["verified"] for r in recs) / len(recs),
        "max_td": max(r["td"] for r in recs),
        "td_violations": sum(r["td"] > r["td_allowance"] for r in recs),
    }
    ok = metrics["correct_rate"] >= 0.95 and metrics["verify_rate"] >= 0.95 and metrics["td_violations"] == 0
    return p, metrics, ok, recs


EXPERIMENTS = {
    "gauss-collapse": (run_gauss_collapse, 200),
    "strong-gauss-collapse": (run_strong_gauss_collapse, 100),
    "ind-cpa-cd": (run_ind_cpa_cd, 2000),
    "dephasing": (run_dephasing, 3),
    "uncertainty": (run_uncertainty, 20),
    "lhl": (run_lhl, 10_000),
    "duality": (run_duality, 20),
    "poisson": (run_poisson, 50),
    "fhe-pipeline": (run_fhe_pipeline, 20),
}


def run_experiment(name: str, params: dict | None = None, seed: int = 0, trials: int | None = None,
                   jobs: int = 1, mode: str = "sandbox"):
    """Run one named experiment; returns ``(report, records)``."""
    if name not in EXPERIMENTS:
        raise ParameterError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    fn, default_trials = EXPERIMENTS[name]
    trials = default_trials if trials is None else int(trials)
    used, metrics, passed, records = fn(params or {}, seed, trials, jobs, mode)
    report = {
        "schema_version": REPORT_VERSION,
        "experiment": name,
        "params": used,
        "mode": mode,
        "seed": seed,
        "trials": trials,
        "metrics": metrics,
        "pass": bool(passed),
        "note": NOTE,
    }
    return report, records
