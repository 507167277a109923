"""The fourteen acceptance criteria, each at its stated tolerance and runtime.

Every test reports through the ``record_criterion`` fixture, which prints one
PASS/FAIL line per criterion at the end of the pytest run.
"""

import itertools
import math
import time

import numpy as np

from certdel import dual_fhe, dual_regev, experiments, games, gaussian, gaussian_states, modq, qudit

import oracles

PKE_SANDBOX = dual_regev.PkeParams(1, 29, 2, 1 / 8, mode="sandbox")
PKE_STRICT = dual_regev.PkeParams(2, 521, 40, math.sqrt(8 * 41) / 521)


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def _full_rank(rng, n, m, q):
    while True:
        A = modq.random_matrix(rng, (n, m), q)
        if modq.generates_full_group(A, q):
            return A


def test_criterion_01_pauli_fourier_conjugation(record_criterion):
    rng = np.random.default_rng(1)
    worst = 0.0
    with Timer() as t:
        for q in (2, 3, 5, 13):
            F = {m: qudit.qft_matrix(q, m) for m in (1, 2)}
            for _ in range(20):
                m = int(rng.integers(1, 3))
                b = modq.random_matrix(rng, (m,), q)
                lhs = F[m] @ qudit.pauli_x_matrix(q, b) @ F[m].conj().T
                worst = max(worst, float(np.max(np.abs(lhs - qudit.pauli_z_matrix(q, b)))))
    record_criterion(1, "Pauli/Fourier conjugation", worst <= 1e-10, f"max entrywise error {worst:.2e}", t.elapsed, 1)


def test_criterion_02_uniform_dephasing(record_criterion):
    rng = np.random.default_rng(2)
    q = 5
    worst_off, worst_diag = 0.0, 0.0
    with Timer() as t:
        for m in (1, 2):
            lay = qudit.RegisterLayout.single(q, "X", m)
            weights = {z: 1 / q**m for z in oracles.vectors(q, m)}
            for _ in range(3):
                v = rng.normal(size=lay.dim) + 1j * rng.normal(size=lay.dim)
                rho = qudit.DensityOp.from_state(qudit.SparseState.from_dense(lay, v / np.linalg.norm(v)))
                out = qudit.twirl_explicit(rho, "X", weights)
                worst_off = max(worst_off, out.max_offdiag())
                diag = np.diag(np.diag(rho.matrix))
                worst_diag = max(worst_diag, float(np.max(np.abs(out.matrix - diag))))
    ok = worst_off <= 1e-12 and worst_diag <= 1e-12
    record_criterion(2, "uniform Z-twirl is the diagonal projection", ok,
                     f"max off-diagonal {worst_off:.2e}, max deviation from diag(rho) {worst_diag:.2e}", t.elapsed, 1)


def test_criterion_03_duality(record_criterion):
    rng = np.random.default_rng(3)
    worst_slack = math.inf
    violations = 0
    with Timer() as t:
        for m, q, sigma in ((2, 29, 4.6), (3, 53, 5.0)):
            A = _full_rank(rng, 1, m, q)
            for _ in range(20):
                y = modq.random_matrix(rng, (1,), q)
                rep = gaussian_states.duality_check(A, y, sigma, q, mode="sandbox")
                bound = rep.trunc_term + 2.0 ** (-3 * m / 2)
                if not (rep.in_window and rep.td <= bound and rep.td <= rep.bound):
                    violations += 1
                worst_slack = min(worst_slack, bound - rep.td)
    record_criterion(3, "duality lemma", violations == 0,
                     f"{violations} violations over 40 instances, min slack {worst_slack:.3g}", t.elapsed, 30)


def test_criterion_04_poisson(record_criterion):
    with Timer() as t:
        report, _ = experiments.run_experiment("poisson", {"n": 1, "m": 2, "q": 13, "sigma": 3.0}, seed=4, trials=50)
    err = report["metrics"]["abs_err"]
    record_criterion(4, "Poisson summation", err <= 1e-6, f"max |lhs - rhs| {err:.2e} over 50 instances",
                     t.elapsed, 10)


def test_criterion_05_gadget(record_criterion):
    q = 5
    gs = modq.GadgetSpec(2, q)
    bad = 0
    with Timer() as t:
        G = modq.gadget_matrix(gs)
        for v in itertools.product(range(q), repeat=2):
            bits = modq.bit_decompose(np.array(v), gs)
            if set(np.unique(bits)) - {0, 1} or tuple(np.mod(G @ bits, q)) != v:
                bad += 1
    record_criterion(5, "gadget identity", bad == 0, f"{bad} failures over all {q**2} vectors", t.elapsed, 1)


def test_criterion_06_pke_correctness(record_criterion):
    rng = np.random.default_rng(6)
    with Timer() as t:
        kp = dual_regev.keygen(PKE_SANDBOX, rng)
        quantum_ok = 0
        for i in range(100):
            b = i % 2
            _, ct = dual_regev.encrypt(kp.pk, b, PKE_SANDBOX, rng)
            quantum_ok += dual_regev.decrypt(kp.sk, ct, rng) == b
        kps = dual_regev.keygen(PKE_STRICT, rng)
        classical_ok = 0
        for i in range(1000):
            b = i % 2
            c = dual_regev.classical_encrypt(kps.pk, b, PKE_STRICT, rng)
            classical_ok += dual_regev.classical_decrypt(kps.sk, c, PKE_STRICT.q) == b
    ok = quantum_ok >= 99 and classical_ok == 1000
    record_criterion(6, "PKE correctness", ok,
                     f"quantum {quantum_ok}/100 (sandbox), classical {classical_ok}/1000 (strict)", t.elapsed, 60)


def test_criterion_07_pke_verification(record_criterion):
    rng = np.random.default_rng(7)
    with Timer() as t:
        kp = dual_regev.keygen(PKE_SANDBOX, rng)
        accepted = 0
        for i in range(100):
            vk, ct = dual_regev.encrypt(kp.pk, i % 2, PKE_SANDBOX, rng)
            accepted += dual_regev.verify(vk, dual_regev.delete(ct, rng))
    record_criterion(7, "PKE verification", accepted >= 99, f"{accepted}/100 accepted", t.elapsed, 60)


def test_criterion_08_certificate_independence(record_criterion):
    worst = 0.0
    with Timer() as t:
        for seed in range(10):
            kp = dual_regev.keygen(PKE_SANDBOX, np.random.default_rng(seed))
            dists = []
            for b in (0, 1):
                # same seed, so both ciphertexts share the syndrome y
                _, ct = dual_regev.encrypt(kp.pk, b, PKE_SANDBOX, np.random.default_rng(1000 + seed))
                dists.append(dual_regev.certificate_distribution(ct))
            worst = max(worst, oracles.tv(*dists))
    record_criterion(8, "certificate-plaintext independence", worst <= 1e-9,
                     f"max TV {worst:.2e} over 10 instances", t.elapsed, 10)


def test_criterion_09_classical_fhe(record_criterion):
    rng = np.random.default_rng(9)
    results = []
    with Timer() as t:
        p1 = dual_fhe.strict_fhe_params(1)
        kp1 = dual_fhe.fhe_keygen(p1, rng)
        for a, b in itertools.product((0, 1), repeat=2):
            cts = {"a": dual_fhe.classical_fhe_encrypt(kp1.pk, a, p1, rng),
                   "b": dual_fhe.classical_fhe_encrypt(kp1.pk, b, p1, rng)}
            out = dual_fhe.classical_eval([{"i": "a", "j": "b", "out": "c"}], cts, p1)
            results.append(dual_fhe.classical_fhe_decrypt(kp1.sk, out["c"], p1) == 1 - a * b)
        p2 = dual_fhe.strict_fhe_params(2)
        kp2 = dual_fhe.fhe_keygen(p2, rng)
        circuit = [{"i": "a", "j": "b", "out": "c"}, {"i": "c", "j": "a", "out": "d"}]
        for a, b in itertools.product((0, 1), repeat=2):
            cts = {"a": dual_fhe.classical_fhe_encrypt(kp2.pk, a, p2, rng),
                   "b": dual_fhe.classical_fhe_encrypt(kp2.pk, b, p2, rng)}
            out = dual_fhe.classical_eval(circuit, cts, p2)
            results.append(dual_fhe.classical_fhe_decrypt(kp2.sk, out["d"], p2) == 1 - (1 - a * b) * a)
    ok = all(results)
    record_criterion(9, "classical FHE NAND", ok,
                     f"{sum(results)}/8 correct (L=1 at q={p1.q}, L=2 depth-2 at q={p2.q})", t.elapsed, 30)


def test_criterion_10_quantum_fhe_pipeline(record_criterion):
    runs = {
        "q=2 NAND(C1,C2)": {"q": 2, "gate": {"i": "C1", "j": "C2", "out": "C3"}},
        "q=3 NAND(C1,C1)": {"q": 3, "gate": {"i": "C1", "j": "C1", "out": "C2"}},
    }
    parts, ok = [], True
    with Timer() as t:
        for label, params in runs.items():
            report, _ = experiments.run_experiment("fhe-pipeline", params, seed=10, trials=20)
            m = report["metrics"]
            ok &= m["correct_rate"] >= 0.95 and m["verify_rate"] >= 0.95 and m["td_violations"] == 0
            parts.append(f"{label}: correct {m['correct_rate']:.2f}, verify {m['verify_rate']:.2f}, "
                         f"max td {m['max_td']:.3g}, td violations {m['td_violations']}")
    record_criterion(10, "quantum FHE pipeline", ok, "; ".join(parts), t.elapsed, 300)


def test_criterion_11_uncertainty(record_criterion):
    with Timer() as t:
        cases = games.uncertainty_suite(np.random.default_rng(11), 20)
        reports = [games.uncertainty_check(alphas, aux, S, q, m) for _, q, m, S, alphas, aux in cases]
    violations = sum(not r.ok for r in reports)
    kinds = sorted({c[0] for c in cases})
    worst = max(r.pguess_upper / r.bound for r in reports)
    record_criterion(11, "uncertainty relation", violations == 0 and len(reports) == 20,
                     f"{violations} violations over {len(reports)} states ({', '.join(kinds)}), "
                     f"max p_guess/bound {worst:.4f}", t.elapsed, 30)


def test_criterion_12_dephasing_invariance(record_criterion):
    rng = np.random.default_rng(12)
    q, sigma = 29, 4.6
    reports = []
    with Timer() as t:
        A = _full_rank(rng, 1, 2, q)
        for _ in range(3):
            y = modq.random_matrix(rng, (1,), q)
            # 1/alpha = 10 sigma keeps only e0 = 0 in the truncated support (td = 0);
            # the wider errors make the channel act visibly
            for inv_alpha in (10 * sigma, 20.0, 10.0, sigma):
                reports.append(games.dephasing_invariance_check(A, y, sigma, 1 / inv_alpha, q, mode="sandbox"))
    violations = sum(not (r.in_window and r.td <= r.bound) for r in reports)
    worst = max(reports, key=lambda r: r.td / r.bound)
    record_criterion(12, "dephasing invariance", violations == 0,
                     f"{violations} violations over {len(reports)} instances; largest td/bound "
                     f"{worst.td:.3g}/{worst.bound:.3g}", t.elapsed, 60)


def test_criterion_13_sampler_fidelity(record_criterion):
    rng = np.random.default_rng(13)
    parts, ok = [], True
    with Timer() as t:
        for m, sigma, q in ((1, 4.6, 29), (2, 2.0, 13)):
            samples = gaussian.sample_truncated_gaussian(gaussian.GaussParams(sigma, q, m), rng, size=100_000)
            tv = oracles.tv(gaussian.empirical(samples), oracles.truncated_pmf(sigma, q, m))
            ok &= tv <= 0.02
            parts.append(f"m={m}: TV {tv:.4f}")
    record_criterion(13, "sampler fidelity", ok, ", ".join(parts), t.elapsed, 30)


def test_criterion_14_game_audit(record_criterion):
    with Timer() as t:
        strong, records = experiments.run_experiment("strong-gauss-collapse", seed=14, trials=100,
                                                     params={"adversarial_trials": 1000})
        collapse, crecs = experiments.run_experiment("gauss-collapse", seed=14, trials=50)
        rng = np.random.default_rng(14)
        cpa_audit = 0
        for i, adv in enumerate([games.honest_deleter_adversary, games.never_delete_adversary,
                                 games.shift_by_lwe_adversary] * 10):
            res = games.ind_cpa_cd_exp(i % 2, adv(), "pke", PKE_SANDBOX, rng)
            cpa_audit += len(games.audit_transcript(res.experiment, res.transcript))
            cpa_audit += (res.released is not None) and not res.metrics["verified"]
    sm = strong["metrics"]
    audit = sm["audit_violations"] + collapse["metrics"]["audit_violations"] + cpa_audit
    ok = sm["adversarial_trials"] == 1000 and sm["leaks"] == 0 and audit == 0
    record_criterion(14, "game harness audit", ok,
                     f"{sm['leaks']} leaks over {sm['adversarial_trials']} adversarial trials "
                     f"({sm['rejected']} rejected), {audit} schema violations", t.elapsed, 60)
