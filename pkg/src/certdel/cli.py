"""Command-line front end.

    certdel keygen     --config cfg.json --seed 7 --out keys.json
    certdel encrypt    --key keys.json --bit 1 --seed 8 --out ct.json [--vk-out vk.json]
    certdel decrypt    --key keys.json --ct ct.json --seed 9
    certdel delete     --ct ct.json --seed 10 --out cert.json
    certdel verify     --vk vk.json --cert cert.json
    certdel experiment duality --seed 1 --out report.json [--csv trials.csv]

Exit codes: 0 success or pass, 1 domain failure (reject, threshold miss),
2 usage error (bad flags, malformed config, unknown experiment).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dual_fhe, dual_regev
from .errors import BudgetExceeded, CertDelError, ParameterError
from .experiments import EXPERIMENTS, run_experiment
from .qudit import SUPPORT_BUDGET, from_snapshot, to_snapshot

ARTIFACT_VERSION = 1

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    scheme: str = "pke"
    params: dict = field(default_factory=dict)
    mode: str = "sandbox"
    experiment: str | None = None
    seed: int | None = None
    trials: int | None = None
    out: str | None = None
    budget: int | None = None

    @classmethod
    def from_file(cls, path: str | None) -> "RunConfig":
        if path is None:
            return cls()
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise UsageError("config must be a JSON object")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def scheme_params(self):
        p = dict(self.params)
        try:
            if self.scheme == "pke":
                p.setdefault("n", 1), p.setdefault("q", 29), p.setdefault("m", 2), p.setdefault("alpha", 0.125)
                return dual_regev.PkeParams(int(p["n"]), int(p["q"]), int(p["m"]), float(p["alpha"]), self.mode)
            if self.scheme == "fhe":
                p.setdefault("n", 1), p.setdefault("q", 2), p.setdefault("m", 1), p.setdefault("alpha", 0.05)
                return dual_fhe.FheParams(int(p["n"]), int(p["q"]), int(p["m"]), float(p["alpha"]),
                                          int(p.get("L", 1)), self.mode)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ParameterError):
                raise
            raise UsageError(f"malformed scheme parameters: {exc}") from exc
        raise UsageError(f"unknown scheme {self.scheme!r}")


def _seed(args, cfg: RunConfig) -> int:
    seed = args.seed if args.seed is not None else cfg.seed
    if seed is None:
        raise UsageError("a seed is required (--seed or config 'seed')")
    if not 0 <= int(seed) < 2**64:
        raise UsageError("seed must be an unsigned 64-bit integer")
    return int(seed)


def _budget(args, cfg: RunConfig) -> int:
    return args.budget or cfg.budget or SUPPORT_BUDGET


def _write(path, text: str):
    if path is None or path == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(path).write_text(text if text.endswith("\n") else text + "\n")


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _dump(d: dict) -> str:
    return json.dumps(d, indent=1, sort_keys=True)


# -- scheme commands -----------------------------------------------------------------


def cmd_keygen(args) -> int:
    cfg = RunConfig.from_file(args.config)
    if args.mode:
        cfg.mode = args.mode
    rng = np.random.default_rng(_seed(args, cfg))
    params = cfg.scheme_params()
    if cfg.scheme == "pke":
        text = dual_regev.keypair_to_json(dual_regev.keygen(params, rng))
    else:
        text = dual_fhe.fhe_keypair_to_json(dual_fhe.fhe_keygen(params, rng))
    d = json.loads(text)
    d["version"] = ARTIFACT_VERSION
    _write(args.out or cfg.out, _dump(d))
    return EXIT_OK


def _load_key(path):
    d = _read_json(path)
    text = json.dumps(d)
    if d.get("scheme") == "fhe":
        return "fhe", dual_fhe.fhe_keypair_from_json(text)
    return "pke", dual_regev.keypair_from_json(text)


def cmd_encrypt(args) -> int:
    scheme, kp = _load_key(args.key)
    cfg = RunConfig.from_file(args.config)
    rng = np.random.default_rng(_seed(args, cfg))
    bits = [int(b) for b in str(args.bit).split(",")]
    if any(b not in (0, 1) for b in bits):
        raise UsageError("plaintext bits must be 0 or 1")
    if scheme == "pke":
        if len(bits) != 1:
            raise UsageError("the PKE scheme encrypts a single bit")
        vk, ct = dual_regev.encrypt(kp.pk, bits[0], kp.params, rng, budget=args.budget or cfg.budget)
        vk_json = json.loads(dual_regev.vk_to_json(vk))
        doc = {"scheme": "pke", "state": to_snapshot(ct.state), "vk": vk_json}
    else:
        vk, ct = dual_fhe.quantum_fhe_encrypt_bits(kp.pk, bits, kp.params, rng, budget=_budget(args, cfg))
        vk_json = json.loads(dual_fhe.fhe_vk_to_json(vk))
        doc = {"scheme": "fhe", "state": to_snapshot(ct.state), "vk": vk_json,
               "systems": [[name, list(regs)] for name, regs in ct.systems], "inputs": list(ct.inputs)}
    doc["version"] = ARTIFACT_VERSION
    _write(args.out, _dump(doc))
    if args.vk_out:
        _write(args.vk_out, _dump({"scheme": scheme, "version": ARTIFACT_VERSION, **vk_json}))
    return EXIT_OK


def _load_ct(path):
    d = _read_json(path)
    try:
        state = from_snapshot(d["state"])
    except (KeyError, ValueError) as exc:
        raise UsageError(f"malformed ciphertext {path}: {exc}") from exc
    if d.get("scheme") == "fhe":
        ct = dual_fhe.QuantumFheCiphertext(state, tuple((n, tuple(r)) for n, r in d["systems"]), tuple(d["inputs"]))
        vk = dual_fhe.fhe_vk_from_json(json.dumps(d["vk"]))
        return "fhe", ct, vk
    vk = dual_regev.vk_from_json(json.dumps(d["vk"]))
    return "pke", dual_regev.PkeCiphertext(state, vk), vk


def cmd_decrypt(args) -> int:
    _, kp = _load_key(args.key)
    scheme, ct, _ = _load_ct(args.ct)
    cfg = RunConfig.from_file(args.config)
    rng = np.random.default_rng(_seed(args, cfg))
    if scheme == "pke":
        bit = dual_regev.decrypt(kp.sk, ct, rng)
    else:
        bit = dual_fhe.fhe_decrypt(kp.sk, ct, args.system or ct.inputs[0], kp.params, rng)
    print(bit)
    return EXIT_OK


def cmd_delete(args) -> int:
    scheme, ct, vk = _load_ct(args.ct)
    cfg = RunConfig.from_file(args.config)
    rng = np.random.default_rng(_seed(args, cfg))
    if scheme == "pke":
        cert = dual_regev.delete(ct, rng)
        doc = {"scheme": "pke", "pi": np.asarray(cert.pi).tolist()}
    else:
        cert = dual_fhe.fhe_delete(ct, rng)
        doc = {"scheme": "fhe", "pis": {k: np.asarray(v).tolist() for k, v in cert.pis.items()}}
    doc["version"] = ARTIFACT_VERSION
    _write(args.out, _dump(doc))
    return EXIT_OK


def cmd_verify(args) -> int:
    vkd = _read_json(args.vk)
    cd = _read_json(args.cert)
    try:
        if vkd.get("scheme") == "fhe":
            vk = dual_fhe.fhe_vk_from_json(json.dumps(vkd))
            cert = dual_fhe.FheCertificate({k: np.array(v, dtype=np.int64) for k, v in cd["pis"].items()})
            ok = dual_fhe.fhe_verify(vk, cert)
        else:
            vk = dual_regev.vk_from_json(json.dumps(vkd))
            ok = dual_regev.verify(vk, dual_regev.DeletionCertificate(np.array(cd["pi"], dtype=np.int64)))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ParameterError):
            raise
        raise UsageError(f"malformed verification key or certificate: {exc}") from exc
    print("accept" if ok else "reject")
    return EXIT_OK if ok else EXIT_FAIL


# -- experiments ----------------------------------------------------------------------


def cmd_experiment(args) -> int:
    cfg = RunConfig.from_file(args.config)
    name = args.name or cfg.experiment
    if name not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    mode = args.mode or cfg.mode
    trials = args.trials if args.trials is not None else cfg.trials
    try:
        report, records = run_experiment(name, cfg.params, seed=_seed(args, cfg), trials=trials,
                                         jobs=args.jobs, mode=mode)
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    _write(args.out or cfg.out, _dump(report))
    if args.csv:
        write_csv(args.csv, records)
    return EXIT_OK if report["pass"] else EXIT_FAIL


def write_csv(path, records: list):
    keys = []
    for r in records:
        keys.extend(k for k in r if k not in keys)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in records:
            w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="certdel", description="Dual-Regev encryption with certified deletion.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed")
        p.add_argument("--mode", choices=("strict", "sandbox"))
        p.add_argument("--budget", type=int, help="support-size budget for quantum states")
        if out:
            p.add_argument("--out", help="output path (default stdout)")

    p = sub.add_parser("keygen", help="generate a key pair")
    common(p)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("encrypt", help="encrypt bit(s) into a quantum ciphertext")
    common(p)
    p.add_argument("--key", required=True)
    p.add_argument("--bit", required=True, help="bit, or comma-separated bits for the FHE scheme")
    p.add_argument("--vk-out", help="also write the verification key here")
    p.set_defaults(func=cmd_encrypt)

    p = sub.add_parser("decrypt", help="measure and decrypt a ciphertext")
    common(p, out=False)
    p.add_argument("--key", required=True)
    p.add_argument("--ct", required=True)
    p.add_argument("--system", help="FHE system to decrypt (default: first input)")
    p.set_defaults(func=cmd_decrypt)

    p = sub.add_parser("delete", help="Fourier-measure a ciphertext into a deletion certificate")
    common(p)
    p.add_argument("--ct", required=True)
    p.set_defaults(func=cmd_delete)

    p = sub.add_parser("verify", help="check a deletion certificate (exit 1 on reject)")
    p.add_argument("--vk", required=True)
    p.add_argument("--cert", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("experiment", help="run a named experiment and write a JSON report")
    common(p)
    p.add_argument("name", nargs="?", help=", ".join(EXPERIMENTS))
    p.add_argument("--trials", type=int)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent trials")
    p.add_argument("--csv", help="write per-trial records as CSV")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"certdel: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"certdel: invalid parameters: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BudgetExceeded as exc:
        print(f"certdel: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except CertDelError as exc:
        print(f"certdel: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
