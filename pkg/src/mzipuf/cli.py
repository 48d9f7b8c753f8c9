"""Command-line driver for enrollment, authentication, attacks, metrics and aging.

Every subcommand reads an optional JSON config (``--config``), takes an
explicit ``--seed`` that overrides ``master_seed`` and writes either to
``--out`` or stdout in ``--format`` csv or json. Outputs depend only on the
config and seeds, so reruns are byte-identical.

Exit codes: 0 success/accept, 2 protocol reject, 1 error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import adversary, metrics
from .enrollment import EnrollmentDb, atomic_write_text, enroll, load_db, save_db
from .errors import PufError
from .photonic_core import MeshTopology
from .protocols import (
    HonestProver,
    VerificationPolicy,
    authenticate,
    classical_message_auth,
    quantum_message_auth,
)
from .puf_device import age_device, new_device, random_challenges

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECT = 2

ATTACKS = ("measure_resend", "clone", "amplitude_probe")


@dataclass
class ExperimentConfig:
    """Experiment parameters; angles carry ``_rad`` in their names."""

    n_modes: int = 8
    device_seed: int = 1
    fab_sigma_rad: float = 0.1
    noise_sigma_rad: float = 0.005
    loss_range: list = field(default_factory=lambda: [0.5, 1.0])
    coupling_range: list = field(default_factory=lambda: [0.8, 1.0])
    challenge_count: int = 16
    challenge_seed: int = 7
    input_modes: list = field(default_factory=lambda: [0])
    shots: int | None = 10000
    rounds: int = 20
    epsilon: float = 0.02
    min_accept_fraction: float = 0.9
    scale_constant: float | None = None
    master_seed: int = 0
    db_path: str | None = None
    # attacks
    attack_trials: int = 10000
    attack_dims: list = field(default_factory=lambda: list(range(2, 9)))
    attack_q: int = 1
    clone_seed: int = 1001
    clone_trials: int = 100
    probe_count: int = 30000
    # message authentication
    message_repetitions: int = 100000
    # metrics
    metric_device_seeds: list = field(default_factory=lambda: list(range(100, 110)))
    metric_repeats: int = 10
    metric_tolerance: float = 0.01
    # aging
    epochs: int = 10
    drift_sigma_rad_per_epoch: float = 0.005
    age_trials: int = 5

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise PufError(f"unknown config field(s): {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise PufError(f"config {path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise PufError(f"config {path}: top level must be an object")
        return cls.from_dict(data)

    def topology(self) -> MeshTopology:
        return MeshTopology.triangular(self.n_modes)

    def device(self, seed: int | None = None):
        return new_device(
            self.topology(),
            self.device_seed if seed is None else seed,
            self.fab_sigma_rad,
            tuple(self.loss_range),
            tuple(self.coupling_range),
            self.noise_sigma_rad,
        )

    def challenges(self):
        return random_challenges(
            self.topology(), self.challenge_count, self.challenge_seed, tuple(self.input_modes)
        )

    def policy(self, rounds: int | None = None) -> VerificationPolicy:
        return VerificationPolicy(
            epsilon=self.epsilon,
            scale_constant=self.scale_constant,
            rounds=self.rounds if rounds is None else rounds,
            min_accept_fraction=self.min_accept_fraction,
        )


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _scalar(v):
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ";".join(str(_scalar(x)) for x in v)
    if isinstance(v, dict):
        return json.dumps(v, sort_keys=True)
    return v


def render(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows if len(rows) != 1 else rows[0], sort_keys=True, indent=2) + "\n"
    columns = list(rows[0]) if rows else []
    for row in rows[1:]:
        columns += [k for k in row if k not in columns]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _scalar(row.get(k, "")) for k in columns})
    return buf.getvalue()


def emit(text: str, out: str | None) -> None:
    if out:
        atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _db(args, cfg: ExperimentConfig) -> EnrollmentDb:
    path = args.db or cfg.db_path
    if not path:
        raise PufError("no enrollment database given (--db or db_path in the config)")
    return load_db(path)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_enroll(args, cfg: ExperimentConfig) -> int:
    path = args.out or cfg.db_path
    if not path:
        raise PufError("enroll needs --out or db_path in the config")
    db = enroll(cfg.device(), cfg.challenges(), cfg.shots, cfg.master_seed)
    save_db(db, path)
    omega_p = [rec.weights.omega_p for rec in db.records.values()]
    summary = {
        "db_path": str(path),
        "device_label": db.device_label,
        "crp_count": len(db.records),
        "omega_p_min": min(omega_p),
        "omega_p_max": max(omega_p),
    }
    sys.stdout.write(render([summary], args.format))
    return EXIT_OK


def _verdict_exit(verdict) -> int:
    return EXIT_OK if verdict.accepted else EXIT_REJECT


def cmd_authenticate(args, cfg: ExperimentConfig) -> int:
    db = _db(args, cfg)
    prover_seed = cfg.device_seed if args.prover_seed is None else args.prover_seed
    verdict = authenticate(db, HonestProver(cfg.device(prover_seed)), cfg.policy(), cfg.master_seed)
    row = {**verdict.to_dict(), "prover_seed": int(prover_seed)}
    emit(render([row], args.format), args.out)
    return _verdict_exit(verdict)


def cmd_attack(args, cfg: ExperimentConfig) -> int:
    if args.name not in ATTACKS:
        raise PufError(f"unknown attack {args.name!r}; valid: {', '.join(ATTACKS)}")
    if args.name == "measure_resend":
        reports = [adversary.bound_experiment(d, cfg.attack_q, cfg.attack_trials, cfg.master_seed)
                   for d in cfg.attack_dims]
        rows = [r.row() for r in reports]
    elif args.name == "clone":
        db = load_db(args.db or cfg.db_path) if (args.db or cfg.db_path) else enroll(
            cfg.device(), cfg.challenges(), cfg.shots, cfg.master_seed)
        rep = adversary.clone_attack(db, cfg.device_seed, cfg.clone_seed, cfg.policy(),
                                     cfg.clone_trials, cfg.master_seed)
        rows = [rep.row()]
    else:
        challenges = cfg.challenges()[:3]
        k = len(challenges)
        amplitudes = np.full(k, 1 / np.sqrt(k))
        prover = adversary.HiddenRoutingProver(cfg.device(), amplitudes)
        probe = adversary.amplitude_probe(prover, challenges, cfg.probe_count, cfg.master_seed)
        rows = [{
            "attack": "amplitude_probe", "d": cfg.n_modes, "probe_count": probe.probe_count,
            "estimate": list(probe.estimate), "standard_error": list(probe.standard_error),
            "validated": adversary.validate_against_registration(probe.estimate),
            "note": probe.note,
        }]
    emit(render(rows, args.format), args.out)
    return EXIT_OK


def _parse_numbers(text: str, kind):
    try:
        return [kind(x.strip()) for x in text.split(",") if x.strip()]
    except ValueError:
        raise PufError(f"cannot parse {text!r} as a comma-separated list") from None


def cmd_message_auth(args, cfg: ExperimentConfig) -> int:
    db = _db(args, cfg)
    prover_seed = cfg.device_seed if args.prover_seed is None else args.prover_seed
    prover = HonestProver(cfg.device(prover_seed))
    if args.mode == "classical":
        if not args.message:
            raise PufError("classical mode needs --message")
        verdict = classical_message_auth(db, prover, _parse_numbers(args.message, int),
                                         cfg.policy(), cfg.master_seed)
    else:
        if not args.amplitudes:
            raise PufError("quantum mode needs --amplitudes")
        amps = _parse_numbers(args.amplitudes, complex)
        verdict = quantum_message_auth(db, prover, amps, cfg.policy(cfg.message_repetitions),
                                       cfg.master_seed)
    row = {**verdict.to_dict(), "mode": args.mode, "prover_seed": int(prover_seed)}
    emit(render([row], args.format), args.out)
    transcript = args.transcript or (str(Path(args.out).with_suffix(".transcript.jsonl")) if args.out else None)
    if transcript:
        atomic_write_text(transcript, verdict.transcript.to_jsonl())
    return _verdict_exit(verdict)


def cmd_metrics(args, cfg: ExperimentConfig) -> int:
    challenge = cfg.challenges()[0]
    tol = cfg.metric_tolerance
    reports = []
    seeds = cfg.metric_device_seeds
    if len(seeds) >= 2:
        devices = [cfg.device(s) for s in seeds]
        reports.append(metrics.hd_inter(devices, challenge, 1, cfg.master_seed, cfg.shots, tol))
    reports.append(metrics.hd_intra(cfg.device(), challenge, cfg.metric_repeats, cfg.master_seed,
                                    cfg.shots, tol))
    paths = args.db or ([cfg.db_path] if cfg.db_path else [])
    dbs = [load_db(p) for p in paths]
    if len(dbs) >= 2:
        reports.append(metrics.uniqueness_report(dbs, tol))
        reports.append(metrics.euclidean_report(dbs))
    rows = [{"metric": r.metric, "n": len(r.values), "mean": r.mean, "std": r.std} for r in reports]
    emit(render(rows, args.format), args.out)
    return EXIT_OK


def cmd_age(args, cfg: ExperimentConfig) -> int:
    db = _db(args, cfg)
    epochs = cfg.epochs if args.epochs is None else args.epochs
    if epochs < 1:
        raise PufError("epochs must be >= 1")
    device = cfg.device()
    policy = cfg.policy()
    rows = []
    for epoch in range(1, epochs + 1):
        device = age_device(device, 1, cfg.drift_sigma_rad_per_epoch)
        prover = HonestProver(device)
        verdicts = [authenticate(db, prover, policy, cfg.master_seed, counters=(epoch, t))
                    for t in range(cfg.age_trials)]
        rows.append({
            "epoch": epoch,
            "accept_fraction": float(np.mean([v.accept_fraction for v in verdicts])),
            "run_acceptance": float(np.mean([v.accepted for v in verdicts])),
        })
    emit(render(rows, args.format), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), default="json")

    p = argparse.ArgumentParser(prog="mzipuf", description="MZI-mesh quantum-readout PUF experiments")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("enroll", parents=[common], help="characterise a device, write the DB")

    a = sub.add_parser("authenticate", parents=[common], help="run the readout protocol")
    a.add_argument("--db")
    a.add_argument("--prover-seed", type=int, help="device seed of the prover (default: enrolled)")

    a = sub.add_parser("attack", parents=[common], help="empirical attack statistics")
    a.add_argument("name", help=f"one of {', '.join(ATTACKS)}")
    a.add_argument("--db")

    a = sub.add_parser("message-auth", parents=[common], help="classical or quantum message authentication")
    a.add_argument("--db")
    a.add_argument("--mode", choices=("classical", "quantum"), required=True)
    a.add_argument("--message", help="comma-separated integers")
    a.add_argument("--amplitudes", help="comma-separated (complex) routing amplitudes")
    a.add_argument("--prover-seed", type=int)
    a.add_argument("--transcript", help="transcript path (default: next to --out)")

    a = sub.add_parser("metrics", parents=[common], help="distance statistics as CSV/JSON")
    a.add_argument("--db", nargs="*")

    a = sub.add_parser("age", parents=[common], help="acceptance versus aging epoch")
    a.add_argument("--db")
    a.add_argument("--epochs", type=int)
    return p


COMMANDS = {
    "enroll": cmd_enroll,
    "authenticate": cmd_authenticate,
    "attack": cmd_attack,
    "message-auth": cmd_message_auth,
    "metrics": cmd_metrics,
    "age": cmd_age,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg.master_seed = args.seed
        return COMMANDS[args.command](args, cfg)
    except (PufError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
