"""Attacks on the readout protocol and their empirical success rates.

The challenge-estimation adversary measures intercepted challenge states in
a random orthonormal basis and forwards its best guess; its Haar-average
success is ``2 / (1 + d)`` for one copy and at most ``(q + 1) / (q + d)``
when ``q`` copies of the same state are available. The adversary may know
the full device model but has no quantum device of its own.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .enrollment import EnrollmentDb, enroll
from .errors import InvalidArgumentError
from .photonic_core import (
    MeshTopology,
    PureState,
    haar_states,
    haar_unitaries,
    mesh_unitary,
    sample_outcomes,
)
from .protocols import (
    ATTACK_STREAM,
    Channel,
    Frame,
    HonestProver,
    VerificationPolicy,
    _dual_vectors,
    _readout_block,
    authenticate,
    derive_rng,
)
from .puf_device import (
    Challenge,
    PufDevice,
    new_device,
    random_challenges,
    route_superposed_batch,
)


@dataclass(frozen=True)
class AttackReport:
    attack: str
    d: int
    q: int
    trials: int
    success_rate: float
    bound: float | None
    standard_error: float = field(init=False)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        p = self.success_rate
        object.__setattr__(self, "standard_error", math.sqrt(max(p * (1 - p), 0.0) / self.trials))

    def within_bound(self, n_sigma: float = 3.0) -> bool:
        return self.bound is None or self.success_rate <= self.bound + n_sigma * self.standard_error

    def row(self) -> dict:
        out = asdict(self)
        extra = out.pop("extra")
        out.update(extra)
        return out

    def to_json(self) -> str:
        return json.dumps(self.row(), sort_keys=True)


# ---------------------------------------------------------------------------
# Measure-and-resend
# ---------------------------------------------------------------------------


def measure_resend_batch(states: np.ndarray, rng: np.random.Generator, return_basis: bool = False):
    """Measure each row in its own Haar-random basis; return the outcome vectors."""
    states = np.asarray(states, dtype=complex)
    count, d = states.shape
    bases = haar_unitaries(d, count, rng)
    amps = np.einsum("bji,bj->bi", bases.conj(), states)  # <b_i|psi>
    idx = sample_outcomes(np.abs(amps) ** 2, rng)
    guesses = bases[np.arange(count), :, idx]
    return (guesses, bases) if return_basis else guesses


def measure_resend(state: PureState, basis_seed) -> PureState:
    if not state.normalized:
        raise InvalidArgumentError("measure_resend needs a normalized state")
    rng = np.random.default_rng(basis_seed)
    return PureState(measure_resend_batch(state.amplitudes[None, :], rng)[0])


def estimate_from_copies(states: np.ndarray, q: int, rng: np.random.Generator) -> np.ndarray:
    """Best guess from ``q`` consecutive copies per group.

    Each copy is measured in an independent random basis; the guess is the
    principal eigenvector of the sum of the outcome projectors.
    """
    count, d = states.shape
    if count % q:
        raise InvalidArgumentError("state count must be a multiple of q")
    outcomes = measure_resend_batch(states, rng).reshape(count // q, q, d)
    if q == 1:
        return outcomes[:, 0, :]
    proj = np.einsum("gqi,gqj->gij", outcomes, outcomes.conj())
    _, vecs = np.linalg.eigh(proj)
    return vecs[:, :, -1]


class MeasureResendInterposer:
    """Man-in-the-middle that swaps challenge states for its estimates.

    With ``q > 1`` consecutive groups of ``q`` rounds carry copies of the
    same state and are estimated jointly.
    """

    def __init__(self, rng: np.random.Generator, q: int = 1):
        self.rng = rng
        self.q = q
        self.intercepted = 0

    def __call__(self, frame: Frame) -> Frame:
        if frame.kind != "challenge":
            return frame
        states = np.asarray(frame.payload["states"])
        guesses = estimate_from_copies(states, self.q, self.rng)
        forwarded = np.repeat(guesses, self.q, axis=0)
        self.intercepted += len(states)
        return Frame(frame.protocol, frame.round, frame.kind, {**frame.payload, "states": forwarded})


class ImpersonatingProver:
    """Adversary without the device that answers from a leaked device model."""

    def __init__(self, model: EnrollmentDb, rng: np.random.Generator):
        self.model = model
        self.rng = rng

    def respond(self, challenges, challenge_ids, states, rng) -> np.ndarray:
        guesses = measure_resend_batch(states, self.rng)
        out = np.empty_like(guesses)
        for cid in np.unique(challenge_ids):
            sel = challenge_ids == cid
            out[sel] = guesses[sel] @ self.model.response_operator(int(cid)).T
        return out


def _lossless_setup(d: int, seed: int) -> tuple[PufDevice, EnrollmentDb]:
    topology = MeshTopology.triangular(d)
    device = new_device(topology, seed, 0.1, (1.0, 1.0), (1.0, 1.0), 0.0)
    db = enroll(device, random_challenges(topology, 4, [seed, 1]), None, seed)
    return device, db


def bound_experiment(d: int, q: int, trials: int, seed: int) -> AttackReport:
    """Per-qubit acceptance of the copy-estimation adversary against the readout.

    Each trial the verifier sends ``q`` copies of one Haar state on ``q``
    rails; the adversary intercepts all of them, forwards its estimate on
    every rail to the honest device, and the verifier checks each rail.
    """
    if d < 2 or not 1 <= q <= 3 or trials < 1000:
        raise InvalidArgumentError("bound_experiment needs d >= 2, 1 <= q <= 3, trials >= 1000")
    device, db = _lossless_setup(d, seed)
    policy = VerificationPolicy(epsilon=0.02, rounds=trials * q, min_accept_fraction=0.0)
    state_rng = derive_rng(seed, 11, d, q)
    ids = np.array(db.challenge_ids)[state_rng.integers(0, len(db.records), size=trials)]
    states = haar_states(d, trials, state_rng)
    channel = Channel(MeasureResendInterposer(derive_rng(seed, ATTACK_STREAM, d, q), q), keep_log=False)
    accept, _, _ = _readout_block(
        db, HonestProver(device), np.repeat(ids, q), np.repeat(states, q, axis=0),
        derive_rng(seed, 12, d, q), derive_rng(seed, 13, d, q), policy, channel, "readout",
    )
    return AttackReport(
        "measure_resend", d, q, trials * q, float(np.mean(accept)), (q + 1) / (q + d),
        {"protocol_trials": trials},
    )


def measure_resend_fidelity(d: int, trials: int, seed: int) -> AttackReport:
    """Mean fidelity of measure-resend guesses to Haar inputs (no protocol)."""
    rng = np.random.default_rng([seed, ATTACK_STREAM, d])
    states = haar_states(d, trials, rng)
    guesses = measure_resend_batch(states, rng)
    f = np.abs(np.sum(states.conj() * guesses, axis=1)) ** 2
    rep = AttackReport("measure_resend_fidelity", d, 1, trials, float(f.mean()), 2 / (1 + d))
    object.__setattr__(rep, "standard_error", float(f.std(ddof=1) / math.sqrt(trials)))
    return rep


def measure_resend_sweep(dims: Sequence[int], trials: int, seed: int) -> list[AttackReport]:
    return [bound_experiment(d, 1, trials, seed) for d in dims]


# ---------------------------------------------------------------------------
# Clone substitution
# ---------------------------------------------------------------------------


def clone_attack(
    db: EnrollmentDb,
    true_seed: int,
    clone_seed: int,
    policy: VerificationPolicy,
    trials: int,
    seed: int = 0,
) -> AttackReport:
    """Authenticate with a device built from the same profile but another seed."""
    if clone_seed == true_seed:
        raise InvalidArgumentError("clone_seed must differ from true_seed")
    if trials < 1:
        raise InvalidArgumentError("trials must be >= 1")
    profile = db.device_profile
    clone = new_device(
        db.topology,
        clone_seed,
        profile.get("fab_sigma_rad", 0.1),
        tuple(profile.get("loss_range", (1.0, 1.0))),
        tuple(profile.get("coupling_range", (1.0, 1.0))),
        profile.get("noise_sigma_rad", 0.0),
    )
    prover = HonestProver(clone)
    verdicts = [authenticate(db, prover, policy, seed, counters=(t,)) for t in range(trials)]
    accepted = float(np.mean([v.accepted for v in verdicts]))
    round_rate = float(np.mean([v.accept_fraction for v in verdicts]))
    return AttackReport(
        "clone", db.topology.n_modes, 1, trials, accepted, None,
        {"rounds": policy.rounds, "per_round_accept": round_rate,
         "min_accept_fraction": policy.min_accept_fraction},
    )


# ---------------------------------------------------------------------------
# Amplitude probing without enrollment data
# ---------------------------------------------------------------------------


class HiddenRoutingProver:
    """Device holder that routes every incoming state with fixed secret amplitudes."""

    def __init__(self, device: PufDevice, amplitudes: Sequence[complex]):
        self.device = device
        self._amplitudes = np.asarray(amplitudes, dtype=complex)

    def route(self, challenges: Sequence[Challenge], states: np.ndarray, rng) -> np.ndarray:
        return route_superposed_batch(self.device, challenges, self._amplitudes, states, rng)


@dataclass(frozen=True)
class ProbeReport:
    estimate: tuple
    standard_error: tuple
    probe_count: int
    validated: bool = False
    note: str = (
        "estimated from nominal (fingerprint-free) mesh models; without the registered "
        "omega_p the estimate cannot be matched to the enrolled CRP weights"
    )


def validate_against_registration(estimate: Sequence[float], registered=None, epsilon: float = 0.02) -> bool:
    """Check an amplitude estimate against registered expectations.

    An outside adversary has no registration data, so with ``registered``
    missing the check fails.
    """
    if registered is None:
        return False
    return bool(np.all(np.abs(np.asarray(estimate) - np.asarray(registered)) <= epsilon))


def amplitude_probe(
    prover: HiddenRoutingProver,
    challenges: Sequence[Challenge],
    probe_count: int,
    seed: int,
) -> ProbeReport:
    """Estimate branch probabilities of a routing prover from its public settings only."""
    if probe_count < len(challenges):
        raise InvalidArgumentError("need at least one probe per branch")
    topology = prover.device.topology
    k_count = len(challenges)
    models = [mesh_unitary(topology, ch.settings) for ch in challenges]
    rng = np.random.default_rng([seed, ATTACK_STREAM])
    states = haar_states(topology.n_modes, probe_count, rng)
    out = prover.route(challenges, states, np.random.default_rng([seed, ATTACK_STREAM, 1]))
    branches = np.stack([states @ m.T for m in models], axis=2)
    branch = np.arange(probe_count) % k_count
    s = _dual_vectors(branches, branch)
    s_norm2 = np.sum(np.abs(s) ** 2, axis=1)
    p = np.minimum(np.abs(np.sum(s.conj() * out, axis=1)) ** 2 / s_norm2, 1.0)
    values = s_norm2 * (rng.random(probe_count) < p)
    est, se = [], []
    for k in range(k_count):
        v = values[branch == k]
        est.append(float(v.mean()))
        se.append(float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else float("inf"))
    return ProbeReport(tuple(est), tuple(se), probe_count)
