"""Prover/verifier simulations of the quantum-readout authentication protocol
and the classical and quantum message-authentication protocols built on it.

Seed schedule
-------------
Every protocol run expands one ``master_seed`` into independent streams with
``numpy.random.default_rng([master_seed, STREAM, *counters])``:

* ``STATE_STREAM``   verifier: challenge-id choice, then Haar challenge states
* ``NOISE_STREAM``   prover: per-invocation phase jitter
* ``MEASURE_STREAM`` verifier: projective-measurement outcomes
* ``ATTACK_STREAM``  adversaries (see :mod:`mzipuf.adversary`)

Compound protocols add a counter per sub-run (e.g. the message position).
Within a stream, rounds consume random numbers in round order, so
``authenticate`` with one round reproduces ``readout_round`` called with the
per-stream generators.

Frames
------
Every message between the roles is a :class:`Frame`
``{protocol, round, kind, payload}``. A block of rounds travels in one frame;
``round`` is the index of its first round.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .enrollment import EnrollmentDb
from .errors import ChannelClosedError, InvalidArgumentError, NotEnrolledError, PufError
from .photonic_core import haar_states
from .puf_device import Challenge, PufDevice, quantum_response_batch, route_superposed_batch

STATE_STREAM = 11
NOISE_STREAM = 12
MEASURE_STREAM = 13
ATTACK_STREAM = 14

_BLOCK = 8192  # rounds per prover evaluation chunk (bounds memory of noisy transfers)
_P_ONE = 1.0 - 1e-12


def derive_rng(master_seed: int, stream: int, *counters: int) -> np.random.Generator:
    return np.random.default_rng([int(master_seed), int(stream), *(int(c) for c in counters)])


# ---------------------------------------------------------------------------
# Policy, messages, transcript, verdict
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VerificationPolicy:
    """Acceptance window of the verifier.

    ``scale_constant=None`` compares the response weight with the enrolled
    omega_n * omega_p expected for the very state that was sent; a number
    compares against that fixed scalar instead.
    """

    epsilon: float = 0.02
    scale_constant: float | None = None
    rounds: int = 20
    min_accept_fraction: float = 0.9

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise InvalidArgumentError("epsilon must be >= 0")
        if int(self.rounds) < 1:
            raise InvalidArgumentError("a policy needs at least one round")
        if not 0.0 <= self.min_accept_fraction <= 1.0:
            raise InvalidArgumentError("min_accept_fraction must lie in [0, 1]")
        if self.scale_constant is not None and self.scale_constant < 0:
            raise InvalidArgumentError("scale_constant must be non-negative")


@dataclass(frozen=True)
class MessageVector:
    elements: tuple
    crp_index_sequence: tuple


@dataclass(frozen=True)
class TranscriptEvent:
    round: int
    challenge_id: int
    state: str
    response_weight: float
    accept_probability: float
    accept: bool


@dataclass(frozen=True, eq=False)
class ProtocolTranscript:
    """Columnar audit trail; one entry per round."""

    protocol: str
    state_source: str
    round_index: np.ndarray
    challenge_id: np.ndarray
    response_weight: np.ndarray
    accept_probability: np.ndarray
    accept: np.ndarray
    public_k: tuple = ()

    def __len__(self) -> int:
        return int(self.round_index.size)

    @property
    def events(self) -> list[TranscriptEvent]:
        return [
            TranscriptEvent(
                int(r), int(c), f"{self.state_source}#{int(r)}", float(w), float(p), bool(a)
            )
            for r, c, w, p, a in zip(
                self.round_index, self.challenge_id, self.response_weight,
                self.accept_probability, self.accept,
            )
        ]

    def to_jsonl(self) -> str:
        header = {
            "format": "mzipuf-transcript",
            "format_version": 1,
            "protocol": self.protocol,
            "state_source": self.state_source,
            "public_k": list(self.public_k),
            "event_count": len(self),
        }
        lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
        lines += [json.dumps(asdict(e), sort_keys=True, separators=(",", ":")) for e in self.events]
        return "\n".join(lines) + "\n"

    @staticmethod
    def concatenate(parts: Sequence["ProtocolTranscript"], protocol: str, public_k=()) -> "ProtocolTranscript":
        offsets = np.cumsum([0] + [len(p) for p in parts[:-1]])
        return ProtocolTranscript(
            protocol=protocol,
            state_source=";".join(p.state_source for p in parts),
            round_index=np.concatenate([p.round_index + o for p, o in zip(parts, offsets)]),
            challenge_id=np.concatenate([p.challenge_id for p in parts]),
            response_weight=np.concatenate([p.response_weight for p in parts]),
            accept_probability=np.concatenate([p.accept_probability for p in parts]),
            accept=np.concatenate([p.accept for p in parts]),
            public_k=tuple(public_k),
        )


@dataclass(frozen=True)
class VerdictReport:
    """Outcome of a protocol run.

    ``accepted`` is always ``accept_fraction >= threshold``. For the plain
    readout the fraction counts accepted rounds and the threshold is the
    policy's ``min_accept_fraction``; compound protocols count passed
    sub-checks and require all of them (threshold 1).
    """

    accepted: bool
    accept_fraction: float
    rounds: int
    policy: VerificationPolicy
    transcript: ProtocolTranscript = field(repr=False)
    threshold: float = 1.0
    estimates: tuple | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "accepted": bool(self.accepted),
            "accept_fraction": float(self.accept_fraction),
            "rounds": int(self.rounds),
            "threshold": float(self.threshold),
            "policy": asdict(self.policy),
            "protocol": self.transcript.protocol,
            "public_k": list(self.transcript.public_k),
        }
        if self.estimates is not None:
            out["estimates"] = [float(x) for x in self.estimates]
        out.update(self.details)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


# ---------------------------------------------------------------------------
# Channel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Frame:
    protocol: str
    round: int
    kind: str
    payload: Any

    def to_wire(self) -> str:
        """Stable JSON rendering of the frame (complex arrays as re/im)."""
        return json.dumps(
            {"protocol": self.protocol, "round": self.round, "kind": self.kind,
             "payload": _wire(self.payload)},
            sort_keys=True, separators=(",", ":"),
        )


def _wire(obj):
    if isinstance(obj, Challenge):
        return obj.to_dict()
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": obj.real.tolist(), "im": obj.imag.tolist()}
        return obj.tolist()
    if isinstance(obj, dict):
        return {str(k): _wire(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_wire(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


Interposer = Callable[[Frame], Frame]


class Channel:
    """In-order, lossless, in-process duplex channel with an optional MITM hook.

    ``interposer`` sees every frame on ``send`` and returns the frame to
    deliver. ``log`` keeps ``(sent, delivered)`` pairs for auditing.
    """

    def __init__(self, interposer: Interposer | None = None, keep_log: bool = True):
        self.interposer = interposer
        self.keep_log = keep_log
        self.log: list[tuple[Frame, Frame]] = []
        self._queue: deque[Frame] = deque()
        self._closed = False

    def send(self, frame: Frame) -> None:
        if self._closed:
            raise ChannelClosedError("send on a closed channel")
        delivered = self.interposer(frame) if self.interposer is not None else frame
        if self.keep_log:
            self.log.append((frame, delivered))
        self._queue.append(delivered)

    def recv(self) -> Frame:
        if self._closed:
            raise ChannelClosedError("recv on a closed channel")
        if not self._queue:
            raise PufError("no frame pending on channel")
        return self._queue.popleft()

    def close(self) -> None:
        self._closed = True

    @property
    def closed(self) -> bool:
        return self._closed


def channel_send(channel: Channel, frame: Frame) -> None:
    channel.send(frame)


def channel_recv(channel: Channel) -> Frame:
    return channel.recv()


# ---------------------------------------------------------------------------
# Provers
# ---------------------------------------------------------------------------


class HonestProver:
    """Holder of a physical device; answers every challenge with it."""

    def __init__(self, device: PufDevice):
        self.device = device

    def respond(self, challenges: dict, challenge_ids: np.ndarray, states: np.ndarray, rng) -> np.ndarray:
        out = np.empty_like(states, dtype=complex)
        for start in range(0, len(states), _BLOCK):
            stop = start + _BLOCK
            ids = challenge_ids[start:stop]
            for cid in np.unique(ids):
                sel = np.flatnonzero(ids == cid) + start
                out[sel] = quantum_response_batch(self.device, challenges[int(cid)], states[sel], rng)
        return out

    def route(self, challenges: Sequence[Challenge], amplitudes, states: np.ndarray, rng) -> np.ndarray:
        out = np.empty_like(states, dtype=complex)
        for start in range(0, len(states), _BLOCK):
            sl = slice(start, start + _BLOCK)
            out[sl] = route_superposed_batch(self.device, challenges, amplitudes, states[sl], rng)
        return out


# ---------------------------------------------------------------------------
# Quantum readout
# ---------------------------------------------------------------------------


def _expected_responses(db: EnrollmentDb, challenge_ids: np.ndarray, states: np.ndarray) -> np.ndarray:
    expected = np.empty_like(states, dtype=complex)
    for cid in np.unique(challenge_ids):
        sel = challenge_ids == cid
        expected[sel] = states[sel] @ db.response_operator(int(cid)).T
    return expected


def _readout_block(
    db: EnrollmentDb,
    prover,
    challenge_ids: np.ndarray,
    states: np.ndarray,
    noise_rng,
    measure_rng,
    policy: VerificationPolicy,
    channel: Channel,
    protocol: str,
    round0: int = 0,
):
    for cid in np.unique(challenge_ids):
        if int(cid) not in db.records:
            raise NotEnrolledError(f"challenge {int(cid)} is not enrolled")
    challenges = {int(c): db.records[int(c)].challenge for c in np.unique(challenge_ids)}

    # verifier -> prover
    channel.send(Frame(protocol, round0, "challenge",
                       {"challenges": challenges, "challenge_ids": challenge_ids, "states": states}))
    got = channel.recv()
    out = prover.respond(got.payload["challenges"], np.asarray(got.payload["challenge_ids"]),
                         np.asarray(got.payload["states"]), noise_rng)
    # prover -> verifier
    channel.send(Frame(protocol, round0, "response", {"states": out}))
    out = np.asarray(channel.recv().payload["states"], dtype=complex)

    expected = _expected_responses(db, challenge_ids, states)
    w_expected = np.sum(np.abs(expected) ** 2, axis=1)
    if policy.scale_constant is not None:
        w_expected = np.full_like(w_expected, policy.scale_constant)
    w = np.sum(np.abs(out) ** 2, axis=1)
    overlap = np.abs(np.sum(expected.conj() * out, axis=1)) ** 2
    denom = np.sum(np.abs(expected) ** 2, axis=1) * w
    p = np.divide(overlap, denom, out=np.zeros_like(overlap), where=denom > 0)
    p = np.where(p > _P_ONE, 1.0, np.minimum(p, 1.0))
    u = measure_rng.random(len(states))
    accept = (u < p) & (np.abs(w - w_expected) <= policy.epsilon)
    return accept, p, w


@dataclass(frozen=True)
class RoundResult:
    accept: bool
    event: TranscriptEvent


def readout_round(
    db: EnrollmentDb,
    prover,
    challenge_id: int,
    state_seed,
    noise_seed,
    policy: VerificationPolicy,
    measure_seed=None,
    channel: Channel | None = None,
) -> RoundResult:
    """One verifier/prover exchange on an enrolled challenge.

    The verifier sends a Haar-random state; the prover returns its device
    response; the verifier accepts when the response weight is within
    ``epsilon`` of the enrolled expectation and a two-outcome projective
    measurement onto the normalised enrolled response clicks positive.
    """
    db.record(challenge_id)
    state_rng = np.random.default_rng(state_seed)
    noise_rng = np.random.default_rng(noise_seed)
    if measure_seed is None:
        measure_seed = [*np.atleast_1d(state_seed).tolist(), *np.atleast_1d(noise_seed).tolist(), MEASURE_STREAM]
    measure_rng = np.random.default_rng(measure_seed)
    states = haar_states(db.topology.n_modes, 1, state_rng)
    ids = np.array([challenge_id])
    accept, p, w = _readout_block(db, prover, ids, states, noise_rng, measure_rng, policy,
                                  channel or Channel(), "readout")
    event = TranscriptEvent(0, int(challenge_id), f"haar(seed={state_seed})#0", float(w[0]), float(p[0]), bool(accept[0]))
    return RoundResult(bool(accept[0]), event)


def authenticate(
    db: EnrollmentDb,
    prover,
    policy: VerificationPolicy,
    master_seed: int,
    channel: Channel | None = None,
    challenge_ids: Sequence[int] | None = None,
    counters: Sequence[int] = (),
) -> VerdictReport:
    """Run ``policy.rounds`` readout rounds; accept if enough rounds pass."""
    pool = np.array(sorted(challenge_ids) if challenge_ids is not None else db.challenge_ids)
    for cid in pool:
        db.record(int(cid))
    state_rng = derive_rng(master_seed, STATE_STREAM, *counters)
    noise_rng = derive_rng(master_seed, NOISE_STREAM, *counters)
    measure_rng = derive_rng(master_seed, MEASURE_STREAM, *counters)
    n = int(policy.rounds)
    ids = pool[state_rng.integers(0, len(pool), size=n)] if len(pool) > 1 else np.repeat(pool, n)
    states = haar_states(db.topology.n_modes, n, state_rng)
    accept, p, w = _readout_block(db, prover, ids, states, noise_rng, measure_rng, policy,
                                  channel or Channel(), "readout")
    fraction = float(np.mean(accept))
    source = f"haar(master={int(master_seed)},stream={STATE_STREAM},counters={list(counters)})"
    transcript = ProtocolTranscript("readout", source, np.arange(n), ids.astype(int), w, p, accept)
    return VerdictReport(
        accepted=fraction >= policy.min_accept_fraction,
        accept_fraction=fraction,
        rounds=n,
        policy=policy,
        transcript=transcript,
        threshold=policy.min_accept_fraction,
    )


# ---------------------------------------------------------------------------
# Classical message authentication
# ---------------------------------------------------------------------------


def encode_message(message: Sequence[int], crp_count: int) -> MessageVector:
    """Map each message element to CRP index ``(element mod crp_count) + 1``."""
    message = tuple(int(x) for x in message)
    if not message:
        raise InvalidArgumentError("cannot encode an empty message")
    if crp_count < 2:
        raise InvalidArgumentError("crp_count must be >= 2")
    return MessageVector(message, tuple(x % crp_count + 1 for x in message))


def classical_message_auth(
    db: EnrollmentDb,
    prover,
    message: Sequence[int],
    policy: VerificationPolicy,
    master_seed: int,
    channel: Channel | None = None,
) -> VerdictReport:
    """Authenticate a classical message element by element.

    The prover publishes the CRP index sequence in the clear; for each
    received index the verifier runs a readout restricted to that CRP.
    Index ``i`` refers to the ``i``-th enrolled challenge in id order.
    """
    channel = channel or Channel()
    ids = db.challenge_ids
    encoded = encode_message(message, len(ids))
    channel.send(Frame("classical_message", 0, "crp_indices", {"indices": encoded.crp_index_sequence}))
    received = tuple(int(k) for k in channel.recv().payload["indices"])
    for k in received:
        if not 1 <= k <= len(ids):
            raise NotEnrolledError(f"CRP index {k} is not enrolled (have {len(ids)})")
    verdicts = [
        authenticate(db, prover, policy, master_seed, channel, [ids[k - 1]], counters=(pos,))
        for pos, k in enumerate(received)
    ]
    passed = sum(v.accepted for v in verdicts)
    fraction = passed / len(verdicts)
    transcript = ProtocolTranscript.concatenate(
        [v.transcript for v in verdicts], "classical_message", public_k=received
    )
    return VerdictReport(
        accepted=fraction >= 1.0,
        accept_fraction=fraction,
        rounds=len(transcript),
        policy=policy,
        transcript=transcript,
        threshold=1.0,
        details={
            "sent_k": list(encoded.crp_index_sequence),
            "per_index_accept_fraction": [v.accept_fraction for v in verdicts],
        },
    )


# ---------------------------------------------------------------------------
# Quantum message authentication
# ---------------------------------------------------------------------------


def _dual_vectors(branches: np.ndarray, which: np.ndarray | None = None) -> np.ndarray:
    """Biorthogonal partners of the branch responses (Gram-matrix correction).

    ``branches`` has shape ``(B, d, K)``. Without ``which`` the result ``S``
    has the same shape and satisfies ``S[b]^H @ branches[b] = I_K``; with
    ``which`` (shape ``(B,)``) only the dual of branch ``which[b]`` is
    returned, shape ``(B, d)``.
    """
    gram = np.matmul(np.conj(np.swapaxes(branches, 1, 2)), branches)
    if which is None:
        return np.matmul(branches, np.linalg.inv(gram))
    rhs = np.zeros(gram.shape[:2] + (1,), dtype=complex)
    rhs[np.arange(len(which)), which, 0] = 1.0
    return np.matmul(branches, np.linalg.solve(gram, rhs))[:, :, 0]


def quantum_message_auth(
    db: EnrollmentDb,
    prover,
    amplitudes: Sequence[complex],
    policy: VerificationPolicy,
    master_seed: int,
    crp_ids: Sequence[int] | None = None,
    claimed_probabilities: Sequence[float] | None = None,
    channel: Channel | None = None,
) -> VerdictReport:
    """Verify a superposed routing of challenge states over several CRPs.

    Each repetition the verifier sends a fresh Haar state and the prover
    returns ``sum_k a_k R_k U_k |psi>``. Repetition ``b`` probes branch
    ``b mod K`` with a projective measurement onto the normalised dual
    vector of that branch's enrolled response; scaling clicks by the dual's
    squared norm gives an unbiased estimate of ``|a_k|^2``. Every
    ``(K + 1)``-th repetition instead projects onto the orthogonal
    complement of the enrolled responses: an honest response lies in their
    span, so clicks there estimate the weight that leaks out of it.

    Accepts when every estimate lies within ``epsilon`` of the claimed
    probability (default ``|a_k|^2``), the estimates sum to at most
    ``1 + epsilon`` and the leaked weight is at most ``epsilon``.
    """
    amplitudes = np.asarray(amplitudes, dtype=complex).reshape(-1)
    total = float(np.sum(np.abs(amplitudes) ** 2))
    if abs(total - 1.0) > 1e-9:
        raise InvalidArgumentError(
            f"routing amplitudes must satisfy |α|² + |β|² + |γ|² = 1 (got {total:.12g})"
        )
    if amplitudes.size < 2:
        raise InvalidArgumentError("quantum message authentication needs at least two CRPs")
    ids = list(crp_ids) if crp_ids is not None else db.challenge_ids[: amplitudes.size]
    if len(ids) != amplitudes.size:
        raise InvalidArgumentError(f"{amplitudes.size} amplitudes for {len(ids)} CRPs")
    challenges = [db.record(int(c)).challenge for c in ids]
    claimed = (
        np.abs(amplitudes) ** 2 if claimed_probabilities is None
        else np.asarray(claimed_probabilities, dtype=float)
    )
    channel = channel or Channel()
    k_count = len(ids)
    n = int(policy.rounds)

    state_rng = derive_rng(master_seed, STATE_STREAM)
    noise_rng = derive_rng(master_seed, NOISE_STREAM)
    measure_rng = derive_rng(master_seed, MEASURE_STREAM)
    states = haar_states(db.topology.n_modes, n, state_rng)

    channel.send(Frame("quantum_message", 0, "route_request", {"challenges": challenges, "states": states}))
    got = channel.recv()
    out = prover.route(got.payload["challenges"], amplitudes, np.asarray(got.payload["states"]), noise_rng)
    channel.send(Frame("quantum_message", 0, "response", {"states": out}))
    out = np.asarray(channel.recv().payload["states"], dtype=complex)

    operators = [db.response_operator(int(c)) for c in ids]
    branch = np.arange(n) % (k_count + 1)  # branch k_count = complement probe
    sums = np.zeros(k_count + 1)
    p_all = np.empty(n)
    clicks = np.empty(n, dtype=bool)
    u = measure_rng.random(n)
    for start in range(0, n, _BLOCK):
        sl = slice(start, start + _BLOCK)
        r = np.stack([states[sl] @ op.T for op in operators], axis=2)
        b = branch[sl]
        dual = b < k_count
        s = _dual_vectors(r[dual], b[dual])
        s_norm2 = np.ones(b.size)
        s_norm2[dual] = np.sum(np.abs(s) ** 2, axis=1)
        p = np.empty(b.size)
        p[dual] = np.abs(np.sum(s.conj() * out[sl][dual], axis=1)) ** 2 / s_norm2[dual]
        if not dual.all():
            q, _ = np.linalg.qr(r[~dual])
            o = out[sl][~dual]
            inside = np.matmul(np.conj(np.swapaxes(q, 1, 2)), o[:, :, None])[:, :, 0]
            p[~dual] = np.sum(np.abs(o) ** 2, axis=1) - np.sum(np.abs(inside) ** 2, axis=1)
        p = np.clip(p, 0.0, 1.0)
        hit = u[sl] < p
        np.add.at(sums, b, s_norm2 * hit)
        p_all[sl] = p
        clicks[sl] = hit
    counts = np.bincount(branch, minlength=k_count + 1)
    sums = sums / np.maximum(counts, 1)
    estimates, leakage = sums[:k_count], float(sums[k_count])

    component_ok = np.abs(estimates - claimed) <= policy.epsilon
    sum_ok = float(np.sum(estimates)) <= 1.0 + policy.epsilon
    checks = [*component_ok.tolist(), sum_ok, leakage <= policy.epsilon]
    fraction = sum(checks) / len(checks)
    transcript = ProtocolTranscript(
        "quantum_message",
        f"haar(master={int(master_seed)},stream={STATE_STREAM})",
        np.arange(n),
        np.append(np.asarray(ids, dtype=int), -1)[branch],
        np.sum(np.abs(out) ** 2, axis=1),
        p_all,
        clicks,
    )
    return VerdictReport(
        accepted=fraction >= 1.0,
        accept_fraction=fraction,
        rounds=n,
        policy=policy,
        transcript=transcript,
        threshold=1.0,
        estimates=tuple(float(x) for x in estimates),
        details={
            "crp_ids": [int(c) for c in ids],
            "claimed_probabilities": [float(x) for x in claimed],
            "proportionality": float(np.sum(estimates) / np.sum(claimed)),
            "leakage": leakage,
        },
    )
