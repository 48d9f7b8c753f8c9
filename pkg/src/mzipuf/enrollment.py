"""Enrollment database: recorded challenge-response pairs and CRP capacity.

File format (JSON Lines, UTF-8, one object per line, keys sorted):

    line 1   header  {"format": "mzipuf-enrollment", "format_version": 1,
                      "device_label", "created_at", "topology",
                      "input_coupling", "device_profile",
                      "crp_capacity_note", "record_count"}
    line 2+  record  {"challenge": {"challenge_id", "settings_rad", "input_modes"},
                      "expected_unitary": {"re": [[...]], "im": [[...]]},
                      "expected_histogram": {"bins": [...], "shots"},
                      "weights": {"omega_n", "omega_p"},
                      "enrollment_shots"}

Floats are written with Python's shortest round-trip representation, so a
load/save cycle is bit-exact. ``crp_capacity_note`` is a decimal string
because it can exceed 64 bits.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, NotEnrolledError, ParseError, UnsupportedVersionError
from .photonic_core import MeshTopology
from .puf_device import (
    Challenge,
    IntensityHistogram,
    PufDevice,
    ResponseWeights,
    classical_response,
    classical_weights,
    effective_transfer,
)

FORMAT_NAME = "mzipuf-enrollment"
FORMAT_VERSION = 1
DEFAULT_CREATED_AT = "1970-01-01T00:00:00Z"

SMALL_DEVICE_CRPS = 119_000  # 1.19e5 CRPs, 10-MZI example device
FULL_DEVICE_CRPS = 685 * 10**33  # 6.85e35 CRPs, full device


@dataclass(frozen=True)
class CrpCapacity:
    value: int
    provenance: str

    def __int__(self) -> int:
        return self.value


def catalan(n: int) -> int:
    """Exact Catalan number via ``C_{k+1} = C_k * 2(2k+1) / (k+2)``."""
    if n < 0:
        raise InvalidArgumentError("catalan(n) needs n >= 0")
    c = 1
    for k in range(n):
        c = c * 2 * (2 * k + 1) // (k + 2)
    return c


def crp_capacity(reference: str | int) -> CrpCapacity:
    """Published CRP counts for the two reference devices, or ``catalan(n)``."""
    if reference == "small_device":
        return CrpCapacity(SMALL_DEVICE_CRPS, "published constant: 1.19e5 CRPs for a 10-MZI device")
    if reference == "full_device":
        return CrpCapacity(FULL_DEVICE_CRPS, "published constant: 6.85e35 CRPs for the full device")
    if isinstance(reference, (int, np.integer)) and not isinstance(reference, bool):
        return CrpCapacity(catalan(int(reference)), f"catalan({int(reference)}) upper bound")
    raise InvalidArgumentError(
        f"unknown capacity reference {reference!r}; use 'small_device', 'full_device' or an int"
    )


@dataclass(frozen=True, eq=False)
class CrpRecord:
    challenge: Challenge
    expected_unitary: np.ndarray  # noise-free R @ U including the fingerprint
    expected_histogram: IntensityHistogram
    weights: ResponseWeights
    enrollment_shots: int | None

    def __post_init__(self):
        u = np.array(self.expected_unitary, dtype=complex)
        u.setflags(write=False)
        object.__setattr__(self, "expected_unitary", u)

    @property
    def challenge_id(self) -> int:
        return self.challenge.challenge_id

    def __eq__(self, other) -> bool:
        return isinstance(other, CrpRecord) and _record_to_dict(self) == _record_to_dict(other)


@dataclass(frozen=True, eq=False)
class EnrollmentDb:
    device_label: str
    topology: MeshTopology
    records: dict
    input_coupling: np.ndarray
    device_profile: dict = field(default_factory=dict)
    created_at: str = DEFAULT_CREATED_AT
    crp_capacity_note: int = 0

    def __post_init__(self):
        if not self.records:
            raise InvalidArgumentError("an enrollment database needs at least one record")
        for cid, rec in self.records.items():
            if cid != rec.challenge_id:
                raise InvalidArgumentError(f"record keyed {cid} holds challenge {rec.challenge_id}")
        coupling = np.array(self.input_coupling, dtype=float)
        coupling.setflags(write=False)
        object.__setattr__(self, "input_coupling", coupling)

    @property
    def challenge_ids(self) -> list[int]:
        return sorted(self.records)

    def record(self, challenge_id: int) -> CrpRecord:
        try:
            return self.records[challenge_id]
        except KeyError:
            raise NotEnrolledError(f"challenge {challenge_id} is not enrolled") from None

    def response_operator(self, challenge_id: int) -> np.ndarray:
        """Enrolled single-photon map ``R U diag(coupling)`` for a challenge."""
        return self.record(challenge_id).expected_unitary * self.input_coupling[None, :]

    def __eq__(self, other) -> bool:
        return isinstance(other, EnrollmentDb) and dumps_db(self) == dumps_db(other)


def enroll(
    device: PufDevice,
    challenges: Sequence[Challenge],
    shots: int | None,
    seed: int = 0,
    device_label: str | None = None,
    created_at: str = DEFAULT_CREATED_AT,
) -> EnrollmentDb:
    """Characterise ``device`` on every challenge.

    The stored unitary is noise-free; the histogram is an actual (noisy,
    shot-sampled) measurement using the stream ``[seed, challenge_id]``.
    """
    if not challenges:
        raise InvalidArgumentError("enrollment needs at least one challenge")
    records = {}
    for ch in challenges:
        if ch.challenge_id in records:
            raise InvalidArgumentError(f"duplicate challenge_id {ch.challenge_id}")
        transfer = effective_transfer(device, ch)
        records[ch.challenge_id] = CrpRecord(
            challenge=ch,
            expected_unitary=transfer,
            expected_histogram=classical_response(device, ch, shots, [seed, ch.challenge_id]),
            weights=classical_weights(device, ch, transfer),
            enrollment_shots=shots,
        )
    return EnrollmentDb(
        device_label=device_label if device_label is not None else f"device-{device.device_seed}",
        topology=device.topology,
        records=records,
        input_coupling=device.input_coupling,
        device_profile=device.profile(),
        created_at=created_at,
        crp_capacity_note=catalan(device.topology.n_mzis),
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _complex_matrix_to_dict(m: np.ndarray) -> dict:
    return {"re": m.real.tolist(), "im": m.imag.tolist()}


def _record_to_dict(rec: CrpRecord) -> dict:
    return {
        "challenge": rec.challenge.to_dict(),
        "expected_unitary": _complex_matrix_to_dict(rec.expected_unitary),
        "expected_histogram": {
            "bins": rec.expected_histogram.bins.tolist(),
            "shots": rec.expected_histogram.shots,
        },
        "weights": {"omega_n": rec.weights.omega_n, "omega_p": rec.weights.omega_p},
        "enrollment_shots": rec.enrollment_shots,
    }


def _header(db: EnrollmentDb) -> dict:
    return {
        "format": FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "device_label": db.device_label,
        "created_at": db.created_at,
        "topology": db.topology.to_dict(),
        "input_coupling": db.input_coupling.tolist(),
        "device_profile": db.device_profile,
        "crp_capacity_note": str(db.crp_capacity_note),
        "record_count": len(db.records),
    }


def _line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def dumps_db(db: EnrollmentDb) -> str:
    lines = [_line(_header(db))]
    lines += [_line(_record_to_dict(db.records[cid])) for cid in db.challenge_ids]
    return "\n".join(lines) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_db(db: EnrollmentDb, path) -> None:
    atomic_write_text(path, dumps_db(db))


def _get(obj: dict, key: str, line: int, prefix: str = ""):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError("missing field", line, prefix + key)
    return obj[key]


def _complex_matrix(obj, line: int, name: str) -> np.ndarray:
    try:
        re = np.array(_get(obj, "re", line, name + "."), dtype=float)
        im = np.array(_get(obj, "im", line, name + "."), dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad numeric data: {exc}", line, name) from None
    if re.shape != im.shape or re.ndim != 2:
        raise ParseError("real and imaginary parts differ in shape", line, name)
    return re + 1j * im


def _parse_record(obj: dict, line: int) -> CrpRecord:
    try:
        challenge = Challenge.from_dict(_get(obj, "challenge", line))
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad challenge: {exc}", line, "challenge") from None
    hist = _get(obj, "expected_histogram", line)
    weights = _get(obj, "weights", line)
    try:
        histogram = IntensityHistogram(
            np.array(_get(hist, "bins", line, "expected_histogram."), dtype=float),
            _get(hist, "shots", line, "expected_histogram."),
        )
        w = ResponseWeights(
            float(_get(weights, "omega_n", line, "weights.")),
            float(_get(weights, "omega_p", line, "weights.")),
        )
    except ParseError:
        raise
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad value: {exc}", line) from None
    return CrpRecord(
        challenge=challenge,
        expected_unitary=_complex_matrix(_get(obj, "expected_unitary", line), line, "expected_unitary"),
        expected_histogram=histogram,
        weights=w,
        enrollment_shots=_get(obj, "enrollment_shots", line),
    )


def loads_db(text: str) -> EnrollmentDb:
    """Parse a serialized database; nothing partial is ever returned."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty enrollment file", 1)
    parsed = []
    for number, raw in enumerate(lines, start=1):
        try:
            parsed.append(json.loads(raw))
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg} at column {exc.colno}", number) from None
    header = parsed[0]
    if _get(header, "format", 1) != FORMAT_NAME:
        raise ParseError(f"not an enrollment file (format={header.get('format')!r})", 1, "format")
    version = _get(header, "format_version", 1)
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"enrollment format version {version!r} not supported (expected {FORMAT_VERSION})"
        )
    expected = _get(header, "record_count", 1)
    if len(parsed) - 1 != expected:
        raise ParseError(
            f"truncated or padded file: header announces {expected} records, found {len(parsed) - 1}",
            len(parsed),
            "record_count",
        )
    try:
        topology = MeshTopology.from_dict(_get(header, "topology", 1))
        capacity = int(_get(header, "crp_capacity_note", 1))
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad header value: {exc}", 1) from None
    records = {}
    for number, obj in enumerate(parsed[1:], start=2):
        rec = _parse_record(obj, number)
        if rec.challenge_id in records:
            raise ParseError(f"duplicate challenge_id {rec.challenge_id}", number, "challenge.challenge_id")
        n = topology.n_modes
        if rec.expected_unitary.shape != (n, n):
            raise ParseError("matrix shape does not match topology", number, "expected_unitary")
        records[rec.challenge_id] = rec
    return EnrollmentDb(
        device_label=_get(header, "device_label", 1),
        topology=topology,
        records=records,
        input_coupling=np.array(_get(header, "input_coupling", 1), dtype=float),
        device_profile=_get(header, "device_profile", 1),
        created_at=_get(header, "created_at", 1),
        crp_capacity_note=capacity,
    )


def load_db(path) -> EnrollmentDb:
    return loads_db(Path(path).read_text(encoding="utf-8"))
