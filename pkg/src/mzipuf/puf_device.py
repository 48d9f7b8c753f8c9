"""Simulated physical PUF instances built on a phase-programmable MZI mesh.

Device uniqueness comes from a static per-MZI phase offset (the
fingerprint) added to every commanded setting, plus per-mode output loss and
input coupling. Operational noise is fresh Gaussian jitter on every phase
for each invocation.

Random streams are derived from integer seeds with
``numpy.random.default_rng([seed, STREAM_ID, ...])`` so every quantity is
reproducible from explicit seeds alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError
from .photonic_core import (
    DensityMatrix,
    MeshTopology,
    PhaseSettings,
    PureState,
    mesh_apply_batch,
    mesh_unitary_batch,
)

# stream identifiers for seed derivation
_FAB_STREAM = 1
_LOSS_STREAM = 2
_COUPLING_STREAM = 3
_AGE_STREAM = 4

DEFAULT_FAB_SIGMA = 0.1
DEFAULT_NOISE_SIGMA = 0.005
DEFAULT_LOSS_RANGE = (0.5, 1.0)
DEFAULT_COUPLING_RANGE = (0.8, 1.0)


@dataclass(frozen=True, eq=False)
class PufDevice:
    topology: MeshTopology
    fingerprint: np.ndarray  # (n_mzis, 2): static (d_theta, d_phi) offsets
    loss: np.ndarray  # (n_modes,) output amplitude transmission
    input_coupling: np.ndarray  # (n_modes,) input amplitude efficiency
    noise_sigma: float
    age_epochs: int
    device_seed: int
    fab_sigma: float = DEFAULT_FAB_SIGMA
    loss_range: tuple = DEFAULT_LOSS_RANGE
    coupling_range: tuple = DEFAULT_COUPLING_RANGE

    def __post_init__(self):
        fp = np.array(self.fingerprint, dtype=float).reshape(-1, 2)
        loss = np.array(self.loss, dtype=float).reshape(-1)
        coupling = np.array(self.input_coupling, dtype=float).reshape(-1)
        if fp.shape[0] != self.topology.n_mzis:
            raise InvalidArgumentError("fingerprint length does not match the MZI count")
        n = self.topology.n_modes
        if loss.size != n or coupling.size != n:
            raise InvalidArgumentError("loss and coupling need one entry per mode")
        if np.any((loss < 0) | (loss > 1)) or np.any((coupling < 0) | (coupling > 1)):
            raise InvalidArgumentError("loss and coupling entries must lie in [0, 1]")
        if self.noise_sigma < 0:
            raise InvalidArgumentError("noise_sigma must be non-negative")
        if self.age_epochs < 0:
            raise InvalidArgumentError("age_epochs must be non-negative")
        for arr in (fp, loss, coupling):
            arr.setflags(write=False)
        object.__setattr__(self, "fingerprint", fp)
        object.__setattr__(self, "loss", loss)
        object.__setattr__(self, "input_coupling", coupling)

    @property
    def n_modes(self) -> int:
        return self.topology.n_modes

    def profile(self) -> dict:
        """Construction parameters without the secret fingerprint."""
        return {
            "fab_sigma_rad": float(self.fab_sigma),
            "noise_sigma_rad": float(self.noise_sigma),
            "loss_range": [float(x) for x in self.loss_range],
            "coupling_range": [float(x) for x in self.coupling_range],
        }

    def to_dict(self) -> dict:
        return {
            "topology": self.topology.to_dict(),
            "fingerprint_rad": self.fingerprint.tolist(),
            "loss": self.loss.tolist(),
            "input_coupling": self.input_coupling.tolist(),
            "noise_sigma_rad": float(self.noise_sigma),
            "age_epochs": int(self.age_epochs),
            "device_seed": int(self.device_seed),
            "fab_sigma_rad": float(self.fab_sigma),
            "loss_range": list(self.loss_range),
            "coupling_range": list(self.coupling_range),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PufDevice":
        return cls(
            topology=MeshTopology.from_dict(data["topology"]),
            fingerprint=np.array(data["fingerprint_rad"], dtype=float),
            loss=np.array(data["loss"], dtype=float),
            input_coupling=np.array(data["input_coupling"], dtype=float),
            noise_sigma=float(data["noise_sigma_rad"]),
            age_epochs=int(data["age_epochs"]),
            device_seed=int(data["device_seed"]),
            fab_sigma=float(data["fab_sigma_rad"]),
            loss_range=tuple(data["loss_range"]),
            coupling_range=tuple(data["coupling_range"]),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, PufDevice):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass(frozen=True)
class Challenge:
    """Phase settings plus the classical input modes pumped with equal power."""

    challenge_id: int
    settings: PhaseSettings
    input_modes: tuple = (0,)

    def __post_init__(self):
        object.__setattr__(self, "input_modes", tuple(int(m) for m in self.input_modes))

    def input_vector(self, n_modes: int) -> np.ndarray:
        if not self.input_modes:
            raise InvalidArgumentError("classical challenge needs at least one pumped input mode")
        if any(not 0 <= m < n_modes for m in self.input_modes):
            raise InvalidArgumentError(f"input modes {self.input_modes} outside [0, {n_modes})")
        x = np.zeros(n_modes, dtype=complex)
        x[list(self.input_modes)] = 1.0
        return x / np.sqrt(len(set(self.input_modes)))

    def to_dict(self) -> dict:
        return {
            "challenge_id": int(self.challenge_id),
            "settings_rad": self.settings.values.tolist(),
            "input_modes": list(self.input_modes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Challenge":
        return cls(
            int(data["challenge_id"]),
            PhaseSettings(np.array(data["settings_rad"], dtype=float).reshape(-1, 2)),
            tuple(data["input_modes"]),
        )


@dataclass(frozen=True, eq=False)
class IntensityHistogram:
    bins: np.ndarray
    shots: int | None = None  # None: analytic, no shot sampling

    def __post_init__(self):
        bins = np.array(self.bins, dtype=float).reshape(-1)
        if np.any(bins < 0):
            raise InvalidArgumentError("histogram bins must be non-negative")
        bins.setflags(write=False)
        object.__setattr__(self, "bins", bins)

    def __len__(self) -> int:
        return self.bins.size

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, IntensityHistogram)
            and self.shots == other.shots
            and np.array_equal(self.bins, other.bins)
        )


@dataclass(frozen=True)
class ResponseWeights:
    omega_n: float
    omega_p: float

    def __post_init__(self):
        for name in ("omega_n", "omega_p"):
            v = getattr(self, name)
            if not -1e-12 <= v <= 1 + 1e-9:
                raise InvalidArgumentError(f"{name}={v} outside [0, 1]")

    @property
    def product(self) -> float:
        return self.omega_n * self.omega_p


def random_challenges(
    topology: MeshTopology, count: int, seed, input_modes: Sequence[int] = (0,), start_id: int = 0
) -> list[Challenge]:
    rng = np.random.default_rng(seed)
    return [
        Challenge(start_id + k, PhaseSettings.random(topology.n_mzis, rng), tuple(input_modes))
        for k in range(count)
    ]


def new_device(
    topology: MeshTopology,
    device_seed: int,
    fab_sigma: float = DEFAULT_FAB_SIGMA,
    loss_range: Sequence[float] = DEFAULT_LOSS_RANGE,
    coupling_range: Sequence[float] = DEFAULT_COUPLING_RANGE,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
) -> PufDevice:
    """Draw a device deterministically from ``device_seed``.

    ``fab_sigma = 0`` with unit loss/coupling ranges gives an ideal mesh.
    """
    if fab_sigma < 0 or noise_sigma < 0:
        raise InvalidArgumentError("fab_sigma and noise_sigma must be non-negative")
    for name, (lo, hi) in (("loss_range", loss_range), ("coupling_range", coupling_range)):
        if not 0 <= lo <= hi <= 1:
            raise InvalidArgumentError(f"{name} must satisfy 0 <= min <= max <= 1, got {(lo, hi)}")
    n = topology.n_modes
    fingerprint = np.random.default_rng([device_seed, _FAB_STREAM]).normal(
        0.0, fab_sigma, size=(topology.n_mzis, 2)
    )
    loss = np.random.default_rng([device_seed, _LOSS_STREAM]).uniform(*loss_range, size=n)
    coupling = np.random.default_rng([device_seed, _COUPLING_STREAM]).uniform(
        *coupling_range, size=n
    )
    return PufDevice(
        topology=topology,
        fingerprint=fingerprint,
        loss=loss,
        input_coupling=coupling,
        noise_sigma=float(noise_sigma),
        age_epochs=0,
        device_seed=int(device_seed),
        fab_sigma=float(fab_sigma),
        loss_range=tuple(float(x) for x in loss_range),
        coupling_range=tuple(float(x) for x in coupling_range),
    )


def ideal_device(topology: MeshTopology, device_seed: int = 0) -> PufDevice:
    return new_device(topology, device_seed, 0.0, (1.0, 1.0), (1.0, 1.0), 0.0)


def _check_settings(device: PufDevice, challenge: Challenge) -> None:
    if len(challenge.settings) != device.topology.n_mzis:
        raise InvalidArgumentError(
            f"challenge {challenge.challenge_id} has {len(challenge.settings)} phase pairs, "
            f"mesh has {device.topology.n_mzis} MZIs"
        )


def effective_transfers(
    device: PufDevice, challenge: Challenge, count: int, rng: np.random.Generator | None
) -> np.ndarray:
    """``count`` realisations of ``diag(loss) @ U`` with independent jitter.

    With ``rng=None`` (or zero noise) jitter is zeroed and no random numbers
    are consumed. Shape ``(count, n_modes, n_modes)``.
    """
    _check_settings(device, challenge)
    base = challenge.settings.values + device.fingerprint
    if rng is None or device.noise_sigma == 0:
        u = mesh_unitary_batch(device.topology, base[None, :, 0], base[None, :, 1])
        u = np.broadcast_to(u, (count,) + u.shape[1:])
    else:
        jitter = rng.normal(0.0, device.noise_sigma, size=(count,) + base.shape)
        phases = base[None] + jitter
        u = mesh_unitary_batch(device.topology, phases[..., 0], phases[..., 1])
    return device.loss[None, :, None] * u


def effective_transfer(device: PufDevice, challenge: Challenge, noise_seed=None) -> np.ndarray:
    """``R @ U`` for one invocation; ``noise_seed=None`` means noise-free."""
    rng = None if noise_seed is None else np.random.default_rng(noise_seed)
    return effective_transfers(device, challenge, 1, rng)[0]


def classical_weights(device: PufDevice, challenge: Challenge, transfer: np.ndarray | None = None) -> ResponseWeights:
    """Input-coupling weight and path transmission for the classical input."""
    x = challenge.input_vector(device.n_modes)
    if transfer is None:
        transfer = effective_transfer(device, challenge)
    coupled = device.input_coupling * x
    omega_n = float(np.vdot(coupled, coupled).real)
    out = transfer @ coupled
    omega_p = float(np.vdot(out, out).real) / omega_n if omega_n > 0 else 0.0
    return ResponseWeights(omega_n, min(omega_p, 1.0))


def classical_response(
    device: PufDevice, challenge: Challenge, shots: int | None, seed
) -> IntensityHistogram:
    """Relative output intensity for equal-power classical pumping.

    ``shots=None`` returns the exact normalised intensities; otherwise the
    profile is estimated from a multinomial sample of ``shots`` detections.
    """
    rng = np.random.default_rng(seed)
    x = challenge.input_vector(device.n_modes)
    transfer = effective_transfers(device, challenge, 1, rng)[0]
    intensity = np.abs(transfer @ (device.input_coupling * x)) ** 2
    total = intensity.sum()
    if total <= 0:
        raise InvalidArgumentError("no light reaches the detectors")
    p = intensity / total
    if shots is None:
        return IntensityHistogram(p, None)
    if shots < 1:
        raise InvalidArgumentError("shots must be positive")
    counts = rng.multinomial(shots, p)
    return IntensityHistogram(counts / shots, int(shots))


def quantum_response_batch(
    device: PufDevice, challenge: Challenge, states: np.ndarray, rng: np.random.Generator | None
) -> np.ndarray:
    """Row-wise responses ``R U (c * psi)`` for states of shape ``(B, n_modes)``."""
    states = np.asarray(states, dtype=complex)
    if states.ndim != 2 or states.shape[1] != device.n_modes:
        raise InvalidArgumentError(f"states must have shape (B, {device.n_modes})")
    _check_settings(device, challenge)
    coupled = states * device.input_coupling[None, :]
    base = challenge.settings.values + device.fingerprint
    if rng is None or device.noise_sigma == 0:
        u = mesh_unitary_batch(device.topology, base[None, :, 0], base[None, :, 1])[0]
        out = coupled @ u.T
    else:
        # same jitter draw as effective_transfers, applied straight to the states
        jitter = rng.normal(0.0, device.noise_sigma, size=(states.shape[0],) + base.shape)
        phases = base[None] + jitter
        out = mesh_apply_batch(device.topology, phases[..., 0], phases[..., 1], coupled)
    return device.loss[None, :] * out


def quantum_response(
    device: PufDevice, challenge: Challenge, state: PureState, noise_seed=None
) -> tuple[PureState, float]:
    """Sub-normalised single-photon response and its norm.

    ``norm**2`` is the realised omega_n * omega_p of this invocation.
    """
    if state.dim != device.n_modes:
        raise InvalidArgumentError(f"state dim {state.dim} != {device.n_modes} modes")
    rng = None if noise_seed is None else np.random.default_rng(noise_seed)
    out = quantum_response_batch(device, challenge, state.amplitudes[None, :], rng)[0]
    return PureState(out), float(np.linalg.norm(out))


def response_density(
    device: PufDevice,
    challenge: Challenge,
    qubit_amplitudes: Sequence[complex],
    rail: int,
    noise_seed=None,
) -> DensityMatrix:
    """Output density matrix for a dual-rail input mixture on rails (rail, rail+1).

    The input is ``|a|^2 |01><01| + |b|^2 |10><10|`` with ``|01>`` the photon
    in mode ``rail + 1`` and ``|10>`` the photon in mode ``rail``. The result
    is ``omega_n * omega_p * U rho_in U^dag`` (normalised part) and carries the
    realised weights in ``.weights``.
    """
    a, b = (complex(x) for x in qubit_amplitudes)
    pa, pb = abs(a) ** 2, abs(b) ** 2
    if abs(pa + pb - 1.0) > 1e-9:
        raise InvalidArgumentError(f"|a|^2 + |b|^2 = {pa + pb}, must be 1")
    n = device.n_modes
    if not 0 <= rail <= n - 2:
        raise InvalidArgumentError(f"rail pair ({rail}, {rail + 1}) outside the mesh")
    transfer = effective_transfer(device, challenge, noise_seed)
    c = device.input_coupling
    rho_in = np.zeros((n, n), dtype=complex)
    rho_in[rail + 1, rail + 1] = pa
    rho_in[rail, rail] = pb
    k = transfer * c[None, :]
    rho = k @ rho_in @ k.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    omega_n = pa * c[rail + 1] ** 2 + pb * c[rail] ** 2
    total = float(np.trace(rho).real)
    omega_p = total / omega_n if omega_n > 0 else 0.0
    return DensityMatrix(rho, ResponseWeights(float(omega_n), min(omega_p, 1.0)))


def route_superposed_batch(
    device: PufDevice,
    challenges: Sequence[Challenge],
    amplitudes: Sequence[complex],
    states: np.ndarray,
    rng: np.random.Generator | None,
) -> np.ndarray:
    amplitudes = _check_amplitudes(challenges, amplitudes)
    out = np.zeros(np.shape(states), dtype=complex)
    for amp, ch in zip(amplitudes, challenges):
        out += amp * quantum_response_batch(device, ch, states, rng)
    return out


def route_superposed(
    device: PufDevice,
    challenges: Sequence[Challenge],
    amplitudes: Sequence[complex],
    state: PureState,
    noise_seed=None,
) -> tuple[PureState, float]:
    """Coherent sum of branch responses weighted by routing amplitudes.

    The output is not renormalised; its norm is returned alongside.
    """
    rng = None if noise_seed is None else np.random.default_rng(noise_seed)
    out = route_superposed_batch(device, challenges, amplitudes, state.amplitudes[None, :], rng)[0]
    return PureState(out), float(np.linalg.norm(out))


def _check_amplitudes(challenges, amplitudes) -> np.ndarray:
    amplitudes = np.asarray(amplitudes, dtype=complex).reshape(-1)
    if len(challenges) < 1:
        raise InvalidArgumentError("at least one challenge is required")
    if amplitudes.size != len(challenges):
        raise InvalidArgumentError("one amplitude per challenge is required")
    total = float(np.sum(np.abs(amplitudes) ** 2))
    if abs(total - 1.0) > 1e-9:
        raise InvalidArgumentError(
            f"routing amplitudes must satisfy |α|² + |β|² + |γ|² = 1 (got {total:.12g})"
        )
    return amplitudes


def age_device(
    device: PufDevice, epochs: int, drift_sigma_per_epoch: float, drift_seed: int | None = None
) -> PufDevice:
    """Advance the fingerprint by a Gaussian random walk of ``epochs`` steps.

    Step ``e`` (counted from the device's birth) draws from the stream
    ``[drift_seed, AGE, e]``, so aging by 1 twice equals aging by 2 once.
    """
    if epochs < 1:
        raise InvalidArgumentError("epochs must be >= 1")
    if drift_sigma_per_epoch < 0:
        raise InvalidArgumentError("drift sigma must be non-negative")
    seed = device.device_seed if drift_seed is None else drift_seed
    fp = device.fingerprint.copy()
    for e in range(device.age_epochs, device.age_epochs + epochs):
        if drift_sigma_per_epoch > 0:
            fp += np.random.default_rng([seed, _AGE_STREAM, e]).normal(
                0.0, drift_sigma_per_epoch, size=fp.shape
            )
    return replace(device, fingerprint=fp, age_epochs=device.age_epochs + epochs)
