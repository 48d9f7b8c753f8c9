"""Linear-optical primitives for lossless Mach-Zehnder meshes.

Conventions used throughout the package:

* A transfer matrix ``U`` maps input-mode amplitudes to output-mode
  amplitudes, ``out = U @ in``, so ``U[j, k]`` is the amplitude for a photon
  entering mode ``k`` to leave from mode ``j``.
* A mesh is composed layer by layer from the input side: the matrix of the
  first MZI the light meets is the right-most factor.
* Global phases are kept. Comparisons go through phase-insensitive
  quantities (fidelity, intensities).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import InvalidArgumentError, UnsupportedSizeError

UNITARY_ATOL = 1e-10
NORM_ATOL = 1e-10
MAX_PERMANENT_SIZE = 12
MAX_FOCK_PHOTONS = 4
MAX_FOCK_MODES = 12

TWO_PI = 2.0 * np.pi

ComplexArray = NDArray[np.complex128]


def is_unitary(u: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))) <= atol


# ---------------------------------------------------------------------------
# Topology and settings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeshTopology:
    """Nearest-neighbour MZI placement on ``n_modes`` waveguides.

    ``mzi_placements`` is a sequence of ``(layer, mode)`` pairs; an MZI at
    ``mode`` couples waveguides ``mode`` and ``mode + 1``.
    """

    n_modes: int
    mzi_placements: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if int(self.n_modes) < 1:
            raise InvalidArgumentError(f"n_modes must be positive, got {self.n_modes}")
        placements = tuple((int(layer), int(mode)) for layer, mode in self.mzi_placements)
        for layer, mode in placements:
            if layer < 0:
                raise InvalidArgumentError(f"negative layer index {layer}")
            if not 0 <= mode <= self.n_modes - 2:
                raise InvalidArgumentError(
                    f"MZI mode index {mode} outside [0, {self.n_modes - 2}]"
                )
        # stable sort keeps the caller's order inside a layer
        placements = tuple(sorted(placements, key=lambda p: p[0]))
        object.__setattr__(self, "n_modes", int(self.n_modes))
        object.__setattr__(self, "mzi_placements", placements)

    @classmethod
    def triangular(cls, n_modes: int) -> "MeshTopology":
        """Reck-style triangle with ``n_modes * (n_modes - 1) / 2`` MZIs.

        Diagonal ``d`` holds ``d + 1`` MZIs; its ``p``-th element sits on
        mode ``d - p`` in layer ``d + p``.
        """
        if n_modes < 2:
            raise InvalidArgumentError("a triangular mesh needs at least 2 modes")
        placements = [
            (d + p, d - p) for d in range(n_modes - 1) for p in range(d + 1)
        ]
        return cls(n_modes, tuple(sorted(placements)))

    @property
    def n_mzis(self) -> int:
        return len(self.mzi_placements)

    @property
    def modes(self) -> np.ndarray:
        return np.array([m for _, m in self.mzi_placements], dtype=int)

    def to_dict(self) -> dict:
        return {"n_modes": self.n_modes, "mzi_placements": [list(p) for p in self.mzi_placements]}

    @classmethod
    def from_dict(cls, data: dict) -> "MeshTopology":
        return cls(int(data["n_modes"]), tuple(tuple(p) for p in data["mzi_placements"]))


@dataclass(frozen=True, eq=False)
class PhaseSettings:
    """One ``(theta, phi)`` pair per MZI, stored modulo 2*pi."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != 2:
            raise InvalidArgumentError("phase settings must have shape (n_mzis, 2)")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("phase settings must be finite")
        values = np.mod(values, TWO_PI)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "PhaseSettings":
        return cls(np.array(list(pairs), dtype=float).reshape(-1, 2))

    @classmethod
    def uniform(cls, n_mzis: int, theta: float, phi: float = 0.0) -> "PhaseSettings":
        return cls(np.tile([theta, phi], (n_mzis, 1)))

    @classmethod
    def random(cls, n_mzis: int, rng: np.random.Generator) -> "PhaseSettings":
        return cls(rng.uniform(0.0, TWO_PI, size=(n_mzis, 2)))

    @property
    def theta(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def phi(self) -> np.ndarray:
        return self.values[:, 1]

    def __len__(self) -> int:
        return self.values.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, PhaseSettings) and np.array_equal(self.values, other.values)

    def __hash__(self) -> int:
        return hash(self.values.tobytes())


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PureState:
    """Single-photon (or generic d-level) amplitude vector.

    Sub-normalized vectors are legal but flagged through :attr:`normalized`;
    operations that need a unit vector check it.
    """

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size < 1:
            raise InvalidArgumentError("state must have at least one amplitude")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    @property
    def normalized(self) -> bool:
        return abs(self.norm_squared - 1.0) <= NORM_ATOL

    @classmethod
    def basis(cls, d: int, k: int) -> "PureState":
        if not 0 <= k < d:
            raise InvalidArgumentError(f"basis index {k} outside [0, {d})")
        v = np.zeros(d, dtype=complex)
        v[k] = 1.0
        return cls(v)

    def renormalized(self) -> "PureState":
        n = math.sqrt(self.norm_squared)
        if n == 0.0:
            raise InvalidArgumentError("cannot normalize the zero vector")
        return PureState(self.amplitudes / n)


@dataclass(frozen=True)
class FockState:
    """Multi-photon state as a map ``occupation pattern -> amplitude``."""

    n_modes: int
    amplitudes: dict

    def __post_init__(self):
        clean = {}
        for pattern, amp in self.amplitudes.items():
            pattern = tuple(int(x) for x in pattern)
            if len(pattern) != self.n_modes or min(pattern) < 0:
                raise InvalidArgumentError(f"bad occupation pattern {pattern}")
            clean[pattern] = complex(amp)
        numbers = {sum(p) for p, a in clean.items() if a != 0}
        if len(numbers) > 1:
            raise InvalidArgumentError("photon number differs between patterns")
        object.__setattr__(self, "amplitudes", clean)

    @classmethod
    def from_occupation(cls, occupation: Sequence[int]) -> "FockState":
        return cls(len(occupation), {tuple(occupation): 1.0})

    @property
    def n_photons(self) -> int:
        for pattern, amp in self.amplitudes.items():
            if amp != 0:
                return sum(pattern)
        return 0

    @property
    def norm_squared(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def probabilities(self) -> dict:
        return {p: abs(a) ** 2 for p, a in self.amplitudes.items()}

    def amplitude(self, pattern: Sequence[int]) -> complex:
        return self.amplitudes.get(tuple(pattern), 0j)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    matrix: np.ndarray
    weights: object = None  # ResponseWeights realised when the matrix was produced

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidArgumentError("density matrix must be square")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def is_valid(self, atol: float = 1e-10) -> bool:
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > atol:
            return False
        if self.trace > 1.0 + atol:
            return False
        return float(np.min(np.linalg.eigvalsh(m))) >= -atol


# ---------------------------------------------------------------------------
# MZI and mesh
# ---------------------------------------------------------------------------


def _check_finite(*values: float) -> None:
    for v in values:
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError(f"non-finite phase {v!r}")


def mzi_unitary(theta: float, phi: float) -> ComplexArray:
    r"""Closed-form 2x2 MZI transfer matrix.

    .. math::
        j e^{j\theta/2}
        \begin{pmatrix} e^{j\phi}\sin\frac\theta2 & e^{j\phi}\cos\frac\theta2 \\
                        \cos\frac\theta2 & -\sin\frac\theta2 \end{pmatrix}

    ``theta`` is the internal phase, ``phi`` the external (output) phase.
    """
    _check_finite(theta, phi)
    return _mzi_blocks(np.atleast_1d(float(theta)), np.atleast_1d(float(phi)))[0]


def _mzi_blocks(theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Vectorised :func:`mzi_unitary`; returns shape ``theta.shape + (2, 2)``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    s = np.sin(0.5 * theta)
    c = np.cos(0.5 * theta)
    g = -s + 1j * c  # j e^{j theta/2}
    ep = np.cos(phi) + 1j * np.sin(phi)
    out = np.empty(theta.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = g * ep * s
    out[..., 0, 1] = g * ep * c
    out[..., 1, 0] = g * c
    out[..., 1, 1] = -g * s
    return out


def embed_two_mode(u2: np.ndarray, mode_i: int, n: int) -> ComplexArray:
    u2 = np.asarray(u2, dtype=complex)
    if u2.shape != (2, 2):
        raise InvalidArgumentError(f"expected a 2x2 block, got shape {u2.shape}")
    if not 0 <= mode_i <= n - 2:
        raise InvalidArgumentError(f"mode index {mode_i} outside [0, {n - 2}]")
    out = np.eye(n, dtype=complex)
    out[mode_i : mode_i + 2, mode_i : mode_i + 2] = u2
    return out


def mesh_unitary(topology: MeshTopology, settings: PhaseSettings) -> ComplexArray:
    """Transfer matrix of the whole mesh for the given phase settings."""
    if len(settings) != topology.n_mzis:
        raise InvalidArgumentError(
            f"{len(settings)} phase pairs for a mesh of {topology.n_mzis} MZIs"
        )
    return mesh_unitary_batch(topology, settings.theta[None, :], settings.phi[None, :])[0]


def mesh_unitary_batch(topology: MeshTopology, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Mesh matrices for a batch of raw (non-canonical) phase arrays.

    ``theta`` and ``phi`` have shape ``(batch, n_mzis)``; the result has
    shape ``(batch, n_modes, n_modes)``. Each MZI acts on two rows of the
    running product, so cost is O(n_mzis * n_modes) per matrix.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    if theta.shape != phi.shape or theta.shape[1] != topology.n_mzis:
        raise InvalidArgumentError("phase arrays do not match the topology")
    _check_finite(theta, phi)
    n = topology.n_modes
    batch = theta.shape[0]
    blocks = _mzi_blocks(theta, phi)  # (batch, n_mzis, 2, 2)
    u = np.broadcast_to(np.eye(n, dtype=complex), (batch, n, n)).copy()
    for k, (_, m) in enumerate(topology.mzi_placements):
        b = blocks[:, k]
        top = u[:, m, :]
        bot = u[:, m + 1, :]
        new_top = b[:, 0, 0, None] * top + b[:, 0, 1, None] * bot
        new_bot = b[:, 1, 0, None] * top + b[:, 1, 1, None] * bot
        u[:, m, :] = new_top
        u[:, m + 1, :] = new_bot
    return u


def mesh_apply_batch(
    topology: MeshTopology, theta: np.ndarray, phi: np.ndarray, vectors: np.ndarray
) -> np.ndarray:
    """Row-wise ``U_b @ vectors[b]`` without forming the mesh matrices.

    Same shapes as :func:`mesh_unitary_batch` plus ``vectors`` of shape
    ``(batch, n_modes)``; cost is O(n_mzis) per vector.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    vectors = np.asarray(vectors, dtype=complex)
    n = topology.n_modes
    if theta.shape != phi.shape or theta.shape[1] != topology.n_mzis:
        raise InvalidArgumentError("phase arrays do not match the topology")
    if vectors.shape != (theta.shape[0], n):
        raise InvalidArgumentError(f"vectors must have shape ({theta.shape[0]}, {n})")
    _check_finite(theta, phi)
    # mode-major layout keeps the per-MZI row updates contiguous
    half = 0.5 * np.ascontiguousarray(theta.T)
    s, c = np.sin(half), np.cos(half)
    g = np.empty(half.shape, dtype=complex)  # j e^{j theta/2}
    g.real, g.imag = -s, c
    outer = half + phi.T
    gp = np.empty(half.shape, dtype=complex)  # j e^{j (theta/2 + phi)}
    gp.real, gp.imag = -np.sin(outer), np.cos(outer)
    v = np.ascontiguousarray(vectors.T)
    for k, (_, m) in enumerate(topology.mzi_placements):
        top, bot = v[m], v[m + 1]
        new_top = gp[k] * (s[k] * top + c[k] * bot)
        v[m + 1] = g[k] * (c[k] * top - s[k] * bot)
        v[m] = new_top
    return v.T.copy()


# ---------------------------------------------------------------------------
# State evolution
# ---------------------------------------------------------------------------


def evolve_single_photon(u: np.ndarray, state: PureState) -> PureState:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[1] != state.dim:
        raise InvalidArgumentError(f"matrix shape {u.shape} incompatible with dim {state.dim}")
    return PureState(u @ state.amplitudes)


def permanent(m: np.ndarray) -> complex:
    """Matrix permanent by Ryser's inclusion-exclusion formula.

    All ``2**n - 1`` non-empty column subsets are evaluated at once, which
    is O(2**n * n**2) flops but fully vectorised; sizes above 12 are refused.
    """
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidArgumentError(f"permanent needs a square matrix, got {m.shape}")
    n = m.shape[0]
    if n > MAX_PERMANENT_SIZE:
        raise UnsupportedSizeError(f"permanent limited to n <= {MAX_PERMANENT_SIZE}, got {n}")
    if n == 0:
        return 1.0 + 0j
    subsets = np.arange(1, 1 << n)
    mask = ((subsets[:, None] >> np.arange(n)) & 1).astype(float)  # (2^n-1, n)
    row_sums = mask @ m.T  # (2^n-1, n): sum over chosen columns for each row
    sizes = mask.sum(axis=1)
    signs = np.where((n - sizes) % 2 == 0, 1.0, -1.0)
    return complex(np.sum(signs * np.prod(row_sums, axis=1)))


def fock_patterns(n_modes: int, n_photons: int) -> list[tuple[int, ...]]:
    """All occupation patterns with ``n_photons`` spread over ``n_modes``."""
    patterns = []
    for combo in itertools.combinations_with_replacement(range(n_modes), n_photons):
        occ = [0] * n_modes
        for k in combo:
            occ[k] += 1
        patterns.append(tuple(occ))
    return sorted(patterns, reverse=True)


def _mode_list(pattern: Sequence[int]) -> list[int]:
    return [k for k, count in enumerate(pattern) for _ in range(count)]


def evolve_fock(u: np.ndarray, state: FockState) -> FockState:
    """Propagate a multi-photon Fock superposition through ``u``.

    Output amplitude for pattern ``t`` from input pattern ``s`` is
    ``perm(U[t, s]) / sqrt(prod(s!) * prod(t!))`` with rows/columns repeated
    by occupation.
    """
    u = np.asarray(u, dtype=complex)
    n = state.n_modes
    if u.shape != (n, n):
        raise InvalidArgumentError(f"matrix shape {u.shape} incompatible with {n} modes")
    q = state.n_photons
    if q > MAX_FOCK_PHOTONS or n > MAX_FOCK_MODES:
        raise UnsupportedSizeError(
            f"Fock evolution limited to {MAX_FOCK_PHOTONS} photons / {MAX_FOCK_MODES} modes"
        )
    out_patterns = fock_patterns(n, q)
    out = {t: 0j for t in out_patterns}
    for s, c_s in state.amplitudes.items():
        if c_s == 0:
            continue
        cols = _mode_list(s)
        s_fact = math.prod(math.factorial(x) for x in s)
        for t in out_patterns:
            rows = _mode_list(t)
            t_fact = math.prod(math.factorial(x) for x in t)
            sub = u[np.ix_(rows, cols)]
            out[t] += c_s * permanent(sub) / math.sqrt(s_fact * t_fact)
    return FockState(n, out)


# ---------------------------------------------------------------------------
# Randomness, measurement, overlap
# ---------------------------------------------------------------------------


def haar_states(d: int, count: int, rng: np.random.Generator) -> ComplexArray:
    """``count`` Haar-random unit vectors in C^d, shape ``(count, d)``."""
    z = rng.standard_normal((count, d)) + 1j * rng.standard_normal((count, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def haar_random_state(d: int, seed) -> PureState:
    if d < 2:
        raise InvalidArgumentError(f"dimension must be >= 2, got {d}")
    return PureState(haar_states(d, 1, np.random.default_rng(seed))[0])


def haar_unitaries(d: int, count: int, rng: np.random.Generator) -> ComplexArray:
    """Haar-random unitaries via QR with the diagonal phase fix."""
    z = (rng.standard_normal((count, d, d)) + 1j * rng.standard_normal((count, d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r, axis1=1, axis2=2)
    return q * (diag / np.abs(diag))[:, None, :]


def sample_outcomes(probabilities: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of ``probabilities`` (rows sum to ~1)."""
    cdf = np.cumsum(probabilities, axis=-1)
    u = rng.random(cdf.shape[:-1]) * cdf[..., -1]
    idx = (cdf <= u[..., None]).sum(axis=-1)
    return np.minimum(idx, probabilities.shape[-1] - 1)


def measure_counts(state: PureState, shots: int, seed) -> np.ndarray:
    """Multinomial histogram of ``shots`` computational-basis detections."""
    if shots < 1:
        raise InvalidArgumentError("shots must be a positive integer")
    if not state.normalized:
        raise InvalidArgumentError("measure_counts needs a normalized state")
    p = np.abs(state.amplitudes) ** 2
    p = p / p.sum()
    return np.random.default_rng(seed).multinomial(shots, p)


def fidelity(a: PureState, b: PureState) -> float:
    if a.dim != b.dim:
        raise InvalidArgumentError(f"dimension mismatch {a.dim} != {b.dim}")
    return float(min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2))
