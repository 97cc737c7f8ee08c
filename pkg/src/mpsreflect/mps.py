"""Uniform matrix product states, transfer matrices, and reflection overlaps.

A translational invariant state on N sites is parameterized by d complex
D x D matrices A^s; the (unnormalized) amplitude of a configuration
(s_1 ... s_N) is Tr(A^{s_1} ... A^{s_N}).  Everything spectral runs through
the transfer matrix E = sum_s conj(A^s) (x) A^s with the Kronecker
convention row (alpha, gamma) = alpha*D + gamma, fixed once here and used
by every module.
"""

from __future__ import annotations

import cmath
import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .linalg import scaled_power_sum, sorted_eigenvalues

#: relative gap under which the two leading eigenvalue moduli count as degenerate
DEGENERACY_REL_TOL = 1e-9

#: absolute floor for the rescaled norm trace; below it overlaps are meaningless
NORM_FLOOR = 1e-280


class DimensionMismatchError(ValueError):
    """Physical or bond dimensions of the operands do not agree."""


class DegenerateNormError(ArithmeticError):
    """The rescaled norm trace underflowed; the overlap ratio is undefined."""


class IndexOutOfRangeError(IndexError):
    """A physical index lies outside [0, d)."""


class UnknownPresetError(ValueError):
    """No preset with the requested name exists."""


class BadParamsError(ValueError):
    """Preset parameters have the wrong arity."""


class TransferKind(enum.Enum):
    PLAIN = "plain"
    PARTIAL_TRANSPOSE = "partial_transpose"
    MIXED = "mixed"


@dataclass(frozen=True)
class UniformMPS:
    """Translational invariant MPS: d matrices of size D x D plus a log scale.

    ``log_scale`` is a per-site log-normalization: the represented site
    matrices are exp(log_scale) * matrices, so amplitudes on N sites carry
    a factor exp(N * log_scale).
    """

    matrices: tuple[np.ndarray, ...]
    log_scale: float = 0.0

    def __post_init__(self):
        if not self.matrices:
            raise ValueError("an MPS needs at least one matrix")
        mats = tuple(np.ascontiguousarray(A, dtype=complex) for A in self.matrices)
        D = mats[0].shape[0]
        for A in mats:
            if A.shape != (D, D):
                raise DimensionMismatchError(f"matrix shape {A.shape} != ({D}, {D})")
            A.setflags(write=False)
        if not any(np.any(A) for A in mats):
            raise ValueError("all matrices are zero")
        if not math.isfinite(self.log_scale):
            raise ValueError("log_scale must be finite")
        object.__setattr__(self, "matrices", mats)

    @property
    def d(self) -> int:
        return len(self.matrices)

    @property
    def D(self) -> int:
        return self.matrices[0].shape[0]


@dataclass(frozen=True)
class TransferMatrix:
    """Dense contraction kernel with its spectral data computed on demand."""

    entries: np.ndarray
    kind: TransferKind

    def __post_init__(self):
        ent = np.ascontiguousarray(self.entries, dtype=complex)
        if ent.ndim != 2 or ent.shape[0] != ent.shape[1]:
            raise DimensionMismatchError("transfer matrix must be square")
        ent.setflags(write=False)
        object.__setattr__(self, "entries", ent)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        ev = sorted_eigenvalues(self.entries)
        ev.setflags(write=False)
        return ev

    @property
    def dominant_modulus(self) -> float:
        return float(abs(self.eigenvalues[0]))


@dataclass(frozen=True)
class SpectrumReport:
    """Sorted spectrum of a transfer matrix plus the derived length scale.

    ``correlation_length`` is 1/ln(|l1|/|l2|); it is None (undefined) when
    the two leading moduli are degenerate, and 0 when the kernel is rank one.
    """

    eigenvalues: np.ndarray
    dominant_modulus: float
    dominant_degenerate: bool
    correlation_length: float | None


def spectrum(tm: TransferMatrix) -> SpectrumReport:
    """Spectral report of a transfer matrix."""
    ev = tm.eigenvalues
    rho = float(abs(ev[0]))
    if rho == 0.0:
        return SpectrumReport(ev, rho, True, None)
    if ev.size < 2:
        return SpectrumReport(ev, rho, False, 0.0)
    second = float(abs(ev[1]))
    degenerate = (rho - second) < DEGENERACY_REL_TOL * rho
    if degenerate:
        xi = None
    elif second <= 1e-14 * rho:
        xi = 0.0
    else:
        xi = 1.0 / math.log(rho / second)
    return SpectrumReport(ev, rho, degenerate, xi)


def transfer_matrix(mps: UniformMPS) -> TransferMatrix:
    """E = sum_s conj(A^s) (x) A^s."""
    E = sum(np.kron(A.conj(), A) for A in mps.matrices)
    return TransferMatrix(E, TransferKind.PLAIN)


def reflect(mps: UniformMPS) -> UniformMPS:
    """Spatially reflected state: every matrix transposed."""
    return UniformMPS(tuple(A.T for A in mps.matrices), mps.log_scale)


def partial_transpose_transfer(mps: UniformMPS) -> TransferMatrix:
    """Kernel of the reflection overlap: sum_s conj(A^s) (x) (A^s)^T."""
    K = sum(np.kron(A.conj(), A.T) for A in mps.matrices)
    return TransferMatrix(K, TransferKind.PARTIAL_TRANSPOSE)


def mixed_transfer(bra: UniformMPS, ket: UniformMPS, operator: np.ndarray | None = None) -> TransferMatrix:
    """Kernel of <bra| O^(x N) |ket>: sum_{s,t} O_{ts} conj(B^s) (x) A^t.

    ``operator=None`` means the identity.  With identical bra and ket it
    reduces to the plain transfer matrix.
    """
    d = bra.d
    if ket.d != d:
        raise DimensionMismatchError(f"physical dimensions differ: {d} != {ket.d}")
    if operator is None:
        O = np.eye(d, dtype=complex)
    else:
        O = np.asarray(operator, dtype=complex)
        if O.shape != (d, d):
            raise DimensionMismatchError(f"operator shape {O.shape} != ({d}, {d})")
    K = sum(
        O[t, s] * np.kron(bra.matrices[s].conj(), ket.matrices[t])
        for s in range(d)
        for t in range(d)
        if O[t, s] != 0.0
    )
    return TransferMatrix(K, TransferKind.MIXED)


def _trace_power_ratio(num_eigs: np.ndarray, den_eigs: np.ndarray, N: int) -> complex:
    """Tr K^N / Tr E^N from the two spectra, rescaled to avoid overflow."""
    rho = max(np.abs(num_eigs).max(initial=0.0), np.abs(den_eigs).max(initial=0.0))
    if rho == 0.0:
        raise DegenerateNormError("zero transfer spectrum")
    den = scaled_power_sum(den_eigs, N, rho)
    if abs(den) < NORM_FLOOR:
        raise DegenerateNormError(f"norm trace underflow at N={N}: |den|={abs(den):.3e}")
    num = scaled_power_sum(num_eigs, N, rho)
    return num / den


def overlap_reflection(mps: UniformMPS, N: int) -> complex:
    """Overlap <Psi|Psi_reflected> on N sites, Tr(E^T2)^N / Tr E^N."""
    if N < 1:
        raise ValueError("N must be >= 1")
    E = transfer_matrix(mps)
    K = partial_transpose_transfer(mps)
    return _trace_power_ratio(K.eigenvalues, E.eigenvalues, N)


def state_overlap(bra: UniformMPS, ket: UniformMPS, N: int, operator: np.ndarray | None = None) -> complex:
    """Normalized overlap <bra|O^(x N)|ket> / (||bra|| ||ket||) on N sites."""
    K = mixed_transfer(bra, ket, operator)
    Eb = transfer_matrix(bra)
    Ek = transfer_matrix(ket)
    rho = max(
        np.abs(K.eigenvalues).max(initial=0.0),
        Eb.dominant_modulus,
        Ek.dominant_modulus,
    )
    if rho == 0.0:
        raise DegenerateNormError("zero transfer spectrum")
    nb = scaled_power_sum(Eb.eigenvalues, N, rho)
    nk = scaled_power_sum(Ek.eigenvalues, N, rho)
    if min(abs(nb), abs(nk)) < NORM_FLOOR:
        raise DegenerateNormError("norm trace underflow")
    num = scaled_power_sum(K.eigenvalues, N, rho)
    return num / cmath.sqrt(nb * nk)


def amplitude(mps: UniformMPS, config) -> complex:
    """Unnormalized amplitude Tr(A^{s_1} ... A^{s_N}) * exp(N * log_scale)."""
    config = list(config)
    for s in config:
        if not 0 <= s < mps.d:
            raise IndexOutOfRangeError(f"physical index {s} outside [0, {mps.d})")
    M = np.eye(mps.D, dtype=complex)
    for s in config:
        M = M @ mps.matrices[s]
    return complex(np.trace(M)) * math.exp(len(config) * mps.log_scale)


def correlation_length(mps: UniformMPS) -> float | None:
    """Correlation length from the two leading transfer eigenvalue moduli.

    Returns None when the dominant eigenvalue is degenerate (undefined).
    """
    return spectrum(transfer_matrix(mps)).correlation_length


_PRESET_PARAM_COUNT = {"GHZ": 0, "CLUSTER": 0, "AKLT": 0, "EQ5": 1, "EQ6": 1}


def build_preset(name: str, params=()) -> UniformMPS:
    """Construct one of the reference states.

    GHZ      two diagonal projectors, twofold degenerate transfer spectrum.
    CLUSTER  the 1D cluster state, reflection symmetric via a similarity.
    AKLT     spin-1 valence bond state from the Pauli construction.
    EQ5(g)   a pair locally inequivalent to its reflection (g != 0).
    EQ6(g)   a pair equal to its reflection up to a single-site unitary.
    """
    key = name.upper().replace("-", "").replace("_", "")
    params = [float(p) for p in params]
    if key not in _PRESET_PARAM_COUNT:
        raise UnknownPresetError(f"unknown preset {name!r}")
    if len(params) != _PRESET_PARAM_COUNT[key]:
        raise BadParamsError(
            f"preset {key} takes {_PRESET_PARAM_COUNT[key]} parameter(s), got {len(params)}"
        )
    if key == "GHZ":
        mats = (np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))
    elif key == "CLUSTER":
        mats = (np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([[1.0, -1.0], [0.0, 0.0]]))
    elif key == "AKLT":
        sp = np.array([[0.0, 1.0], [0.0, 0.0]])
        sm = sp.T
        sz = np.diag([1.0, -1.0])
        mats = (
            math.sqrt(2.0 / 3.0) * sp,
            -math.sqrt(1.0 / 3.0) * sz,
            -math.sqrt(2.0 / 3.0) * sm,
        )
    elif key == "EQ5":
        g = params[0]
        mats = (
            np.array([[1.0, 0.0], [0.0, -1.0]]),
            np.array([[0.0, 1.0], [0.0, 0.0]]),
            np.array([[0.0, 0.0], [1.0, g]]),
        )
    else:  # EQ6
        g = params[0]
        mats = (
            np.array([[1.0, 0.0], [0.0, g]]),
            np.array([[0.0, 1.0], [0.0, 0.0]]),
            np.array([[0.0, 0.0], [g, 0.0]]),
        )
    return UniformMPS(tuple(np.asarray(A, dtype=complex) for A in mats))


# ---------------------------------------------------------------------------
# JSON wire format: {"d", "D", "matrices": [[[[re, im], ...], ...], ...],
#                    "log_scale"}; matrices row-major, entries [re, im].

def _complex_to_pair(z: complex) -> list[float]:
    return [float(z.real), float(z.imag)]


def mps_to_json(mps: UniformMPS) -> str:
    doc = {
        "d": mps.d,
        "D": mps.D,
        "matrices": [
            [[_complex_to_pair(A[i, j]) for j in range(mps.D)] for i in range(mps.D)]
            for A in mps.matrices
        ],
        "log_scale": mps.log_scale,
    }
    return json.dumps(doc, sort_keys=True)


def mps_from_json(text: str) -> UniformMPS:
    doc = json.loads(text)
    try:
        d = int(doc["d"])
        D = int(doc["D"])
        raw = doc["matrices"]
        log_scale = float(doc.get("log_scale", 0.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed MPS document: {exc}") from exc
    if len(raw) != d:
        raise ValueError(f"expected {d} matrices, got {len(raw)}")
    mats = []
    for A in raw:
        if len(A) != D or any(len(row) != D for row in A):
            raise ValueError(f"matrix is not {D}x{D}")
        M = np.empty((D, D), dtype=complex)
        for i, row in enumerate(A):
            for j, pair in enumerate(row):
                if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                    raise ValueError("entries must be [re, im] pairs")
                M[i, j] = complex(pair[0], pair[1])
        mats.append(M)
    return UniformMPS(tuple(mats), log_scale)
