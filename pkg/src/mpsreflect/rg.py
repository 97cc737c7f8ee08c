"""Real-space coarse graining of uniform MPSs.

One step merges neighbouring site matrices A^p A^q, takes the SVD of the
d^2 x D^2 merged matrix, and keeps lambda_l * V^l (reshaped D x D) as the
new site matrices.  The transfer matrix squares exactly under this map, the
singular spectrum is shared with the reflected state, and reflection
conjugacy (reflected flow = transposed flow) survives every step.  New
matrices are rescaled by the square root of the dominant transfer modulus,
with the factor accumulated in ``log_scale``, so long flows stay bounded.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .linalg import (
    SVD_ZERO_TOL,
    canonical_svd,
    degenerate_groups,
    dominant_modulus,
    partial_transpose,
    scaled_power_sum,
)
from .mps import (
    DEGENERACY_REL_TOL,
    DegenerateNormError,
    TransferKind,
    TransferMatrix,
    UniformMPS,
    overlap_reflection,
    reflect,
    spectrum,
    state_overlap,
    transfer_matrix,
)


class ZeroStateError(ValueError):
    """All merged singular values vanish; the state has no nonzero amplitudes."""


class BadLengthError(ValueError):
    """Chain length is not divisible by the blocking factor."""


class NoConvergenceError(ArithmeticError):
    """Iterated squaring failed to converge within the step limit."""


class NotConvergedError(RuntimeError):
    """A converged trajectory/fixed point is required but unavailable."""


@dataclass(frozen=True)
class RGStepRecord:
    """Diagnostics of one coarse-graining step."""

    step_index: int
    singular_values: np.ndarray
    d_prime: int
    conjugacy_residual: float
    eta: complex | None
    log_scale_delta: float


@dataclass(frozen=True)
class RGTrajectory:
    initial: UniformMPS
    records: tuple[RGStepRecord, ...]
    final: UniformMPS
    n: int | None

    @property
    def chi(self) -> int:
        return 2 ** len(self.records)


@dataclass(frozen=True)
class FixedPointReport:
    converged: bool
    steps_used: int
    E_infinity: TransferMatrix
    phi_R: np.ndarray | None
    phi_L: np.ndarray | None
    unique_dominant: bool
    residual: float


@dataclass(frozen=True)
class ConjugacyReport:
    """Joint diagnostics of one step run independently on a state and its mirror."""

    forward: RGStepRecord
    reflected: RGStepRecord
    singular_mismatch: float
    transfer_transpose_residual: float
    fidelity: float
    gauge_aligned_groups: int

    @property
    def passed(self) -> bool:
        return (
            self.singular_mismatch <= 1e-10
            and self.transfer_transpose_residual <= 1e-10
            and self.fidelity >= 1.0 - 1e-8
        )


def _position_key(v: np.ndarray, D: int):
    """Transpose-stable ordering key from the reference entry of a D x D vector."""
    k = int(np.argmax(np.abs(v)))
    a, b = divmod(k, D)
    return (min(a, b), max(a, b), a)


def merged_matrix(mps: UniformMPS) -> np.ndarray:
    """d^2 x D^2 matrix of flattened pair products, row (p*d + q)."""
    d = mps.d
    return np.array(
        [(mps.matrices[p] @ mps.matrices[q]).reshape(-1) for p in range(d) for q in range(d)]
    )


def coarse_grain_step(
    mps: UniformMPS, truncation: int | None = None, with_conjugacy: bool = True,
    step_index: int = 1, eta_length: int | None = None,
) -> tuple[UniformMPS, RGStepRecord]:
    """One blocking step; returns the coarse state and its step record.

    Singular values below SVD_ZERO_TOL relative to the largest are dropped;
    an optional cap bounds the new physical dimension.  Within degenerate
    singular groups the kept vectors are reordered by a transpose-stable
    position key so forward and reflected flows stay aligned.
    """
    D = mps.D
    M = merged_matrix(mps)
    U, s, Vh = canonical_svd(M)
    if s.size == 0 or s[0] == 0.0:
        raise ZeroStateError("merged matrix has no nonzero singular values")
    keep = [l for l in range(s.size) if s[l] > SVD_ZERO_TOL * s[0]]
    if truncation is not None:
        keep = keep[: max(int(truncation), 1)]
    if not keep:
        raise ZeroStateError("all singular values truncated away")
    kept_s = s[keep]
    ordered = []
    for group in degenerate_groups(kept_s):
        idx = sorted((keep[i] for i in group), key=lambda l: _position_key(Vh[l], D))
        ordered.extend(idx)
    new_mats = [s[l] * Vh[l].reshape(D, D) for l in ordered]
    E_new = sum(np.kron(A.conj(), A) for A in new_mats)
    rho = dominant_modulus(E_new)
    if rho == 0.0:
        raise ZeroStateError("coarse-grained transfer matrix vanished")
    scale = math.sqrt(rho)
    delta = math.log(scale)
    out = UniformMPS(
        tuple(A / scale for A in new_mats),
        2.0 * mps.log_scale + delta,
    )

    conj_res = float("nan")
    if with_conjugacy:
        E_stored = E_new / rho
        refl_out, _ = coarse_grain_step(reflect(mps), truncation, with_conjugacy=False)
        E_refl = transfer_matrix(refl_out).entries
        conj_res = float(
            np.linalg.norm(E_refl - E_stored.T) / max(np.linalg.norm(E_stored), 1e-300)
        )

    eta = None
    if eta_length is not None:
        eta = overlap_reflection(out, eta_length)
    record = RGStepRecord(
        step_index=step_index,
        singular_values=s.copy(),
        d_prime=len(ordered),
        conjugacy_residual=conj_res,
        eta=eta,
        log_scale_delta=delta,
    )
    return out, record


def run_trajectory(
    mps: UniformMPS, steps: int, N: int | None = None, truncation: int | None = None
) -> RGTrajectory:
    """Iterate coarse-graining ``steps`` times, recording diagnostics.

    When N is given it must be divisible by 2**steps; each record then
    carries the reflection overlap at its scale (chain length N / 2^k).
    """
    if N is not None and N % (2**steps) != 0:
        raise BadLengthError(f"N={N} is not divisible by 2^{steps}")
    current = mps
    records = []
    for k in range(1, steps + 1):
        eta_len = None if N is None else N // (2**k)
        current, rec = coarse_grain_step(
            current, truncation, step_index=k, eta_length=eta_len
        )
        records.append(rec)
    return RGTrajectory(mps, tuple(records), current, None if N is None else N // (2**steps))


def _align_degenerate_groups(
    refl_mats: list[np.ndarray], target_mats: list[np.ndarray], svals: np.ndarray
) -> tuple[list[np.ndarray], int]:
    """Rotate reflected-branch matrices inside degenerate singular groups.

    Within an exactly degenerate group the SVD basis is arbitrary up to a
    unitary; the physically meaningful comparison aligns the group by the
    unitary polar factor of the cross-overlap.  Nondegenerate vectors are
    left untouched, so the alignment has no effect where the gauge is fixed.
    """
    aligned = list(refl_mats)
    rotated = 0
    for group in degenerate_groups(svals):
        if len(group) < 2:
            continue
        idx = list(group)
        if idx[-1] >= len(refl_mats):
            continue
        O = np.array(
            [
                [np.vdot(refl_mats[i].reshape(-1), target_mats[j].reshape(-1)) for j in idx]
                for i in idx
            ]
        )
        if np.linalg.norm(O) == 0.0:
            continue
        W, _, Zh = np.linalg.svd(O)
        Q = W @ Zh  # unitary polar factor of the cross-overlap
        for a, i in enumerate(idx):
            aligned[i] = sum(Q.conj()[a, b] * refl_mats[idx[b]] for b in range(len(idx)))
        rotated += 1
    return aligned, rotated


def conjugacy_check(mps: UniformMPS, fidelity_length: int = 8) -> ConjugacyReport:
    """Run one step on a state and its reflection and compare the branches.

    Asserting material: identical singular spectra, transfer matrices that
    are exact transposes of each other, and unit fidelity between the
    coarse-grained reflected state and the reflection of the coarse-grained
    state.  Degenerate singular groups are gauge-aligned before the fidelity
    contraction (the count of aligned groups is reported).
    """
    fwd, rec_f = coarse_grain_step(mps, with_conjugacy=False)
    rfl, rec_r = coarse_grain_step(reflect(mps), with_conjugacy=False)

    k = min(rec_f.singular_values.size, rec_r.singular_values.size)
    scale = max(rec_f.singular_values[0], 1e-300)
    mismatch = float(np.max(np.abs(rec_f.singular_values[:k] - rec_r.singular_values[:k])) / scale)
    if rec_f.singular_values.size != rec_r.singular_values.size:
        mismatch = max(
            mismatch,
            float(
                max(
                    np.max(np.abs(rec_f.singular_values[k:]), initial=0.0),
                    np.max(np.abs(rec_r.singular_values[k:]), initial=0.0),
                )
                / scale
            ),
        )

    E_f = transfer_matrix(fwd).entries
    E_r = transfer_matrix(rfl).entries
    transpose_res = float(np.linalg.norm(E_r - E_f.T) / max(np.linalg.norm(E_f), 1e-300))

    target = [A.T for A in fwd.matrices]
    kept_s = rec_f.singular_values[: rec_f.d_prime]
    aligned, rotated = _align_degenerate_groups(list(rfl.matrices), target, kept_s)
    rfl_aligned = UniformMPS(tuple(aligned), rfl.log_scale)
    mirror_of_fwd = reflect(fwd)
    fid = abs(state_overlap(rfl_aligned, mirror_of_fwd, fidelity_length))

    record_f = RGStepRecord(
        rec_f.step_index, rec_f.singular_values, rec_f.d_prime, transpose_res,
        rec_f.eta, rec_f.log_scale_delta,
    )
    return ConjugacyReport(record_f, rec_r, mismatch, transpose_res, float(fid), rotated)


def overlap_flow(mps: UniformMPS, N: int, steps: int) -> list[complex]:
    """Reflection overlap per scale, computed from powers of the original E.

    Entry k (k = 0..steps) is Tr[(E^{2^k})^{T2}]^{N/2^k} / Tr E^N, where the
    partial transpose reshuffles the second tensor factor of the matrix
    power.  Gauge invariance of the blocking makes each entry equal the
    overlap of the k-times coarse-grained state on N/2^k sites.
    """
    if N < 1:
        raise BadLengthError("N must be >= 1")
    if N % (2**steps) != 0:
        raise BadLengthError(f"N={N} not divisible by 2^{steps}")
    E = transfer_matrix(mps)
    D = mps.D
    den_eigs = E.eigenvalues
    rho_E = float(np.abs(den_eigs[0]))
    if rho_E == 0.0:
        raise DegenerateNormError("zero transfer spectrum")
    log_den_scale = N * math.log(rho_E)
    den = scaled_power_sum(den_eigs, N, rho_E)
    if abs(den) < 1e-280:
        raise DegenerateNormError("norm trace underflow")

    out: list[complex] = []
    # maintain E^{2^k} = exp(log_factor) * Ek throughout the squarings
    Ek = E.entries / rho_E
    log_factor = math.log(rho_E)
    for k in range(steps + 1):
        n = N // (2**k)
        KT = partial_transpose(Ek, D, D)
        eigs = np.linalg.eigvals(KT)
        rho_K = float(np.abs(eigs).max(initial=0.0))
        if rho_K == 0.0:
            out.append(0.0j)
        else:
            num = scaled_power_sum(eigs, n, rho_K)
            log_ratio = n * (log_factor + math.log(rho_K)) - log_den_scale
            out.append(cmath.exp(log_ratio) * num / den)
        if k < steps:
            Ek = Ek @ Ek
            log_factor *= 2.0
            norm = dominant_modulus(Ek)
            if norm == 0.0:
                raise ZeroStateError("transfer power vanished during squaring")
            Ek = Ek / norm
            log_factor += math.log(norm)
    return out


def fixed_point(mps: UniformMPS, tol: float = 1e-10, max_steps: int = 64) -> FixedPointReport:
    """Iterated normalized squaring of E towards its rank-one limit.

    With a unique dominant eigenvalue the limit is |phi_R><phi_L| with the
    bra/ket normalized so their biorthogonal product is one; both vectors
    are reported with leading nonzero component scaled to one.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    E = transfer_matrix(mps)
    rho = E.dominant_modulus
    if rho == 0.0:
        raise ZeroStateError("zero transfer matrix")
    Ek = E.entries / rho
    steps_used = 0
    converged_frob = False
    for _ in range(max_steps):
        E_next = Ek @ Ek
        nrm = dominant_modulus(E_next)
        if nrm == 0.0:
            raise NoConvergenceError("transfer power vanished")
        E_next = E_next / nrm
        steps_used += 1
        if np.linalg.norm(E_next - Ek) < tol:
            Ek = E_next
            converged_frob = True
            break
        Ek = E_next
    if not converged_frob:
        raise NoConvergenceError(f"no fixed point within {max_steps} squarings")

    ev = E.eigenvalues
    unique = ev.size < 2 or (abs(ev[0]) - abs(ev[1])) >= DEGENERACY_REL_TOL * abs(ev[0])
    E_inf = TransferMatrix(Ek, TransferKind.PLAIN)
    if not unique:
        return FixedPointReport(False, steps_used, E_inf, None, None, False, float("inf"))

    w, VR = np.linalg.eig(E.entries)
    i = int(np.argmax(np.abs(w)))
    r = VR[:, i]
    wl, VL = np.linalg.eig(E.entries.conj().T)
    j = int(np.argmax(np.abs(wl)))
    l = VL[:, j]

    def lead_normalize(v: np.ndarray) -> np.ndarray:
        nz = np.flatnonzero(np.abs(v) > 1e-12 * np.abs(v).max())
        return v / v[nz[0]]

    phi_R = lead_normalize(r)
    phi_L = lead_normalize(l)
    rank1 = np.outer(phi_R, phi_L.conj()) / np.vdot(phi_L, phi_R)
    residual = float(np.linalg.norm(Ek - rank1) / max(np.linalg.norm(Ek), 1e-300))
    return FixedPointReport(True, steps_used, E_inf, phi_R, phi_L, True, residual)


@dataclass(frozen=True)
class FixedPointMPSReport:
    ok: bool
    transfer_residual: float
    steps_used: int
    final: UniformMPS
    eta_infinity: complex


def fixed_point_mps_check(
    mps: UniformMPS, max_steps: int = 40, tol: float = 1e-10, n_sites: int = 4
) -> FixedPointMPSReport:
    """Couple the matrix-level fixed point to the coarse-grained trajectory.

    Runs the blocking flow until the stored transfer matrix stops moving,
    then compares it against the squaring limit of the original E and
    reports the fixed-point reflection overlap on ``n_sites`` coarse sites.
    """
    fp = fixed_point(mps, tol=tol, max_steps=64)
    if not fp.converged:
        raise NotConvergedError("transfer squaring has no unique rank-one limit")
    current = mps
    prev_E = transfer_matrix(current).entries
    prev_E = prev_E / max(dominant_modulus(prev_E), 1e-300)
    converged = False
    steps = 0
    for _ in range(max_steps):
        current, _ = coarse_grain_step(current, with_conjugacy=False)
        steps += 1
        E_now = transfer_matrix(current).entries
        if E_now.shape == prev_E.shape and np.linalg.norm(E_now - prev_E) < tol:
            converged = True
            break
        prev_E = E_now
    if not converged:
        raise NotConvergedError(f"trajectory transfer not stationary after {max_steps} steps")
    E_traj = transfer_matrix(current).entries
    residual = float(
        np.linalg.norm(E_traj - fp.E_infinity.entries)
        / max(np.linalg.norm(fp.E_infinity.entries), 1e-300)
    )
    eta_inf = overlap_reflection(current, n_sites)
    return FixedPointMPSReport(residual <= 1e-6, residual, steps, current, eta_inf)


def trajectory_csv_rows(traj: RGTrajectory) -> list[dict]:
    """Plot-ready rows: step, chi, d_prime, singular values, eta, residual, xi."""
    rows = []
    state = traj.initial
    width = max((rec.singular_values.size for rec in traj.records), default=0)
    for rec in traj.records:
        state, _ = coarse_grain_step(state, with_conjugacy=False)
        xi = spectrum(transfer_matrix(state)).correlation_length
        row = {
            "step": rec.step_index,
            "chi": 2**rec.step_index,
            "d_prime": rec.d_prime,
        }
        for i in range(width):
            row[f"lambda_{i + 1}"] = (
                float(rec.singular_values[i]) if i < rec.singular_values.size else float("nan")
            )
        row["eta_re"] = float(rec.eta.real) if rec.eta is not None else float("nan")
        row["eta_im"] = float(rec.eta.imag) if rec.eta is not None else float("nan")
        row["conjugacy_residual"] = rec.conjugacy_residual
        row["xi"] = float("nan") if xi is None else xi
        rows.append(row)
    return rows
