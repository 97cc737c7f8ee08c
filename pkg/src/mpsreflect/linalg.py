"""Shared dense linear algebra helpers.

The phase conventions here matter: coarse-graining and DMRG truncation both
compare two independently computed SVDs whose inputs are related by an index
reshuffle (a transpose, or a row/column permutation).  The canonical forms
below are chosen to be equivariant under those reshuffles, so that the two
decompositions come out aligned tensor-by-tensor instead of agreeing only up
to per-vector phases.
"""

from __future__ import annotations

import numpy as np

#: relative width of the band of entries treated as tied at maximum modulus
PHASE_BAND = 1e-10

#: relative threshold below which singular values count as zero
SVD_ZERO_TOL = 1e-12

#: relative gap under which neighbouring singular values form a degenerate group
SVD_DEGENERACY_TOL = 1e-10


def phase_reference(vals: np.ndarray) -> complex:
    """Unit-modulus reference phase of a complex vector.

    Uses the sum of all entries in the max-modulus tie band, which is
    invariant under any permutation of the entries (sums over the band
    commute with reshuffles).  Falls back to the plain entry sum, then to
    the first band entry, when cancellations leave no usable reference.
    """
    vals = np.asarray(vals).reshape(-1)
    mods = np.abs(vals)
    m = mods.max(initial=0.0)
    if m == 0.0:
        return 1.0 + 0.0j
    band = mods >= m * (1.0 - PHASE_BAND)
    for cand in (vals[band].sum(), vals.sum()):
        if abs(cand) > 1e-8 * m:
            return cand / abs(cand)
    i = int(np.argmax(band))
    return vals[i] / abs(vals[i])


def canonical_phase(v: np.ndarray) -> np.ndarray:
    """Rotate a vector (or tensor) so its reference phase is real positive."""
    return v * np.conj(phase_reference(v))


def canonical_svd(M: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SVD with a deterministic, reshuffle-equivariant gauge.

    Each singular pair (u_l, vh_l) carries one joint phase freedom
    (u e^{it}, vh e^{-it}).  It is fixed from the side of the pair holding
    the globally largest entry, using :func:`phase_reference` of that side.
    Transposing or permuting the input swaps/permutes the sides consistently,
    so both decompositions of a reshuffled pair of matrices land on matching
    vectors (up to degenerate-subspace mixing, which no per-vector gauge can
    resolve).
    """
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    U = np.ascontiguousarray(U)
    Vh = np.ascontiguousarray(Vh)
    for l in range(s.size):
        u = U[:, l]
        vh = Vh[l, :]
        mu = np.abs(u).max(initial=0.0)
        mv = np.abs(vh).max(initial=0.0)
        if max(mu, mv) == 0.0:
            continue
        if mu >= mv:
            ref = phase_reference(u)
            U[:, l] = u * np.conj(ref)
            Vh[l, :] = vh * ref
        else:
            ref = phase_reference(vh)
            Vh[l, :] = vh * np.conj(ref)
            U[:, l] = u * ref
    return U, s, Vh


def degenerate_groups(s: np.ndarray, rel_tol: float = SVD_DEGENERACY_TOL) -> list[range]:
    """Partition a descending value list into groups of near-equal entries."""
    groups: list[range] = []
    n = len(s)
    if n == 0:
        return groups
    scale = max(abs(s[0]), 1e-300)
    start = 0
    for i in range(1, n + 1):
        if i == n or abs(s[i] - s[i - 1]) > rel_tol * scale:
            groups.append(range(start, i))
            start = i
    return groups


def sorted_eigenvalues(M: np.ndarray) -> np.ndarray:
    """Eigenvalues sorted by descending modulus, then real, then imaginary part."""
    ev = np.linalg.eigvals(M)
    order = np.lexsort((-ev.imag, -ev.real, -np.abs(ev)))
    return ev[order]


def eigen_multisets_close(a: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> bool:
    """Compare two eigenvalue multisets within ``tol`` scaled by the dominant modulus."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        return False
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1.0)
    return bool(np.all(np.abs(a - b) <= tol * scale))


def scaled_power_sum(eigs: np.ndarray, n: int, scale: float) -> complex:
    """Sum of (eig/scale)**n; stable for large n when all |eig| <= scale."""
    if scale == 0.0:
        return complex(len(eigs)) if n == 0 else 0.0j
    r = np.asarray(eigs, dtype=complex) / scale
    return complex(np.sum(r**n))


def partial_transpose(M: np.ndarray, D_left: int, D_right: int) -> np.ndarray:
    """Transpose the second tensor factor of a (D_left*D_right)-dim kernel.

    For K = sum_s conj(A^s) (x) B^s this returns sum_s conj(A^s) (x) (B^s)^T.
    """
    T = M.reshape(D_left, D_right, D_left, D_right)
    return np.ascontiguousarray(T.transpose(0, 3, 2, 1).reshape(M.shape))


def dominant_modulus(M: np.ndarray) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    return float(np.abs(np.linalg.eigvals(M)).max(initial=0.0))
