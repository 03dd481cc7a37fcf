"""Tridiagonal eigensolver, eigenvector gauge fixing and spectral time evolution.

The Hamiltonians produced by :mod:`lmgquench.spins` are real symmetric
tridiagonal, so full diagonalization is done with the classic QL iteration
with implicit shifts, accumulating the plane rotations into the eigenvector
matrix.  The solver is deterministic: identical input yields bit-identical
output, which matters because downstream texture diagnostics depend on the
eigenvector sign convention.

Sign convention ("gauge"): eigenvalues are sorted ascending and each
eigenvector column is flipped, if necessary, so that its entry of largest
absolute value is non-negative (ties broken by the lowest Dicke index).
Physical quantities (spectra, echoes, expectation values) do not depend on
this choice; overlaps with flat states do, so the rule is applied everywhere
by default and recorded in the decomposition.

Near-degenerate pairs are endemic here: below the double-well separatrix the
spectrum organises into parity doublets whose splitting is exponentially
small in N.  Gaps at or below ``DEGENERACY_FLOOR_FACTOR * spectral range``
are treated as exact degeneracies both when extracting the smallest Bohr
frequency and when forming the diagonal ensemble.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spins import SpinSector, StateVector, SymTridiagonal

DEGENERACY_FLOOR_FACTOR = 1e-12
_MAX_QL_ITERATIONS = 50


class ConvergenceError(RuntimeError):
    """QL iteration failed to deflate an eigenvalue within the iteration cap."""

    def __init__(self, eigenvalue_index: int, max_iterations: int):
        self.eigenvalue_index = eigenvalue_index
        super().__init__(
            f"eigenvalue {eigenvalue_index} did not converge after "
            f"{max_iterations} implicit-shift iterations"
        )


@dataclass(frozen=True)
class EigenDecomposition:
    """Spectral data of a real symmetric matrix.

    eigenvalues are ascending; column k of ``eigenvectors`` belongs to
    eigenvalue k.  ``gauge_fixed`` records whether the sign rule above has
    been applied.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sector: SpinSector = field(compare=False)
    gauge_fixed: bool = False

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def spectral_range(self) -> float:
        return float(self.eigenvalues[-1] - self.eigenvalues[0])

    def degeneracy_floor(self) -> float:
        return DEGENERACY_FLOOR_FACTOR * self.spectral_range()

    def degenerate_blocks(self) -> list[slice]:
        """Maximal runs of eigenvalues whose consecutive gaps sit at or below
        the degeneracy floor."""
        floor = self.degeneracy_floor()
        cuts = np.nonzero(np.diff(self.eigenvalues) > floor)[0] + 1
        edges = [0, *cuts.tolist(), self.dim]
        return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


def _ql_implicit_shift(
    diag: np.ndarray, offdiag: np.ndarray, want_vectors: bool = True
) -> tuple[np.ndarray, np.ndarray | None]:
    """QL sweeps with implicit Wilkinson shifts on a symmetric tridiagonal.

    Returns (eigenvalues, vectors_as_rows), both unsorted; the vector matrix
    is None when ``want_vectors`` is false (roughly 3x faster, used when only
    the spectrum is needed).  Rotations are applied to whole eigenvector rows
    so the inner loop stays vectorised over the Hilbert-space dimension.
    """
    n = diag.size
    d = diag.astype(float).copy()
    e = np.zeros(n)
    e[: n - 1] = offdiag
    vt = np.eye(n) if want_vectors else None
    eps = np.finfo(float).eps

    for l in range(n):
        iterations = 0
        while True:
            for m in range(l, n - 1):
                if abs(e[m]) <= eps * (abs(d[m]) + abs(d[m + 1])):
                    break
            else:
                m = n - 1
            if m == l:
                break
            if iterations >= _MAX_QL_ITERATIONS:
                raise ConvergenceError(l, _MAX_QL_ITERATIONS)
            iterations += 1

            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    # deflated early; undo the last diagonal shift and stop
                    d[i + 1] -= p
                    e[m] = 0.0
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b

                if vt is not None:
                    upper = s * vt[i] + c * vt[i + 1]
                    vt[i] = c * vt[i] - s * vt[i + 1]
                    vt[i + 1] = upper
            else:
                d[l] -= p
                e[l] = g
                e[m] = 0.0
    return d, vt


def diagonalize(matrix: SymTridiagonal, sector: SpinSector) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric tridiagonal, eigenvalues ascending."""
    if matrix.dim != sector.dim:
        raise ValueError(f"matrix dim {matrix.dim} does not match sector dim {sector.dim}")
    values, vectors_rows = _ql_implicit_shift(matrix.diag, matrix.offdiag)
    order = np.argsort(values, kind="stable")
    return EigenDecomposition(
        eigenvalues=values[order],
        eigenvectors=np.ascontiguousarray(vectors_rows[order].T),
        sector=sector,
        gauge_fixed=False,
    )


def eigenvalues_only(matrix: SymTridiagonal) -> np.ndarray:
    """Ascending spectrum without eigenvector accumulation."""
    values, _ = _ql_implicit_shift(matrix.diag, matrix.offdiag, want_vectors=False)
    values.sort(kind="stable")
    return values


def gauge_fix(decomposition: EigenDecomposition) -> EigenDecomposition:
    """Flip eigenvector signs so the largest-|entry| of each column is >= 0.

    np.argmax returns the first maximal entry, which implements the
    lowest-index tie-break.
    """
    v = decomposition.eigenvectors.copy()
    anchor_rows = np.argmax(np.abs(v), axis=0)
    anchor_vals = v[anchor_rows, np.arange(v.shape[1])]
    v[:, anchor_vals < 0.0] *= -1.0
    return EigenDecomposition(
        eigenvalues=decomposition.eigenvalues,
        eigenvectors=v,
        sector=decomposition.sector,
        gauge_fixed=True,
    )


def diagonalize_gauge_fixed(matrix: SymTridiagonal, sector: SpinSector) -> EigenDecomposition:
    return gauge_fix(diagonalize(matrix, sector))


@dataclass(frozen=True)
class Propagator:
    """Spectral propagator e^{-iHt} acting on a fixed initial state.

    Caches the initial state's coefficients c_n = <n|psi_0> in the eigenbasis
    of the evolving Hamiltonian; evolution is then a phase twist plus a
    basis rotation back to the Dicke basis.
    """

    decomposition: EigenDecomposition
    coefficients: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coefficients, dtype=complex)
        object.__setattr__(self, "coefficients", c)
        weight = float(np.sum(np.abs(c) ** 2))
        if abs(weight - 1.0) > 1e-12:
            raise ValueError(f"coefficient weight {weight} deviates from 1 beyond 1e-12")

    @property
    def sector(self) -> SpinSector:
        return self.decomposition.sector


def make_propagator(decomposition: EigenDecomposition, initial: StateVector) -> Propagator:
    c = decomposition.eigenvectors.T @ initial.amplitudes
    return Propagator(decomposition, c)


def phase_amplitudes(prop: Propagator, times: np.ndarray) -> np.ndarray:
    """Eigenbasis amplitudes e^{-i lambda_n t} c_n, shape (n_times, d)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    return np.exp(-1j * np.outer(times, prop.decomposition.eigenvalues)) * prop.coefficients


def evolve(prop: Propagator, t: float) -> StateVector:
    """|psi_t> = V e^{-i Lambda t} V^T |psi_0>, exact up to round-off."""
    amps = prop.decomposition.eigenvectors @ phase_amplitudes(prop, np.array([t]))[0]
    return StateVector(amps, prop.sector)


def evolve_grid(prop: Propagator, times: np.ndarray) -> np.ndarray:
    """Evolved Dicke-basis amplitudes for every t in times, shape (n_times, d)."""
    return phase_amplitudes(prop, times) @ prop.decomposition.eigenvectors.T


def smallest_gap_above_floor(eigenvalues: np.ndarray) -> float:
    """Minimal difference between (sorted) eigenvalues above the degeneracy floor.

    Considers all pairs, not just consecutive ones: a chain of sub-floor gaps
    can add up to the smallest super-floor difference.  Raises if the spectrum
    is fully degenerate under the floor.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    floor = DEGENERACY_FLOOR_FACTOR * float(lam[-1] - lam[0])
    first_above = np.searchsorted(lam, lam + floor, side="right")
    valid = first_above < lam.size
    if not np.any(valid):
        raise ValueError(
            "all spectral gaps sit at or below the degeneracy floor; "
            "the time-averaging horizon is ill-defined"
        )
    gaps = lam[first_above[valid]] - lam[valid]
    return float(np.min(gaps))


def smallest_bohr_frequency(decomposition: EigenDecomposition) -> float:
    """Minimal eigenvalue difference above the degeneracy floor.

    Parity doublets below the separatrix split by amounts that underflow any
    sensible time-averaging horizon; gaps at or below the floor are therefore
    excluded.
    """
    return smallest_gap_above_floor(decomposition.eigenvalues)


def _apply_operator_columns(op: np.ndarray | SymTridiagonal, v: np.ndarray) -> np.ndarray:
    if isinstance(op, SymTridiagonal):
        if op.dim != v.shape[0]:
            raise ValueError(f"operator dim {op.dim} does not match dimension {v.shape[0]}")
        out = op.diag[:, None] * v
        out[:-1] += op.offdiag[:, None] * v[1:]
        out[1:] += op.offdiag[:, None] * v[:-1]
        return out
    diag = np.asarray(op, dtype=float)
    if diag.ndim != 1 or diag.size != v.shape[0]:
        raise ValueError(f"operator shape {diag.shape} does not match dimension {v.shape[0]}")
    return diag[:, None] * v


def diagonal_ensemble_average(prop: Propagator, op: np.ndarray | SymTridiagonal) -> float:
    """Infinite-time average of <O> in closed form.

    Coherences survive only inside degenerate blocks, so the average is the
    sum of block quadratic forms  sum_B  (c_B)^H O_B (c_B); for a spectrum
    with no degeneracies this reduces to sum_n |c_n|^2 O_nn.
    """
    dec = prop.decomposition
    c = prop.coefficients
    ov = _apply_operator_columns(op, dec.eigenvectors)
    total = 0.0 + 0.0j
    for block in dec.degenerate_blocks():
        vb = dec.eigenvectors[:, block]
        ob = vb.T @ ov[:, block]
        xb = c[block]
        total += np.vdot(xb, ob @ xb)
    assert abs(total.imag) < 1e-10, f"diagonal ensemble acquired imaginary part {total.imag}"
    return float(total.real)
