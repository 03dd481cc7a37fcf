"""Flat states, conjugate bases and rugosity of pure states.

Given an orthonormal basis {|b_k>}, the flat state |w> = d^{-1/2} sum_k |b_k>
is the unique state with completely uniform amplitudes in that basis, and the
rugosity of a pure state |psi> relative to the basis is

    R = -ln |<w|psi>|^2 ,

i.e. the log-distinguishability of psi from the flat reference.  R >= 0 with
equality only for the flat state itself, and R -> infinity as psi becomes
orthogonal to |w>.

Overlaps are accumulated with compensated (exactly rounded) summation: deep
Loschmidt minima push |<w|psi>|^2 through dozens of orders of magnitude and
naive accumulation turns the logarithm into noise well before the clip floor
is reached.  Squared overlaps below the clip floor yield a capped value
tagged ``clipped=True`` instead of an infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .spins import SpinSector, StateVector, SymTridiagonal
from .spectral import diagonalize_gauge_fixed

CLIP_FLOOR = 1e-280

DICKE_LABEL = "dicke"
PREQUENCH_LABEL = "prequench-eigen"
FOURIER_LABEL = "fourier-conjugate"


@dataclass(frozen=True)
class OrthonormalBasis:
    """Orthonormal basis of the sector; column k of ``vectors`` is |b_k>."""

    vectors: np.ndarray
    sector: SpinSector = field(compare=False)
    label: str = "custom"

    def __post_init__(self) -> None:
        v = np.asarray(self.vectors)
        object.__setattr__(self, "vectors", v)
        d = self.sector.dim
        if v.shape != (d, d):
            raise ValueError(f"basis matrix shape {v.shape} does not match sector dim {d}")

    @property
    def dim(self) -> int:
        return self.sector.dim

    def orthonormality_defect(self) -> float:
        """max |B^H B - I|; columns are orthonormal when this is tiny."""
        gram = self.vectors.conj().T @ self.vectors
        return float(np.max(np.abs(gram - np.eye(self.dim))))


@dataclass(frozen=True)
class FlatState:
    state: StateVector
    basis_label: str


class RugosityResult(NamedTuple):
    value: float
    clipped: bool


def compensated_dot(w: np.ndarray, psi: np.ndarray) -> complex:
    """<w|psi> with exactly rounded summation of real and imaginary parts."""
    terms = np.conj(w) * psi
    if np.iscomplexobj(terms):
        return complex(math.fsum(terms.real.tolist()), math.fsum(terms.imag.tolist()))
    return complex(math.fsum(terms.tolist()), 0.0)


def neg_log_clipped(squared_overlap: float, clip_floor: float = CLIP_FLOOR) -> RugosityResult:
    """-ln of a squared overlap, capped at -ln(clip_floor) when it underflows."""
    if squared_overlap < clip_floor:
        return RugosityResult(-math.log(clip_floor), True)
    return RugosityResult(-math.log(squared_overlap), False)


def dicke_basis(sector: SpinSector) -> OrthonormalBasis:
    return OrthonormalBasis(np.eye(sector.dim), sector, DICKE_LABEL)


def flat_state(basis: OrthonormalBasis) -> FlatState:
    """|w> = d^{-1/2} sum_k |b_k>; unit norm for any orthonormal basis."""
    amps = basis.vectors.sum(axis=1) / math.sqrt(basis.dim)
    return FlatState(StateVector(amps, basis.sector), basis.label)


def rugosity(
    state: StateVector,
    basis: OrthonormalBasis,
    clip_floor: float = CLIP_FLOOR,
) -> RugosityResult:
    """Rugosity R = -ln |<w|psi>|^2 of a pure state relative to a basis."""
    if state.dim != basis.dim:
        raise ValueError(f"state dim {state.dim} does not match basis dim {basis.dim}")
    w = flat_state(basis).state.amplitudes
    overlap = compensated_dot(w, state.amplitudes)
    return neg_log_clipped(abs(overlap) ** 2, clip_floor)


def rugosity_density(value: float, sector: SpinSector) -> float:
    """Rugosity per spin, R / N with N = 2j."""
    return value / sector.n_particles


def fourier_conjugate_basis(anchor_index: int, sector: SpinSector) -> OrthonormalBasis:
    """Discrete-Fourier basis whose flat state is the Dicke vector ``anchor_index``.

    Column k holds d^{-1/2} e^{-i (i - a) phi_k} with phi_k = 2 pi k / d; the
    phase offset by the anchor index a makes the column average collapse onto
    the anchor Dicke vector (a geometric-sum identity, exact in exact
    arithmetic).
    """
    d = sector.dim
    if not 0 <= anchor_index < d:
        raise ValueError(f"anchor index {anchor_index} outside 0..{d - 1}")
    rows = np.arange(d) - anchor_index
    cols = np.arange(d)
    vectors = np.exp(-2j * np.pi / d * np.outer(rows, cols)) / math.sqrt(d)
    return OrthonormalBasis(vectors, sector, FOURIER_LABEL)


def fourier_flat_vector(anchor_index: int, sector: SpinSector) -> np.ndarray:
    """Exact-arithmetic flat state of the anchored Fourier basis.

    The column average of :func:`fourier_conjugate_basis` is the anchor Dicke
    vector exactly; evaluating the geometric sum in floating point would
    instead leave O(sqrt(d) eps) residue on every other component, which is
    enough to contaminate log-overlaps at deep echo minima.  Diagnostics that
    rely on the identity use this vector.
    """
    d = sector.dim
    if not 0 <= anchor_index < d:
        raise ValueError(f"anchor index {anchor_index} outside 0..{d - 1}")
    w = np.zeros(d, dtype=complex)
    w[anchor_index] = 1.0
    return w


def prequench_basis(h0_matrix: SymTridiagonal, sector: SpinSector) -> OrthonormalBasis:
    """Eigenbasis of the pre-quench Hamiltonian with the fixed sign gauge.

    A diagonal pre-quench Hamiltonian (transverse field zero) is already
    diagonal in the Dicke basis but with m <-> -m degenerate pairs; the Dicke
    basis itself is declared canonical in that case, removing any solver
    arbitrariness inside the degenerate blocks.
    """
    if h0_matrix.dim != sector.dim:
        raise ValueError(f"matrix dim {h0_matrix.dim} does not match sector dim {sector.dim}")
    if np.all(h0_matrix.offdiag == 0.0):
        return dicke_basis(sector)
    decomposition = diagonalize_gauge_fixed(h0_matrix, sector)
    return OrthonormalBasis(decomposition.eigenvectors, sector, PREQUENCH_LABEL)
