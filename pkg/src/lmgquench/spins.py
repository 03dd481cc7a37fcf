"""Collective-spin operators and the LMG Hamiltonian in the Dicke basis.

Everything lives in the fully symmetric sector of N = 2j spins, i.e. a
single collective spin of length j with Hilbert-space dimension d = 2j + 1.
Basis states are labelled by the J_z projection m in {-j, ..., +j} and
stored in ascending m order, so Dicke index i = m + j runs 0..d-1.

The Hamiltonian

    H = -h J_x - (delta / 2j) J_z^2        (h, delta >= 0)

is exactly tridiagonal in this basis: J_z is diagonal and J_x couples only
neighbouring m values.  Operators are therefore kept in tridiagonal storage;
dense expansion exists only so tests can compare against dense oracles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORM_TOL = 1e-12


@dataclass(frozen=True)
class SpinSector:
    """Symmetric collective-spin sector, keyed by the integer 2j.

    Storing 2j (instead of the possibly half-integer j) keeps half-integer
    spins exact; j, the dimension d and the particle number N = 2j are
    derived.
    """

    two_j: int

    def __post_init__(self) -> None:
        if not isinstance(self.two_j, (int, np.integer)) or self.two_j < 1:
            raise ValueError(f"two_j must be a positive integer, got {self.two_j!r}")

    @property
    def j(self) -> float:
        return self.two_j / 2.0

    @property
    def dim(self) -> int:
        return self.two_j + 1

    @property
    def n_particles(self) -> int:
        return self.two_j

    def m_values(self) -> np.ndarray:
        """J_z projections m = -j, -j+1, ..., +j in Dicke-index order."""
        return np.arange(self.dim, dtype=float) - self.j

    def dicke_index(self, m: float) -> int:
        """Index of the Dicke state with projection m (i = m + j)."""
        i = m + self.j
        idx = int(round(i))
        if abs(i - idx) > 1e-9 or not 0 <= idx < self.dim:
            raise ValueError(f"m={m} is not a projection of the j={self.j} sector")
        return idx


@dataclass(frozen=True)
class LmgParams:
    """Transverse field h and interaction strength delta, both >= 0."""

    h: float
    delta: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.h) or self.h < 0:
            raise ValueError(f"h must be finite and >= 0, got {self.h}")
        if not np.isfinite(self.delta) or self.delta < 0:
            raise ValueError(f"delta must be finite and >= 0, got {self.delta}")


@dataclass(frozen=True)
class SymTridiagonal:
    """Real symmetric tridiagonal matrix: main diagonal + one off-diagonal."""

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self) -> None:
        diag = np.asarray(self.diag, dtype=float)
        offdiag = np.asarray(self.offdiag, dtype=float)
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "offdiag", offdiag)
        if diag.ndim != 1 or offdiag.ndim != 1 or offdiag.size != diag.size - 1:
            raise ValueError("need diag of length d and offdiag of length d-1")
        if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(offdiag))):
            raise ValueError("matrix entries must be finite")

    @property
    def dim(self) -> int:
        return self.diag.size

    def matvec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.shape != (self.dim,):
            raise ValueError(f"vector of shape {v.shape} does not match dim {self.dim}")
        out = self.diag * v
        out[:-1] += self.offdiag * v[1:]
        out[1:] += self.offdiag * v[:-1]
        return out

    def to_dense(self) -> np.ndarray:
        """Dense expansion; intended for small-d test oracles."""
        dense = np.diag(self.diag)
        idx = np.arange(self.dim - 1)
        dense[idx, idx + 1] = self.offdiag
        dense[idx + 1, idx] = self.offdiag
        return dense

    def spectral_range_bound(self) -> float:
        """Gershgorin upper bound on the spectral range (cheap, no solve)."""
        radius = np.zeros(self.dim)
        radius[:-1] += np.abs(self.offdiag)
        radius[1:] += np.abs(self.offdiag)
        return float(np.max(self.diag + radius) - np.min(self.diag - radius))


@dataclass(frozen=True)
class StateVector:
    """Normalized pure state over the Dicke basis of a sector."""

    amplitudes: np.ndarray
    sector: SpinSector = field(compare=False)

    def __post_init__(self) -> None:
        amp = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, "amplitudes", amp)
        if amp.shape != (self.sector.dim,):
            raise ValueError(
                f"amplitude vector of shape {amp.shape} does not match sector dim {self.sector.dim}"
            )
        norm = float(np.linalg.norm(amp))
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state norm {norm} deviates from 1 by more than {NORM_TOL}")

    @property
    def dim(self) -> int:
        return self.sector.dim


def dicke_state(sector: SpinSector, m: float) -> StateVector:
    """The Dicke basis state |j, m> as a StateVector."""
    amp = np.zeros(sector.dim, dtype=complex)
    amp[sector.dicke_index(m)] = 1.0
    return StateVector(amp, sector)


def build_jz(sector: SpinSector) -> np.ndarray:
    """Diagonal of J_z: entry i equals m = i - j."""
    return sector.m_values()


def _ladder_couplings(sector: SpinSector) -> np.ndarray:
    # <m+1| J_+ |m> = sqrt(j(j+1) - m(m+1)) for m = -j .. j-1
    j = sector.j
    m = sector.m_values()[:-1]
    return np.sqrt(j * (j + 1.0) - m * (m + 1.0))


def build_jx(sector: SpinSector) -> SymTridiagonal:
    """J_x = (J_+ + J_-)/2 as a symmetric tridiagonal with zero diagonal."""
    return SymTridiagonal(np.zeros(sector.dim), 0.5 * _ladder_couplings(sector))


def build_lmg_hamiltonian(sector: SpinSector, params: LmgParams) -> SymTridiagonal:
    """H = -h J_x - (delta / 2j) J_z^2 in tridiagonal storage."""
    m = sector.m_values()
    diag = -(params.delta / sector.two_j) * m * m
    offdiag = -params.h * 0.5 * _ladder_couplings(sector)
    return SymTridiagonal(diag, offdiag)


def expectation(state: StateVector, op: np.ndarray | SymTridiagonal) -> float:
    """<psi|O|psi> for a diagonal (1-d array) or SymTridiagonal operator.

    The quadratic form of a real symmetric operator is real; any residual
    imaginary part must sit at round-off level and is asserted away.
    """
    psi = state.amplitudes
    if isinstance(op, SymTridiagonal):
        if op.dim != psi.size:
            raise ValueError(f"operator dim {op.dim} does not match state dim {psi.size}")
        value = complex(np.vdot(psi, op.matvec(psi)))
    else:
        diag = np.asarray(op)
        if diag.shape != psi.shape:
            raise ValueError(f"operator shape {diag.shape} does not match state dim {psi.size}")
        value = complex(np.sum(diag * np.abs(psi) ** 2))
    assert abs(value.imag) < 1e-12, f"expectation acquired imaginary part {value.imag}"
    return value.real
