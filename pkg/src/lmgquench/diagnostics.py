"""Quench diagnostics: Loschmidt traces, long-time averages, sweeps, predictors.

Protocol: prepare the system in a state tied to the pre-quench Hamiltonian
H(h_0), switch abruptly to H(h_f) at t = 0, evolve spectrally.  Two families
of diagnostics are produced.

Long-time order parameters
    The finite-horizon average of <J_z>/j and of the pre-quench-basis
    rugosity, each over T = t_factor / nu with nu the smallest Bohr frequency
    of the post-quench spectrum.  Swept over h_f, these distinguish the
    confined dynamical phase (below the critical quench) from the
    symmetry-restored one.

Loschmidt echo and rate function
    L_t = |<psi_0|psi_t>|^2 and  lambda_t = -ln(L_t)/N.  The rate function
    equals the rugosity density in the conjugate basis whose flat state is
    the initial state itself, so the trace's ``rugosity_fourier`` series is
    evaluated through exactly that identity (the basis construction lives in
    :mod:`lmgquench.texture`; its column average collapses onto the initial
    state with zero residue only in exact arithmetic, which is why the trace
    uses the algebraic form).

Semiclassical predictors: treating z = J_z/j and the conjugate angle phi as
canonical variables gives the classical energy density

    E(z, phi)/j = -h sqrt(1 - z^2) cos(phi) - (delta/2) z^2

whose saddle at (0, 0) defines the separatrix energy -h.  Equating the
quench-injected energy with the separatrix energy of H(h_f) yields the
dynamical critical field (delta + h_0)/2.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .spins import (
    LmgParams,
    SpinSector,
    StateVector,
    build_lmg_hamiltonian,
    dicke_state,
)
from .spectral import (
    ConvergenceError,
    EigenDecomposition,
    diagonalize_gauge_fixed,
    eigenvalues_only,
    make_propagator,
    smallest_bohr_frequency,
    smallest_gap_above_floor,
)
from .texture import CLIP_FLOOR, flat_state, prequench_basis

RULE_GROUND_STATE = "ground-state"
RULE_DICKE_POLARIZED = "dicke-m-equals-j"
RULE_EXPLICIT = "explicit"
INITIAL_STATE_RULES = (RULE_GROUND_STATE, RULE_DICKE_POLARIZED, RULE_EXPLICIT)

NU_PER_POINT = "per-point"
NU_GLOBAL = "global"
NU_CONVENTIONS = (NU_PER_POINT, NU_GLOBAL)

DEFAULT_T_FACTOR = 1e3
DEFAULT_N_SAMPLES = 20_000
_BLOCK_SIZE = 4096


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid 0..t_max inclusive with n_samples points."""

    t_max: float
    n_samples: int
    times: np.ndarray = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        if not (np.isfinite(self.t_max) and self.t_max > 0):
            raise ValueError(f"t_max must be finite and positive, got {self.t_max}")
        if self.n_samples < 2:
            raise ValueError(f"need at least 2 samples, got {self.n_samples}")
        object.__setattr__(self, "times", np.linspace(0.0, self.t_max, self.n_samples))


@dataclass(frozen=True)
class QuenchSpec:
    """Sudden quench h_0 -> h_f at fixed delta, plus the initial-state rule."""

    sector: SpinSector
    pre: LmgParams
    post: LmgParams
    initial_state_rule: str = RULE_DICKE_POLARIZED
    explicit_state: StateVector | None = None

    def __post_init__(self) -> None:
        if self.pre.delta != self.post.delta:
            raise ValueError(
                f"delta must match across the quench, got {self.pre.delta} -> {self.post.delta}"
            )
        if self.initial_state_rule not in INITIAL_STATE_RULES:
            raise ValueError(
                f"unknown initial-state rule {self.initial_state_rule!r}; "
                f"expected one of {INITIAL_STATE_RULES}"
            )
        if self.initial_state_rule == RULE_EXPLICIT:
            if self.explicit_state is None:
                raise ValueError("rule 'explicit' requires explicit_state")
            if self.explicit_state.sector != self.sector:
                raise ValueError("explicit_state sector does not match spec sector")
        elif self.explicit_state is not None:
            raise ValueError("explicit_state is only allowed with rule 'explicit'")


def initial_state(
    sector: SpinSector,
    pre: LmgParams,
    rule: str,
    explicit_state: StateVector | None = None,
) -> StateVector:
    """Initial state for a quench from H(pre) under the given rule.

    The ground-state rule refuses near-degenerate ground doublets (gap at or
    below the degeneracy floor): inside such a doublet the ground state is
    solver-defined rather than physics-defined, so the caller must pick one
    explicitly.
    """
    if rule == RULE_DICKE_POLARIZED:
        return dicke_state(sector, sector.j)
    if rule == RULE_EXPLICIT:
        if explicit_state is None:
            raise ValueError("rule 'explicit' requires a state vector")
        return explicit_state
    if rule != RULE_GROUND_STATE:
        raise ValueError(f"unknown initial-state rule {rule!r}")
    decomposition = diagonalize_gauge_fixed(build_lmg_hamiltonian(sector, pre), sector)
    gap = float(decomposition.eigenvalues[1] - decomposition.eigenvalues[0])
    if gap <= decomposition.degeneracy_floor():
        raise ValueError(
            f"ground state of h={pre.h}, delta={pre.delta} is part of a near-degenerate "
            f"doublet (gap {gap:.3e}); use rule '{RULE_DICKE_POLARIZED}' or "
            f"'{RULE_EXPLICIT}' to select a member of the manifold"
        )
    return StateVector(decomposition.eigenvectors[:, 0].astype(complex), sector)


def prepare_initial_state(spec: QuenchSpec) -> StateVector:
    return initial_state(spec.sector, spec.pre, spec.initial_state_rule, spec.explicit_state)


def _fsum_series(phases: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_n weights_n * phases[t, n] per row, with exactly rounded summation."""
    terms = phases * weights
    real = terms.real
    imag = terms.imag
    out = np.empty(phases.shape[0], dtype=complex)
    for i in range(out.size):
        out[i] = complex(math.fsum(real[i].tolist()), math.fsum(imag[i].tolist()))
    return out


def _spectral_series(
    decomposition: EigenDecomposition,
    coefficients: np.ndarray,
    times: np.ndarray,
    overlap_weights: dict[str, np.ndarray],
    magnetization: bool,
    block_size: int = _BLOCK_SIZE,
) -> tuple[dict[str, np.ndarray], np.ndarray | None]:
    """Overlap time series (one per weight vector) and optionally <J_z>/j.

    Works in blocks of time samples to bound the memory of the phase matrix
    and of the evolved amplitudes.
    """
    n_t = times.size
    overlaps = {name: np.empty(n_t, dtype=complex) for name in overlap_weights}
    magnet = np.empty(n_t) if magnetization else None
    jz_over_j = decomposition.sector.m_values() / decomposition.sector.j
    vt = decomposition.eigenvectors.T
    lam = decomposition.eigenvalues
    for start in range(0, n_t, block_size):
        stop = min(start + block_size, n_t)
        phases = np.exp(-1j * np.outer(times[start:stop], lam))
        for name, weights in overlap_weights.items():
            overlaps[name][start:stop] = _fsum_series(phases, weights)
        if magnet is not None:
            psi = (phases * coefficients) @ vt
            magnet[start:stop] = np.abs(psi) ** 2 @ jz_over_j
    return overlaps, magnet


def _neg_log_series(squared: np.ndarray, clip_floor: float) -> tuple[np.ndarray, np.ndarray]:
    """-ln of squared overlaps with underflow clipping; returns (values, mask)."""
    mask = squared < clip_floor
    values = -np.log(np.where(mask, clip_floor, squared))
    return values, mask


@dataclass(frozen=True)
class DiagnosticTrace:
    """Time series of echo, rate, rugosities and magnetization on one grid.

    Rugosities are raw (not per-spin); ``clipped`` flags samples where any
    logarithm hit the clip floor.  ``nu`` records the smallest Bohr frequency
    of the post-quench spectrum when it is well defined.
    """

    sector: SpinSector
    times: np.ndarray
    echo: np.ndarray
    rate: np.ndarray
    rugosity_prequench: np.ndarray
    rugosity_fourier: np.ndarray
    magnetization: np.ndarray
    rate_clipped: np.ndarray
    fourier_clipped: np.ndarray
    prequench_clipped: np.ndarray
    nu: float | None = None

    def __post_init__(self) -> None:
        if abs(self.echo[0] - 1.0) > 1e-12:
            raise AssertionError(f"echo at t=0 is {self.echo[0]}, expected 1")
        if abs(self.rate[0]) > 1e-10:
            raise AssertionError(f"rate at t=0 is {self.rate[0]}, expected 0")
        if np.any(self.echo < 0.0) or np.any(self.echo > 1.0 + 1e-12):
            raise AssertionError("echo left [0, 1 + 1e-12]")

    @property
    def clipped(self) -> np.ndarray:
        return self.rate_clipped | self.fourier_clipped | self.prequench_clipped


def loschmidt_trace(
    spec: QuenchSpec,
    grid: TimeGrid,
    clip_floor: float = CLIP_FLOOR,
    block_size: int = _BLOCK_SIZE,
) -> DiagnosticTrace:
    """Full diagnostic trace of a quench on the given time grid.

    The conjugate-basis rugosity uses the initial state as the flat vector;
    that is the exact-arithmetic flat state of the anchored conjugate basis,
    and keeping it exact is what lets the rate/rugosity identity survive at
    echo minima dozens of decades deep.
    """
    sector = spec.sector
    decomposition = diagonalize_gauge_fixed(build_lmg_hamiltonian(sector, spec.post), sector)
    try:
        nu = smallest_bohr_frequency(decomposition)
    except ValueError:
        nu = None
    psi0 = prepare_initial_state(spec)
    prop = make_propagator(decomposition, psi0)
    c = prop.coefficients

    basis_pre = prequench_basis(build_lmg_hamiltonian(sector, spec.pre), sector)
    w_pre = flat_state(basis_pre).state.amplitudes
    g_pre = decomposition.eigenvectors.T @ w_pre

    weights = {
        "echo": np.conj(c) * c,
        "fourier": np.conj(decomposition.eigenvectors.T @ psi0.amplitudes) * c,
        "prequench": np.conj(g_pre) * c,
    }
    overlaps, magnet = _spectral_series(
        decomposition, c, grid.times, weights, magnetization=True, block_size=block_size
    )

    echo = np.abs(overlaps["echo"]) ** 2
    n = sector.n_particles
    rate_raw, rate_clipped = _neg_log_series(echo, clip_floor)
    fourier, fourier_clipped = _neg_log_series(np.abs(overlaps["fourier"]) ** 2, clip_floor)
    prequench, prequench_clipped = _neg_log_series(np.abs(overlaps["prequench"]) ** 2, clip_floor)

    return DiagnosticTrace(
        sector=sector,
        times=grid.times,
        echo=echo,
        rate=rate_raw / n,
        rugosity_prequench=prequench,
        rugosity_fourier=fourier,
        magnetization=magnet,
        rate_clipped=rate_clipped,
        fourier_clipped=fourier_clipped,
        prequench_clipped=prequench_clipped,
        nu=nu,
    )


def loschmidt_echo_manifold(
    spec: QuenchSpec,
    grid: TimeGrid,
    manifold: Sequence[StateVector],
    block_size: int = _BLOCK_SIZE,
) -> np.ndarray:
    """Return probability onto a ground-state manifold: sum_g |<g|psi_t>|^2.

    The manifold vectors must be mutually orthonormal, otherwise the sum is
    not a probability.
    """
    if not manifold:
        raise ValueError("manifold must contain at least one state")
    columns = np.column_stack([g.amplitudes for g in manifold])
    gram = columns.conj().T @ columns
    if np.max(np.abs(gram - np.eye(len(manifold)))) > 1e-10:
        raise ValueError("manifold states are not mutually orthonormal")

    sector = spec.sector
    decomposition = diagonalize_gauge_fixed(build_lmg_hamiltonian(sector, spec.post), sector)
    prop = make_propagator(decomposition, prepare_initial_state(spec))
    weights = {
        f"g{k}": np.conj(decomposition.eigenvectors.T @ columns[:, k]) * prop.coefficients
        for k in range(len(manifold))
    }
    overlaps, _ = _spectral_series(
        decomposition, prop.coefficients, grid.times, weights, magnetization=False,
        block_size=block_size,
    )
    total = np.zeros(grid.times.size)
    for series in overlaps.values():
        total += np.abs(series) ** 2
    return total


def time_average(values: np.ndarray, times: np.ndarray) -> float:
    """Trapezoidal average (1/T) integral_0^T values dt on the sampled grid."""
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if values.size < 2 or values.shape != times.shape:
        raise ValueError("need at least 2 samples on a matching grid")
    return float(np.trapezoid(values, x=times) / (times[-1] - times[0]))


def averaging_time_grid(
    decomposition: EigenDecomposition,
    t_factor: float = DEFAULT_T_FACTOR,
    n_samples: int = DEFAULT_N_SAMPLES,
) -> tuple[TimeGrid, float]:
    """Grid with horizon T = t_factor / nu; returns (grid, nu)."""
    nu = smallest_bohr_frequency(decomposition)
    return TimeGrid(t_factor / nu, n_samples), nu


@dataclass(frozen=True)
class SweepPoint:
    """One row of an order-parameter sweep; error rows carry a message."""

    h_f: float
    nu: float | None = None
    t_max: float | None = None
    avg_magnetization: float | None = None
    avg_rugosity_prequench: float | None = None
    any_clipped: bool = False
    error: str | None = None


def _sweep_point_worker(task: tuple) -> SweepPoint:
    (two_j, h0, delta, h_f, psi0_amplitudes, t_factor, n_samples, nu_override, clip_floor) = task
    sector = SpinSector(two_j)
    try:
        decomposition = diagonalize_gauge_fixed(
            build_lmg_hamiltonian(sector, LmgParams(h_f, delta)), sector
        )
        nu = smallest_bohr_frequency(decomposition)
        grid = TimeGrid(t_factor / (nu_override if nu_override is not None else nu), n_samples)
        psi0 = StateVector(psi0_amplitudes, sector)
        prop = make_propagator(decomposition, psi0)

        basis_pre = prequench_basis(build_lmg_hamiltonian(sector, LmgParams(h0, delta)), sector)
        w_pre = flat_state(basis_pre).state.amplitudes
        g_pre = decomposition.eigenvectors.T @ w_pre
        weights = {"prequench": np.conj(g_pre) * prop.coefficients}
        overlaps, magnet = _spectral_series(
            decomposition, prop.coefficients, grid.times, weights, magnetization=True
        )
        rugosity, clipped = _neg_log_series(np.abs(overlaps["prequench"]) ** 2, clip_floor)
        return SweepPoint(
            h_f=h_f,
            nu=nu,
            t_max=grid.t_max,
            avg_magnetization=time_average(magnet, grid.times),
            avg_rugosity_prequench=time_average(rugosity, grid.times),
            any_clipped=bool(clipped.any()),
        )
    except (ConvergenceError, ValueError) as exc:
        return SweepPoint(h_f=h_f, error=f"{type(exc).__name__}: {exc}")


def _nu_worker(task: tuple) -> float:
    two_j, delta, h_f = task
    sector = SpinSector(two_j)
    lam = eigenvalues_only(build_lmg_hamiltonian(sector, LmgParams(h_f, delta)))
    return smallest_gap_above_floor(lam)


def order_parameter_sweep(
    sector: SpinSector,
    pre: LmgParams,
    h_f_values: Iterable[float],
    rule: str = RULE_DICKE_POLARIZED,
    explicit_state: StateVector | None = None,
    t_factor: float = DEFAULT_T_FACTOR,
    n_samples: int = DEFAULT_N_SAMPLES,
    nu_convention: str = NU_PER_POINT,
    clip_floor: float = CLIP_FLOOR,
    workers: int = 1,
) -> list[SweepPoint]:
    """Time-averaged <J_z>/j and pre-quench-basis rugosity over a set of h_f.

    Points are independent and may run on a process pool; the output is
    always ordered by ascending h_f and identical for any worker count.  The
    averaging horizon uses either the per-point smallest Bohr frequency
    (default) or the global minimum across the sweep.
    """
    h_fs = sorted(float(h) for h in h_f_values)
    if not h_fs:
        raise ValueError("empty h_f sweep")
    if nu_convention not in NU_CONVENTIONS:
        raise ValueError(f"unknown nu convention {nu_convention!r}; expected {NU_CONVENTIONS}")
    psi0 = initial_state(sector, pre, rule, explicit_state)

    nu_override = None
    if nu_convention == NU_GLOBAL:
        nu_tasks = [(sector.two_j, pre.delta, h_f) for h_f in h_fs]
        nu_override = min(_pool_map(_nu_worker, nu_tasks, workers))

    tasks = [
        (sector.two_j, pre.h, pre.delta, h_f, psi0.amplitudes,
         t_factor, n_samples, nu_override, clip_floor)
        for h_f in h_fs
    ]
    return _pool_map(_sweep_point_worker, tasks, workers)


def _pool_map(func, tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [func(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks))


def finite_difference(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """dy/dx on a uniform grid: central in the interior, one-sided at the ends."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3 or y.shape != x.shape:
        raise ValueError("need at least 3 points on a matching grid")
    steps = np.diff(x)
    h = steps[0]
    if h <= 0 or np.max(np.abs(steps - h)) > 1e-9 * abs(h):
        raise ValueError("grid spacing is not uniform")
    out = np.empty_like(y)
    out[1:-1] = (y[2:] - y[:-2]) / (2.0 * h)
    out[0] = (y[1] - y[0]) / h
    out[-1] = (y[-1] - y[-2]) / h
    return out


def sweep_derivative(
    points: Sequence[SweepPoint], column: str = "avg_rugosity_prequench"
) -> tuple[np.ndarray, np.ndarray]:
    """Finite-difference d(column)/dh_f of a sweep table; returns (h_f, deriv)."""
    failed = [p.h_f for p in points if p.error is not None]
    if failed:
        raise ValueError(f"sweep contains failed rows at h_f={failed}")
    h_f = np.array([p.h_f for p in points])
    values = np.array([getattr(p, column) for p in points], dtype=float)
    return h_f, finite_difference(h_f, values)


def classical_energy(z: float, phi: float, params: LmgParams) -> float:
    """Classical energy density at (z, phi); defined only for |z| <= 1."""
    if abs(z) > 1.0:
        raise ValueError(f"|z| must be <= 1, got z={z}")
    return -params.h * math.sqrt(1.0 - z * z) * math.cos(phi) - 0.5 * params.delta * z * z


@dataclass(frozen=True)
class CriticalPredictions:
    """Semiclassical critical values for a quench h_0 -> h_f at fixed delta."""

    h_c_qpt: float
    e_c_esqpt_per_j: float
    e_injected_per_j: float
    h_f_dqpt: float

    def esqpt_consistency_gap(self) -> float:
        """E_inj minus the separatrix energy; zero exactly when the quench
        lands on the separatrix (only guaranteed at h_0 = 0)."""
        return self.e_injected_per_j - self.e_c_esqpt_per_j


def critical_predictions(h_0: float, h_f: float, delta: float) -> CriticalPredictions:
    """Equilibrium critical field, separatrix energy, injected energy and
    dynamical critical field, all per spin."""
    if delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    if h_0 < 0.0 or h_f < 0.0:
        raise ValueError("fields must be non-negative")
    return CriticalPredictions(
        h_c_qpt=delta,
        e_c_esqpt_per_j=-h_f,
        e_injected_per_j=-0.5 * delta - h_f * h_0 / delta,
        h_f_dqpt=0.5 * (delta + h_0),
    )


def symmetry_broken_magnetization(h: float, delta: float) -> tuple[float, float]:
    """The pair of degenerate-minimum magnetizations +-sqrt(1 - h^2/delta^2).

    Only defined in the symmetry-broken phase 0 <= h < delta.
    """
    if not 0.0 <= h < delta:
        raise ValueError(
            f"h={h}, delta={delta} is not in the symmetry-broken phase (need 0 <= h < delta)"
        )
    value = math.sqrt(1.0 - (h / delta) ** 2)
    return value, -value
