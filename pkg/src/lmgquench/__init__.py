"""Collective-spin quench simulator for the LMG model.

Exact diagonalization of the symmetric sector, spectral time evolution,
Loschmidt-echo rate functions, state-texture (rugosity) diagnostics and
order-parameter sweeps, plus a CSV-emitting command line interface.
"""

from .spins import (
    LmgParams,
    SpinSector,
    StateVector,
    SymTridiagonal,
    build_jx,
    build_jz,
    build_lmg_hamiltonian,
    dicke_state,
    expectation,
)
from .spectral import (
    ConvergenceError,
    EigenDecomposition,
    Propagator,
    diagonal_ensemble_average,
    diagonalize,
    diagonalize_gauge_fixed,
    eigenvalues_only,
    evolve,
    evolve_grid,
    gauge_fix,
    make_propagator,
    phase_amplitudes,
    smallest_bohr_frequency,
)
from .texture import (
    CLIP_FLOOR,
    FlatState,
    OrthonormalBasis,
    RugosityResult,
    dicke_basis,
    flat_state,
    fourier_conjugate_basis,
    fourier_flat_vector,
    prequench_basis,
    rugosity,
    rugosity_density,
)
from .diagnostics import (
    CriticalPredictions,
    DiagnosticTrace,
    QuenchSpec,
    SweepPoint,
    TimeGrid,
    averaging_time_grid,
    classical_energy,
    critical_predictions,
    finite_difference,
    initial_state,
    loschmidt_echo_manifold,
    loschmidt_trace,
    order_parameter_sweep,
    prepare_initial_state,
    sweep_derivative,
    symmetry_broken_magnetization,
    time_average,
)

__version__ = "0.1.0"
