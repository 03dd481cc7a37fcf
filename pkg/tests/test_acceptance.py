"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s` to see the report lines.
The order-parameter sweeps dominate the runtime (a few minutes each at
j = 100); they are shared across criteria through module-scoped fixtures.
"""

import time

import numpy as np
import pytest

from oracles import series_expm

from lmgquench.spins import (
    LmgParams,
    SpinSector,
    StateVector,
    build_jz,
    build_lmg_hamiltonian,
    dicke_state,
    expectation,
)
from lmgquench.spectral import (
    diagonal_ensemble_average,
    diagonalize_gauge_fixed,
    evolve,
    evolve_grid,
    make_propagator,
)
from lmgquench.texture import flat_state, fourier_conjugate_basis, fourier_flat_vector
from lmgquench.diagnostics import (
    QuenchSpec,
    TimeGrid,
    averaging_time_grid,
    classical_energy,
    critical_predictions,
    loschmidt_trace,
    order_parameter_sweep,
    sweep_derivative,
    symmetry_broken_magnetization,
    time_average,
)

DELTA = 1.0
SWEEP_GRID = np.linspace(0.0, 1.0, 101)


def report(criterion, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {criterion}: {status} — {detail}")
    assert ok, f"{criterion}: {detail}"


def polarized_quench(two_j, h_f):
    return QuenchSpec(
        SpinSector(two_j), LmgParams(0.0, DELTA), LmgParams(h_f, DELTA)
    )


@pytest.fixture(scope="module")
def sweep_tables():
    tables = {}
    for two_j in (40, 100, 200):
        tables[two_j] = order_parameter_sweep(
            SpinSector(two_j), LmgParams(0.0, DELTA), SWEEP_GRID, workers=2
        )
    return tables


def sweep_arrays(points):
    h_f = np.array([p.h_f for p in points])
    mag = np.array([p.avg_magnetization for p in points])
    rug = np.array([p.avg_rugosity_prequench for p in points])
    return h_f, mag, rug


def test_criterion_1_central_identity():
    started = time.perf_counter()
    worst = 0.0
    for two_j in (20, 100, 400):
        for h_f in (0.3, 0.5, 0.8):
            spec = polarized_quench(two_j, h_f)
            dec = diagonalize_gauge_fixed(
                build_lmg_hamiltonian(spec.sector, spec.post), spec.sector
            )
            grid, _ = averaging_time_grid(dec, n_samples=2000)
            trace = loschmidt_trace(spec, grid)
            keep = ~trace.clipped
            assert keep.any()
            deviation = np.abs(two_j * trace.rate - trace.rugosity_fourier)[keep]
            worst = max(worst, float(deviation.max()))
    elapsed = time.perf_counter() - started
    report(
        "1 central-identity",
        worst <= 1e-9 and elapsed <= 60.0,
        f"max |N*rate - R_fourier| = {worst:.3e} (tol 1e-9) over j in {{10,50,200}}, "
        f"h_f in {{0.3,0.5,0.8}}; runtime {elapsed:.1f}s (cap 60s)",
    )


def test_criterion_2_dqpt_order_parameter(sweep_tables):
    h_f, mag, _ = sweep_arrays(sweep_tables[200])
    below = abs(mag[np.argmin(np.abs(h_f - 0.25))])
    above = abs(mag[np.argmin(np.abs(h_f - 0.75))])
    ok = below >= 10.0 * above and above <= 0.05
    report(
        "2 magnetization-order-parameter",
        ok,
        f"|avg m|(0.25) = {below:.4f}, |avg m|(0.75) = {above:.2e}; "
        f"ratio {below / max(above, 1e-300):.1f} (need >= 10), above-value cap 0.05",
    )


def test_criterion_3_rugosity_order_parameter(sweep_tables):
    h_f, _, rug = sweep_arrays(sweep_tables[200])
    window = (h_f >= 0.05) & (h_f <= 0.95)
    h_min = h_f[window][np.argmin(rug[window])]
    low = (h_f >= 0.05) & (h_f <= 0.5)
    high = (h_f >= 0.6) & (h_f <= 0.95)
    low_range = rug[low].max() - rug[low].min()
    high_range = rug[high].max() - rug[high].min()
    ok = abs(h_min - 0.5) <= 0.1 and high_range < 0.2 * low_range
    report(
        "3 rugosity-order-parameter",
        ok,
        f"min of avg R at h_f = {h_min:.2f} (need within 0.1 of 0.5); "
        f"variation on [0.6,0.95] = {high_range:.3f} vs 20% of range on [0.05,0.5] "
        f"= {0.2 * low_range:.3f}",
    )


def test_criterion_4_derivative_peak_scaling(sweep_tables):
    locations, heights = [], []
    for two_j in (40, 100, 200):
        h_f, deriv = sweep_derivative(sweep_tables[two_j], "avg_rugosity_prequench")
        peak = int(np.argmax(deriv))
        locations.append(abs(h_f[peak] - 0.5))
        heights.append(float(deriv[peak]))
    ok = (
        locations[0] >= locations[1] >= locations[2]
        and locations[2] <= 0.1
        and heights[0] < heights[1] < heights[2]
    )
    report(
        "4 derivative-peak-scaling",
        ok,
        f"|peak - 0.5| = {[f'{x:.3f}' for x in locations]} (decreasing, last <= 0.1); "
        f"heights = {[f'{x:.1f}' for x in heights]} (increasing) for j = 20, 50, 100",
    )


def test_criterion_5_critical_predictors():
    predictions = critical_predictions(0.0, 0.5, 1.0)
    checks = [
        predictions.h_f_dqpt == 0.5,
        classical_energy(0.0, 0.0, LmgParams(0.25, 1.0)) == -0.25,
        classical_energy(0.0, 0.0, LmgParams(0.9, 1.0)) == -0.9,
        symmetry_broken_magnetization(0.6, 1.0) == (0.8, -0.8),
    ]
    report(
        "5 critical-predictors",
        all(checks),
        "h_f_dqpt(0,1) = 0.5, classical saddle energy = -h, "
        "broken magnetization(0.6,1) = ±0.8, all exact",
    )


def test_criterion_6_numerical_integrity():
    started = time.perf_counter()
    details = []

    # unitarity and energy conservation along a full averaging horizon
    sector = SpinSector(100)
    ham = build_lmg_hamiltonian(sector, LmgParams(0.55, DELTA))
    dec = diagonalize_gauge_fixed(ham, sector)
    grid, _ = averaging_time_grid(dec, n_samples=256)
    prop = make_propagator(dec, dicke_state(sector, sector.j))
    norms = np.linalg.norm(evolve_grid(prop, grid.times), axis=1)
    drift = float(np.max(np.abs(norms - 1.0)))
    details.append(f"norm drift {drift:.2e}")
    assert drift <= 1e-12

    energies = np.array([
        expectation(evolve(prop, t), ham) for t in grid.times[::16]
    ])
    wander = float(np.max(np.abs(energies - energies[0])))
    details.append(f"energy wander {wander:.2e}")
    assert wander <= 1e-10 * dec.spectral_range()

    # eigendecomposition residuals across sizes
    for two_j in (2, 40, 200):
        sec = SpinSector(two_j)
        h = build_lmg_hamiltonian(sec, LmgParams(0.7, DELTA))
        d = diagonalize_gauge_fixed(h, sec)
        dense = h.to_dense()
        residual = np.max(np.abs(dense @ d.eigenvectors - d.eigenvectors * d.eigenvalues))
        assert residual <= 1e-10 * d.spectral_range()
    details.append("residuals <= 1e-10*range")

    # spectral evolution against the series matrix exponential at j = 2
    sec = SpinSector(4)
    h = build_lmg_hamiltonian(sec, LmgParams(0.7, DELTA))
    d = diagonalize_gauge_fixed(h, sec)
    rng = np.random.default_rng(23)
    psi = rng.normal(size=5) + 1j * rng.normal(size=5)
    psi /= np.linalg.norm(psi)
    p = make_propagator(d, StateVector(psi, sec))
    expm_dev = max(
        float(np.max(np.abs(evolve(p, t).amplitudes - series_expm(-1j * h.to_dense() * t) @ psi)))
        for t in (0.4, 2.9, 11.0)
    )
    details.append(f"expm dev {expm_dev:.2e}")
    assert expm_dev <= 1e-10

    # diagonal ensemble vs long-time quadrature at j = 50
    spec = polarized_quench(100, 0.3)
    dq = diagonalize_gauge_fixed(build_lmg_hamiltonian(spec.sector, spec.post), spec.sector)
    gq, nuq = averaging_time_grid(dq)
    trace = loschmidt_trace(spec, gq)
    quadrature = time_average(trace.magnetization, gq.times)
    closed = diagonal_ensemble_average(
        make_propagator(dq, dicke_state(spec.sector, spec.sector.j)), build_jz(spec.sector)
    ) / spec.sector.j
    ensemble_dev = abs(quadrature - closed)
    details.append(f"ensemble dev {ensemble_dev:.2e}")
    assert ensemble_dev <= 5.0 / (nuq * gq.t_max)

    # Fourier-conjugate bases: unitary and anchored, d <= 64
    fourier_worst = 0.0
    for dim in (2, 3, 5, 9, 17, 33, 64):
        sec = SpinSector(dim - 1)
        for anchor in {0, dim // 3, dim - 1}:
            basis = fourier_conjugate_basis(anchor, sec)
            fourier_worst = max(fourier_worst, basis.orthonormality_defect())
            anchored = flat_state(basis).state.amplitudes
            fourier_worst = max(
                fourier_worst,
                float(np.max(np.abs(anchored - fourier_flat_vector(anchor, sec)))),
            )
    details.append(f"fourier defect {fourier_worst:.2e}")
    assert fourier_worst <= 1e-12

    elapsed = time.perf_counter() - started
    details.append(f"runtime {elapsed:.1f}s")
    report("6 numerical-integrity", elapsed <= 120.0, "; ".join(details))


def test_criterion_7_trace_reproduction():
    # reduced-scale check at j = 300; the horizon covers three recurrence
    # periods of the off-critical quench (pre-run calibrated), long enough to
    # show the critical envelope collapse and short enough to stay clear of
    # slow finite-size dephasing of the confined dynamics
    t_max, n_samples = 10.5, 2101
    ratios = {}
    peak_counts = {}
    for h_f in (0.5, 0.3):
        trace = loschmidt_trace(polarized_quench(600, h_f), TimeGrid(t_max, n_samples))
        density = trace.rugosity_prequench / 600
        quarter = n_samples // 4
        ratios[h_f] = float(density[3 * quarter:].max() / density[:quarter].max())
        rate = trace.rate[::10]  # 0.05 time-unit resolution for peak counting
        interior = (rate[1:-1] > rate[:-2]) & (rate[1:-1] > rate[2:])
        peak_counts[h_f] = int((interior & (rate[1:-1] > 0.3 * rate.max())).sum())
    ok = ratios[0.5] < 0.5 and ratios[0.3] >= 0.8 and peak_counts[0.5] >= 3
    report(
        "7 trace-reproduction",
        ok,
        f"R/N last-quarter/first-quarter ratio: {ratios[0.5]:.3f} at h_f=0.5 (need < 0.5), "
        f"{ratios[0.3]:.3f} at h_f=0.3 (need >= 0.8); "
        f"{peak_counts[0.5]} recurring rate peaks at criticality (need >= 3)",
    )
