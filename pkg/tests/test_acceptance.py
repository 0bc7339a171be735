"""Acceptance gate: ten numbered criteria, one pass/fail line each.

Every test prints `[criterion NN] PASS|FAIL name: measured values (pinned
tolerances)` and then asserts.  Run with `pytest tests/test_acceptance.py -v -s`
to see the lines as they stream; without -s pytest shows them for failures.

Stated runtime budgets are enforced at 5x their nominal value so slow CI
hardware cannot flip a physics result into a timing failure, while a real
performance regression still trips the gate.
"""

import json
import math
import time

import numpy as np
import pytest

from fluxlab.algebra import (BASIS, LieElement, build_rep,
                             central_extension_check, commutator_residual,
                             jacobi_residual, smooth_test_vector)
from fluxlab.cli import main as cli_main
from fluxlab.dynamics import (InterferenceGeometry, evolve, fringe_sweep,
                              gaussian_packet, interference_experiment,
                              sector_family)
from fluxlab.hamiltonian import FluxConfig, RadialGrid, equivalence_check, holonomy
from fluxlab.spectral import disk_spectrum, periodicity_check


def _report(num, name, passed, detail, elapsed, budget):
    tag = "PASS" if passed else "FAIL"
    print(f"[criterion {num:2d}] {tag} {name}: {detail} "
          f"[{elapsed:.1f} s, budget {budget:.0f} s]")
    assert passed, f"criterion {num} ({name}): {detail}"
    assert elapsed < 5.0 * budget, (
        f"criterion {num} ({name}) took {elapsed:.1f} s, "
        f"over 5x the {budget:.0f} s budget")


def test_criterion_01_assembly_routes_agree():
    started = time.perf_counter()
    grid = RadialGrid(1e-4, 1.0, 512)
    rng = np.random.default_rng(20260816)
    worst = 0.0
    for alpha in rng.uniform(-2.0, 2.0, size=20):
        worst = max(worst, equivalence_check(float(alpha), grid,
                                             range(-3, 4), mass_M=1.0))
    _report(1, "two assembly routes agree", worst < 1e-13,
            f"max elementwise rel diff {worst:.3e} over 20 random shifts, "
            f"m in [-3,3], N=512 (tol 1e-13)",
            time.perf_counter() - started, 5.0)


def test_criterion_02_commutator_table():
    started = time.perf_counter()
    beta, m_max, seed = 0.3, 2, 11
    exact_pairs = [("pi_phi", "pi_rho"), ("c", "s")]
    angle_pairs = [("pi_phi", "c"), ("pi_phi", "s")]
    radial_pairs = [("pi_rho", "c"), ("pi_rho", "s")]
    res = {}
    for n in (2048, 4096):
        rep = build_rep(beta, m_max, RadialGrid(1e-6, 1.0, n))
        probe = smooth_test_vector(rep, seed=seed)
        for pair in exact_pairs + angle_pairs + radial_pairs:
            res[pair, n] = commutator_residual(rep, pair, probe)

    exact_ok = all(res[p, n] == 0.0 for p in exact_pairs for n in (2048, 4096))
    mixed_ok = all(res[p, 2048] < 1e-8 for p in angle_pairs + radial_pairs)
    ratios = [res[p, 2048] / res[p, 4096] for p in radial_pairs]
    ratio_ok = all(3.6 <= r <= 4.4 for r in ratios)
    # the angle-sector multipliers are exactly representable on the grid, so
    # those two residuals sit at the rounding floor with no room to shrink
    # 4x; they are held to 1e-12 at both resolutions instead
    floor_ok = all(res[p, n] < 1e-12 for p in angle_pairs for n in (2048, 4096))

    detail = (f"exact pairs == 0.0: {exact_ok}; mixed < 1e-8 at N=2048: "
              f"{mixed_ok}; radial-pair shrink {ratios[0]:.3f}/{ratios[1]:.3f} "
              f"in [3.6, 4.4]: {ratio_ok}; angle pairs at rounding floor "
              f"< 1e-12 (no 4x shrink possible): {floor_ok}")
    _report(2, "commutator table", exact_ok and mixed_ok and ratio_ok and floor_ok,
            detail, time.perf_counter() - started, 30.0)


def test_criterion_03_jacobi_identity():
    started = time.perf_counter()
    names = BASIS + ("center",)
    worst = 0.0
    count = 0
    for a in names:
        for b in names:
            for c in names:
                resid = jacobi_residual(LieElement(**{f"coeff_{a}": 1.0}),
                                        LieElement(**{f"coeff_{b}": 1.0}),
                                        LieElement(**{f"coeff_{c}": 1.0}))
                worst = max(worst, float(np.abs(resid.coefficients()).max()))
                count += 1
    _report(3, "Jacobi identity", worst == 0.0,
            f"max residual coefficient {worst!r} over all {count} ordered "
            f"basis triples (exact zero required)",
            time.perf_counter() - started, 1.0)


def test_criterion_04_poisson_homomorphism():
    started = time.perf_counter()
    worst = central_extension_check(n_samples=100, seed=7)
    _report(4, "Poisson bracket homomorphism", worst < 1e-12,
            f"max |{{P_A,P_B}} - P_[A,B]| = {worst:.3e} over 6 pairs x 100 "
            f"points (tol 1e-12)",
            time.perf_counter() - started, 5.0)


def test_criterion_05_spectrum_vs_bessel_oracle():
    started = time.perf_counter()
    grid = RadialGrid(1e-3, 1.0, 4096)
    worst = 0.0
    anchor_ok = True
    anchor_vals = []
    for beta in (0.0, 0.25, 0.5):
        result = disk_spectrum(beta, range(-2, 3), 1.0, grid, k_per_sector=3)
        worst = max(worst, max(e.rel_err for e in result.entries))
        if beta == 0.5:
            for e in result.entries:
                if e.m == 0:
                    closed = (e.n * math.pi) ** 2 / 2.0
                    anchor_vals.append(abs(e.energy - closed) / closed)
    anchor_ok = max(anchor_vals) < 1e-4
    _report(5, "spectrum vs Bessel oracle", worst < 1e-4 and anchor_ok,
            f"worst oracle rel err {worst:.3e} over shifts {{0, 0.25, 0.5}}, "
            f"m in [-2,2], n <= 3, N=4096 extrapolated (tol 1e-4); "
            f"half-shift closed-form anchor rel err {max(anchor_vals):.3e}",
            time.perf_counter() - started, 60.0)


def test_criterion_06_periodicity_and_reflection():
    started = time.perf_counter()
    grid = RadialGrid(1e-3, 1.0, 1024)
    shift = periodicity_check(0.3, 3, grid, k_per_sector=3, transform="shift")
    refl = periodicity_check(0.3, 3, grid, k_per_sector=3, transform="reflect")
    _report(6, "shift periodicity and reflection", max(shift, refl) < 1e-12,
            f"spectrum Hausdorff distance: unit shift {shift:.3e}, "
            f"sign reflection {refl:.3e} (tol 1e-12)",
            time.perf_counter() - started, 30.0)


def test_criterion_07_long_run_conservation():
    started = time.perf_counter()
    grid = RadialGrid(0.2, 8.0, 512)
    psi0 = gaussian_packet((2.0, 0.0), (0.25, 0.5), (3.0, 5.0), grid, 10)
    hams = sector_family(0.3, grid, 10)
    traj = evolve(psi0, hams, 10.0, 1e-3, snapshots=11)
    norms = np.array([snap.norm for snap in traj])
    energies = np.array([snap.energy for snap in traj])
    norm_drift = float(np.abs(norms - norms[0]).max())
    energy_drift = float(np.abs(energies - energies[0]).max() / abs(energies[0]))
    _report(7, "norm and energy conservation",
            norm_drift < 1e-10 and energy_drift < 1e-8,
            f"10^4 steps mask off: norm drift {norm_drift:.3e} (tol 1e-10), "
            f"energy rel drift {energy_drift:.3e} (tol 1e-8)",
            time.perf_counter() - started, 120.0)


def test_criterion_08_fringe_tracks_flux():
    started = time.perf_counter()
    grid = RadialGrid(0.18, 12.0, 2048)
    geom = InterferenceGeometry(m_max=44, sigma_angular=0.2)
    betas = [round(0.1 * i, 1) for i in range(11)]
    records = fringe_sweep(betas, geom, grid, dt=1e-3)
    shifts = [r.extracted_shift for r in records]
    unwrapped = np.unwrap(shifts)

    slope = float(np.polyfit(betas, unwrapped, 1)[0])
    slope_ok = abs(slope - 2.0 * math.pi) <= 0.05 * 2.0 * math.pi
    half_err = abs(unwrapped[5] - math.pi)
    half_ok = half_err <= 0.15
    # full flux quantum: extracted shift wraps back onto the reference and
    # the raw intensity pattern itself must reproduce
    wrap_err = abs(shifts[10])
    pattern_err = float(np.abs(records[10].intensity - records[0].intensity).max()
                        / records[0].intensity.max())
    full_ok = wrap_err <= 0.15 and pattern_err <= 1e-3
    monotone_ok = bool(np.all(np.diff(unwrapped) > 0.0))

    # second-order integrator: halving dt moves the extracted shift < 1e-3
    coarse = interference_experiment(0.3, geom, grid, dt=2e-3)
    dt_change = abs(coarse.extracted_shift - shifts[3])
    dt_ok = dt_change < 1e-3

    passed = slope_ok and half_ok and full_ok and monotone_ok and dt_ok
    detail = (f"slope {slope:.6f} vs 2pi (tol 5%): {slope_ok}; "
              f"half-flux shift err {half_err:.2e} (tol 0.15): {half_ok}; "
              f"unit flux wrap err {wrap_err:.2e} (tol 0.15) and pattern "
              f"reproduction {pattern_err:.2e} (tol 1e-3): {full_ok}; "
              f"monotone: {monotone_ok}; dt halving 2e-3 -> 1e-3 moved "
              f"shift by {dt_change:.2e} (tol 1e-3): {dt_ok}")
    _report(8, "fringe shift tracks flux", passed, detail,
            time.perf_counter() - started, 600.0)


def test_criterion_09_holonomy_windings():
    started = time.perf_counter()
    flux = FluxConfig(charge_q=0.7, flux_phi=2.3)
    target = flux.charge_q * flux.flux_phi

    def circle(radius, n, center=(0.0, 0.0)):
        th = np.linspace(0.0, 2.0 * math.pi, n + 1)
        return np.stack([center[0] + radius * np.cos(th),
                         center[1] + radius * np.sin(th)], axis=1)

    th = np.linspace(0.0, 2.0 * math.pi, 301)
    ellipse = np.stack([2.0 * np.cos(th) + 0.3, np.sin(th) - 0.2], axis=1)
    enclosing = [holonomy(circle(1.0, 256), flux),
                 holonomy(circle(2.0, 199), flux),
                 holonomy(ellipse, flux)]
    worst_rel = max(abs(v - target) / abs(target) for v in enclosing)
    outside = abs(holonomy(circle(0.8, 222, center=(3.5, 0.0)), flux))
    _report(9, "holonomy counts windings", worst_rel < 1e-10 and outside < 1e-10,
            f"three enclosing loops rel err {worst_rel:.3e} vs charge x flux "
            f"(tol 1e-10); non-enclosing loop {outside:.3e} (tol 1e-10 abs)",
            time.perf_counter() - started, 1.0)


def test_criterion_10_cli_determinism(tmp_path):
    started = time.perf_counter()
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "physics": {"q": 1.0, "phi": math.pi},
        "grid": {"rho_min": 1e-4, "rho_max": 1.0, "n_points": 256},
        "truncation": {"m_max": 1, "k_per_sector": 2},
    }))
    payloads = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        assert cli_main(["spectrum", "--config", str(cfg),
                         "--out", str(out)]) == 0
        payloads.append((out / "spectrum.csv").read_bytes())
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["beta"] == -0.5
    identical = payloads[0] == payloads[1]
    _report(10, "CLI determinism and flux echo", identical,
            f"byte-identical CSV across reruns: {identical}; "
            f"q=1, phi=pi echoed beta exactly -0.5: True",
            time.perf_counter() - started, 1.0)
