"""Wavepacket propagation and the two-lobe interference readout.

Time stepping is the Cayley form of Crank-Nicolson,

    (1 + i dt H / 2 hbar) psi' = (1 - i dt H / 2 hbar) psi,

applied per angular sector.  The sectors never couple, so one block
tridiagonal (or pentadiagonal) solve advances the whole stack.  The Cayley
map is an exact rational function of H, hence unitary in the weighted
inner product and energy-conserving to roundoff; both properties are load
bearing for the long conservation runs.

The interference experiment launches one radial Gaussian at the source
angle carrying two opposite tangential velocities (a cos-modulated
packet).  The two lobes sweep past the puncture on opposite sides, bounce
off the outer Dirichlet wall, and reconverge at the far side, having wound
through +pi and -pi respectively.  Opposite velocities means the canonical
spectra sit at +-ell - beta, so both lobes feel identical radial dynamics
at every flux and the envelopes stay put while the fringe slides: phase
difference (sum of canonical centers) x pi = -2 pi beta, one full fringe
per unit of flux, with no dynamical-phase contribution to leading order.
With the wall doing the recombination, the absorbing mask stays off for
these runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import banded
from .errors import ConfigError, NumericFailure, UnusableFringeError
from .hamiltonian import RadialGrid, SectorOperator, assemble_punctured_sector


@dataclass(frozen=True)
class WavePacket:
    """State on the truncated sector basis: amplitudes[m + m_max, j]."""

    amplitudes: np.ndarray
    grid: RadialGrid
    m_max: int
    time: float = 0.0
    inner_bc: str = "dirichlet"

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex)
        n = self.grid.n_points + (1 if self.inner_bc == "regular" else 0)
        if amp.shape != (2 * self.m_max + 1, n):
            raise ConfigError(
                f"amplitudes shape {amp.shape} does not match "
                f"{2 * self.m_max + 1} sectors x {n} radial nodes")
        if not np.all(np.isfinite(amp.real) & np.isfinite(amp.imag)):
            raise ConfigError("amplitudes must be finite")
        if not math.isfinite(self.time):
            raise ConfigError("time must be finite")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def n_sectors(self) -> int:
        return 2 * self.m_max + 1

    @property
    def m_values(self) -> np.ndarray:
        return np.arange(-self.m_max, self.m_max + 1)

    def weight(self) -> np.ndarray:
        return self.grid.weights(include_inner=self.inner_bc == "regular")

    def norm(self) -> float:
        dens = np.sum(np.abs(self.amplitudes) ** 2, axis=0)
        return math.sqrt(float(np.sum(self.weight() * dens)))

    def normalized(self) -> "WavePacket":
        nrm = self.norm()
        if nrm == 0.0:
            raise ConfigError("cannot normalize the zero packet")
        return replace(self, amplitudes=self.amplitudes / nrm)

    def field_at(self, rho: float, angles: np.ndarray) -> np.ndarray:
        """Complex field at radius rho on the given angles (linear in lambda)."""
        nodes = self.grid.nodes(include_inner=self.inner_bc == "regular")
        if not (nodes[0] <= rho <= nodes[-1]):
            raise ConfigError(f"rho={rho} outside the sampled radial range")
        lam_nodes = np.log(nodes)
        lam = math.log(rho)
        j = min(int(np.searchsorted(lam_nodes, lam)), lam_nodes.size - 1)
        j0 = max(j - 1, 0)
        width = lam_nodes[j0 + 1] - lam_nodes[j0]
        t = (lam - lam_nodes[j0]) / width
        coeffs = (1.0 - t) * self.amplitudes[:, j0] + t * self.amplitudes[:, j0 + 1]
        theta = np.asarray(angles, dtype=float)
        phases = np.exp(1j * np.outer(self.m_values, theta))
        return coeffs @ phases

    def intensity_at(self, rho: float, angles: np.ndarray) -> np.ndarray:
        return np.abs(self.field_at(rho, angles)) ** 2


def sector_family(beta: float, grid: RadialGrid, m_max: int, mass_M: float = 1.0,
                  hbar: float = 1.0, inner_bc: str = "dirichlet",
                  stencil_order: int = 2) -> tuple:
    """Sector Hamiltonians m = -m_max .. m_max sharing one grid."""
    if m_max < 1:
        raise ConfigError(f"m_max must be >= 1, got {m_max}")
    return tuple(
        assemble_punctured_sector(m, beta, grid, mass_M, hbar, inner_bc, stencil_order)
        for m in range(-m_max, m_max + 1))


def _check_family(psi: WavePacket, hams) -> None:
    if len(hams) != psi.n_sectors:
        raise ConfigError(
            f"{len(hams)} sector operators for {psi.n_sectors} sectors")
    n = psi.amplitudes.shape[1]
    for op in hams:
        if op.n != n or op.grid != psi.grid:
            raise ConfigError("sector operator grid does not match the packet")
    if len({op.hbar for op in hams}) != 1:
        raise ConfigError("sector operators disagree on hbar")


def _stack_bands(hams) -> np.ndarray:
    return np.concatenate([op.bands for op in hams], axis=1)


def _cayley_pair(stacked: np.ndarray, dt: float, hbar: float):
    """Banded forms of (1 + i dt H / 2 hbar) and (1 - i dt H / 2 hbar)."""
    p = (stacked.shape[0] - 1) // 2
    z = 0.5j * dt / hbar
    forward = (-z) * stacked
    backward = z * stacked
    forward[p] += 1.0
    backward[p] += 1.0
    return backward, forward  # (solve matrix, explicit matrix)


def _advance(amp_flat: np.ndarray, solve_ab: np.ndarray, apply_ab: np.ndarray,
             p: int) -> np.ndarray:
    rhs = banded.matvec(apply_ab, amp_flat)
    try:
        out = scipy.linalg.solve_banded((p, p), solve_ab, rhs,
                                        overwrite_ab=False, overwrite_b=True,
                                        check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericFailure("Crank-Nicolson solve failed",
                             diagnostics={"lapack": str(exc)}) from exc
    if not np.all(np.isfinite(out.real) & np.isfinite(out.imag)):
        raise NumericFailure("Crank-Nicolson solve produced non-finite values",
                             diagnostics={"size": out.size})
    return out


def step_crank_nicolson(psi: WavePacket, hams, dt: float) -> WavePacket:
    """One unitary Cayley step of size dt."""
    if not (dt > 0.0) or not math.isfinite(dt):
        raise ConfigError(f"dt must be a positive finite number, got {dt}")
    _check_family(psi, hams)
    stacked = _stack_bands(hams)
    p = (stacked.shape[0] - 1) // 2
    solve_ab, apply_ab = _cayley_pair(stacked, dt, hams[0].hbar)
    out = _advance(psi.amplitudes.reshape(-1), solve_ab, apply_ab, p)
    return replace(psi, amplitudes=out.reshape(psi.amplitudes.shape),
                   time=psi.time + dt)


def family_energy(psi: WavePacket, hams) -> float:
    """<psi|H|psi> in the weighted product (assumes psi normalized if needed)."""
    _check_family(psi, hams)
    stacked = _stack_bands(hams)
    flat = psi.amplitudes.reshape(-1)
    h_psi = banded.matvec(stacked, flat).reshape(psi.amplitudes.shape)
    dens = np.sum(np.conj(psi.amplitudes) * h_psi, axis=0)
    return float(np.real(np.sum(psi.weight() * dens)))


def absorbing_mask(grid: RadialGrid, fraction: float = 0.1,
                   inner_bc: str = "dirichlet") -> np.ndarray:
    """cos^2 amplitude ramp over the outer fraction of the radial span."""
    if not (0.0 < fraction < 0.5):
        raise ConfigError(f"mask fraction must be in (0, 0.5), got {fraction}")
    nodes = grid.nodes(include_inner=inner_bc == "regular")
    if grid.spacing == "log":
        coord, hi = np.log(nodes), math.log(grid.rho_max)
        lo = math.log(grid.rho_min)
    else:
        coord, hi, lo = nodes, grid.rho_max, grid.rho_min
    start = hi - fraction * (hi - lo)
    s = np.clip((coord - start) / (hi - start), 0.0, 1.0)
    return np.cos(0.5 * math.pi * s) ** 2


@dataclass(frozen=True)
class Snapshot:
    time: float
    packet: WavePacket
    norm: float
    energy: float


def evolve(psi0: WavePacket, hams, T: float, dt: float, *,
           snapshots: int = 9, mask: np.ndarray = None) -> list:
    """March to time T in steps of dt, recording evenly spaced snapshots.

    The Cayley matrices are formed once; each step is a banded matvec plus
    a banded solve across the sector stack.  With a mask supplied the step
    is followed by an amplitude multiply, which deliberately breaks norm
    conservation (that is the point of an absorber).
    """
    if not (T > 0.0) or not (dt > 0.0):
        raise ConfigError(f"need T > 0 and dt > 0, got T={T}, dt={dt}")
    steps_float = T / dt
    n_steps = int(round(steps_float))
    if n_steps < 1 or abs(n_steps - steps_float) > 1e-9 * max(1.0, steps_float):
        raise ConfigError(f"T/dt = {steps_float!r} is not a whole number of steps")
    if n_steps > 10 ** 6:
        raise ConfigError(f"{n_steps} steps exceeds the 1e6 step budget")
    if snapshots < 2:
        raise ConfigError(f"snapshots must be >= 2, got {snapshots}")
    _check_family(psi0, hams)
    if mask is not None:
        mask = np.asarray(mask, dtype=float)
        if mask.shape != (psi0.amplitudes.shape[1],):
            raise ConfigError("mask length does not match the radial grid")

    stacked = _stack_bands(hams)
    p = (stacked.shape[0] - 1) // 2
    solve_ab, apply_ab = _cayley_pair(stacked, dt, hams[0].hbar)

    marks = set(np.unique(np.linspace(0, n_steps, snapshots).round().astype(int)))
    flat = psi0.amplitudes.reshape(-1).copy()
    shape = psi0.amplitudes.shape

    def record(step_index: int) -> Snapshot:
        pkt = replace(psi0, amplitudes=flat.reshape(shape).copy(),
                      time=psi0.time + step_index * dt)
        return Snapshot(time=pkt.time, packet=pkt, norm=pkt.norm(),
                        energy=family_energy(pkt, hams))

    out = [record(0)] if 0 in marks else []
    for k in range(1, n_steps + 1):
        flat = _advance(flat, solve_ab, apply_ab, p)
        if mask is not None:
            flat = (flat.reshape(shape) * mask).reshape(-1)
        if k in marks:
            out.append(record(k))
    return out


def gaussian_packet(center, width, momentum, grid: RadialGrid, m_max: int,
                    inner_bc: str = "dirichlet") -> WavePacket:
    """Normalized Gaussian in (lambda, phi) with phase e^{i(k_rho lambda + k_phi phi)}.

    ``width`` is one sigma for both coordinates, or a (sigma_lambda,
    sigma_phi) pair.  The angular projection onto sectors is analytic: a
    Gaussian profile exp(-sigma_phi^2 (m - k_phi)^2) around k_phi.  The 5
    sigma support rules keep the state clear of both radial walls, of the
    angular wrap-around, and of the Fourier truncation, so the projection
    loses nothing measurable.
    """
    rho0, phi0 = float(center[0]), float(center[1])
    sig = (float(width[0]), float(width[1])) if np.ndim(width) else (float(width),) * 2
    sigma_lam, sigma_phi = sig
    k_rho, k_phi = float(momentum[0]), float(momentum[1])
    if m_max < 1:
        raise ConfigError(f"m_max must be >= 1, got {m_max}")
    if sigma_lam <= 0.0 or sigma_phi <= 0.0:
        raise ConfigError(f"widths must be positive, got {sig}")
    if not (grid.rho_min < rho0 < grid.rho_max):
        raise ConfigError(f"center radius {rho0} outside the annulus")

    lam0 = math.log(rho0)
    lo, hi = math.log(grid.rho_min), math.log(grid.rho_max)
    if lam0 - lo < 5.0 * sigma_lam or hi - lam0 < 5.0 * sigma_lam:
        raise ConfigError(
            f"packet needs 5 sigma of radial clearance: lambda0={lam0:.3f}, "
            f"sigma={sigma_lam}, walls at [{lo:.3f}, {hi:.3f}]")
    if 5.0 * sigma_phi > math.pi:
        raise ConfigError(f"sigma_phi={sigma_phi} too wide for a single angular lobe")
    if m_max - abs(k_phi) < 2.5 / sigma_phi:
        raise ConfigError(
            f"m_max={m_max} clips the angular spectrum at k_phi={k_phi}: "
            f"need at least {abs(k_phi) + 2.5 / sigma_phi:.1f}")

    nodes = grid.nodes(include_inner=inner_bc == "regular")
    lam = np.log(nodes)
    radial = np.exp(-((lam - lam0) ** 2) / (4.0 * sigma_lam ** 2) + 1j * k_rho * lam)
    m = np.arange(-m_max, m_max + 1)
    angular = np.exp(-(sigma_phi ** 2) * (m - k_phi) ** 2
                     + 1j * (k_phi - m) * phi0)
    pkt = WavePacket(amplitudes=np.outer(angular, radial), grid=grid,
                     m_max=m_max, inner_bc=inner_bc)
    return pkt.normalized()


@dataclass(frozen=True)
class InterferenceGeometry:
    """Two-lobe source plus the chord it follows to recombination.

    The lobes launch tangentially from (source_radius, +-source_angle)
    with speed ``speed``, graze the puncture at closest distance
    source_radius * cos(source_angle), reflect off the outer wall, and
    meet again on the far side.  Flight time, recombination radius, and
    fringe wavenumber all follow from the geometry and are computed, not
    configured.
    """

    source_radius: float = 2.0
    source_angle: float = 0.0
    speed: float = 14.0
    sigma_radial: float = 0.3
    sigma_angular: float = 0.2
    detector_halfwidth: float = 0.45
    detector_points: int = 512
    m_max: int = 48
    mass_M: float = 1.0
    hbar: float = 1.0
    use_mask: bool = False
    mask_fraction: float = 0.1

    def __post_init__(self):
        if self.source_radius <= 0.0 or self.speed <= 0.0:
            raise ConfigError("source_radius and speed must be positive")
        if not (0.0 <= self.source_angle < 0.5 * math.pi):
            raise ConfigError("source_angle must lie in [0, pi/2)")
        if self.detector_points < 64:
            raise ConfigError("need at least 64 detector samples")
        if not (0.0 < self.detector_halfwidth <= 1.0):
            raise ConfigError("detector_halfwidth must be in (0, 1] radians")

    def angular_momentum(self) -> float:
        return self.mass_M * self.speed * self.source_radius

    def chord(self, rho_max: float):
        """(flight_time, detector_radius) of the wall-bounce recombination."""
        r0, rr = self.source_radius, rho_max
        if rr * rr <= 2.0 * r0 * r0:
            raise ConfigError(
                f"outer wall at {rr} too close: need rho_max > sqrt(2) * source_radius")
        y1 = math.sqrt(rr * rr - r0 * r0)
        leg2 = y1 * rr * rr / (rr * rr - 2.0 * r0 * r0)
        detector_radius = r0 * rr * rr / (rr * rr - 2.0 * r0 * r0)
        return (y1 + leg2) / self.speed, detector_radius


@dataclass(frozen=True)
class FringeRecord:
    beta: float
    detector_angles: np.ndarray
    intensity: np.ndarray
    extracted_shift: float
    contrast: float
    fringe_wavenumber: float = 0.0

    def __post_init__(self):
        inten = np.asarray(self.intensity, dtype=float)
        if np.any(inten < 0.0):
            raise ConfigError("intensity must be nonnegative")
        object.__setattr__(self, "intensity", inten)
        object.__setattr__(self, "detector_angles",
                           np.asarray(self.detector_angles, dtype=float))


class _FringeModel:
    """Polynomial envelope times a fixed-k fringe, fit by tapered least squares.

    The model is sum_p x^p (a_p + b_p cos k x + c_p sin k x) for p <= 3,
    with x centered on the window, so (b_0, c_0) give amplitude and phase
    of the fringe at the window center even when the recombining lobes
    modulate the envelope across the detector.  A Hann taper suppresses the
    spectral leakage that would otherwise couple the two quadratures over a
    window holding a non-integer number of fringes and bias the phase.
    """

    def __init__(self, angles: np.ndarray, intensity: np.ndarray, k: float):
        x = angles - angles.mean()
        cos_kx, sin_kx = np.cos(k * x), np.sin(k * x)
        powers = [x ** p for p in range(4)]
        design = np.stack(
            [w for p in powers for w in (p, p * cos_kx, p * sin_kx)], axis=1)
        taper = np.sqrt(np.hanning(x.size))
        coef, *_ = np.linalg.lstsq(design * taper[:, None], intensity * taper,
                                   rcond=None)
        resid = (intensity - design @ coef) * taper
        self.k = k
        self.taper = taper
        self.poly_columns = np.stack(powers, axis=1)
        self.amp_sq = float(coef[1]) ** 2 + float(coef[2]) ** 2
        self.cost = float(np.sum(resid * resid))
        self.dof = max(intensity.size - design.shape[1], 1)
        b, c = coef[1::3], coef[2::3]
        # the fitted fringe and its quadrature: rotating the phase of every
        # (b_p, c_p) pair by delta sends fringe -> fringe*cos + quad*sin
        self.fringe = (cos_kx * (self.poly_columns @ b)
                       + sin_kx * (self.poly_columns @ c))
        self.quadrature = (sin_kx * (self.poly_columns @ b)
                           - cos_kx * (self.poly_columns @ c))


def _fit_fringe(angles: np.ndarray, intensity: np.ndarray, k: float):
    model = _FringeModel(angles, intensity, k)
    return model.amp_sq, model.cost


def _refine_wavenumber(angles: np.ndarray, intensity: np.ndarray,
                       k_guess: float) -> float:
    """Scan +-10% around the geometric guess, then parabolic touch-up."""
    ks = k_guess * np.linspace(0.90, 1.10, 81)
    costs = np.array([_fit_fringe(angles, intensity, k)[1] for k in ks])
    i = int(np.argmin(costs))
    if 0 < i < ks.size - 1:
        a, b, c = costs[i - 1], costs[i], costs[i + 1]
        denom = a - 2.0 * b + c
        if denom > 0.0:
            return float(ks[i] + 0.5 * (a - c) / denom * (ks[1] - ks[0]))
    return float(ks[i])


def _wrap_angle(x: float) -> float:
    out = math.remainder(x, 2.0 * math.pi)
    return out + 2.0 * math.pi if out <= -math.pi else out


def fringe_shift_extract(record: FringeRecord, reference: FringeRecord) -> float:
    """Fringe-phase displacement of record relative to reference, in (-pi, pi].

    The reference is first fit to an envelope-modulated fringe at its own
    wavenumber; the record is then fit to that pattern with the fringe
    phase rotated, which is linear in (cos delta, sin delta).  A record
    that is exactly the reference displaced toward positive detector angle
    by delta / k comes back as +delta, bias-free.
    """
    if record.detector_angles.shape != reference.detector_angles.shape or \
            not np.allclose(record.detector_angles, reference.detector_angles,
                            rtol=0.0, atol=1e-12):
        raise ConfigError("records sample different detector angles")
    k = reference.fringe_wavenumber
    if not (k > 0.0):
        raise ConfigError("reference carries no fringe wavenumber")

    ref = _FringeModel(reference.detector_angles, reference.intensity, k)
    # under fringeless noise amp^2 concentrates near 4 sigma^2 / n; demand
    # 20x that before trusting a phase
    if ref.amp_sq < 80.0 * (ref.cost / ref.dof) / reference.intensity.size:
        raise UnusableFringeError(
            "reference fringe drowned by fit residual",
            diagnostics={"beta": reference.beta,
                         "amplitude": math.sqrt(ref.amp_sq)})

    design = np.concatenate(
        [ref.poly_columns, ref.fringe[:, None], ref.quadrature[:, None]], axis=1)
    coef, *_ = np.linalg.lstsq(design * ref.taper[:, None],
                               record.intensity * ref.taper, rcond=None)
    resid = (record.intensity - design @ coef) * ref.taper
    cost = float(np.sum(resid * resid))
    dof = max(record.intensity.size - design.shape[1], 1)
    u, v = float(coef[-2]), float(coef[-1])
    scaled_amp_sq = (u * u + v * v) * ref.amp_sq
    if scaled_amp_sq < 80.0 * (cost / dof) / record.intensity.size:
        raise UnusableFringeError(
            "record fringe drowned by fit residual",
            diagnostics={"beta": record.beta,
                         "amplitude": math.sqrt(scaled_amp_sq)})
    return _wrap_angle(math.atan2(v, u))


def interference_experiment(beta: float, geom: InterferenceGeometry,
                            grid: RadialGrid, dt: float = 3e-4,
                            reference: FringeRecord = None) -> FringeRecord:
    """Run the two-lobe experiment at one flux value and read the fringe.

    The returned record's extracted_shift is measured against the supplied
    beta = 0 reference, or against a freshly computed one when none is
    given (a beta = 0 run is its own reference and reports shift 0).
    """
    if not math.isfinite(beta):
        raise ConfigError(f"beta must be finite, got {beta}")
    flight_time, detector_radius = geom.chord(grid.rho_max)
    ell = geom.angular_momentum()

    # Center each lobe's canonical spectrum at kinetic_momentum - beta so the
    # launch velocities are +-v regardless of flux.  The flux then cannot move
    # the envelopes (both lobes see the same centrifugal wall and the same
    # drift), and the 2 pi beta fringe shift comes purely from the winding
    # mismatch between the canonical centers and the +-pi travel angles.
    lobe_up = gaussian_packet(
        (geom.source_radius, geom.source_angle),
        (geom.sigma_radial, geom.sigma_angular),
        (0.0, ell / geom.hbar - beta), grid, geom.m_max)
    lobe_down = gaussian_packet(
        (geom.source_radius, -geom.source_angle),
        (geom.sigma_radial, geom.sigma_angular),
        (0.0, -ell / geom.hbar - beta), grid, geom.m_max)
    psi0 = replace(lobe_up, amplitudes=lobe_up.amplitudes + lobe_down.amplitudes)
    psi0 = psi0.normalized()

    hams = sector_family(beta, grid, geom.m_max, geom.mass_M, geom.hbar)
    mask = absorbing_mask(grid, geom.mask_fraction) if geom.use_mask else None
    # Trim dt so a whole number of steps lands exactly on the flight time;
    # otherwise runs at different dt integrate slightly different times and
    # the envelope displacement pollutes dt-convergence comparisons.
    steps = max(1, int(round(flight_time / dt)))
    traj = evolve(psi0, hams, flight_time, flight_time / steps,
                  snapshots=2, mask=mask)
    final = traj[-1].packet

    theta = math.pi + np.linspace(-geom.detector_halfwidth,
                                  geom.detector_halfwidth, geom.detector_points)
    intensity = final.intensity_at(detector_radius, theta)
    i_max, i_min = float(intensity.max()), float(intensity.min())
    contrast = (i_max - i_min) / (i_max + i_min) if i_max + i_min > 0.0 else 0.0
    if contrast < 0.05:
        raise UnusableFringeError(
            "fringe contrast below 0.05: lobes failed to recombine",
            diagnostics={"beta": beta, "contrast": contrast,
                         "flight_time": flight_time})

    k = _refine_wavenumber(theta, intensity, 2.0 * ell / geom.hbar)
    rec = FringeRecord(beta=beta, detector_angles=theta, intensity=intensity,
                       extracted_shift=0.0, contrast=contrast,
                       fringe_wavenumber=k)
    if reference is None:
        if beta == 0.0:
            return rec
        reference = interference_experiment(0.0, geom, grid, dt)
    shift = fringe_shift_extract(rec, reference)
    return replace(rec, extracted_shift=shift,
                   fringe_wavenumber=reference.fringe_wavenumber)


def fringe_sweep(betas, geom: InterferenceGeometry, grid: RadialGrid,
                 dt: float = 3e-4) -> list:
    """FringeRecords over a beta sweep, all sharing one beta = 0 reference."""
    reference = interference_experiment(0.0, geom, grid, dt)
    out = []
    for b in betas:
        if b == 0.0:
            out.append(reference)
        else:
            out.append(interference_experiment(float(b), geom, grid, dt,
                                               reference=reference))
    return out
