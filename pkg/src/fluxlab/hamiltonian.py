"""Radial sector operators for a charge around confined flux, two ways.

A particle of charge q on the plane with a thin flux line Phi through the
origin sees the gauge potential A = (0, Phi/(2 pi r)) and the Hamiltonian

    H = -(hbar^2/2M) [ d^2/dr^2 + (1/r) d/dr - (m + alpha)^2 / r^2 ]

on the angular sector exp(+i m theta), with alpha = -q Phi / (2 pi).  The
same sector operator arises for a free particle on the punctured plane,
where a real parameter beta labels the quantization; the identity of the
two operators at beta = alpha is the claim this module makes checkable.

Two deliberately independent assembly routes exist:

* ``assemble_ab_sector`` discretizes the differential expression term by
  term (chain rule onto the grid's native coordinate, central differences).
* ``assemble_punctured_sector`` never touches the PDE: it builds the energy
  quadratic form from operator factors (edge-difference matrix products,
  lumped masses, boundary term) and divides by the physical weight.

``equivalence_check`` reduces both to the same canonical symmetric form and
compares elementwise.  The routes share only the grid and container types.

Conventions: natural units by default (hbar = M = 1); log grids use
lambda = ln rho with quadrature weight rho^2 h, linear grids use weight
rho h.  The walls carry Dirichlet data; ``inner_bc="regular"`` instead
closes the inner edge with the regularity condition du/dlambda = |m+beta| u
that selects the rho^{|m+beta|} solution at the puncture (log grids only).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import banded
from .errors import ConfigError, NumericFailure

TWO_PI = 2.0 * math.pi

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class FluxConfig:
    """Charge, flux, and the derived sector-shift parameter.

    ``alpha = -charge_q * flux_phi / (2 pi)`` is stored so callers can pin
    an exact float; when omitted it is computed here.  ``check()`` verifies
    the stored value against the defining formula.
    """

    charge_q: float
    flux_phi: float
    hbar: float = 1.0
    alpha: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not (self.hbar > 0.0):
            raise ConfigError(f"hbar must be positive, got {self.hbar}")
        for name in ("charge_q", "flux_phi"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.alpha is None:
            object.__setattr__(self, "alpha", -self.charge_q * self.flux_phi / TWO_PI)
        self.check()

    def check(self) -> None:
        recomputed = -self.charge_q * self.flux_phi / TWO_PI
        scale = max(abs(self.alpha), abs(recomputed), 1e-300)
        if abs(recomputed - self.alpha) > 1e-15 * scale:
            raise ConfigError(
                f"stored alpha={self.alpha!r} disagrees with "
               f"-q*phi/(2*pi)={recomputed!r}"
            )

    @classmethod
    def from_alpha(cls, alpha: float, hbar: float = 1.0) -> "FluxConfig":
        """Unit charge and the flux that realizes the given alpha exactly."""
        return cls(charge_q=1.0, flux_phi=-TWO_PI * alpha, hbar=hbar, alpha=alpha)


@dataclass(frozen=True)
class RadialGrid:
    """Annular radial grid; the puncture stays strictly outside.

    n_points counts interior nodes; the walls at rho_min and rho_max sit one
    spacing beyond the first and last of them in the native coordinate
    (lambda = ln rho for log spacing, rho itself for linear).
    """

    rho_min: float
    rho_max: float
    n_points: int
    spacing: str = "log"

    def __post_init__(self):
        if not (self.rho_min > 0.0):
            raise ConfigError(f"rho_min must be > 0 (puncture excluded), got {self.rho_min}")
        if not (self.rho_max > self.rho_min):
            raise ConfigError("rho_max must exceed rho_min")
        if self.n_points < 16:
            raise ConfigError(f"grid too coarse for the stencil: n_points={self.n_points} < 16")
        if self.spacing not in ("log", "linear"):
            raise ConfigError(f"spacing must be 'log' or 'linear', got {self.spacing!r}")

    @property
    def step(self) -> float:
        if self.spacing == "log":
            return (math.log(self.rho_max) - math.log(self.rho_min)) / (self.n_points + 1)
        return (self.rho_max - self.rho_min) / (self.n_points + 1)

    def nodes(self, include_inner: bool = False) -> np.ndarray:
        """rho at the unknowns: interior nodes, optionally the inner wall too."""
        h = self.step
        j = np.arange(0 if include_inner else 1, self.n_points + 1)
        if self.spacing == "log":
            return np.exp(math.log(self.rho_min) + h * j)
        return self.rho_min + h * j

    def weights(self, include_inner: bool = False) -> np.ndarray:
        """Quadrature weights of the physical inner product at the unknowns."""
        rho = self.nodes(include_inner)
        h = self.step
        w = rho * rho * h if self.spacing == "log" else rho * h
        if include_inner:
            w = w.copy()
            w[0] *= 0.5  # wall node owns half a cell
        return w


@dataclass(frozen=True)
class SectorOperator:
    """One angular sector's radial Hamiltonian, banded and weight-Hermitian."""

    m: int
    beta_or_alpha: float
    bands: np.ndarray
    weight: np.ndarray
    nodes: np.ndarray
    grid: RadialGrid
    mass_M: float
    hbar: float
    inner_bc: str

    @property
    def n(self) -> int:
        return self.bands.shape[1]

    @property
    def p(self) -> int:
        return banded.bandwidth(self.bands)

    def matvec(self, v: np.ndarray) -> np.ndarray:
        return banded.matvec(self.bands, v)

    def dense(self) -> np.ndarray:
        return banded.to_dense(self.bands)

    def canonical_bands(self) -> np.ndarray:
        """Symmetric form W^{1/2} H W^{-1/2}; basis for comparisons and solves."""
        return banded.similarity_symmetrize(self.bands, self.weight)

    def hermiticity_residual(self) -> float:
        return banded.weighted_asymmetry(self.bands, self.weight)


def vector_potential(r: float, flux: FluxConfig) -> tuple[float, float]:
    """(A_r, A_theta) of the confined-flux gauge field at radius r."""
    if not (r > 0.0):
        raise ValueError(f"r must be positive (gauge field undefined at the flux line), got {r}")
    return 0.0, flux.flux_phi / (TWO_PI * r)


def _segment_sweep(p: np.ndarray, q: np.ndarray) -> float:
    """integral of (x dy - y dx)/(x^2+y^2) along the straight segment p->q.

    Adaptive Gauss-Legendre; the integrand is rational with poles off the
    real parameter axis whenever the segment misses the origin.
    """

    def gl(a: float, b: float) -> float:
        t = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
        x = p[0] + t * (q[0] - p[0])
        y = p[1] + t * (q[1] - p[1])
        num = x * (q[1] - p[1]) - y * (q[0] - p[0])
        return 0.5 * (b - a) * float(np.sum(_GL_WEIGHTS * num / (x * x + y * y)))

    def refine(a: float, b: float, whole: float, depth: int) -> float:
        mid = 0.5 * (a + b)
        left, right = gl(a, mid), gl(mid, b)
        if depth >= 30 or abs(left + right - whole) <= 1e-14 * (1.0 + abs(left + right)):
            return left + right
        return refine(a, mid, left, depth + 1) + refine(mid, b, right, depth + 1)

    return refine(0.0, 1.0, gl(0.0, 1.0), 0)


def holonomy(loop: np.ndarray, flux: FluxConfig) -> float:
    """q times the line integral of A around a closed polyline.

    Equals q * Phi * (winding number about the origin) for this gauge field;
    the integral is evaluated numerically, segment by segment.
    """
    pts = np.asarray(loop, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("loop must be an (L, 2) array of at least 3 vertices")
    scale = float(np.abs(pts).max())
    if not np.allclose(pts[0], pts[-1], rtol=0.0, atol=1e-12 * max(scale, 1.0)):
        raise ValueError("loop must be closed: first and last vertex must coincide")
    pts = pts.copy()
    pts[-1] = pts[0]  # snap roundoff-level closure gaps shut
    radii = np.hypot(pts[:, 0], pts[:, 1])
    if np.any(radii == 0.0):
        raise ValueError("loop vertex at the origin: holonomy undefined")

    sweep = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        seg = b - a
        seg_len = math.hypot(seg[0], seg[1])
        if seg_len == 0.0:
            continue
        # distance from the origin to the segment
        t = -float(np.dot(a, seg)) / (seg_len * seg_len)
        t = min(1.0, max(0.0, t))
        foot = a + t * seg
        dist = math.hypot(foot[0], foot[1])
        if dist < 1e-9:
            raise NumericFailure(
                "loop segment passes within 1e-9 of the flux line",
                diagnostics={"segment_start": a.tolist(), "segment_end": b.tolist(),
                             "distance": dist},
            )
        sweep += _segment_sweep(a, b)
    return flux.charge_q * flux.flux_phi / TWO_PI * sweep


def _validate_options(grid: RadialGrid, mass_M: float, inner_bc: str, stencil_order: int):
    if not (mass_M > 0.0):
        raise ConfigError(f"mass_M must be positive, got {mass_M}")
    if inner_bc not in ("dirichlet", "regular"):
        raise ConfigError(f"inner_bc must be 'dirichlet' or 'regular', got {inner_bc!r}")
    if stencil_order not in (2, 4):
        raise ConfigError(f"stencil_order must be 2 or 4, got {stencil_order}")
    if inner_bc == "regular" and grid.spacing != "log":
        raise ConfigError("inner_bc='regular' is supported on log grids only")
    if stencil_order == 4 and (grid.spacing != "log" or inner_bc != "dirichlet"):
        raise ConfigError("stencil_order=4 is supported on log Dirichlet grids only")


def _stencil_sector(m: int, shift: float, grid: RadialGrid, mass_M: float,
                    hbar: float, inner_bc: str, stencil_order: int) -> SectorOperator:
    """Route A: term-by-term finite differences of the PDE."""
    K = hbar * hbar / (2.0 * mass_M)
    nu = m + shift
    h = grid.step
    regular = inner_bc == "regular"
    rho = grid.nodes(include_inner=regular)
    n = rho.size

    if grid.spacing == "log":
        lam = np.log(rho)
        # chain rule onto lambda: d2/dr2 -> e^{-2l}(d2/dl2 - d/dl),
        # (1/r) d/dr -> e^{-2l} d/dl; keep the two first-derivative terms
        # separate so the route stays a sum over PDE terms.
        c2 = np.exp(-2.0 * lam)
        c1 = -np.exp(-2.0 * lam) + np.exp(-2.0 * lam)
    else:
        c2 = np.ones(n)
        c1 = 1.0 / rho

    centrifugal = K * nu * nu / (rho * rho)

    if stencil_order == 4:
        # correct the second-derivative operator, not the coefficients:
        # L4 = D2 - (h^2/12) D2 @ D2 on the Dirichlet-truncated grid.
        d2 = banded.from_tridiagonal(
            np.full(n, -2.0 / (h * h)), np.full(n - 1, 1.0 / (h * h)),
            np.full(n - 1, 1.0 / (h * h)))
        l4 = np.zeros((5, n))
        l4[1:4] = d2
        l4 -= (h * h / 12.0) * banded.multiply(d2, d2)
        ab = banded.row_scale(l4, -K * c2)
        ab[2] += centrifugal
    else:
        upper = -K * (c2[:-1] / (h * h) + c1[:-1] / (2.0 * h))
        lower = -K * (c2[1:] / (h * h) - c1[1:] / (2.0 * h))
        diag = K * 2.0 * c2 / (h * h) + centrifugal
        if regular:
            # ghost elimination of the regularity condition u' = |nu| u
            # at the inner wall (log coordinate), second-order one-sided.
            nu_abs = abs(nu)
            diag[0] = K * c2[0] * (2.0 / (h * h) + 2.0 * nu_abs / h) + centrifugal[0]
            upper = upper.copy()
            upper[0] = -2.0 * K * c2[0] / (h * h)
        ab = banded.from_tridiagonal(diag, upper, lower)

    return SectorOperator(
        m=m, beta_or_alpha=shift, bands=ab,
        weight=grid.weights(include_inner=regular), nodes=rho, grid=grid,
        mass_M=mass_M, hbar=hbar, inner_bc=inner_bc,
    )


def _edge_quadratic(sigma: np.ndarray) -> np.ndarray:
    """g^T diag(sigma) g for the edge-difference map g.

    Unknown j couples edges j and j+1; Dirichlet walls contribute their edge
    to the adjacent diagonal only.  sigma has one entry per edge (n+1 of
    them for n unknowns).
    """
    n = sigma.size - 1
    diag = sigma[:-1] + sigma[1:]
    off = -sigma[1:-1]
    return banded.from_tridiagonal(diag, off, off)


def _factored_sector(m: int, shift: float, grid: RadialGrid, mass_M: float,
                     hbar: float, inner_bc: str, stencil_order: int) -> SectorOperator:
    """Route B: energy quadratic form from operator factors, then W^{-1}."""
    K = hbar * hbar / (2.0 * mass_M)
    nu = m + shift
    h = grid.step
    regular = inner_bc == "regular"
    rho = grid.nodes(include_inner=regular)
    n = rho.size
    weight = grid.weights(include_inner=regular)

    if grid.spacing == "log":
        # flat lambda measure: all edges weigh 1, lumped node mass h
        # (half at a wall node that is an unknown, which also loses its
        # outboard edge)
        sigma = np.ones(n + 1)
        mu = np.full(n, h)
        if regular:
            sigma[0] = 0.0
            mu[0] = 0.5 * h
    else:
        # radial measure: edge conductivity rho at the midpoint, node mass
        # h / rho (the centrifugal density 1/rho^2 times rho dr)
        edges_left = np.concatenate(([grid.rho_min], rho))
        edges_right = np.concatenate((rho, [grid.rho_max]))
        sigma = 0.5 * (edges_left + edges_right)
        mu = h / rho

    if grid.spacing == "log":
        if stencil_order == 4:
            p2 = (1.0 / (h * h)) * _edge_quadratic(np.ones(n + 1))
            p4 = np.zeros((5, n))
            p4[1:4] = p2
            p4 += (h * h / 12.0) * banded.multiply(p2, p2)
            a_form = K * h * p4
            a_form[2] += K * nu * nu * mu
        else:
            a_form = (K / h) * _edge_quadratic(sigma)
            a_form[1] += K * nu * nu * mu
            if regular:
                a_form[1, 0] += K * abs(nu)  # boundary flux of the regular solution
    else:
        a_form = (K / h) * _edge_quadratic(sigma)
        a_form[1] += K * nu * nu * mu

    ab = banded.row_scale(a_form, 1.0 / weight)

    return SectorOperator(
        m=m, beta_or_alpha=shift, bands=ab, weight=weight, nodes=rho, grid=grid,
        mass_M=mass_M, hbar=hbar, inner_bc=inner_bc,
    )


def assemble_ab_sector(m: int, flux: FluxConfig, grid: RadialGrid, mass_M: float,
                       inner_bc: str = "dirichlet", stencil_order: int = 2) -> SectorOperator:
    """Sector m of the confined-flux Hamiltonian (finite-difference route)."""
    _validate_options(grid, mass_M, inner_bc, stencil_order)
    return _stencil_sector(m, flux.alpha, grid, mass_M, flux.hbar, inner_bc, stencil_order)


def assemble_punctured_sector(m: int, beta: float, grid: RadialGrid, mass_M: float,
                              hbar: float = 1.0, inner_bc: str = "dirichlet",
                              stencil_order: int = 2) -> SectorOperator:
    """Sector m of the punctured-plane Hamiltonian (factored-form route)."""
    _validate_options(grid, mass_M, inner_bc, stencil_order)
    if not math.isfinite(beta):
        raise ConfigError(f"beta must be finite, got {beta}")
    return _factored_sector(m, beta, grid, mass_M, hbar, inner_bc, stencil_order)


def equivalence_check(alpha: float, grid: RadialGrid, m_range, mass_M: float,
                      hbar: float = 1.0, inner_bc: str = "dirichlet",
                      stencil_order: int = 2) -> float:
    """Max elementwise relative gap between the two assembly routes.

    Both operators are reduced to the canonical symmetric form before the
    comparison so that weight conventions cannot mask a disagreement.
    """
    flux = FluxConfig.from_alpha(alpha, hbar=hbar)
    worst = 0.0
    for m in m_range:
        op_a = assemble_ab_sector(m, flux, grid, mass_M, inner_bc, stencil_order)
        op_b = assemble_punctured_sector(m, alpha, grid, mass_M, hbar, inner_bc, stencil_order)
        ta, tb = op_a.canonical_bands(), op_b.canonical_bands()
        den = np.maximum(np.abs(ta), np.abs(tb))
        mask = den > 0.0
        if mask.any():
            worst = max(worst, float((np.abs(ta - tb)[mask] / den[mask]).max()))
    return worst
