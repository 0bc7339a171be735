"""Structure constants of the punctured-plane canonical algebra and a
truncated operator realization of it.

The four generators are the angular and radial momenta and the two
position-like multipliers,

    pi_phi, pi_rho, c, s,

plus a central slot reserved for an extension term.  Brackets follow the
convention [X, Y] = (1/i) [X_hat, Y_hat], under which all structure
constants are real integers:

    [s, pi_phi] = c     [c, pi_phi] = -s
    [s, pi_rho] = s     [c, pi_rho] = c
    [pi_phi, pi_rho] = 0            [c, s] = 0

The classical momentum map (pi_phi -> x p_y - y p_x, pi_rho -> x p_x + y p_y,
c -> x, s -> y) turns out to be a Poisson homomorphism as it stands, so the
central coefficient stays zero; ``central_extension_check`` measures exactly
that defect and should return roundoff.

The operator realization acts on Fourier sectors e^{i m phi} tensored with a
log-radial grid, with the flat measure dlambda dphi (lambda = ln rho).  In
that inner product the radial momentum -i hbar d/dlambda discretizes to a
plainly anti-symmetric central difference, so all four operators are
Hermitian by construction rather than approximately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .errors import ConfigError
from .hamiltonian import RadialGrid

BASIS = ("pi_phi", "pi_rho", "c", "s")
_SLOT = {name: k for k, name in enumerate(BASIS)}


@dataclass(frozen=True)
class LieElement:
    """Real linear combination of the four generators and the center."""

    coeff_pi_phi: float = 0.0
    coeff_pi_rho: float = 0.0
    coeff_c: float = 0.0
    coeff_s: float = 0.0
    coeff_center: float = 0.0

    def __post_init__(self):
        for name in ("coeff_pi_phi", "coeff_pi_rho", "coeff_c", "coeff_s", "coeff_center"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")

    def coefficients(self) -> np.ndarray:
        return np.array([self.coeff_pi_phi, self.coeff_pi_rho,
                         self.coeff_c, self.coeff_s, self.coeff_center])

    @classmethod
    def from_coefficients(cls, coeffs) -> "LieElement":
        a = np.asarray(coeffs, dtype=float)
        if a.shape != (5,):
            raise ConfigError(f"expected 5 coefficients, got shape {a.shape}")
        return cls(*a.tolist())

    def __add__(self, other: "LieElement") -> "LieElement":
        return LieElement.from_coefficients(self.coefficients() + other.coefficients())

    def __sub__(self, other: "LieElement") -> "LieElement":
        return LieElement.from_coefficients(self.coefficients() - other.coefficients())

    def __neg__(self) -> "LieElement":
        return LieElement.from_coefficients(-self.coefficients())

    def scaled(self, factor: float) -> "LieElement":
        return LieElement.from_coefficients(factor * self.coefficients())

    def is_zero(self) -> bool:
        return bool(np.all(self.coefficients() == 0.0))


PI_PHI = LieElement(coeff_pi_phi=1.0)
PI_RHO = LieElement(coeff_pi_rho=1.0)
C = LieElement(coeff_c=1.0)
S = LieElement(coeff_s=1.0)
CENTER = LieElement(coeff_center=1.0)


def _standard_constants() -> np.ndarray:
    t = np.zeros((4, 4, 5))

    def put(a: str, b: str, rhs: str, sign: float) -> None:
        i, j = _SLOT[a], _SLOT[b]
        t[i, j, _SLOT[rhs]] = sign
        t[j, i, _SLOT[rhs]] = -sign

    put("s", "pi_phi", "c", 1.0)
    put("c", "pi_phi", "s", -1.0)
    put("s", "pi_rho", "s", 1.0)
    put("c", "pi_rho", "c", 1.0)
    return t


@dataclass(frozen=True)
class StructureTable:
    """Bracket table on the generators, with an optional central 2-cocycle.

    ``constants[i, j]`` holds the five coefficients of [e_i, e_j]; the
    default table carries no extension, matching the classical momentum map.
    """

    constants: np.ndarray = None  # type: ignore[assignment]
    extension: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.constants is None:
            object.__setattr__(self, "constants", _standard_constants())
        if self.extension is None:
            object.__setattr__(self, "extension", np.zeros((4, 4)))
        c = np.asarray(self.constants, dtype=float)
        z = np.asarray(self.extension, dtype=float)
        if c.shape != (4, 4, 5) or z.shape != (4, 4):
            raise ConfigError("structure table must be (4,4,5) with a (4,4) extension")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(z))):
            raise ConfigError("structure table entries must be finite")
        if np.any(c != -np.swapaxes(c, 0, 1)) or np.any(z != -z.T):
            raise ConfigError("bracket table must be antisymmetric")
        full = c.copy()
        full[:, :, 4] += z
        object.__setattr__(self, "constants", c)
        object.__setattr__(self, "extension", z)
        object.__setattr__(self, "_full", full)

    def entry(self, a: str, b: str) -> LieElement:
        return LieElement.from_coefficients(self._full[_SLOT[a], _SLOT[b]])


DEFAULT_TABLE = StructureTable()


def bracket(a: LieElement, b: LieElement, table: StructureTable = None) -> LieElement:
    """[a, b] by bilinear expansion; the center brackets to zero with everything."""
    t = (table or DEFAULT_TABLE)._full
    out = np.einsum("i,j,ijk->k", a.coefficients()[:4], b.coefficients()[:4], t)
    return LieElement.from_coefficients(out)


def jacobi_residual(a: LieElement, b: LieElement, c: LieElement,
                    table: StructureTable = None) -> LieElement:
    """[a,[b,c]] + [b,[c,a]] + [c,[a,b]]; the zero element for a Lie table."""
    return (bracket(a, bracket(b, c, table), table)
            + bracket(b, bracket(c, a, table), table)
            + bracket(c, bracket(a, b, table), table))


def _default_momentum_map() -> dict:
    return {
        "pi_phi": lambda x, y, px, py: x * py - y * px,
        "pi_rho": lambda x, y, px, py: x * px + y * py,
        "c": lambda x, y, px, py: x,
        "s": lambda x, y, px, py: y,
        "center": lambda x, y, px, py: np.ones_like(x),
    }


def _poisson_numeric(f, g, pts: np.ndarray, rel_step: float) -> np.ndarray:
    """{f, g} on each phase-space sample, by central differences.

    The observables of interest are quadratic at most, so the difference
    quotient carries no truncation error at all; the step only has to be
    big enough that the division does not amplify roundoff.
    """
    x, y, px, py = pts.T

    def d(func, k):
        h = rel_step * np.maximum(1.0, np.abs(pts[:, k]))
        plus, minus = pts.copy(), pts.copy()
        plus[:, k] += h
        minus[:, k] -= h
        return (func(*plus.T) - func(*minus.T)) / (2.0 * h)

    return (d(f, 0) * d(g, 2) - d(f, 2) * d(g, 0)
            + d(f, 1) * d(g, 3) - d(f, 3) * d(g, 1))


def central_extension_check(p_map: dict = None, *, points: np.ndarray = None,
                            n_samples: int = 100, seed: int = 7,
                            rel_step: float = 0.05, min_radius: float = 0.15,
                            table: StructureTable = None) -> float:
    """Worst gap |{P_A, P_B} - P_[A,B]| over generator pairs and samples.

    A zero result (to quadrature tolerance) says the momentum map is
    already a homomorphism: no central extension is required.
    """
    p_map = dict(_default_momentum_map() if p_map is None else p_map)
    missing = [name for name in BASIS if name not in p_map]
    if missing:
        raise ConfigError(f"momentum map lacks observables for {missing}")
    p_map.setdefault("center", lambda x, y, px, py: np.ones_like(x))

    if points is None:
        if n_samples < 1:
            raise ConfigError(f"n_samples must be >= 1, got {n_samples}")
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-1.0, 1.0, size=(n_samples, 4))
        while True:
            near = np.hypot(pts[:, 0], pts[:, 1]) < min_radius
            if not near.any():
                break
            pts[near] = rng.uniform(-1.0, 1.0, size=(int(near.sum()), 4))
    else:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 4:
            raise ConfigError("points must be an (n, 4) array of (x, y, px, py)")
        if np.any(np.hypot(pts[:, 0], pts[:, 1]) < 1e-12):
            raise ValueError("sample point at the puncture: observables undefined there")

    tbl = table or DEFAULT_TABLE
    worst = 0.0
    for ia, a in enumerate(BASIS):
        for b in BASIS[ia + 1:]:
            pb = _poisson_numeric(p_map[a], p_map[b], pts, rel_step)
            target_elem = tbl.entry(a, b)
            coeffs = target_elem.coefficients()
            target = np.zeros(pts.shape[0])
            for k, name in enumerate(BASIS):
                if coeffs[k] != 0.0:
                    target = target + coeffs[k] * p_map[name](*pts.T)
            if coeffs[4] != 0.0:
                target = target + coeffs[4] * p_map["center"](*pts.T)
            worst = max(worst, float(np.abs(pb - target).max()))
    return worst


@dataclass(frozen=True)
class TruncatedRep:
    """Sparse realization of the four generators on sectors |m| <= m_max."""

    beta: float
    m_max: int
    grid: RadialGrid
    hbar: float
    op_pi_phi: scipy.sparse.csr_matrix
    op_pi_rho: scipy.sparse.csr_matrix
    op_c: scipy.sparse.csr_matrix
    op_s: scipy.sparse.csr_matrix

    @property
    def n_sectors(self) -> int:
        return 2 * self.m_max + 1

    @property
    def dim(self) -> int:
        return self.n_sectors * self.grid.n_points

    def operator(self, name: str) -> scipy.sparse.csr_matrix:
        if name not in BASIS:
            raise ConfigError(f"unknown generator {name!r}; expected one of {BASIS}")
        return getattr(self, f"op_{name}")

    def hermiticity_residual(self, name: str) -> float:
        op = self.operator(name)
        gap = (op - op.conjugate().T).tocoo()
        return float(np.abs(gap.data).max()) if gap.nnz else 0.0


def build_rep(beta: float, m_max: int, grid: RadialGrid, hbar: float = 1.0) -> TruncatedRep:
    """Assemble the four generator matrices for one value of beta.

    Basis ordering is sector-major: index = (m + m_max) * n_points + j.
    The multipliers c and s couple neighboring sectors; whatever they would
    send beyond |m| = m_max is dropped, which is why commutator tests must
    feed vectors supported on |m| <= m_max - 1.
    """
    if not math.isfinite(beta):
        raise ConfigError(f"beta must be finite, got {beta}")
    if m_max < 1:
        raise ConfigError(f"m_max must be >= 1, got {m_max}")
    if not (hbar > 0.0):
        raise ConfigError(f"hbar must be positive, got {hbar}")
    if grid.spacing != "log":
        raise ConfigError("the representation lives on the log-radial grid; "
                          "spacing='linear' has no uniform-in-lambda inner product")

    n = grid.n_points
    rho = grid.nodes()
    h = grid.step
    s_count = 2 * m_max + 1
    m_values = np.arange(-m_max, m_max + 1)

    pi_phi = scipy.sparse.diags(
        np.repeat(hbar * (m_values + beta), n).astype(complex), format="csr")

    ones = np.ones(n - 1)
    deriv = scipy.sparse.diags([ones, -ones], [1, -1]) / (2.0 * h)
    pi_rho = (-1j * hbar) * scipy.sparse.kron(
        scipy.sparse.identity(s_count), deriv, format="csr")

    lower = scipy.sparse.diags([np.ones(s_count - 1)], [-1])
    radial = scipy.sparse.diags(0.5 * rho)
    op_c = scipy.sparse.kron(lower + lower.T, radial, format="csr").astype(complex)
    op_s = scipy.sparse.kron(-1j * lower + 1j * lower.T, radial, format="csr")

    return TruncatedRep(beta=beta, m_max=m_max, grid=grid, hbar=hbar,
                        op_pi_phi=pi_phi, op_pi_rho=pi_rho.tocsr(),
                        op_c=op_c, op_s=op_s.tocsr())


def smooth_test_vector(rep: TruncatedRep, seed: int = 0) -> np.ndarray:
    """Random commutator probe: a compactly supported radial bump per sector.

    The radial profile is the classic C-infinity bump exp(-1/(1-t^2)),
    which vanishes with all derivatives at its edges, so the vector is
    exactly zero on the boundary nodes.  Sectors |m| = m_max stay empty to
    keep clear of the Fourier truncation.  The seed fixes the bump's
    placement, a mild per-sector phase winding, and the sector amplitudes;
    none of the draws depend on the grid size, so one seed designates one
    continuum function across resolutions.
    """
    rng = np.random.default_rng(seed)
    lo = math.log(rep.grid.rho_min)
    span = math.log(rep.grid.rho_max) - lo
    # sit toward the inner decades: the commutator defect of the c, s pairs
    # is weighted by rho across the bump, so a probe there measures the
    # stencil rather than the multiplier's outer-edge magnitude
    center = lo + span * rng.uniform(0.12, 0.18)
    halfwidth = span * rng.uniform(0.07, 0.10)
    inner = np.arange(-rep.m_max + 1, rep.m_max)
    amps = rng.standard_normal(inner.size) + 1j * rng.standard_normal(inner.size)
    winds = rng.uniform(-0.5, 0.5, size=inner.size)

    lam = np.log(rep.grid.nodes())
    t = (lam - center) / halfwidth
    profile = np.zeros(lam.size)
    core = np.abs(t) < 1.0
    profile[core] = np.exp(-1.0 / (1.0 - t[core] ** 2))

    v = np.zeros((rep.n_sectors, rep.grid.n_points), dtype=complex)
    for amp, wind, m in zip(amps, winds, inner):
        v[m + rep.m_max] = amp * profile * np.exp(1j * wind * lam)
    return v


_PAIRS = tuple((a, b) for i, a in enumerate(BASIS) for b in BASIS[i + 1:])


def commutator_residual(rep: TruncatedRep, pair, test_vector: np.ndarray,
                        table: StructureTable = None) -> float:
    """How far [X, Y] v lands from i hbar Z v, relative to |v|.

    Z is the bracket table's right-hand side for the pair.  The commutator
    is formed at the matrix level first: products of the sparse factors
    agree entry-by-entry for the pairs that commute in the truncation, so
    their residual comes out exactly zero rather than at roundoff.
    """
    names = tuple(pair)
    if len(names) != 2 or any(nm not in BASIS for nm in names):
        raise ConfigError(f"pair must name two of {BASIS}, got {pair!r}")
    x_name, y_name = names

    v = np.asarray(test_vector)
    if v.shape == (rep.n_sectors, rep.grid.n_points):
        v = v.reshape(-1)
    if v.shape != (rep.dim,):
        raise ConfigError(
            f"test vector shape {test_vector.shape} does not fit the rep "
            f"({rep.n_sectors} sectors x {rep.grid.n_points} nodes)")
    if not np.all(np.isfinite(v.real) & np.isfinite(v.imag)):
        raise ConfigError("test vector must be finite")
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ConfigError("test vector must be nonzero")

    grid_v = v.reshape(rep.n_sectors, rep.grid.n_points)
    fence = max(np.abs(grid_v[[0, -1], :]).max(),
                np.abs(grid_v[:, [0, 1, -2, -1]]).max())
    if fence > 1e-13 * np.abs(grid_v).max():
        raise ConfigError(
            "test vector touches the truncation boundary; the commutator "
            "identity only holds on interior-supported vectors")

    x_op, y_op = rep.operator(x_name), rep.operator(y_name)
    commutator = x_op @ y_op - y_op @ x_op

    z = bracket(LieElement(**{f"coeff_{x_name}": 1.0}),
                LieElement(**{f"coeff_{y_name}": 1.0}), table)
    z_coeffs = z.coefficients()
    rhs = np.zeros_like(v)
    for k, name in enumerate(BASIS):
        if z_coeffs[k] != 0.0:
            rhs = rhs + z_coeffs[k] * (rep.operator(name) @ v)
    if z_coeffs[4] != 0.0:
        rhs = rhs + z_coeffs[4] * v

    residual = commutator @ v - (1j * rep.hbar) * rhs
    return float(np.linalg.norm(residual)) / norm


def rep_label(beta: float) -> float:
    """Integer-shift equivalence class of beta, as a value in [0, 1)."""
    if not math.isfinite(beta):
        raise ConfigError(f"beta must be finite, got {beta}")
    return beta % 1.0
