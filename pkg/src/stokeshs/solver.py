"""Half-space Stokes resolvent solver on the torus-times-half-line proxy.

Pipeline: divergence lift, whole-space solve of the remaining forcing
(tangential components odd, normal component even across ``x_N = 0``),
reduction of the boundary data, and a boundary corrector built from the
closed-form symbols.  Every part carries analytic normal derivatives so
residuals and norms avoid differentiating the solver's own output.

Modal arrays have shape ``(C, K, Z)``: component, normal node and
flattened tangential mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (CompatibilityError, ConfigError, DecayError, DegenerateDataError,
                     DomainError)
from .fields import (ZERO_MODE_TOL, Field, Grid, _full_space_check, fft_tangential,
                     ifft_tangential, lq_norm, neg_sobolev_surrogate, normal_derivative,
                     riesz_tangential, split_parity)
from .normal_ops import half_line_resolvent
from .spectral_core import BCKind, BCTag, SectorSpec, make_point
from .symbols import symbol_derivatives

# modes are processed in blocks of this size to bound memory in the correctors
_MODE_BLOCK = 256


@dataclass(frozen=True)
class HalfSpaceData:
    """Data of one resolvent problem.

    ``h`` is boundary data given as a half-space function; only its trace
    enters the direct corrector, the whole field enters the Volevich form.
    Optional ``dN_*`` arrays replace stencil derivatives of the data.
    """

    bc: BCKind
    lam: complex
    f: Field
    g: Field
    h: Field
    sector: Optional[SectorSpec] = None
    dN_h: Optional[Field] = None
    dN2_h: Optional[Field] = None
    dN_g: Optional[Field] = None

    def __post_init__(self) -> None:
        grid = self.f.grid
        N = grid.dim
        if self.g.grid != grid or self.h.grid != grid:
            raise ConfigError("f, g and h must share one grid")
        if self.f.components != N or self.h.components != N or self.g.components != 1:
            raise ConfigError("f and h need N components, g one")
        lam = complex(self.lam)
        if lam == 0 or (lam.imag == 0 and lam.real < 0):
            raise DomainError(f"lambda = {lam} is outside every sector")
        if self.sector is not None and abs(np.angle(lam)) > math.pi - self.sector.epsilon + 1e-14:
            raise DomainError(f"arg lambda = {np.angle(lam):.6g} outside the sector")

    @property
    def grid(self) -> Grid:
        return self.f.grid

    @classmethod
    def zeros(cls, bc: BCKind, lam: complex, grid: Grid, **kw) -> "HalfSpaceData":
        N = grid.dim
        z = np.zeros((N, grid.K) + grid.lattice_shape)
        return cls(bc, lam, Field(grid, z), Field(grid, z[:1]), Field(grid, z), **kw)

    def scaled(self, c: float) -> "HalfSpaceData":
        def sc(F):
            return None if F is None else F * c
        return HalfSpaceData(self.bc, self.lam, self.f * c, self.g * c, self.h * c, self.sector,
                             sc(self.dN_h), sc(self.dN2_h), sc(self.dN_g))


@dataclass(frozen=True)
class Part:
    """Modal velocity and pressure with analytic normal derivatives."""

    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray
    pi: np.ndarray
    dpi: np.ndarray

    @classmethod
    def zeros(cls, N: int, K: int, Z: int) -> "Part":
        z = np.zeros((N, K, Z), dtype=complex)
        p = np.zeros((K, Z), dtype=complex)
        return cls(z, z.copy(), z.copy(), p, p.copy())

    def __add__(self, other: "Part") -> "Part":
        return Part(self.u + other.u, self.du + other.du, self.d2u + other.d2u,
                    self.pi + other.pi, self.dpi + other.dpi)


@dataclass(frozen=True)
class SolutionParts:
    v_lift: Field
    v_whole: Field
    tau: Field
    w_boundary: Field
    kappa: Field


@dataclass(frozen=True)
class Solution:
    """Velocity, pressure, their pieces and the modal derivative data."""

    u: Field
    pi: Field
    parts: SolutionParts
    modal: Part = field(repr=False)
    modal_parts: dict = field(repr=False, default_factory=dict)


# ---------------------------------------------------------------------------
# modal helpers

def _modal(F: Field) -> np.ndarray:
    v = fft_tangential(F).values
    return v.reshape(v.shape[:2] + (-1,))


def _to_field(grid: Grid, arr: np.ndarray) -> Field:
    arr = arr.reshape(arr.shape[:2] + grid.lattice_shape)
    return ifft_tangential(Field(grid, arr, spectral=True))


def _modes(grid: Grid):
    xi = grid.xi.reshape(grid.dim - 1, -1)
    return xi, np.sqrt(np.sum(xi ** 2, axis=0))


def _data_derivative(F: Field, given: Optional[Field], order: int) -> np.ndarray:
    if given is not None:
        return _modal(given)
    return _modal(normal_derivative(F, order))


# ---------------------------------------------------------------------------
# divergence lift and whole-space solve

def _lift_modal(grid: Grid, G: np.ndarray, dG: np.ndarray, tol: float = ZERO_MODE_TOL) -> Part:
    """``v = -grad (-Delta)^{-1} g^e`` restricted to the half space."""
    xi, A = _modes(grid)
    N, n = grid.dim, grid.dim - 1
    _full_space_check(grid, G.reshape(G.shape[:2] + grid.lattice_shape), tol, "divergence lift")
    g = G[0]
    phi, dphi = half_line_resolvent(grid, A, g, +1)
    lap = A ** 2 * phi - g          # d_N^2 phi
    ixi = 1j * xi[:, None, :]
    u = np.empty((N,) + g.shape, dtype=complex)
    du, d2u = np.empty_like(u), np.empty_like(u)
    u[:n], du[:n], d2u[:n] = -ixi * phi, -ixi * dphi, -ixi * lap
    # A = 0: phi = 0 and dphi = -int_0^x g, so v_N = int_0^x g as required
    u[n], du[n] = -dphi, -lap
    d2u[n] = -(A ** 2 * dphi - dG[0])
    z = np.zeros_like(g)
    return Part(u, du, d2u, z, z.copy())


def divergence_lift(g: Field, dN_g: Optional[Field] = None) -> Field:
    """Velocity with ``div v = g``, ``v_N(., 0) = 0`` and ``d_N v_j(., 0) = 0``.

    Raises
    ------
    CompatibilityError
        If the even extension of ``g`` has a non-negligible full-space zero mode.
    """
    grid = g.grid
    part = _lift_modal(grid, _modal(g), _data_derivative(g, dN_g, 1))
    return _to_field(grid, part.u)


def _whole_space_modal(grid: Grid, lam: complex, F: np.ndarray, tangential_parity: int = -1) -> Part:
    """Solve ``(lam - Delta) v + grad tau = F^ext`` and restrict to the half space.

    ``F^ext`` extends the tangential components with ``tangential_parity``
    and the normal component with the opposite parity; the default is the
    odd/even extension ``iota``.  ``v_t`` and ``tau`` inherit the tangential
    parity, ``v_N`` the normal one.
    """
    xi, A = _modes(grid)
    n = grid.dim - 1
    s = tangential_parity
    B = make_point(lam, xi).B
    ft, fn = F[:n], F[n]
    ixi = 1j * xi[:, None, :]
    Gt, dGt = half_line_resolvent(grid, A, ft, s)
    Gn, dGn = half_line_resolvent(grid, A, fn, -s)
    # at A = 0 the even derivative -int_0^x f_N makes tau = int_0^x f_N
    tau = -np.sum(ixi * Gt, axis=0) - dGn
    dtau = -np.sum(ixi * dGt, axis=0) - (A ** 2 * Gn - fn)
    rt = ft - ixi * tau
    rn = fn - dtau
    vt, dvt = half_line_resolvent(grid, B, rt, s)
    vn, dvn = half_line_resolvent(grid, B, rn, -s)
    u = np.concatenate([vt, vn[None]])
    du = np.concatenate([dvt, dvn[None]])
    d2u = B ** 2 * u - np.concatenate([rt, rn[None]])
    return Part(u, du, d2u, tau, dtau)


def solve_wholespace(lam: complex, f: Field):
    """Whole-space resolvent for ``iota f`` on the half grid.

    Parameters
    ----------
    lam : complex
    f : Field
        Half-grid forcing; tangential components are extended oddly and the
        normal component evenly.  A symmetric-grid field is split into its
        even and odd parts first.

    Returns
    -------
    v, tau : Field
        On the same grid layout as ``f``.
    """
    grid = f.grid
    if lam == 0:
        raise DomainError("lambda must be nonzero")
    if not f.mirrored:
        part = _whole_space_modal(grid, lam, _modal(f))
        return _to_field(grid, part.u), _to_field(grid, part.pi[None])
    return _whole_space_mirrored(lam, f)


def _whole_space_mirrored(lam: complex, f: Field):
    grid = f.grid
    n = grid.dim - 1
    even, odd = split_parity(f)
    E, O = _modal(even), _modal(odd)
    a = _whole_space_modal(grid, lam, np.concatenate([O[:n], E[n:]]), -1)
    b = _whole_space_modal(grid, lam, np.concatenate([E[:n], O[n:]]), +1)
    sign = np.array([-1.0] * n + [1.0])[:, None, None]
    u = np.concatenate([(sign * (a.u - b.u))[:, :0:-1], a.u + b.u], axis=1)
    p = np.concatenate([(b.pi - a.pi)[:0:-1], a.pi + b.pi])[None]

    def back(arr):
        arr = arr.reshape(arr.shape[:2] + grid.lattice_shape)
        return ifft_tangential(Field(grid, arr, spectral=True, mirrored=True))

    return back(u), back(p)


# ---------------------------------------------------------------------------
# boundary data reduction

def _reduce_modal(bc: BCKind, grid: Grid, H: np.ndarray, dH: np.ndarray,
                  lift: Part, whole: Part):
    """Both correction tables; returns the reduced data and its normal derivative."""
    xi, _ = _modes(grid)
    n = grid.dim - 1
    ixi = 1j * xi[:, None, :]
    hb, dhb = H.copy(), dH.copy()
    vl, v = lift, whole
    if bc.tag is BCTag.DIRICHLET:
        hb[:n] -= vl.u[:n]
        dhb[:n] -= vl.du[:n]
        hb -= v.u
        dhb -= v.du
    elif bc.tag is BCTag.NEUMANN:
        hb[:n] += ixi * vl.u[n]
        dhb[:n] += ixi * vl.du[n]
        hb[n] += 2 * vl.du[n]
        dhb[n] += 2 * vl.d2u[n]
        hb[:n] += v.du[:n] + ixi * v.u[n]
        dhb[:n] += v.d2u[:n] + ixi * v.du[n]
    else:
        a, b = bc.alpha, bc.beta
        hb[:n] -= a * vl.u[:n]
        dhb[:n] -= a * vl.du[:n]
        hb[:n] += b * v.du[:n]
        dhb[:n] += b * v.d2u[:n]
        hb[n] -= v.u[n]
        dhb[n] -= v.du[n]
    return hb, dhb


def reduce_boundary_data(bc: BCKind, data: HalfSpaceData, v_lift: Field, v_whole: Field,
                         tau: Field) -> Field:
    """Reduced boundary data after lifting and after the whole-space solve.

    Field-level entry point; the solver uses the modal version with
    analytic derivatives.  Derivatives of ``v_lift`` and ``v_whole`` are
    taken with stencils here.
    """
    grid = data.grid

    def part(F):
        U = _modal(F)
        dU = _modal(normal_derivative(F, 1))
        d2U = _modal(normal_derivative(F, 2))
        z = np.zeros_like(U[0])
        return Part(U, dU, d2U, z, z)

    H = _modal(data.h)
    dH = _data_derivative(data.h, data.dN_h, 1)
    hb, _ = _reduce_modal(bc, grid, H, dH, part(v_lift), part(v_whole))
    return _to_field(grid, hb)


# ---------------------------------------------------------------------------
# boundary correctors

def _check_zero_mode(bc: BCKind, grid: Grid, trace: np.ndarray, tol: float) -> None:
    if bc.tag is BCTag.NEUMANN:
        return
    n = grid.dim - 1
    ref = np.linalg.norm(trace)
    if abs(trace[n, 0]) > tol * ref and abs(trace[n, 0]) > 0:
        raise CompatibilityError("zero tangential mode of the normal boundary datum must vanish")


def _direct_modal(bc: BCKind, grid: Grid, lam: complex, trace: np.ndarray,
                  tol: float = ZERO_MODE_TOL) -> Part:
    """``w = phi(x) h(0)``, ``kappa = chi(x) h(0)`` per mode. ``trace`` is ``(N, Z)``."""
    _check_zero_mode(bc, grid, trace, tol)
    xi, _ = _modes(grid)
    N, K, Z = grid.dim, grid.K, trace.shape[-1]
    x = grid.normal_nodes[:, None]
    out = Part.zeros(N, K, Z)
    for s in range(0, Z, _MODE_BLOCK):
        sl = slice(s, s + _MODE_BLOCK)
        h0 = trace[:, sl]
        if not np.any(h0):
            continue
        p = make_point(lam, xi[:, sl])
        dphi, dchi = symbol_derivatives(bc, p, x, (0, 1, 2))
        for arr, d in ((out.u, 0), (out.du, 1), (out.d2u, 2)):
            arr[:, :, sl] = np.einsum("jkxz,kz->jxz", dphi[d], h0)
        out.pi[:, sl] = np.einsum("kxz,kz->xz", dchi[0], h0)
        out.dpi[:, sl] = np.einsum("kxz,kz->xz", dchi[1], h0)
    return out


def _volevich_modal(bc: BCKind, grid: Grid, lam: complex, H: np.ndarray, dH: np.ndarray,
                    tol: float = ZERO_MODE_TOL, decay_tol: float = 1e-8) -> Part:
    """``w(x) = -int_0^X [d phi(x+y) h(y) + phi(x+y) d h(y)] dy`` per mode."""
    scale = np.abs(H).max() if H.size else 0.0
    if scale > 0 and np.abs(H[:, -1]).max() > decay_tol * scale:
        raise DecayError("boundary data must decay by x_max for the Volevich form")
    _check_zero_mode(bc, grid, H[:, 0], tol)
    xi, _ = _modes(grid)
    N, K, Z = grid.dim, grid.K, H.shape[-1]
    x = grid.normal_nodes
    wy = grid.normal_weights
    out = Part.zeros(N, K, Z)
    active = np.flatnonzero(np.any(H != 0, axis=(0, 1)) | np.any(dH != 0, axis=(0, 1)))
    for s in range(0, len(active), _MODE_BLOCK):
        idx = active[s:s + _MODE_BLOCK]
        p = make_point(lam, xi[:, idx])
        h, dh = H[:, :, idx] * wy[None, :, None], dH[:, :, idx] * wy[None, :, None]
        for i, xi_ in enumerate(x):
            dphi, dchi = symbol_derivatives(bc, p, (xi_ + x)[:, None], (0, 1, 2, 3))
            for arr, d in ((out.u, 0), (out.du, 1), (out.d2u, 2)):
                arr[:, i, idx] = -(np.einsum("jkyz,kyz->jz", dphi[d + 1], h)
                                   + np.einsum("jkyz,kyz->jz", dphi[d], dh))
            out.pi[i, idx] = -(np.einsum("kyz,kyz->z", dchi[1], h)
                               + np.einsum("kyz,kyz->z", dchi[0], dh))
            out.dpi[i, idx] = -(np.einsum("kyz,kyz->z", dchi[2], h)
                                + np.einsum("kyz,kyz->z", dchi[1], dh))
    return out


def boundary_correct_direct(bc: BCKind, lam: complex, trace):
    """Corrector from the boundary trace: ``w = phi h(0)``, ``kappa = chi h(0)``.

    Parameters
    ----------
    trace : BoundaryField
        Reduced boundary data at ``x_N = 0``.

    Returns
    -------
    w, kappa : Field
    """
    grid = trace.grid
    T = np.fft.fftn(trace.values, axes=tuple(range(1, grid.dim))) if not trace.spectral \
        else trace.values
    part = _direct_modal(bc, grid, lam, T.reshape(T.shape[0], -1))
    return _to_field(grid, part.u), _to_field(grid, part.pi[None])


def boundary_correct_volevich(bc: BCKind, lam: complex, h: Field, dN_h: Optional[Field] = None):
    """Corrector from half-space data through the Volevich integral.

    ``d_N h`` is taken from ``dN_h`` when given, otherwise from the
    five-point stencil.
    """
    grid = h.grid
    H = _modal(h)
    dH = _data_derivative(h, dN_h, 1)
    part = _volevich_modal(bc, grid, lam, H, dH)
    return _to_field(grid, part.u), _to_field(grid, part.pi[None])


# ---------------------------------------------------------------------------
# full pipeline

def solve_resolvent(data: HalfSpaceData, corrector: str = "direct") -> Solution:
    """Lift, whole-space solve, reduce, correct and assemble.

    Parameters
    ----------
    data : HalfSpaceData
    corrector : {"direct", "volevich"}
    """
    if corrector not in ("direct", "volevich"):
        raise ConfigError(f"unknown corrector {corrector!r}")
    grid, lam, bc = data.grid, complex(data.lam), data.bc
    N = grid.dim
    G = _modal(data.g)
    if np.any(G):
        lift = _lift_modal(grid, G, _data_derivative(data.g, data.dN_g, 1))
    else:
        lift = Part.zeros(N, grid.K, G.shape[-1])
    xi, A = _modes(grid)
    F = _modal(data.f)
    ftilde = F - (lam * lift.u + A ** 2 * lift.u - lift.d2u)
    whole = _whole_space_modal(grid, lam, ftilde)
    H = _modal(data.h)
    dH = _data_derivative(data.h, data.dN_h, 1)
    hb, dhb = _reduce_modal(bc, grid, H, dH, lift, whole)
    if corrector == "direct":
        corr = _direct_modal(bc, grid, lam, hb[:, 0])
    else:
        corr = _volevich_modal(bc, grid, lam, hb, dhb)
    total = lift + whole + corr
    fld = lambda a: _to_field(grid, a)
    parts = SolutionParts(fld(lift.u), fld(whole.u), fld(whole.pi[None]), fld(corr.u),
                          fld(corr.pi[None]))
    return Solution(fld(total.u), fld(total.pi[None]), parts, total,
                    {"v_lift": lift, "v_whole": whole, "w_boundary": corr})


# ---------------------------------------------------------------------------
# residuals and estimates

@dataclass(frozen=True)
class Residual:
    pde: float
    div: float
    bc: float
    f_norm: float
    g_norm: float
    h_norm: float


def _boundary_norm(grid: Grid, T: np.ndarray, q: float) -> float:
    vals = np.fft.ifftn(T.reshape(T.shape[:1] + grid.lattice_shape), axes=tuple(range(1, grid.dim)))
    mag = np.sqrt(np.sum(np.abs(vals) ** 2, axis=0))
    return float((np.sum(mag ** q) * grid.cell_volume) ** (1.0 / q))


def _gradients(grid: Grid, part: Part):
    """Modal ``grad u`` ``(N, N, K, Z)`` indexed ``[d, comp]``, ``grad^2 u`` and ``grad pi``."""
    xi, _ = _modes(grid)
    N, n = grid.dim, grid.dim - 1
    ixi = 1j * xi[:, None, None, :]
    gu = np.concatenate([ixi * part.u[None], part.du[None]])
    g2 = np.empty((N, N) + part.u.shape, dtype=complex)
    for a in range(N):
        for b in range(N):
            if a < n and b < n:
                g2[a, b] = -xi[a] * xi[b] * part.u
            elif a < n or b < n:
                c = a if a < n else b
                g2[a, b] = 1j * xi[c] * part.du
            else:
                g2[a, b] = part.d2u
    gp = np.concatenate([1j * xi[:, None, :] * part.pi[None], part.dpi[None]])
    return gu, g2, gp


def _norm_modal(grid: Grid, arr: np.ndarray, q: float) -> float:
    arr = arr.reshape((-1,) + arr.shape[-2:])
    return lq_norm(_to_field(grid, arr), q)


def residual(data: HalfSpaceData, sol: Solution, q: float = 2.0) -> Residual:
    """Norms of the PDE, divergence and boundary-condition residuals."""
    grid, lam, bc = data.grid, complex(data.lam), data.bc
    n = grid.dim - 1
    xi, A = _modes(grid)
    P = sol.modal
    F, G, H = _modal(data.f), _modal(data.g), _modal(data.h)
    lap = -A ** 2 * P.u + P.d2u
    _, _, gp = _gradients(grid, P)
    pde = lam * P.u - lap + gp - F
    div = np.sum(1j * xi[:, None, :] * P.u[:n], axis=0) + P.du[n] - G[0]
    u0, du0, p0, h0 = P.u[:, 0], P.du[:, 0], P.pi[0], H[:, 0]
    if bc.tag is BCTag.DIRICHLET:
        r = u0 - h0
    elif bc.tag is BCTag.NEUMANN:
        r = np.empty_like(u0)
        r[:n] = -(du0[:n] + 1j * xi * u0[n]) - h0[:n]
        r[n] = -(2 * du0[n] - p0) - h0[n]
    else:
        r = np.empty_like(u0)
        r[:n] = bc.alpha * u0[:n] - bc.beta * du0[:n] - h0[:n]
        r[n] = u0[n] - h0[n]
    return Residual(_norm_modal(grid, pde, q), _norm_modal(grid, div[None], q),
                    _boundary_norm(grid, r, q), lq_norm(data.f, q), lq_norm(data.g, q),
                    _boundary_norm(grid, h0, q))


def _combined(grid: Grid, pieces, q: float) -> float:
    arr = np.concatenate([p.reshape((-1,) + p.shape[-2:]) for p in pieces])
    return _norm_modal(grid, arr, q)


def lhs_norm(data: HalfSpaceData, sol: Solution, q: float = 2.0) -> float:
    """``||(|lam| u, |lam|^{1/2} grad u, grad^2 u, grad pi)||_q``."""
    grid, lam = data.grid, abs(complex(data.lam))
    gu, g2, gp = _gradients(grid, sol.modal)
    return _combined(grid, [lam * sol.modal.u, math.sqrt(lam) * gu, g2, gp], q)


def rhs_norm(data: HalfSpaceData, q: float = 2.0) -> float:
    """The boundary-condition-specific data bracket of the resolvent estimate."""
    grid, lam, bc = data.grid, abs(complex(data.lam)), data.bc
    n = grid.dim - 1
    xi, _ = _modes(grid)
    F, G, H = _modal(data.f), _modal(data.g), _modal(data.h)
    dG = _data_derivative(data.g, data.dN_g, 1)
    dH = _data_derivative(data.h, data.dN_h, 1)
    d2H = _data_derivative(data.h, data.dN2_h, 2)
    ixi = 1j * xi[:, None, None, :]

    def grad(U, dU):
        return np.concatenate([ixi * U[None], dU[None]])

    def hess(U, dU, d2U):
        return _gradients(grid, Part(U, dU, d2U, U[0], U[0]))[1]

    gradg = grad(G, dG)
    g_terms = [F, math.sqrt(lam) * G, gradg]
    sob = lam * neg_sobolev_surrogate(data.g, q) if np.any(G) else 0.0

    def riesz_term(k):
        dh = Field(grid, dH[k:k + 1].reshape((1,) + dH.shape[1:2] + grid.lattice_shape),
                   spectral=True)
        if not np.any(dh.values):
            return np.zeros_like(H[:1])
        return lam * _modal(riesz_tangential(dh))

    if bc.tag is BCTag.DIRICHLET:
        pieces = g_terms + [lam * H, hess(H, dH, d2H), riesz_term(n)]
        return _combined(grid, pieces, q) + sob
    if bc.tag is BCTag.NEUMANN:
        pieces = g_terms + [math.sqrt(lam) * H, grad(H, dH)]
        return _combined(grid, pieces, q) + sob
    t = slice(0, n)
    Hn, dHn, d2Hn = H[n:], dH[n:], d2H[n:]
    pieces = g_terms + [math.sqrt(lam) * H[t], grad(H[t], dH[t]), lam * Hn,
                        hess(Hn, dHn, d2Hn), riesz_term(n)]
    extra = bc.alpha / math.sqrt(lam) * _combined(grid, g_terms, q) if bc.alpha else 0.0
    return _combined(grid, pieces, q) + extra + sob


def estimate_ratio(data: HalfSpaceData, sol: Solution, q: float = 2.0) -> float:
    """LHS over RHS of the resolvent estimate for one solved problem.

    Raises
    ------
    DegenerateDataError
        If the right-hand side is below ``1e-14``.
    """
    rhs = rhs_norm(data, q)
    if rhs < 1e-14:
        raise DegenerateDataError("estimate ratio undefined: data bracket vanishes")
    return lhs_norm(data, sol, q) / rhs
