"""Closed-form boundary-corrector symbols for the half-space Stokes resolvent.

Each velocity symbol has the shape ``cE e^{-B x} + cM M(x)`` and each
pressure symbol the shape ``cX e^{-A x}``.  Normal derivatives follow from
``d M = -e^{-Bx} - A M``, so every derivative is analytic.

Index convention: components ``0..N-2`` are tangential, ``N-1`` is normal.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ZeroModeError
from .spectral_core import BCKind, BCTag, SpectralPoint, _exp_M, eval_D


@dataclass(frozen=True)
class SymbolMatrix:
    """Velocity matrix ``phi[j, k]`` and pressure vector ``chi[k]`` with derivatives."""

    phi: np.ndarray
    chi: np.ndarray
    dN_phi: np.ndarray
    dN2_phi: np.ndarray
    dN_chi: np.ndarray
    point: SpectralPoint
    xN: np.ndarray


@dataclass(frozen=True)
class SymbolCoefficients:
    cE: np.ndarray  # (N, N, *batch) coefficient of e^{-Bx}
    cM: np.ndarray  # (N, N, *batch) coefficient of M
    cX: np.ndarray  # (N, *batch) coefficient of e^{-Ax}


def _safe_inv(A, zero_mode: str):
    zero = A == 0
    if np.any(zero) and zero_mode == "raise":
        raise ZeroModeError("A = 0: 1/A-singular symbol entries are undefined")
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, A))
    return inv


def symbol_coefficients(bc: BCKind, point: SpectralPoint, zero_mode: str = "policy") -> SymbolCoefficients:
    """Coefficients of ``e^{-Bx}``, ``M`` and ``e^{-Ax}`` in every symbol.

    ``zero_mode="policy"`` sets entries carrying ``1/A`` to zero where
    ``A = 0``; ``"raise"`` rejects such points instead.
    """
    A, B, xi = point.A, point.B, point.xi
    N = point.dim
    n = N - 1
    batch = np.shape(B)
    cE = np.zeros((N, N) + batch, dtype=complex)
    cM = np.zeros((N, N) + batch, dtype=complex)
    cX = np.zeros((N,) + batch, dtype=complex)
    eye = np.eye(n).reshape((n, n) + (1,) * len(batch))
    xx = xi[:, None] * xi[None, :]
    ixi = 1j * xi

    BmA = point.BmA

    if bc.tag is BCTag.DIRICHLET:
        invA = _safe_inv(A, zero_mode)
        cE[:n, :n] = eye
        cM[:n, :n] = xx * invA
        cM[:n, n] = ixi * B * invA
        cM[n, :n] = ixi
        cE[n, n] = 1.0
        cM[n, n] = -B
        cX[:n] = -ixi * (A + B) * invA
        cX[n] = (A + B) * B * invA
    elif bc.tag is BCTag.NEUMANN:
        D = eval_D(point)
        invD = 1.0 / D
        cE[:n, :n] = eye / B - xx * (2 * B + BmA) * invD / B
        cM[:n, :n] = 2 * xx * B * invD
        cE[:n, n] = -ixi * BmA * invD
        cM[:n, n] = ixi * (A * A + B * B) * invD
        cE[n, :n] = ixi * BmA * invD
        cM[n, :n] = 2 * ixi * A * B * invD
        cE[n, n] = A * (A + B) * invD
        cM[n, n] = -A * (A * A + B * B) * invD
        cX[:n] = -2 * ixi * B * (A + B) * invD
        cX[n] = (A + B) * (A * A + B * B) * invD
    else:
        alpha, beta = bc.alpha, bc.beta
        invA = _safe_inv(A, zero_mode)
        a = alpha + beta * B
        d = alpha + beta * (A + B)
        cE[:n, :n] = eye / a - beta * xx / (a * d) * invA
        cM[:n, :n] = xx / d * invA
        cE[:n, n] = -beta * ixi * B / d * invA
        cM[:n, n] = ixi * B * a / d * invA
        cM[n, :n] = ixi / d
        cE[n, n] = 1.0
        cM[n, n] = -B * a / d
        cX[:n] = -ixi * (A + B) / d * invA
        cX[n] = (A + B) * B * a / d * invA
    return SymbolCoefficients(cE, cM, cX)


def _profile_derivs(cE, cM, A, B, E, M, orders):
    """Derivatives ``d^m (cE e^{-Bx} + cM M)`` for each m in ``orders``.

    ``d^m M = a_m e^{-Bx} + b_m M`` with ``a_{m+1} = -B a_m - b_m`` and
    ``b_{m+1} = -A b_m``.
    """
    out = {}
    a = np.zeros_like(B)
    b = np.ones_like(B)
    ePow = np.ones_like(B)
    for m in range(max(orders) + 1):
        if m in orders:
            out[m] = (cE * ePow + cM * a) * E + cM * b * M
        a, b = -B * a - b, -A * b
        ePow = -B * ePow
    return out


def _exp_derivs(cX, A, X, orders):
    return {m: cX * (-A) ** m * X for m in orders}


def _prepare(point: SpectralPoint, xN):
    xN = np.asarray(xN, dtype=float)
    if np.any(xN < 0):
        raise ValueError("xN must be nonnegative")
    shape = np.broadcast_shapes(point.shape, xN.shape)
    if shape != point.shape:
        point = SpectralPoint(*(np.broadcast_to(v, shape) for v in (point.lam,)),
                              np.broadcast_to(point.xi.reshape(point.xi.shape[:1] + (1,) * (len(shape) - len(point.shape)) + point.shape),
                                              point.xi.shape[:1] + shape),
                              *(np.broadcast_to(v, shape) for v in (point.A, point.B, point.Atilde)))
    xN = np.broadcast_to(xN, shape)
    E, M = _exp_M(point.A, point.B, xN, point.BmA)
    X = np.exp(-point.A * xN)
    return point, xN, E, M, X


def eval_symbols(bc: BCKind, point: SpectralPoint, xN, zero_mode: str = "policy") -> SymbolMatrix:
    """Evaluate ``phi``, ``chi`` and their analytic normal derivatives.

    Parameters
    ----------
    bc : BCKind
    point : SpectralPoint
        Scalar or batched point; the batch shape broadcasts against ``xN``.
    xN : float or ndarray
        Normal coordinate(s), nonnegative.
    zero_mode : {"policy", "raise"}
        Treatment of 1/A-singular entries at ``A = 0``.

    Returns
    -------
    SymbolMatrix
        Arrays of shape ``(N, N, *shape)`` and ``(N, *shape)``.
    """
    point, xN, E, M, X = _prepare(point, xN)
    co = symbol_coefficients(bc, point, zero_mode)
    dp = _profile_derivs(co.cE, co.cM, point.A, point.B, E, M, (0, 1, 2))
    dc = _exp_derivs(co.cX, point.A, X, (0, 1))
    return SymbolMatrix(dp[0], dc[0], dp[1], dp[2], dc[1], point, xN)


def symbol_derivatives(bc: BCKind, point: SpectralPoint, xN, orders=(0, 1, 2, 3),
                       zero_mode: str = "policy"):
    """Normal derivatives of ``phi`` and ``chi`` of the requested orders.

    Returns
    -------
    dphi, dchi : dict
        ``dphi[m]`` has shape ``(N, N, *shape)`` and ``dchi[m]`` ``(N, *shape)``.
    """
    point, xN, E, M, X = _prepare(point, xN)
    co = symbol_coefficients(bc, point, zero_mode)
    orders = tuple(orders)
    return (_profile_derivs(co.cE, co.cM, point.A, point.B, E, M, orders),
            _exp_derivs(co.cX, point.A, X, orders))


# ---------------------------------------------------------------------------
# decomposed families

@dataclass(frozen=True)
class DecomposedSymbol:
    """One member ``prefactor * d_N^order(base)`` of a decomposed family.

    ``value``, ``dN_value`` and ``dN2_value`` are the member and its first
    two normal derivatives.  ``m`` is the tangential index of ``i xi_m``
    kinds, ``row`` is ``None`` for pressure members.
    """

    kind: str
    role: str
    row: Optional[int]
    col: int
    m: Optional[int]
    data_slot: str
    value: np.ndarray
    dN_value: np.ndarray
    dN2_value: np.ndarray


# kind name -> (prefactor label, derivative order applied to the base symbol)
_U_KINDS = {
    "B^-2 dN phi": ("B^-2", 1),
    "lam^1/2 B^-2 phi": ("lam^1/2 B^-2", 0),
    "i xi_m B^-2 phi": ("i xi_m B^-2", 0),
    "lam^1/2 B^-2 dN phi": ("lam^1/2 B^-2", 1),
    "i xi_m B^-2 dN phi": ("i xi_m B^-2", 1),
    "phi": ("1", 0),
}
_SLOTS = {
    ("B^-2", 1): "(lam - Delta') h_k",
    ("lam^1/2 B^-2", 0): "lam^1/2 dN h_k",
    ("i xi_m B^-2", 0): "d_m dN h_k",
    ("lam^1/2 B^-2", 1): "lam^1/2 h_k",
    ("i xi_m B^-2", 1): "d_m h_k",
    ("1", 0): "dN h_k",
    ("A B^-2", 0): "lam |grad'|^-1 dN h_N",
}
EXCLUDED_KIND = "A B^-2 chi_N"

DIRICHLET_TYPE = ("B^-2 dN phi", "lam^1/2 B^-2 phi", "i xi_m B^-2 phi")
NEUMANN_TYPE = ("lam^1/2 B^-2 dN phi", "i xi_m B^-2 dN phi", "phi")


def _chi_kind(kind: str) -> str:
    return kind.replace("phi", "chi")


def family_layout(bc: BCKind, N: int):
    """Enumerate ``(role, kind, row, col, m)`` for a family without evaluating it."""
    n = N - 1
    rows = []

    def add(role, kind, j, k):
        pre, _ = _U_KINDS[kind]
        ms = range(n) if pre == "i xi_m B^-2" else [None]
        for m in ms:
            rows.append((role, kind if role == "u" else _chi_kind(kind), j, k, m))

    for k in range(N):
        if bc.tag is BCTag.DIRICHLET:
            u_kinds = pi_kinds = DIRICHLET_TYPE
        elif bc.tag is BCTag.NEUMANN:
            u_kinds = pi_kinds = NEUMANN_TYPE
        else:
            u_kinds = pi_kinds = DIRICHLET_TYPE if k == n else NEUMANN_TYPE
        for kind in u_kinds:
            for j in range(N):
                add("u", kind, j, k)
        for kind in pi_kinds:
            if k == n and bc.tag is not BCTag.NEUMANN and kind == "lam^1/2 B^-2 phi":
                rows.append(("pi", EXCLUDED_KIND, None, k, None))
                continue
            add("pi", kind, None, k)
    return rows


def decomposed_family(bc: BCKind, point: SpectralPoint, xN, zero_mode: str = "policy") -> list[DecomposedSymbol]:
    """All decomposed velocity and pressure members for ``bc``.

    Dirichlet members pair with second-order data slots, Neumann members
    with first-order ones; Robin uses the Neumann kinds on tangential
    columns and the Dirichlet kinds on the normal column.  Where the list
    omits ``lam^1/2 B^-2 chi_N`` the member ``A B^-2 chi_N`` takes its place.
    """
    point, xN, E, M, X = _prepare(point, xN)
    co = symbol_coefficients(bc, point, zero_mode)
    A, B, xi, lam = point.A, point.B, point.xi, point.lam
    dp = _profile_derivs(co.cE, co.cM, A, B, E, M, (0, 1, 2, 3))
    dc = _exp_derivs(co.cX, A, X, (0, 1, 2))
    invB2 = 1.0 / (B * B)
    sqlam = np.sqrt(lam)

    def prefactor(label, m):
        if label == "B^-2":
            return invB2
        if label == "lam^1/2 B^-2":
            return sqlam * invB2
        if label == "i xi_m B^-2":
            return 1j * xi[m] * invB2
        if label == "A B^-2":
            return A * invB2
        return np.ones_like(B)

    out = []
    for role, kind, j, k, m in family_layout(bc, point.dim):
        if kind == EXCLUDED_KIND:
            label, order = "A B^-2", 0
        else:
            label, order = _U_KINDS[kind.replace("chi", "phi")]
        pre = prefactor(label, m)
        if role == "u":
            vals = [pre * dp[order + r][j, k] for r in range(3)]
        else:
            vals = [pre * dc[order + r][k] for r in range(2)]
            vals.append(np.zeros_like(vals[0]))
        out.append(DecomposedSymbol(kind, role, j, k, m, _SLOTS[(label, order)], *vals))
    return out


# ---------------------------------------------------------------------------
# identity checks

def _gross_derivs(cE, cM, A, B, E, M, orders):
    """Sum of moduli of the summands in ``_profile_derivs``: the roundoff scale."""
    out = {}
    a = np.zeros_like(B)
    b = np.ones_like(B)
    aE, aM, aB = np.abs(E), np.abs(M), np.abs(B)
    for m in range(max(orders) + 1):
        if m in orders:
            out[m] = np.abs(cE) * aB ** m * aE + np.abs(cM) * (np.abs(a) * aE + np.abs(b) * aM)
        a, b = -B * a - b, -A * b
    return out


def identity_residuals(bc: BCKind, point: SpectralPoint, xN) -> dict:
    """Relative residuals of the ODE rows and the divergence row.

    Each residual is divided by the sum of moduli of the terms entering it,
    so the result measures loss of accuracy beyond roundoff.  Scales under
    1e-250 are clamped, since the exponentials there have underflowed.

    Returns
    -------
    dict
        ``"tangential"`` with shape ``(N-1, N, *shape)``, ``"normal"`` and
        ``"divergence"`` with shape ``(N, *shape)``.
    """
    point, xN, E, M, X = _prepare(point, xN)
    co = symbol_coefficients(bc, point)
    A, B, xi = point.A, point.B, point.xi
    n = point.dim - 1
    dp = _profile_derivs(co.cE, co.cM, A, B, E, M, (0, 1, 2))
    gp = _gross_derivs(co.cE, co.cM, A, B, E, M, (0, 1, 2))
    chi = co.cX * X
    dchi = -A * chi
    lamA = point.lam + A * A
    xi_ = xi[:, None]
    # below this scale the exponentials are in the subnormal range
    tiny = 1e-250
    tan = lamA * dp[0][:n] - dp[2][:n] + 1j * xi_ * chi[None]
    tan_s = np.abs(lamA) * gp[0][:n] + gp[2][:n] + np.abs(xi_ * chi[None])
    nor = lamA * dp[0][n] - dp[2][n] + dchi
    nor_s = np.abs(lamA) * gp[0][n] + gp[2][n] + np.abs(dchi)
    div = np.sum(1j * xi_ * dp[0][:n], axis=0) + dp[1][n]
    div_s = np.sum(np.abs(xi_) * gp[0][:n], axis=0) + gp[1][n]
    return {
        "tangential": np.abs(tan) / np.maximum(tan_s, tiny),
        "normal": np.abs(nor) / np.maximum(nor_s, tiny),
        "divergence": np.abs(div) / np.maximum(div_s, tiny),
    }


def boundary_operator(bc: BCKind, sm: SymbolMatrix) -> np.ndarray:
    """Apply the boundary operator of ``bc`` column-wise to a symbol matrix.

    At ``xN = 0`` the result is the identity pattern ``delta_{jk}``.
    """
    n = sm.phi.shape[0] - 1
    xi = sm.point.xi
    out = np.empty_like(sm.phi)
    if bc.tag is BCTag.DIRICHLET:
        out[:] = sm.phi
    elif bc.tag is BCTag.NEUMANN:
        out[:n] = -(sm.dN_phi[:n] + 1j * xi[:, None] * sm.phi[n][None])
        out[n] = -(2 * sm.dN_phi[n] - sm.chi)
    else:
        out[:n] = bc.alpha * sm.phi[:n] - bc.beta * sm.dN_phi[:n]
        out[n] = sm.phi[n]
    return out
