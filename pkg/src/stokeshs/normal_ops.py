"""Exact one-dimensional resolvents along the graded normal grid.

For ``Re kappa > 0`` the whole-line operator ``(kappa^2 - d^2)^{-1}`` acting
on the even or odd extension of half-line data ``f`` is

    u(x) = [L(x) + R(x) + s e^{-kappa x} R(0)] / (2 kappa),
    L(x) = int_0^x e^{-kappa (x - y)} f(y) dy,
    R(x) = int_x^X e^{-kappa (y - x)} f(y) dy,

with ``s = +1`` (even) or ``-1`` (odd).  On each panel ``f`` is replaced by
its Legendre interpolant and the exponential moments are computed exactly,
by Gauss quadrature when ``|kappa h/2|`` is small and by the three-term
Legendre recurrence otherwise.
"""
from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss, legvander

# below this |z| the moments are integrated by Gauss quadrature, above it
# the forward recurrence is stable (growth factor under (2k+1)/|z| per step)
_RECURRENCE_THRESHOLD = 20.0
_QUAD_POINTS = 64


class PanelMoments:
    """Exponential-weighted Legendre moments for one node count per panel."""

    def __init__(self, n: int):
        self.n = n
        tau, w = leggauss(n)
        self.tau = tau
        targets = np.append(tau, 1.0)
        self.targets = targets
        k = np.arange(n)
        # Lagrange basis ell_j expanded in P_k: c[k, j] = (2k+1)/2 w_j P_k(tau_j)
        self.coef = ((2 * k + 1) / 2)[:, None] * legvander(tau, n - 1).T * w[None, :]
        t, om = leggauss(_QUAD_POINTS)
        sig = -1 + (targets[:, None] + 1) * (t[None, :] + 1) / 2
        self.q_offset = targets[:, None] - sig
        self.q_weight = (targets[:, None] + 1) / 2 * om[None, :]
        self.q_leg = legvander(sig, n - 1)
        self.p_targets = legvander(targets, n)

    def moments(self, z: np.ndarray) -> np.ndarray:
        """``I[..., t, k] = int_{-1}^{tau_t} e^{-z(tau_t - s)} P_k(s) ds``."""
        z = np.asarray(z, dtype=complex)
        out = np.empty(z.shape + (self.n + 1, self.n), dtype=complex)
        small = np.abs(z) < _RECURRENCE_THRESHOLD
        if np.any(small):
            zs = z[small]
            E = np.exp(-zs[:, None, None] * self.q_offset[None]) * self.q_weight[None]
            out[small] = np.einsum("ztq,tqk->ztk", E, self.q_leg)
        if np.any(~small):
            zl = z[~small][:, None]
            T = self.targets[None, :]
            P = self.p_targets
            I = np.empty((zl.shape[0], self.n + 1, self.n), dtype=complex)
            I0 = -np.expm1(-zl * (T + 1)) / zl
            I[..., 0] = I0
            if self.n > 1:
                I[..., 1] = (T + np.exp(-zl * (T + 1))) / zl - I0 / zl
            for k in range(1, self.n - 1):
                I[..., k + 1] = I[..., k - 1] + (P[:, k + 1] - P[:, k - 1] - (2 * k + 1) * I[..., k]) / zl
            out[~small] = I
        return out

    def weights(self, z: np.ndarray):
        """Left-sweep node weights ``W[..., i, j]`` and panel weights ``w[..., j]``."""
        I = self.moments(z)
        W = I @ self.coef
        return W[..., : self.n, :], W[..., self.n, :]


_MOMENT_CACHE: dict[int, PanelMoments] = {}


def panel_moments(n: int) -> PanelMoments:
    if n not in _MOMENT_CACHE:
        _MOMENT_CACHE[n] = PanelMoments(n)
    return _MOMENT_CACHE[n]


def half_line_resolvent(grid, kappa, f, parity: int):
    """Apply ``(kappa^2 - d^2)^{-1}`` to the parity extension of ``f``.

    Parameters
    ----------
    grid : Grid
        Supplies panel edges and the normal nodes (node 0 first).
    kappa : ndarray, shape (Z,)
        Decay rates, ``Re kappa >= 0``.  At ``kappa = 0`` only the
        derivative is defined; ``u`` is returned as 0 there.
    f : ndarray, shape (..., K, Z)
        Samples at the normal nodes; the boundary node value is unused.
    parity : {+1, -1}
        Even or odd extension across ``x = 0``.

    Returns
    -------
    u, du : ndarray, shape (..., K, Z)
        Solution and its exact normal derivative; ``d^2 u = kappa^2 u - f``.
    """
    kappa = np.asarray(kappa, dtype=complex)
    f = np.asarray(f, dtype=complex)
    x = grid.normal_nodes
    edges = grid.panel_edges
    n = grid.nodes_per_panel
    pm = panel_moments(n)
    lead = f.shape[:-2]
    L = np.zeros(f.shape, dtype=complex)
    R = np.zeros(f.shape, dtype=complex)
    loc_R = []
    tot_R = []
    acc = np.zeros(lead + kappa.shape, dtype=complex)
    for p in range(len(edges) - 1):
        a, b = edges[p], edges[p + 1]
        h = b - a
        sl = slice(1 + p * n, 1 + (p + 1) * n)
        W, w = pm.weights(kappa * h / 2)
        fp = np.moveaxis(f[..., sl, :], -1, -2)[..., None]  # (..., Z, n, 1)
        Lloc = (h / 2) * (W @ fp)[..., 0]
        Ltot = (h / 2) * (w[..., None, :] @ fp)[..., 0, 0]
        Rloc = (h / 2) * (W[..., ::-1, ::-1] @ fp)[..., 0]
        Rtot = (h / 2) * (w[..., None, ::-1] @ fp)[..., 0, 0]
        decay = np.exp(-kappa[:, None] * (x[sl][None, :] - a))  # (Z, n)
        L[..., sl, :] = np.moveaxis(decay * acc[..., None] + Lloc, -1, -2)
        acc = np.exp(-kappa * h) * acc + Ltot
        loc_R.append((sl, a, b, Rloc))
        tot_R.append(Rtot)
    acc = np.zeros_like(acc)
    for (sl, a, b, Rloc), Rtot in zip(reversed(loc_R), reversed(tot_R)):
        decay = np.exp(-kappa[:, None] * (b - x[sl][None, :]))
        R[..., sl, :] = np.moveaxis(decay * acc[..., None] + Rloc, -1, -2)
        acc = np.exp(-kappa * (b - a)) * acc + Rtot
    R[..., 0, :] = acc
    R0 = acc[..., None, :]
    e = np.exp(-kappa[None, :] * x[:, None])
    s = float(parity)
    du = (-L + R - s * e * R0) / 2
    zero = kappa == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (L + R + s * e * R0) / (2 * np.where(zero, 1.0, kappa))
    u[..., zero] = 0.0
    return u, du


def half_line_integral(grid, f):
    """``int_0^X f dy`` along the last-but-one axis using the normal weights."""
    return np.tensordot(np.asarray(f), grid.normal_weights, axes=([-2], [0]))
