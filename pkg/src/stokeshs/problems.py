"""Built-in test problems: manufactured solutions and one-mode data families."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .fields import Field, Grid, lq_norm
from .solver import HalfSpaceData, solve_resolvent
from .spectral_core import BCKind

# stream function psi = a(x1) b(x2); a is 2 pi periodic, b decays
_A_SHIFT = 1.5


def _a(x):
    """``1 / (1.5 - cos x)`` and its first three derivatives."""
    D, s, c = _A_SHIFT - np.cos(x), np.sin(x), np.cos(x)
    return (1 / D, -s / D ** 2, -c / D ** 2 + 2 * s * s / D ** 3,
            s / D ** 2 + 6 * s * c / D ** 3 - 6 * s ** 3 / D ** 4)


def _b(x):
    """``e^{-x} cos x`` and its first three derivatives."""
    e, c, s = np.exp(-x), np.cos(x), np.sin(x)
    return e * c, -e * (c + s), 2 * e * s, 2 * e * (c - s)


def _coords(grid: Grid):
    x1, x2 = grid.coords()
    return x1 + 0 * x2, x2 + 0 * x1


def manufactured(grid: Grid, lam: complex):
    """Dirichlet problem in two dimensions with a known divergence-free solution.

    ``u = (a b', -a' b)`` is the curl of ``psi = a(x1) b(x2)`` and the
    pressure is ``(sin x1 + cos(2 x1) / 2) e^{-x2^2 / 2}``; the data are
    ``f = lam u - Lap u + grad pi``, ``g = 0`` and ``h = u``.

    Returns
    -------
    data : HalfSpaceData
    u_exact : Field
    """
    if grid.dim != 2:
        raise ValueError("the manufactured solution is two-dimensional")
    x1, x2 = _coords(grid)
    a, a1, a2, a3 = _a(x1)
    b, b1, b2, b3 = _b(x2)
    c, c1 = np.sin(x1) + 0.5 * np.cos(2 * x1), np.cos(x1) - np.sin(2 * x1)
    p = np.exp(-x2 ** 2 / 2)
    u = np.stack([a * b1, -a1 * b])
    f = np.stack([lam * a * b1 - a2 * b1 - a * b3 + c1 * p,
                  -lam * a1 * b + a3 * b + a1 * b2 - c * x2 * p])
    zero = np.zeros((1,) + x1.shape)
    data = HalfSpaceData(BCKind.dirichlet(), lam, Field(grid, f), Field(grid, zero), Field(grid, u))
    return data, Field(grid, u)


def mms_levels(n_levels: int = 4, x_max: float = 40.0):
    """Grids refined simultaneously in the tangential modes and normal panels."""
    out = []
    for k in range(n_levels):
        P = 4 * 2 ** k
        out.append(Grid(dim=2, modes=8 * 2 ** k, x_max=x_max, n_panels=P, nodes_per_panel=8,
                        ratio=1.5 ** (16 / P)))
    return out


def mms_error(grid: Grid, lam: complex) -> float:
    """Relative L2 error of the solver on the manufactured problem."""
    data, u = manufactured(grid, lam)
    return lq_norm(solve_resolvent(data).u - u) / lq_norm(u)


def one_mode_data(grid: Grid, bc: BCKind, lam: complex, parts: str = "fgh") -> HalfSpaceData:
    """Data concentrated on the tangential mode ``e^{i x1}``.

    ``parts`` selects which of ``f``, ``g`` and ``h`` are nonzero.
    """
    c = grid.coords()
    x1, xN = c[0], c[-1]
    e = np.exp(1j * x1) + 0 * xN
    N = grid.dim
    shape = (N,) + e.shape
    bump = e * np.exp(-(xN - 1) ** 2)
    f = np.stack([bump] * N) if "f" in parts else np.zeros(shape)
    g = (e * xN ** 2 * np.exp(-xN))[None] if "g" in parts else np.zeros((1,) + e.shape)
    if "h" in parts:
        h = np.stack([e * np.exp(-xN)] * (N - 1) + [e * xN * np.exp(-xN)])
    else:
        h = np.zeros(shape)
    return HalfSpaceData(bc, lam, Field(grid, f), Field(grid, g), Field(grid, h))


def g_bump(grid: Grid, lam: complex = 1.0, bc: Optional[BCKind] = None) -> HalfSpaceData:
    """Divergence-only problem: ``g = psi(x_N) e^{i x1}``, ``f = h = 0``."""
    c = grid.coords()
    x1, xN = c[0], c[-1]
    g = (np.exp(1j * x1) * np.exp(-(xN - 2) ** 2))[None]
    zero = Field(grid, np.zeros((grid.dim,) + g.shape[1:]))
    return HalfSpaceData(bc or BCKind.dirichlet(), lam, zero, Field(grid, g), zero)


def trace_profile(grid: Grid) -> Field:
    """``h = trace(x') e^{-x_N}`` with a few low tangential modes."""
    c = grid.coords()
    x1, xN = c[0], c[-1]
    N = grid.dim
    tr = [np.cos(x1) + 0.3 * np.sin(2 * x1)] * (N - 1) + [0.5 * np.sin(x1) + np.cos(3 * x1)]
    return Field(grid, np.stack([t * np.exp(-xN) for t in tr]))
