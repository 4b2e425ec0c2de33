"""Discretization layer: periodic tangential lattice times a graded normal grid.

Field values are stored as ``values[component, normal_node, *lattice]``.
The tangential transform follows numpy's convention, so a derivative
``d_j`` is multiplication by ``i xi_j`` with ``xi = 2 pi k / L``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import CompatibilityError, ConfigError, GridError, ParityError
from .normal_ops import half_line_resolvent

ZERO_MODE_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Tangential torus of period ``period`` with ``modes`` points per axis,
    times composite Gauss-Legendre panels on ``[0, x_max]`` plus the node 0.

    Panel widths grow geometrically with ``ratio``; explicit ``edges``
    override the geometric layout (used by :meth:`refine`).
    """

    dim: int = 2
    period: float = 2 * math.pi
    modes: int = 32
    x_max: float = 30.0
    n_panels: int = 16
    nodes_per_panel: int = 16
    ratio: float = 1.5
    edges: Optional[tuple] = None

    def __post_init__(self) -> None:
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if self.modes < 2 or self.modes % 2:
            raise ConfigError(f"modes must be even and >= 2, got {self.modes}")
        if not (self.period > 0 and self.x_max > 0):
            raise ConfigError("period and x_max must be positive")
        if self.n_panels < 1 or self.nodes_per_panel < 1 or self.ratio < 1:
            raise ConfigError("need n_panels >= 1, nodes_per_panel >= 1, ratio >= 1")
        if self.edges is not None:
            e = np.asarray(self.edges, dtype=float)
            if e[0] != 0 or np.any(np.diff(e) <= 0) or not math.isclose(e[-1], self.x_max):
                raise ConfigError("edges must increase from 0 to x_max")

    @classmethod
    def graded(cls, x_max: float = 30.0, finest: float = 1e-3, ratio: float = 1.5,
               nodes_per_panel: int = 16, **kw) -> "Grid":
        """Grid whose first panel is about ``finest * x_max`` wide."""
        p = max(1, round(math.log(1 + (ratio - 1) / finest) / math.log(ratio)))
        return cls(x_max=x_max, n_panels=p, nodes_per_panel=nodes_per_panel, ratio=ratio, **kw)

    # -- normal direction -------------------------------------------------
    @cached_property
    def panel_edges(self) -> np.ndarray:
        if self.edges is not None:
            return np.asarray(self.edges, dtype=float)
        r, p = self.ratio, self.n_panels
        w = r ** np.arange(p)
        e = np.concatenate([[0.0], np.cumsum(w)])
        return e / e[-1] * self.x_max

    @cached_property
    def _normal_rule(self):
        t, w = leggauss(self.nodes_per_panel)
        e = self.panel_edges
        a, b = e[:-1, None], e[1:, None]
        x = (a + (b - a) * (t[None, :] + 1) / 2).ravel()
        wt = ((b - a) / 2 * w[None, :]).ravel()
        return np.concatenate([[0.0], x]), np.concatenate([[0.0], wt])

    @property
    def normal_nodes(self) -> np.ndarray:
        return self._normal_rule[0]

    @property
    def normal_weights(self) -> np.ndarray:
        """Quadrature weights; the boundary node carries weight 0."""
        return self._normal_rule[1]

    @property
    def K(self) -> int:
        return 1 + (len(self.panel_edges) - 1) * self.nodes_per_panel

    def refine(self) -> "Grid":
        """Split every panel in two."""
        e = self.panel_edges
        mid = (e[:-1] + e[1:]) / 2
        new = np.sort(np.concatenate([e, mid]))
        return replace(self, edges=tuple(new), n_panels=len(new) - 1)

    def with_modes(self, modes: int) -> "Grid":
        return replace(self, modes=modes)

    # -- tangential lattice -------------------------------------------------
    @property
    def lattice_shape(self) -> tuple:
        return (self.modes,) * (self.dim - 1)

    @cached_property
    def xi(self) -> np.ndarray:
        """Tangential frequencies, shape ``(N-1, *lattice)``."""
        k = np.fft.fftfreq(self.modes, d=1.0 / self.modes) * (2 * math.pi / self.period)
        return np.stack(np.meshgrid(*([k] * (self.dim - 1)), indexing="ij"))

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(np.sum(self.xi ** 2, axis=0))

    @cached_property
    def tangential_coords(self) -> np.ndarray:
        """Lattice coordinates, shape ``(N-1, *lattice)``."""
        x = np.arange(self.modes) * (self.period / self.modes)
        return np.stack(np.meshgrid(*([x] * (self.dim - 1)), indexing="ij"))

    @property
    def cell_volume(self) -> float:
        return (self.period / self.modes) ** (self.dim - 1)

    def coords(self):
        """Broadcastable ``(x_tangential..., x_N)`` arrays of shape ``(K, *lattice)``."""
        xt = [c[None] for c in self.tangential_coords]
        xn = self.normal_nodes.reshape((-1,) + (1,) * (self.dim - 1))
        return xt + [xn]

    # -- serialization -------------------------------------------------------
    def to_json(self) -> str:
        d = {"dim": self.dim, "period": self.period, "modes": self.modes,
             "x_max": self.x_max, "n_panels": self.n_panels,
             "nodes_per_panel": self.nodes_per_panel, "ratio": self.ratio,
             "edges": None if self.edges is None else list(self.edges)}
        return json.dumps(d, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        d = dict(d)
        if d.get("edges") is not None:
            d["edges"] = tuple(float(v) for v in d["edges"])
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown grid keys: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "Grid":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Field:
    """Samples ``values[component, normal_node, *lattice]`` on a grid.

    ``spectral`` marks tangential mode space; ``mirrored`` marks the
    symmetric normal grid ``(-x_{K-1}, ..., 0, ..., x_{K-1})``.
    """

    grid: Grid
    values: np.ndarray
    spectral: bool = False
    mirrored: bool = False

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == self.grid.dim:
            v = v[None]
        K = 2 * self.grid.K - 1 if self.mirrored else self.grid.K
        if v.shape[1:] != (K,) + self.grid.lattice_shape:
            raise ConfigError(f"field shape {v.shape} does not match grid {(K,) + self.grid.lattice_shape}")
        object.__setattr__(self, "values", v)

    @property
    def components(self) -> int:
        return self.values.shape[0]

    def with_values(self, values, **kw) -> "Field":
        return replace(self, values=values, **kw)

    def __add__(self, other: "Field") -> "Field":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        return self.with_values(self.values - other.values)

    def __mul__(self, c) -> "Field":
        return self.with_values(self.values * c)

    __rmul__ = __mul__

    def component(self, i: int) -> "Field":
        return self.with_values(self.values[i:i + 1])


@dataclass(frozen=True)
class BoundaryField:
    """Values at ``x_N = 0``: ``values[component, *lattice]``."""

    grid: Grid
    values: np.ndarray
    spectral: bool = False

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == self.grid.dim - 1:
            v = v[None]
        if v.shape[1:] != self.grid.lattice_shape:
            raise ConfigError("boundary field shape does not match the lattice")
        object.__setattr__(self, "values", v)


def field_from_function(grid: Grid, func, components: int = 1) -> Field:
    """Sample ``func(*coords)`` returning an array (or list) per component."""
    vals = func(*grid.coords())
    vals = np.asarray(np.broadcast_arrays(*vals) if isinstance(vals, (list, tuple)) else vals,
                      dtype=complex)
    if components == 1 and vals.ndim == grid.dim:
        vals = vals[None]
    shape = (vals.shape[0], grid.K) + grid.lattice_shape
    return Field(grid, np.broadcast_to(vals, shape).copy())


def trace(field: Field) -> BoundaryField:
    idx = field.grid.K - 1 if field.mirrored else 0
    return BoundaryField(field.grid, field.values[:, idx], field.spectral)


# ---------------------------------------------------------------------------
# tangential transform

def _tangential_axes(grid: Grid) -> tuple:
    return tuple(range(-(grid.dim - 1), 0))


def fft_tangential(field: Field) -> Field:
    """Forward transform over the lattice axes, per normal slab."""
    if field.spectral:
        return field
    v = np.fft.fftn(field.values, axes=_tangential_axes(field.grid))
    return field.with_values(v, spectral=True)


def ifft_tangential(field: Field) -> Field:
    if not field.spectral:
        return field
    v = np.fft.ifftn(field.values, axes=_tangential_axes(field.grid))
    return field.with_values(v, spectral=False)


def _zero_index(grid: Grid) -> tuple:
    return (0,) * (grid.dim - 1)


def riesz_tangential(field: Field, deriv_first: bool = False, tol: float = ZERO_MODE_TOL) -> Field:
    """Multiply each tangential mode by ``|xi'|^{-1}`` (after ``d_N`` if asked).

    Raises
    ------
    CompatibilityError
        If the zero tangential mode carries more than ``tol`` of the norm.
    """
    was_spectral = field.spectral
    f = normal_derivative(field, 1) if deriv_first else field
    F = fft_tangential(f)
    v = F.values
    total = np.linalg.norm(v)
    zero = v[(slice(None), slice(None)) + _zero_index(field.grid)]
    if np.linalg.norm(zero) > tol * max(total, np.finfo(float).tiny) and np.linalg.norm(zero) > 0:
        raise CompatibilityError("zero tangential mode is not negligible; |xi'|^-1 undefined")
    a = field.grid.xi_abs
    inv = np.where(a == 0, 0.0, 1.0 / np.where(a == 0, 1.0, a))
    out = F.with_values(v * inv)
    return out if was_spectral else ifft_tangential(out)


# ---------------------------------------------------------------------------
# parity extension

def extend(field: Field, parity: str, tol: float = 1e-12) -> Field:
    """Mirror a half-grid field across ``x_N = 0`` with even or odd parity."""
    if field.mirrored:
        raise ConfigError("field is already on the symmetric grid")
    v = field.values
    if parity == "odd":
        scale = max(np.abs(v).max(), np.finfo(float).tiny)
        if np.abs(v[:, 0]).max() > tol * scale:
            raise ParityError("odd extension needs a vanishing trace")
        s = -1.0
    elif parity == "even":
        s = 1.0
    else:
        raise ConfigError(f"parity must be 'even' or 'odd', got {parity!r}")
    mirror = s * v[:, :0:-1]
    body = v.copy()
    if s < 0:
        body[:, 0] = 0.0
    return field.with_values(np.concatenate([mirror, body], axis=1), mirrored=True)


def restrict(field: Field) -> Field:
    """Drop the mirror half of a symmetric-grid field."""
    if not field.mirrored:
        return field
    K = field.grid.K
    return field.with_values(field.values[:, K - 1:], mirrored=False)


def split_parity(field: Field):
    """Even and odd parts of a symmetric-grid field, restricted to the half grid."""
    K = field.grid.K
    v = field.values
    up = v[:, K - 1:]
    down = v[:, K - 1::-1]
    even = field.with_values((up + down) / 2, mirrored=False)
    odd = field.with_values((up - down) / 2, mirrored=False)
    return even, odd


# ---------------------------------------------------------------------------
# normal derivative stencils

def _stencil_matrix(x: np.ndarray, order: int, width: int = 5) -> np.ndarray:
    K = len(x)
    D = np.zeros((K, K))
    half = width // 2
    for i in range(K):
        lo = min(max(i - half, 0), K - width)
        idx = np.arange(lo, lo + width)
        h = x[idx] - x[i]
        s = max(np.abs(h).max(), 1e-300)
        V = np.vander(h / s, width, increasing=True).T
        rhs = np.zeros(width)
        rhs[order] = math.factorial(order)
        D[i, idx] = np.linalg.solve(V, rhs) / s ** order
    return D


_STENCIL_CACHE: dict = {}


def stencil(x: np.ndarray, order: int) -> np.ndarray:
    key = (x.tobytes(), order)
    if key not in _STENCIL_CACHE:
        _STENCIL_CACHE[key] = _stencil_matrix(x, order)
    return _STENCIL_CACHE[key]


def normal_derivative(field: Field, order: int = 1) -> Field:
    """Local five-point polynomial derivative along the normal grid.

    One-sided stencils are used near ``x_N = 0`` and ``x_max``; polynomials
    of degree four are differentiated exactly.
    """
    if order not in (1, 2):
        raise ConfigError("order must be 1 or 2")
    grid = field.grid
    x = grid.normal_nodes
    if field.mirrored:
        x = np.concatenate([-x[:0:-1], x])
    if len(x) < 5:
        raise GridError("normal_derivative needs at least 5 normal nodes")
    D = stencil(x, order)
    v = np.einsum("ij,cj...->ci...", D, field.values)
    return field.with_values(v)


# ---------------------------------------------------------------------------
# norms

def _physical(field: Field) -> np.ndarray:
    return ifft_tangential(field).values


def lq_norm(field: Field, q: float = 2.0) -> float:
    """``(sum_nodes w_N * cell * |v|^q)^{1/q}`` with ``|v|`` the component norm."""
    if not q > 1:
        raise ConfigError("q must exceed 1")
    v = _physical(field)
    w = field.grid.normal_weights
    if field.mirrored:
        w = np.concatenate([w[:0:-1], w])
    mag = np.sqrt(np.sum(np.abs(v) ** 2, axis=0))
    wshape = (-1,) + (1,) * (field.grid.dim - 1)
    total = np.sum(w.reshape(wshape) * mag ** q) * field.grid.cell_volume
    return float(total ** (1.0 / q))


def combined_norm(fields: Sequence[Field], q: float = 2.0) -> float:
    """``(sum_i ||F_i||_q^q)^{1/q}`` for a list of fields."""
    return float(sum(lq_norm(f, q) ** q for f in fields) ** (1.0 / q))


def _full_space_check(grid: Grid, G: np.ndarray, tol: float, what: str) -> None:
    """Reject data whose full-space zero mode ``int g^e`` is not negligible."""
    zero = G[(slice(None), slice(None)) + _zero_index(grid)]
    mean = np.tensordot(zero, grid.normal_weights, axes=([1], [0]))
    ref = np.sqrt(np.sum(np.abs(G) ** 2 * grid.normal_weights.reshape((1, -1) + (1,) * (grid.dim - 1))))
    ref = ref * math.sqrt(grid.x_max)
    if np.abs(mean).max() > tol * max(ref, np.finfo(float).tiny) and np.abs(mean).max() > 0:
        raise CompatibilityError(f"{what}: full-space zero mode of the even extension is not negligible")


def _mode_rows(F: np.ndarray, grid: Grid):
    """Flatten lattice axes: ``(C, K, *lattice) -> (C, K, Z)``."""
    return F.reshape(F.shape[:2] + (-1,))


def neg_sobolev_surrogate(g: Field, q: float = 2.0, tol: float = ZERO_MODE_TOL,
                          method: str = "auto", step: float = 0.25) -> float:
    """Riesz-potential norm of ``F^{-1} |xi|^{-1} F g^e`` over the half space.

    The potential of the even extension is even, so its half-space norm is
    ``2^{-1/q}`` times the whole-space norm; at ``q = 2`` it equals the dual
    norm ``sup |(g, phi)| / ||grad phi||_2`` exactly.

    ``method="exact"`` (the ``"auto"`` choice at ``q = 2``) evaluates
    ``<g, (-Delta)^{-1} g^e>^{1/2}`` with the exact normal resolvent.
    ``method="balakrishnan"`` applies ``(-Delta)^{-1/2}`` through
    ``(2/pi) int e^s (e^{2s} - Delta)^{-1} ds`` with the trapezoid rule of
    width ``step`` on ``s in [-36, 36]``.

    Raises
    ------
    CompatibilityError
        If ``int_0^X g`` at the zero tangential mode is not negligible.
    """
    if not q > 1:
        raise ConfigError("q must exceed 1")
    if method == "auto":
        method = "exact" if q == 2 else "balakrishnan"
    if method == "exact" and q != 2:
        raise ConfigError("the exact form is only available at q = 2")
    grid = g.grid
    G = fft_tangential(g).values
    _full_space_check(grid, G, tol, "negative Sobolev norm")
    if not np.any(G):
        return 0.0
    Gm = _mode_rows(G, grid)
    A = grid.xi_abs.ravel()
    active = np.any(np.abs(Gm) > 0, axis=(0, 1))
    Ga = Gm[..., active]
    Aa = A[active]
    w = grid.normal_weights[None, :, None]
    if method == "exact":
        u, _ = half_line_resolvent(grid, Aa, Ga, +1)
        zero = Aa == 0
        # zero mode: <g, (-d^2)^{-1} g^e> = int |int_x^X g|^2 dx when int g = 0
        val0 = np.sum(np.abs(_tail_integral(grid, Ga[..., zero])) ** 2 * w) if np.any(zero) else 0.0
        inner = np.sum(np.conj(Ga[..., ~zero]) * u[..., ~zero] * w).real
        total = (inner + val0) * grid.cell_volume / grid.modes ** (grid.dim - 1)
        return float(math.sqrt(max(total, 0.0)))
    if method != "balakrishnan":
        raise ConfigError(f"unknown method {method!r}")
    acc = np.zeros_like(Ga)
    for s in np.arange(-36.0, 36.0 + step / 2, step):
        kappa = np.sqrt(np.exp(2 * s) + Aa ** 2)
        u, _ = half_line_resolvent(grid, kappa, Ga, +1)
        acc += np.exp(s) * u
    acc *= (2.0 / math.pi) * step
    full = np.zeros_like(Gm)
    full[..., active] = acc
    return lq_norm(g.with_values(full.reshape(G.shape), spectral=True), q)


def _tail_integral(grid: Grid, f: np.ndarray) -> np.ndarray:
    """``int_x^X f dy`` at every normal node via the exact moment rule."""
    kappa = np.zeros(f.shape[-1], dtype=complex)
    _, du = half_line_resolvent(grid, kappa, f, +1)
    # with kappa = 0 and even parity, du = -int_0^x f = int_x^X f - int_0^X f
    total = np.tensordot(f, grid.normal_weights, axes=([-2], [0]))
    return du + total[..., None, :]


# ---------------------------------------------------------------------------
# CSV / JSON

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def atomic_write(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def field_to_csv(field: Field) -> str:
    f = ifft_tangential(field)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    tang = [f"i{j + 1}" for j in range(f.grid.dim - 1)]
    w.writerow(["component", "iN"] + tang + ["re", "im"])
    v = f.values
    for idx in np.ndindex(*v.shape):
        z = v[idx]
        w.writerow([*idx, _fmt(z.real), _fmt(z.imag)])
    return buf.getvalue()


def field_from_csv(grid: Grid, text: str, mirrored: bool = False) -> Field:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    nt = grid.dim - 1
    expect = ["component", "iN"] + [f"i{j + 1}" for j in range(nt)] + ["re", "im"]
    if header != expect:
        raise ConfigError(f"unexpected field CSV header {header}")
    ncomp = 1 + max(int(r[0]) for r in body)
    K = 2 * grid.K - 1 if mirrored else grid.K
    v = np.zeros((ncomp, K) + grid.lattice_shape, dtype=complex)
    for r in body:
        idx = tuple(int(c) for c in r[: 2 + nt])
        v[idx] = complex(float(r[-2]), float(r[-1]))
    return Field(grid, v, mirrored=mirrored)


def save_field(path: str, field: Field) -> None:
    atomic_write(path, field_to_csv(field))
