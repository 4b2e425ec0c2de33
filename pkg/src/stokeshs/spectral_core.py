"""Elementary spectral quantities on complexified sector arguments.

Everything here is a pure function of its arguments.  Functions accept
scalars or numpy arrays and broadcast, so the same code path serves
single-point evaluation and vectorized sweeps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, DomainError

# Taylor cutoff for phi1; with 20 terms the tail is below 1e-16 on |z| < 0.5.
PHI1_SERIES_RADIUS = 0.5
PHI1_SERIES_TERMS = 20
_PHI1_COEFFS = np.array([1.0 / math.factorial(k + 1) for k in range(PHI1_SERIES_TERMS)])


@dataclass(frozen=True)
class SectorSpec:
    """Sampling description for lambda in the sector and xi in the double sector.

    Parameters
    ----------
    epsilon : float
        Opening defect of the resolvent sector, ``|arg lambda| < pi - epsilon``.
    eta : float
        Half opening of the double sector used for tangential frequencies.
    r_min, r_max : float
        Radial range of ``|lambda|``.
    a_min, a_max : float
        Radial range of ``|xi_j|``.
    n_radial, n_angular : int
        Samples per axis in modulus and in argument.
    margin : float
        Distance kept from the extreme lambda rays.  Zero samples the
        closed sector, where all constants extend by continuity.
    """

    epsilon: float
    eta: float
    r_min: float = 1e-3
    r_max: float = 1e3
    a_min: float = 1e-3
    a_max: float = 1e3
    n_radial: int = 7
    n_angular: int = 5
    margin: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.epsilon < math.pi / 2:
            raise ConfigError(f"epsilon must lie in (0, pi/2), got {self.epsilon}")
        if not 0.0 < self.eta < min(math.pi / 4, self.epsilon / 2):
            raise ConfigError(
                f"eta must lie in (0, min(pi/4, epsilon/2)), got {self.eta}")
        for lo, hi, name in ((self.r_min, self.r_max, "r"), (self.a_min, self.a_max, "a")):
            if not (0.0 < lo <= hi and math.isfinite(hi)):
                raise ConfigError(f"need 0 < {name}_min <= {name}_max, got {lo}, {hi}")
        if int(self.n_radial) < 1 or int(self.n_angular) < 1:
            raise ConfigError("n_radial and n_angular must be >= 1")
        if not 0.0 <= self.margin < math.pi - self.epsilon:
            raise ConfigError(f"margin out of range: {self.margin}")

    def refined(self, factor: int = 2) -> "SectorSpec":
        """Same sector with both sample counts multiplied by ``factor``."""
        return SectorSpec(self.epsilon, self.eta, self.r_min, self.r_max,
                          self.a_min, self.a_max, self.n_radial * factor,
                          self.n_angular * factor, self.margin)


@dataclass(frozen=True)
class SpectralPoint:
    """One (lambda, xi') sample, or a broadcast batch of them.

    ``xi`` has shape ``(N-1, *batch)``; ``lam``, ``A``, ``B`` and ``Atilde``
    have the batch shape.
    """

    lam: np.ndarray
    xi: np.ndarray
    A: np.ndarray
    B: np.ndarray
    Atilde: np.ndarray

    @property
    def dim(self) -> int:
        return self.xi.shape[0] + 1

    @property
    def BmA(self) -> np.ndarray:
        """``B - A`` computed as ``lam/(A + B)``, free of cancellation."""
        return self.lam / (self.A + self.B)

    @property
    def shape(self) -> tuple:
        return np.shape(self.B)

    def __getitem__(self, idx) -> "SpectralPoint":
        return SpectralPoint(self.lam[idx], self.xi[(slice(None),) + np.index_exp[idx]],
                             self.A[idx], self.B[idx], self.Atilde[idx])


class BCTag(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    ROBIN = "robin"


@dataclass(frozen=True)
class BCKind:
    """Boundary condition tag with Robin coefficients.

    ``alpha u_j - beta d_N u_j = h_j`` on tangential components; the pair
    (1, 0) is the Dirichlet end point.
    """

    tag: BCTag
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self) -> None:
        tag = self.tag if isinstance(self.tag, BCTag) else BCTag(str(self.tag).lower())
        object.__setattr__(self, "tag", tag)
        if self.tag is BCTag.ROBIN:
            if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
                raise ConfigError(
                    f"Robin needs alpha, beta >= 0 and alpha + beta > 0, got "
                    f"({self.alpha}, {self.beta})")

    @classmethod
    def dirichlet(cls) -> "BCKind":
        return cls(BCTag.DIRICHLET)

    @classmethod
    def neumann(cls) -> "BCKind":
        return cls(BCTag.NEUMANN)

    @classmethod
    def robin(cls, alpha: float, beta: float) -> "BCKind":
        return cls(BCTag.ROBIN, float(alpha), float(beta))

    @property
    def label(self) -> str:
        if self.tag is BCTag.ROBIN:
            return f"robin(alpha={self.alpha:g},beta={self.beta:g})"
        return self.tag.value


def make_point(lam, xi) -> SpectralPoint:
    """Build a spectral point with cached ``A``, ``B`` and ``Atilde``.

    Parameters
    ----------
    lam : complex or array_like
        Resolvent parameter.
    xi : sequence of complex, or array of shape (N-1, *batch)
        Tangential frequencies.

    Returns
    -------
    SpectralPoint
        ``A = sqrt(sum xi_j^2)`` and ``B = sqrt(lam + A^2)``, principal branches.

    Raises
    ------
    DomainError
        If ``B`` vanishes (``lam = -A^2``).
    """
    xi_arr = np.asarray(xi, dtype=complex)
    if xi_arr.ndim == 0:
        xi_arr = xi_arr[None]
    lam_arr = np.asarray(lam, dtype=complex)
    A2 = np.sum(xi_arr * xi_arr, axis=0)
    A = np.sqrt(A2)
    B = np.sqrt(lam_arr + A2)
    if np.any(B == 0):
        raise DomainError("B = sqrt(lambda + A^2) vanishes (lambda = -A^2)")
    if np.any(B.real <= 0):
        raise DomainError("Re B <= 0: lambda lies on the branch cut of sqrt(lambda + A^2)")
    Atilde = np.sqrt(np.sum(np.abs(xi_arr) ** 2, axis=0))
    lam_b, A, B, Atilde = np.broadcast_arrays(lam_arr, A, B, Atilde)
    xi_b = np.broadcast_to(xi_arr, (xi_arr.shape[0],) + B.shape)
    return SpectralPoint(lam_b, xi_b, A, B, Atilde)


def eval_phi1(z):
    """``phi1(z) = (e^z - 1)/z`` with a Taylor branch near the origin."""
    z = np.asarray(z, dtype=complex)
    out = np.empty_like(z)
    small = np.abs(z) < PHI1_SERIES_RADIUS
    zs = z[small]
    acc = np.full_like(zs, _PHI1_COEFFS[-1])
    for c in _PHI1_COEFFS[-2::-1]:
        acc = acc * zs + c
    out[small] = acc
    zl = z[~small]
    out[~small] = np.expm1(zl) / zl
    return out[()] if out.ndim == 0 else out


def _exp_M(A, B, x, BmA=None):
    """Return ``(e^{-Bx}, M)`` with ``M`` evaluated through phi1."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    x = np.asarray(x, dtype=float)
    E = np.exp(-B * x)
    if BmA is None:
        BmA = B - A
    z = -BmA * x
    with np.errstate(over="ignore", invalid="ignore"):
        M = -x * np.exp(-A * x) * eval_phi1(z)
    # e^{-Ax} and phi1 can over/underflow separately when Re z is huge
    bad = ~np.isfinite(M)
    if np.any(bad):
        Eb, Ab, Bb, xb = np.broadcast_arrays(E, A, B, x)
        M = np.array(M, copy=True)
        Db = np.broadcast_to(BmA, Eb.shape)
        M[bad] = (Eb[bad] - np.exp(-Ab[bad] * xb[bad])) / Db[bad]
    return E, M


def eval_M(point: SpectralPoint, xN):
    """Divided difference ``(e^{-B x} - e^{-A x})/(B - A)`` evaluated stably.

    Computed as ``-x e^{-A x} phi1(-(B - A) x)``, which stays accurate
    through ``B = A`` where the limit is ``-x e^{-A x}``.
    """
    xN = np.asarray(xN, dtype=float)
    if np.any(xN < 0):
        raise DomainError("xN must be nonnegative")
    return _exp_M(point.A, point.B, xN, point.BmA)[1]


def eval_D(point: SpectralPoint):
    """Neumann determinant ``B^3 + A B^2 + 3 A^2 B - A^3``."""
    A, B = point.A, point.B
    return ((B + A) * B + 3 * A * A) * B - A ** 3


def lambda_rays(spec: SectorSpec, rays_only: bool = False) -> np.ndarray:
    """Arguments of the lambda rays, symmetric and including the extremes."""
    top = math.pi - spec.epsilon - spec.margin
    if rays_only:
        return np.array([-top, top])
    if spec.n_angular == 1:
        return np.array([0.0])
    return np.linspace(-top, top, spec.n_angular)


def xi_rays(spec: SectorSpec, rays_only: bool = False) -> np.ndarray:
    """Arguments of the tangential-frequency rays on both sheets.

    The first ``ceil(n/2)`` rays fill ``[-eta, eta]``, the remaining ones the
    reflected sheet around ``pi``; ``n = 6`` gives ``{0, +-eta}`` and
    ``{pi, pi +- eta}``.
    """
    eta = spec.eta
    if rays_only:
        return np.array([-eta, eta, math.pi - eta, math.pi + eta])
    n = spec.n_angular
    if n == 1:
        return np.array([0.0])
    k1 = (n + 1) // 2
    k2 = n - k1

    def fan(k):
        return np.array([0.0]) if k == 1 else np.linspace(-eta, eta, k)

    return np.concatenate([fan(k1), math.pi + fan(k2)])


def sample_sector_arrays(spec: SectorSpec, dim: int = 2, rays_only: bool = False):
    """Cartesian sample grid as arrays ``(lam, xi)``.

    Returns
    -------
    lam : ndarray, shape (n,)
    xi : ndarray, shape (dim-1, n)
    """
    if dim < 2:
        raise ConfigError("dim must be >= 2")
    r = np.geomspace(spec.r_min, spec.r_max, spec.n_radial)
    a = np.geomspace(spec.a_min, spec.a_max, spec.n_radial)
    lam_axis = (r[:, None] * np.exp(1j * lambda_rays(spec, rays_only))[None, :]).ravel()
    xi_axis = (a[:, None] * np.exp(1j * xi_rays(spec, rays_only))[None, :]).ravel()
    axes = [lam_axis] + [xi_axis] * (dim - 1)
    mesh = np.meshgrid(*axes, indexing="ij")
    lam = mesh[0].ravel()
    xi = np.stack([m.ravel() for m in mesh[1:]])
    return lam, xi


def sample_sector(spec: SectorSpec, rays_only: bool = False, dim: int = 2) -> list[SpectralPoint]:
    """Deterministic sample set over the sector times the double sector."""
    lam, xi = sample_sector_arrays(spec, dim, rays_only)
    batch = make_point(lam, xi)
    return [batch[i] for i in range(lam.size)]


def sample_points(spec: SectorSpec, dim: int = 2, rays_only: bool = False) -> SpectralPoint:
    """Sample set as a single vectorized :class:`SpectralPoint`."""
    lam, xi = sample_sector_arrays(spec, dim, rays_only)
    return make_point(lam, xi)

