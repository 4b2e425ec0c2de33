"""Homogeneous integral operators on the positive half-axis.

For a kernel homogeneous of degree -1, ``k(c t, c s) = k(t, s) / c``, the
operator ``[Tf](t) = int_0^inf k(t, s) f(s) ds`` is bounded on ``L_q(0, inf)``
with norm at most ``A_q = int_0^inf |k(1, s)| s^{-1/q} ds``.  All integrals
are taken in the variable ``u = log s``, which removes the endpoint
singularity at ``s = 0`` and turns the tail into an exponentially decaying
one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate

from .errors import ConfigError, ConvergenceError


def hilbert_kernel(t, s):
    """Default kernel ``(t + s)^{-1}``."""
    return 1.0 / (np.asarray(t, dtype=float) + np.asarray(s, dtype=float))


KERNELS: dict[str, Callable] = {"1/(t+s)": hilbert_kernel}


@dataclass(frozen=True)
class LogGrid:
    """Uniform grid in ``log s`` with trapezoid weights ``h s_i``.

    Parameters
    ----------
    s_min, s_max : float
        Range of the positive axis covered by the nodes.
    n : int
        Number of nodes.
    """

    s_min: float = 1e-16
    s_max: float = 1e16
    n: int = 3201

    def __post_init__(self) -> None:
        if not 0 < self.s_min < self.s_max or self.n < 3:
            raise ConfigError("log grid needs 0 < s_min < s_max and n >= 3")

    @property
    def log_step(self) -> float:
        return math.log(self.s_max / self.s_min) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.exp(np.linspace(math.log(self.s_min), math.log(self.s_max), self.n))

    @property
    def weights(self) -> np.ndarray:
        w = self.log_step * self.nodes
        w[0] *= 0.5
        w[-1] *= 0.5
        return w


@dataclass(frozen=True)
class KernelSpec:
    """Kernel, exponent and quadrature grid of one operator.

    ``kernel`` is either a key of ``KERNELS`` or a vectorized callable
    ``k(t, s)`` homogeneous of degree -1.
    """

    kernel: Union[str, Callable] = "1/(t+s)"
    q: float = 2.0
    grid: LogGrid = field(default_factory=LogGrid)

    def __post_init__(self) -> None:
        if not 1.0 < self.q < math.inf:
            raise ConfigError(f"q must lie in (1, inf), got {self.q}")
        if isinstance(self.kernel, str) and self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}")

    @property
    def k(self) -> Callable:
        return KERNELS[self.kernel] if isinstance(self.kernel, str) else self.kernel


def homogeneity_defect(spec: KernelSpec, t, s, c) -> np.ndarray:
    """Relative defect of ``k(c t, c s) = k(t, s) / c``."""
    k = spec.k
    ref = k(t, s) / c
    return np.abs(k(c * np.asarray(t), c * np.asarray(s)) - ref) / np.abs(ref)


def kernel_constant(spec: KernelSpec, rtol: float = 1e-12) -> float:
    """``A_q = int_0^inf |k(1, s)| s^{-1/q} ds`` by adaptive quadrature.

    Raises
    ------
    ConvergenceError
        If the quadrature does not reach the requested accuracy, which is
        how a divergent integral shows up.
    """
    k, a = spec.k, 1.0 - 1.0 / spec.q

    def integrand(u):
        return abs(k(1.0, math.exp(u))) * math.exp(a * u)

    def piece(lo, hi):
        val, err = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=rtol, limit=500)
        if not math.isfinite(val) or err > 10 * rtol * abs(val) + 1e-300:
            raise ConvergenceError(f"kernel integral not converged on [{lo}, {hi}]")
        return val

    # grow the window in u until both tails are negligible; u is capped where exp overflows
    total, lo, hi = piece(-8.0, 8.0), -8.0, 8.0
    while True:
        left, right = piece(2 * lo, lo), piece(hi, 2 * hi)
        total += left + right
        lo, hi = 2 * lo, 2 * hi
        if left + right <= rtol * total:
            return total
        if hi >= 512:
            raise ConvergenceError(f"kernel integral diverges (tail {left + right:.3g} at |u| = {hi})")


def apply_kernel(spec: KernelSpec, f: Union[np.ndarray, Callable],
                 t: Optional[np.ndarray] = None) -> np.ndarray:
    """Evaluate ``Tf`` at ``t`` (default: the grid nodes) by trapezoid in ``log s``.

    Parameters
    ----------
    f : ndarray or callable
        Samples at the grid nodes along the last axis, or a function of ``s``.
    t : ndarray, optional
        Evaluation points.
    """
    s = spec.grid.nodes
    fs = f(s) if callable(f) else np.asarray(f)
    if fs.ndim == 0 or fs.shape[-1] != s.size:
        raise ConfigError(f"f must have {s.size} samples along its last axis")
    t = s if t is None else np.asarray(t, dtype=float)
    return (fs * spec.grid.weights) @ spec.k(t[:, None], s[None, :]).T


def lq_norm(spec: KernelSpec, f: np.ndarray) -> float:
    """Discrete ``L_q(0, inf)`` norm on the kernel grid, along the last axis."""
    return np.sum(np.abs(f) ** spec.q * spec.grid.weights, axis=-1) ** (1.0 / spec.q)


def operator_ratio(spec: KernelSpec, f: np.ndarray):
    """``||Tf||_q / ||f||_q``."""
    return lq_norm(spec, apply_kernel(spec, f)) / lq_norm(spec, f)


def extremal_family(spec: KernelSpec, decades: float = 6.0) -> np.ndarray:
    """``s^{-1/q}`` cut off to ``[10^{-d/2}, 10^{d/2}]``; approaches the sharp ratio as ``d`` grows."""
    s = spec.grid.nodes
    half = 10.0 ** (decades / 2)
    return np.where((s >= 1 / half) & (s <= half), s ** (-1.0 / spec.q), 0.0)


def random_profiles(spec: KernelSpec, n: int, seed: int, bumps: int = 4) -> np.ndarray:
    """``n`` nonnegative sums of log-normal bumps that vanish at both grid ends."""
    rng = np.random.default_rng(seed)
    u = np.log(spec.grid.nodes)
    span = math.log(spec.grid.s_max) * 0.5
    mu = rng.uniform(-span, span, size=(n, bumps, 1))
    sig = rng.uniform(0.2, 2.0, size=(n, bumps, 1))
    amp = rng.uniform(0.0, 1.0, size=(n, bumps, 1))
    return np.sum(amp * np.exp(-0.5 * ((u - mu) / sig) ** 2), axis=1)
