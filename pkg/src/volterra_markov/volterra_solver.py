"""Linear convolution Volterra equations of the second kind on a uniform grid.

The solver treats ``u = f + beta * (K * u)`` by splitting ``u = f + v``.  The
smooth remainder ``v`` vanishes at zero and is represented by its values at the
nodes, interpolated linearly between them.  The singular part ``f`` (often the
kernel itself) never needs to be interpolated when it is the kernel or a
constant, because ``K * K`` and ``K * 1`` are available in closed form or by
dedicated quadrature.  Convolution weights are exact kernel moments over each
panel (product integration), so weakly singular kernels keep first-order
accuracy or better.
"""

from __future__ import annotations

import csv
import functools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import DomainError, SolutionOverflowError, StepSizeError
from .kernels import Kernel

SINGULAR_DIAGONAL = 1e-12
SIGN_TOLERANCE = 1e-10

Forcing = Union[str, float, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_k = k h``, ``k = 0..N``, with ``h = T / N``."""

    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0.0:
            raise DomainError(f"grid horizon must be positive, got {self.T}")
        if int(self.N) != self.N or self.N < 1:
            raise DomainError(f"grid needs a positive integer step count, got {self.N}")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(self.N + 1)

    def index_of(self, t: float, atol: float = 1e-9) -> int:
        """Index of the node at time ``t``; raises if ``t`` is not a node."""
        k = round(t / self.h)
        if not 0 <= k <= self.N or abs(k * self.h - t) > atol * max(1.0, self.T):
            raise DomainError(f"time {t} is not a node of {self}")
        return int(k)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@functools.lru_cache(maxsize=64)
def _weights(kernel: Kernel, grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Panel moments and the combined product-integration weights ``W_0..W_{N-1}``."""
    M, L = kernel.panel_moments(grid.h, grid.N)
    W = np.empty(grid.N)
    W[0] = M[0] - L[0]
    W[1:] = L[:-1] + M[1:] - L[1:]
    return _readonly(M), _readonly(L), _readonly(W)


@dataclass(frozen=True)
class VolterraSolution:
    """Nodal solution of ``u = f + beta K * u``.

    Attributes
    ----------
    grid, beta :
        Problem data.
    values : ndarray
        ``u(t_k)`` for ``k = 1..N``.
    remainder : ndarray
        Nodal values ``v_0..v_N`` of the interpolated part ``v = u - f``.
    residual : float
        Max residual of the discrete equations, recomputed independently.
    """

    kernel: Kernel
    beta: float
    grid: Grid
    forcing: Forcing = field(repr=False)
    values: np.ndarray = field(repr=False)
    remainder: np.ndarray = field(repr=False)
    residual: float
    forcing_scale: float = 1.0

    def cumulative_integral(self, rate: float = 0.0) -> np.ndarray:
        """``int_0^{t_k} exp(rate s) u(s) ds`` for ``k = 0..N``."""
        g = self.grid
        t = g.nodes
        e = np.exp(rate * t)
        ev = e * self.remainder
        part_v = np.concatenate([[0.0], np.cumsum(0.5 * g.h * (ev[:-1] + ev[1:]))])
        f = self.forcing
        if isinstance(f, str):  # the kernel itself: weight the panel moments
            M, L, _ = _weights(self.kernel, g)
            panel = e[:-1] * (M - L) + e[1:] * L
            part_f = self.forcing_scale * np.concatenate([[0.0], np.cumsum(panel)])
        elif callable(f):
            fv = _forcing_nodes(f, g) * e
            part_f = np.concatenate([[0.0], np.cumsum(0.5 * g.h * (fv[:-1] + fv[1:]))])
        else:
            c = float(f)
            part_f = c * t if rate == 0.0 else c * np.expm1(rate * t) / rate
        return part_f + part_v


def _forcing_nodes(f: Callable, grid: Grid) -> np.ndarray:
    t = grid.nodes
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.asarray(f(t), dtype=float)
    vals = np.broadcast_to(vals, t.shape).copy()
    if not np.isfinite(vals[0]):
        vals[0] = vals[1]
    if not np.all(np.isfinite(vals[1:])):
        raise DomainError("forcing is not finite on (0, T]")
    return vals


def solve_linear_volterra(kernel: Kernel, beta: float, forcing: Forcing, grid: Grid) -> VolterraSolution:
    """Solve ``u = f + beta * (K * u)`` on ``grid`` by product integration.

    Parameters
    ----------
    kernel : Kernel
    beta : float
    forcing : {"kernel"} or float or callable
        ``"kernel"`` means ``f = K`` (the resolvent equation); a number means a
        constant forcing; a callable is evaluated at the nodes and interpolated
        linearly (its value at zero is replaced by the first node value when it
        is not finite).
    grid : Grid

    Raises
    ------
    StepSizeError
        If the diagonal coefficient ``1 - beta W_0`` is nearly zero or negative.
    SolutionOverflowError
        If the solution grows beyond the floating-point range on the grid.
    """
    beta = float(beta)
    N, h = grid.N, grid.h
    M, L, W = _weights(kernel, grid)
    t = grid.nodes

    # g_k = beta (K * f)(t_k)
    if isinstance(forcing, str):
        if forcing != "kernel":
            raise DomainError(f"unknown forcing {forcing!r}")
        kf = np.concatenate([[0.0], np.atleast_1d(kernel.autoconv(t[1:]))])
        f_nodes = None
    elif callable(forcing):
        fn = _forcing_nodes(forcing, grid)
        w_ext = np.append(W, 0.0)
        kf = np.convolve(w_ext, fn)[: N + 1]
        # the oldest node f_0 only sees the local moment L_k of the last panel
        kf[1:] += (L - w_ext[1:]) * fn[0]
        kf[0] = 0.0
        f_nodes = fn
    else:
        kf = float(forcing) * np.concatenate([[0.0], np.cumsum(M)])
        f_nodes = None
    g = beta * kf

    diag = 1.0 - beta * W[0]
    # a nonpositive diagonal makes forward substitution flip sign at every step
    if diag < SINGULAR_DIAGONAL:
        raise StepSizeError(f"diagonal 1 - beta W_0 = {diag:.3e} is not positive; refine the grid")
    v = np.zeros(N + 1)
    if beta == 0.0:
        v[1:] = g[1:]
    else:
        with np.errstate(over="ignore", invalid="ignore"):
            for k in range(1, N + 1):
                v[k] = (g[k] + beta * np.dot(W[1:k], v[k - 1 : 0 : -1])) / diag
    if not np.all(np.isfinite(v)):
        first = int(np.argmin(np.isfinite(v)))
        raise SolutionOverflowError(f"solution overflows at t = {t[first]:.6g}; shorten the horizon")

    conv = np.convolve(W, v)[: N + 1]
    residual = float(np.max(np.abs(v[1:] - g[1:] - beta * conv[1:]), initial=0.0))

    if isinstance(forcing, str):
        f_vals = np.atleast_1d(kernel(t[1:]))
    elif f_nodes is not None:
        f_vals = f_nodes[1:]
    else:
        f_vals = np.full(N, float(forcing))
    return VolterraSolution(
        kernel=kernel,
        beta=beta,
        grid=grid,
        forcing=forcing,
        values=_readonly(f_vals + v[1:]),
        remainder=_readonly(v),
        residual=residual,
    )


@dataclass(frozen=True)
class ResolventTable:
    """Resolvent quantities on a grid.

    ``EK`` and ``RK`` hold nodes ``1..N``; ``E1``, ``E1bar`` and ``IK``
    (``int_0^t E_K``) hold nodes ``0..N``.
    """

    grid: Grid
    beta: float
    lam: float
    EK: np.ndarray = field(repr=False)
    RK: np.ndarray = field(repr=False)
    E1: np.ndarray = field(repr=False)
    E1bar: np.ndarray = field(repr=False)
    IK: np.ndarray = field(repr=False)
    residual: float

    def at(self, name: str, t: float) -> float:
        """Linear interpolation of a column at time ``t`` within the grid."""
        if not 0.0 <= t <= self.grid.T * (1 + 1e-12):
            raise DomainError(f"t = {t} outside [0, {self.grid.T}]")
        nodes = self.grid.nodes
        col = getattr(self, name)
        if len(col) == self.grid.N:
            if t < nodes[1]:
                raise DomainError(f"{name} is not tabulated on (0, h)")
            return float(np.interp(t, nodes[1:], col))
        return float(np.interp(t, nodes, col))

    def to_csv(self, path) -> None:
        t = self.grid.nodes
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "EK", "RK", "E1", "E1bar"])
            for k in range(len(t)):
                ek = "" if k == 0 else "%.17g" % self.EK[k - 1]
                rk = "" if k == 0 else "%.17g" % self.RK[k - 1]
                w.writerow(["%.17g" % t[k], ek, rk, "%.17g" % self.E1[k], "%.17g" % self.E1bar[k]])


@functools.lru_cache(maxsize=128)
def resolvent_table(kernel: Kernel, beta: float, lam: float, grid: Grid) -> ResolventTable:
    """``E_K``, ``R_K = -beta E_K``, ``E1^lam`` and ``exp(-lam t) E1^lam`` on ``grid``."""
    beta, lam = float(beta), float(lam)
    sol = solve_linear_volterra(kernel, beta, "kernel", grid)
    EK = np.array(sol.values)
    E1 = 1.0 + beta * sol.cumulative_integral(lam)
    return ResolventTable(
        grid=grid,
        beta=beta,
        lam=lam,
        EK=_readonly(EK),
        RK=_readonly(-beta * EK),
        E1=_readonly(E1),
        E1bar=_readonly(np.exp(-lam * grid.nodes) * E1),
        IK=_readonly(np.array(sol.cumulative_integral(0.0))),
        residual=sol.residual,
    )


@functools.lru_cache(maxsize=64)
def resolvent_squared_kernel(kernel: Kernel, sigma0: float, grid: Grid) -> VolterraSolution:
    """Resolvent ``R`` of ``Kbar = -sigma0**2 K**2``, i.e. ``R = Kbar - Kbar * R``.

    Written as ``u = f + beta K2 * u`` with ``K2 = K**2``, ``beta = sigma0**2``
    and ``f = -sigma0**2 K2``; by linearity the solution is ``-sigma0**2`` times
    the resolvent-equation solution for ``K2``.  The returned solution's
    ``values`` are ``R(t_k)``, ``k = 1..N``, and ``cumulative_integral`` works
    as for any solution.  A warning is issued if ``R > 0`` anywhere beyond
    rounding, since the exact resolvent is nonpositive.
    """
    s2 = float(sigma0) ** 2
    k2 = kernel.squared()
    base = solve_linear_volterra(k2, s2, "kernel", grid)
    sol = VolterraSolution(
        kernel=k2,
        beta=s2,
        grid=grid,
        forcing="kernel",
        forcing_scale=-s2,
        values=_readonly(-s2 * np.array(base.values)),
        remainder=_readonly(-s2 * np.array(base.remainder)),
        residual=s2 * base.residual,
    )
    worst = float(np.max(sol.values, initial=0.0))
    if worst > SIGN_TOLERANCE * max(1.0, float(np.max(np.abs(sol.values), initial=0.0))):
        warnings.warn(f"resolvent of -sigma0^2 K^2 has positive values (max {worst:.3e})", RuntimeWarning)
    return sol


def picard_reference(kernel: Kernel, beta: float, grid: Grid, tol: float = 1e-12, max_iter: int = 500) -> np.ndarray:
    """Resolvent values by Picard iteration of the product-integration map.

    Used as an independent check of the forward substitution: iterates
    ``v <- g + beta W * v`` (a full convolution per sweep) until it stops moving.
    """
    M, L, W = _weights(kernel, grid)
    t = grid.nodes
    g = beta * np.concatenate([[0.0], np.atleast_1d(kernel.autoconv(t[1:]))])
    v = g.copy()
    for _ in range(max_iter):
        new = g + beta * np.convolve(W, v)[: grid.N + 1]
        new[0] = 0.0
        if np.max(np.abs(new - v)) <= tol * max(1.0, float(np.max(np.abs(new)))):
            return np.atleast_1d(kernel(t[1:])) + new[1:]
        v = new
    raise ArithmeticError("Picard iteration did not settle")
