"""Small-time rescaling of SVEs.

With ``lambda(n) = 1 / int_0^{1/n} K^2`` the rescaled process
``h_n(X_{t/n}) = sqrt(lambda(n)) (X_{t/n} - x0)`` converges in finite-dimensional
distributions to ``sigma(x0) int_0^t Kbar(t-s) dB_s``.  This module checks the
covariance limit that drives this convergence and compares simulated rescaled
paths against the Gaussian limit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError
from .gaussian_rl import rl_covariance
from .kernels import Constant, Fractional, Kernel, lambda_n
from .mc_sim import simulate_sve
from .quadrature import quad
from .volterra_solver import Grid

BIAS_ALLOWANCE = 0.05
N_BATCHES = 20
STEPS = 500


@dataclass(frozen=True)
class RescaleSpec:
    """The affine map ``h_n(y) = sqrt(lambda_n) (y - x0)``."""

    n: int
    x0: float
    lambda_n: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        if not self.lambda_n > 0.0:
            raise DomainError(f"lambda_n must be positive, got {self.lambda_n}")

    @classmethod
    def for_kernel(cls, kernel: Kernel, n: int, x0: float) -> RescaleSpec:
        return cls(int(n), float(x0), lambda_n(kernel, n))

    def rescale(self, y):
        out = math.sqrt(self.lambda_n) * (np.asarray(y, dtype=float) - self.x0)
        return float(out) if out.ndim == 0 else out

    def inverse(self, x):
        out = self.x0 + np.asarray(x, dtype=float) / math.sqrt(self.lambda_n)
        return float(out) if out.ndim == 0 else out


def rescale(spec: RescaleSpec, y):
    return spec.rescale(y)


def inverse_rescale(spec: RescaleSpec, x):
    return spec.inverse(x)


def limit_covariance(kbar: Kernel, s: float, t: float) -> float:
    """``int_0^s Kbar(t-s+r) Kbar(r) dr`` for the limiting kernels."""
    s, t = min(s, t), max(s, t)
    if isinstance(kbar, Constant):
        return kbar.c**2 * s
    if isinstance(kbar, Fractional):
        return kbar.scale**2 * rl_covariance(kbar.H, s, t)
    raise DomainError(f"no closed-form covariance for limiting kernel {kbar.label}")


def finite_n_covariance(kernel: Kernel, s: float, t: float, n: int) -> float:
    """``lambda(n) int_0^{s/n} K((t-s)/n + r) K(r) dr``, computed on the unit scale."""
    s, t = min(s, t), max(s, t)
    lam = lambda_n(kernel, n)
    if s == t:
        return lam * kernel.integrate_sq(s / n)
    alpha = kernel.singular_power
    value = quad(
        lambda u: kernel._scalar((t - s + u) / n) * kernel._scalar(u / n),
        0.0,
        s,
        alpha=alpha,
        what="finite-n covariance",
    )
    return lam * value / n


@dataclass(frozen=True)
class CovarianceLimitRow:
    n: int
    finite_n_value: float
    limit_value: float

    @property
    def gap(self) -> float:
        return abs(self.finite_n_value - self.limit_value)


def covariance_limit_check(kernel: Kernel, s: float, t: float, n_list: Sequence[int]) -> list[CovarianceLimitRow]:
    """Finite-``n`` rescaled covariances next to their limit."""
    if not 0.0 < s <= t:
        raise DomainError(f"need 0 < s <= t, got s={s}, t={t}")
    limit = limit_covariance(kernel.limit_kernel(), s, t)
    return [CovarianceLimitRow(int(n), finite_n_covariance(kernel, s, t, int(n)), limit) for n in n_list]


@dataclass(frozen=True)
class CLTRow:
    kind: str  # "mean" or "cov"
    s: float
    t: float
    empirical: float
    limit: float
    se: float
    bias_allowance: float

    @property
    def ok(self) -> bool:
        return abs(self.empirical - self.limit) <= self.bias_allowance * abs(self.limit) + 3.0 * self.se

    @property
    def verdict(self) -> str:
        return "consistent" if self.ok else "violated"


@dataclass(frozen=True)
class CLTReport:
    n: int
    n_paths: int
    rows: tuple

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    def row(self, kind: str, s: float, t: float) -> CLTRow:
        for r in self.rows:
            if r.kind == kind and math.isclose(r.s, s) and math.isclose(r.t, t):
                return r
        raise KeyError((kind, s, t))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["kind", "s", "t", "empirical", "limit", "se", "verdict"])
            for r in self.rows:
                w.writerow([r.kind] + ["%.17g" % v for v in (r.s, r.t, r.empirical, r.limit, r.se)] + [r.verdict])


def _batched(values: np.ndarray, stat, n_batches: int):
    full = stat(values)
    parts = np.array([stat(b) for b in np.array_split(values, n_batches)])
    se = parts.std(axis=0, ddof=1) / math.sqrt(n_batches)
    return full, se


def clt_empirical_check(
    model,
    kernel: Kernel,
    times: Sequence[float],
    n: int,
    n_paths: int,
    seed: int,
    *,
    steps: int = STEPS,
    n_batches: int = N_BATCHES,
    bias_allowance: float = BIAS_ALLOWANCE,
    threads: int = 1,
) -> CLTReport:
    """Simulate on ``[0, max(times)/n]`` and compare rescaled moments with the Gaussian limit.

    Standard errors come from ``n_batches`` batches; an entry passes when it is
    within ``bias_allowance`` (relative) plus three standard errors of the limit.
    """
    times = [float(t) for t in times]
    if not times or any(t <= 0.0 for t in times):
        raise DomainError("times must be positive")
    if model.lam != 0.0:
        raise DomainError("the small-time limit is checked for lam = 0 only")
    sig = float(model.diffusion.sigma(model.x))
    if sig == 0.0:
        raise DomainError("sigma(x0) must be nonzero")
    grid = Grid(max(times) / n, steps)
    idx = [grid.index_of(t / n) for t in times]
    ens = simulate_sve(model, kernel, grid, n_paths, seed, threads=threads)
    spec = RescaleSpec.for_kernel(kernel, n, model.x)
    Y = spec.rescale(ens.values[:, idx])
    kbar = kernel.limit_kernel()
    mean, mean_se = _batched(Y, lambda a: a.mean(axis=0), n_batches)
    cov, cov_se = _batched(Y, lambda a: np.atleast_2d(np.cov(a, rowvar=False)), n_batches)
    rows = []
    for i, t in enumerate(times):
        rows.append(CLTRow("mean", t, t, float(mean[i]), 0.0, float(mean_se[i]), bias_allowance))
    for i, s in enumerate(times):
        for j in range(i, len(times)):
            lim = sig**2 * limit_covariance(kbar, s, times[j])
            rows.append(CLTRow("cov", s, times[j], float(cov[i, j]), lim, float(cov_se[i, j]), bias_allowance))
    return CLTReport(int(n), int(n_paths), tuple(rows))
