"""Moment formulas for affine stochastic Volterra equations and their Markov defects.

The model is

    X_t = x exp(-lam t) + int_0^t K(t-s) (b0 + beta X_s) ds + int_0^t K(t-s) sigma(X_s) dB_s.

The first moment is ``exp(-lam T) E1(T) x + b0 int_0^T E_K`` where ``E_K`` is the
resolvent-type solution of ``E_K = K + beta K * E_K`` and
``E1(T) = 1 + beta int_0^T exp(lam s) E_K(s) ds``.  A time-homogeneous Markov
process would make the moment at ``T`` equal to the moment at ``T - t``
started from the moment at ``t``; the *defect* functionals below measure the
failure of that composition and vanish exactly for kernels ``c exp(-lam t)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .kernels import Fractional, Kernel
from .volterra_solver import Grid, _weights, resolvent_squared_kernel, resolvent_table, solve_linear_volterra

FIRST_MOMENT_TOL = 1e-6
SQRT_DEFECT_TOL = 1e-8
LINEAR_DEFECT_TOL = 1e-4

DEFAULT_T_VALUES = (0.5, 1.0, 2.0)
DEFAULT_T_FRACTIONS = tuple(k / 10 for k in range(1, 10))


# ---------------------------------------------------------------------------
# state spaces and diffusions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AllReals:
    kind = "all_reals"

    def contains(self, y: float) -> bool:
        return math.isfinite(y)

    def project(self, y):
        return y


@dataclass(frozen=True)
class NonnegativeReals:
    kind = "nonnegative_reals"

    def contains(self, y: float) -> bool:
        return y >= 0.0

    def project(self, y):
        return np.maximum(y, 0.0)


@dataclass(frozen=True)
class Interval:
    alpha1: float
    alpha2: float
    kind = "interval"

    def __post_init__(self):
        if not self.alpha1 < self.alpha2:
            raise DomainError(f"interval needs alpha1 < alpha2, got [{self.alpha1}, {self.alpha2}]")

    def contains(self, y: float) -> bool:
        return self.alpha1 <= y <= self.alpha2

    def project(self, y):
        return np.clip(y, self.alpha1, self.alpha2)


@dataclass(frozen=True)
class ConstantVol:
    """``sigma(x) = sigma0``."""

    sigma0: float
    kind = "constant"

    def sigma(self, y):
        return self.sigma0 * np.ones_like(np.asarray(y, dtype=float))


@dataclass(frozen=True)
class SqrtVol:
    """``sigma(x) = sigma0 sqrt(x)`` on the nonnegative half-line."""

    sigma0: float
    kind = "sqrt"

    def sigma(self, y):
        return self.sigma0 * np.sqrt(np.asarray(y, dtype=float))


@dataclass(frozen=True)
class LinearVol:
    """``sigma(x) = sigma0 x``."""

    sigma0: float
    kind = "linear"

    def sigma(self, y):
        return self.sigma0 * np.asarray(y, dtype=float)


@dataclass(frozen=True)
class Jacobi:
    """``sigma(x) = sigma0 sqrt((x - alpha1)(alpha2 - x))`` on ``[alpha1, alpha2]``."""

    alpha1: float
    alpha2: float
    sigma0: float = 1.0
    kind = "jacobi"

    def __post_init__(self):
        if not self.alpha1 < self.alpha2:
            raise DomainError(f"Jacobi diffusion needs alpha1 < alpha2, got {self.alpha1}, {self.alpha2}")

    def sigma(self, y):
        y = np.asarray(y, dtype=float)
        return self.sigma0 * np.sqrt((y - self.alpha1) * (self.alpha2 - y))


_DIFFUSIONS = {c.kind: c for c in (ConstantVol, SqrtVol, LinearVol, Jacobi)}
_STATE_SPACES = {c.kind: c for c in (AllReals, NonnegativeReals, Interval)}


def _default_state_space(diffusion):
    if isinstance(diffusion, SqrtVol):
        return NonnegativeReals()
    if isinstance(diffusion, Jacobi):
        return Interval(diffusion.alpha1, diffusion.alpha2)
    return AllReals()


@dataclass(frozen=True)
class ModelSpec:
    """An affine-drift SVE instance.

    Parameters
    ----------
    x : float
        Initial value; the initial curve is ``x exp(-lam t)``.
    lam : float
        Rate of the initial curve.
    b0, beta : float
        Drift ``b(y) = b0 + beta y``.
    diffusion : ConstantVol, SqrtVol, LinearVol or Jacobi
    state_space : AllReals, NonnegativeReals or Interval, optional
        Inferred from the diffusion when omitted.
    chi_b, chi_sigma : float
        Hoelder exponents of drift and diffusion.  Carried as metadata and for
        the exponent-corridor check only.
    """

    x: float
    lam: float = 0.0
    b0: float = 0.0
    beta: float = 0.0
    diffusion: object = field(default_factory=lambda: ConstantVol(0.0))
    state_space: object = None
    chi_b: float = 1.0
    chi_sigma: float = 1.0

    def __post_init__(self):
        if self.state_space is None:
            object.__setattr__(self, "state_space", _default_state_space(self.diffusion))
        for name in ("chi_b", "chi_sigma"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise DomainError(f"{name} must lie in (0, 1]")
        if isinstance(self.diffusion, SqrtVol):
            if not isinstance(self.state_space, NonnegativeReals):
                raise DomainError("square-root diffusion requires the nonnegative state space")
            if self.x < 0.0:
                raise DomainError(f"square-root diffusion requires x >= 0, got {self.x}")
        if isinstance(self.diffusion, Jacobi):
            d = self.diffusion
            if not d.alpha1 <= self.x <= d.alpha2:
                raise DomainError(f"Jacobi model requires x in [{d.alpha1}, {d.alpha2}], got {self.x}")
            if self.state_space != Interval(d.alpha1, d.alpha2):
                raise DomainError("Jacobi diffusion requires the matching interval state space")
        if not self.state_space.contains(self.x):
            raise DomainError(f"initial value {self.x} outside the state space")

    @property
    def sigma0(self) -> float:
        return self.diffusion.sigma0

    def drift(self, y):
        return self.b0 + self.beta * np.asarray(y, dtype=float)

    @property
    def drift_is_zero(self) -> bool:
        return self.b0 == 0.0 and self.beta == 0.0

    @property
    def markov_theorem_applicable(self) -> bool:
        """Whether the exponential-kernel characterisation through first moments applies.

        With both drift coefficients nonzero the state space must contain ``0``
        (when ``lam = 0``) or the drift root ``-b0/beta`` (when ``lam != 0``).
        """
        if self.b0 == 0.0 or self.beta == 0.0:
            return True
        point = 0.0 if self.lam == 0.0 else -self.b0 / self.beta
        return bool(self.state_space.contains(point))

    @classmethod
    def rough_cir(cls, kappa: float, theta: float, sigma: float, x0: float) -> ModelSpec:
        """Square-root model with drift ``kappa (theta - y)`` and ``lam = 0``."""
        return cls(x=x0, lam=0.0, b0=kappa * theta, beta=-kappa, diffusion=SqrtVol(sigma))

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("diffusion", "state_space")}
        d["diffusion"] = {"kind": self.diffusion.kind, **asdict(self.diffusion)}
        d["state_space"] = {"kind": self.state_space.kind, **asdict(self.state_space)}
        return d

    @classmethod
    def from_dict(cls, cfg: dict) -> ModelSpec:
        allowed = {"x", "lam", "b0", "beta", "diffusion", "state_space", "chi_b", "chi_sigma"}
        extra = set(cfg) - allowed
        if extra:
            raise ConfigError(f"unknown model keys: {sorted(extra)}")
        if "x" not in cfg:
            raise ConfigError("model config needs 'x'")
        kw = dict(cfg)
        kw["diffusion"] = _build(kw.get("diffusion", {"kind": "constant", "sigma0": 0.0}), _DIFFUSIONS, "diffusion")
        if kw.get("state_space") is not None:
            kw["state_space"] = _build(kw["state_space"], _STATE_SPACES, "state_space")
        return cls(**kw)


def _build(cfg, registry, what):
    if not isinstance(cfg, dict) or cfg.get("kind") not in registry:
        raise ConfigError(f"{what} needs a 'kind' among {sorted(registry)}")
    cls = registry[cfg["kind"]]
    try:
        return cls(**{k: v for k, v in cfg.items() if k != "kind"})
    except TypeError as exc:
        raise ConfigError(f"bad {what} parameters: {exc}") from None


def rough_cir_kernel(H: float) -> Fractional:
    """Riemann-Liouville kernel ``t**(H-1/2) / Gamma(H+1/2)``."""
    return Fractional(H, 1.0 / math.gamma(H + 0.5))


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DefectReport:
    t: float
    T: float
    defect: float
    tolerance: float
    kernel_id: str = ""
    lam: float = 0.0
    b0: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.t < self.T:
            raise DomainError(f"defect needs 0 <= t < T, got t={self.t}, T={self.T}")

    @property
    def verdict(self) -> str:
        return "consistent" if abs(self.defect) <= self.tolerance else "violated"

    @property
    def consistent(self) -> bool:
        return self.verdict == "consistent"


def write_defect_csv(reports: Iterable[DefectReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kernel", "lambda", "b0", "beta", "t", "T", "defect", "verdict"])
        for r in reports:
            w.writerow(
                [r.kernel_id]
                + ["%.17g" % v for v in (r.lam, r.b0, r.beta, r.t, r.T, r.defect)]
                + [r.verdict]
            )


def _check_times(t: float, T: float, grid: Grid | None = None) -> None:
    if not 0.0 <= t < T:
        raise DomainError(f"need 0 <= t < T, got t={t}, T={T}")
    if grid is not None and T > grid.T * (1 + 1e-12):
        raise DomainError(f"T = {T} exceeds the grid horizon {grid.T}")


# ---------------------------------------------------------------------------
# first moment
# ---------------------------------------------------------------------------


def _mean_parts(model: ModelSpec, kernel: Kernel, grid: Grid):
    return resolvent_table(kernel, float(model.beta), float(model.lam), grid)


def first_moment(model: ModelSpec, kernel: Kernel, T: float, grid: Grid) -> float:
    """``E_x[X_T] = exp(-lam T) E1(T) x + b0 int_0^T E_K``."""
    if not 0.0 <= T <= grid.T * (1 + 1e-12):
        raise DomainError(f"T = {T} outside [0, {grid.T}]")
    tb = _mean_parts(model, kernel, grid)
    return tb.at("E1bar", T) * model.x + model.b0 * tb.at("IK", T)


def first_moment_curve(model: ModelSpec, kernel: Kernel, grid: Grid) -> np.ndarray:
    """First moment at every grid node."""
    tb = _mean_parts(model, kernel, grid)
    return tb.E1bar * model.x + model.b0 * tb.IK


def first_moment_flow_defect(
    model: ModelSpec, kernel: Kernel, t: float, T: float, grid: Grid, tol: float = FIRST_MOMENT_TOL
) -> DefectReport:
    """Direct first moment at ``T`` minus its composition through ``t``."""
    _check_times(t, T, grid)
    tb = _mean_parts(model, kernel, grid)
    E1b = lambda s: tb.at("E1bar", s)  # noqa: E731
    IK = lambda s: tb.at("IK", s)  # noqa: E731
    x, b0 = model.x, model.b0
    direct = E1b(T) * x + b0 * IK(T)
    composed = E1b(T - t) * (E1b(t) * x + b0 * IK(t)) + b0 * IK(T - t)
    return DefectReport(t, T, direct - composed, tol, kernel.label, model.lam, model.b0, model.beta)


# ---------------------------------------------------------------------------
# second moments
# ---------------------------------------------------------------------------


def _discounted_sq_integral(kernel: Kernel, lam: float, s: float) -> float:
    """``int_0^s exp(-lam (s - r)) K(r)**2 dr``."""
    if s == 0.0:
        return 0.0
    return math.exp(-lam * s) * kernel.squared().weighted_integral(0.0, s, lam)


def second_moment_sqrt(model: ModelSpec, kernel: Kernel, T: float) -> float:
    """``E_x[X_T^2] = x^2 exp(-2 lam T) + x sigma0^2 int_0^T exp(-lam (T-s)) K(s)^2 ds``.

    Valid for the square-root diffusion without drift.
    """
    if not isinstance(model.diffusion, SqrtVol):
        raise DomainError("second_moment_sqrt needs a square-root diffusion")
    if not model.drift_is_zero:
        raise DomainError("second_moment_sqrt assumes zero drift; use second_moment_sqrt_affine")
    if T < 0.0:
        raise DomainError("T must be nonnegative")
    x, lam = model.x, model.lam
    if x == 0.0:
        return 0.0
    return x * x * math.exp(-2.0 * lam * T) + x * model.sigma0**2 * _discounted_sq_integral(kernel, lam, T)


def second_moment_sqrt_affine(model: ModelSpec, kernel: Kernel, T: float, grid: Grid) -> float:
    """Second moment of the square-root model with affine drift.

    The centred process is ``int_0^t E_K(t-s) sigma0 sqrt(X_s) dB_s``, hence
    ``E[X_T^2] = m(T)^2 + sigma0^2 int_0^T E_K(T-s)^2 m(s) ds`` with ``m`` the
    first moment.  ``T`` must be a grid node.  The singular part ``K^2`` of
    ``E_K^2 = K^2 + 2 K v + v^2`` is integrated against exact kernel moments.
    """
    if not isinstance(model.diffusion, SqrtVol):
        raise DomainError("second_moment_sqrt_affine needs a square-root diffusion")
    n = grid.index_of(T)
    if n == 0:
        return model.x**2
    sol = solve_linear_volterra(kernel, float(model.beta), "kernel", grid)
    m = first_moment_curve(model, kernel, grid)
    mr = m[n::-1]  # m(T - r_k), k = 0..n
    v = np.asarray(sol.remainder)[: n + 1]
    M, L, _ = _weights(kernel, grid)
    M2, L2, _ = _weights(kernel.squared(), grid)
    M, L, M2, L2 = M[:n], L[:n], M2[:n], L2[:n]
    sq = np.sum((M2 - L2) * mr[:-1] + L2 * mr[1:])
    w = 2.0 * v * mr
    cross = np.sum((M - L) * w[:-1] + L * w[1:])
    q = v * v * mr
    smooth = np.sum(0.5 * grid.h * (q[:-1] + q[1:]))
    return float(m[n] ** 2 + model.sigma0**2 * (sq + cross + smooth))


def second_moment_sqrt_defect(
    kernel: Kernel, lam: float, t: float, T: float, tol: float = SQRT_DEFECT_TOL
) -> DefectReport:
    """Second-moment Markov defect of the driftless square-root model (per unit ``x sigma0^2``)."""
    _check_times(t, T)
    F = lambda s: _discounted_sq_integral(kernel, lam, s)  # noqa: E731
    shifted = 0.0 if T - t == 0.0 else math.exp(-lam * T) * kernel.squared().weighted_integral(0.0, T - t, lam)
    defect = F(T) - math.exp(-2.0 * lam * (T - t)) * F(t) - shifted
    return DefectReport(t, T, defect, tol, kernel.label, lam)


def _squared_resolvent_integral(kernel: Kernel, lam: float, sigma0: float, grid: Grid) -> np.ndarray:
    """``J(t_k) = int_0^{t_k} exp(2 lam s) R(s) ds`` for the resolvent ``R`` of ``-sigma0^2 K^2``."""
    return resolvent_squared_kernel(kernel, float(sigma0), grid).cumulative_integral(2.0 * lam)


def second_moment_linear(model: ModelSpec, kernel: Kernel, T: float, grid: Grid) -> float:
    """``E_x[X_T^2] = x^2 exp(-2 lam T) (1 - int_0^T exp(2 lam s) R(s) ds)``."""
    if not isinstance(model.diffusion, LinearVol):
        raise DomainError("second_moment_linear needs a linear diffusion")
    if not model.drift_is_zero:
        raise DomainError("second_moment_linear assumes zero drift")
    if not 0.0 <= T <= grid.T * (1 + 1e-12):
        raise DomainError(f"T = {T} outside [0, {grid.T}]")
    x = model.x
    if x == 0.0:
        return 0.0
    J = _squared_resolvent_integral(kernel, model.lam, model.sigma0, grid)
    return x * x * math.exp(-2.0 * model.lam * T) * (1.0 - float(np.interp(T, grid.nodes, J)))


def second_moment_linear_defect(
    kernel: Kernel, lam: float, sigma0: float, t: float, T: float, grid: Grid, tol: float = LINEAR_DEFECT_TOL
) -> DefectReport:
    """``int_{T-t}^T Rl - (int_0^t Rl)(1 - int_0^{T-t} Rl)`` with ``Rl = exp(2 lam s) R(s)``."""
    _check_times(t, T, grid)
    J = _squared_resolvent_integral(kernel, lam, sigma0, grid)
    G = lambda s: float(np.interp(s, grid.nodes, J))  # noqa: E731
    defect = (G(T) - G(T - t)) - G(t) * (1.0 - G(T - t))
    return DefectReport(t, T, defect, tol, kernel.label, lam)


# ---------------------------------------------------------------------------
# exponential fit and sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitReport:
    ok: bool
    max_deviation: float
    tolerance: float

    def __bool__(self) -> bool:
        return self.ok


def exponential_fit_test(kernel: Kernel, lam: float, grid: Grid, tol: float = 1e-6) -> FitReport:
    """Whether ``K(t) = K(t_1) exp(-lam (t - t_1))`` on every node ``t_1..t_N``."""
    t = grid.nodes[1:]
    K = np.atleast_1d(kernel(t))
    dev = float(np.max(np.abs(K - K[0] * np.exp(-lam * (t - t[0])))))
    return FitReport(dev <= tol, dev, tol)


def lattice(T_values: Sequence[float] = DEFAULT_T_VALUES, fractions: Sequence[float] = DEFAULT_T_FRACTIONS):
    """The ``(t, T)`` test pairs ``t = f T``."""
    return [(round(f * T, 12), float(T)) for T in T_values for f in fractions]


def defect_sweep(
    functional: str,
    kernel: Kernel,
    *,
    model: ModelSpec | None = None,
    lam: float = 0.0,
    sigma0: float = 1.0,
    pairs=None,
    grid: Grid | None = None,
    tol: float | None = None,
) -> list[DefectReport]:
    """Evaluate one defect functional over a ``(t, T)`` lattice.

    ``functional`` is ``"first"``, ``"sqrt"`` or ``"linear"``.  The first-moment
    functional takes ``lam`` from ``model``.
    """
    pairs = lattice() if pairs is None else pairs
    horizon = max(T for _, T in pairs)
    if grid is None:
        grid = Grid(horizon, int(round(2000 * horizon)))
    if functional == "first":
        if model is None:
            raise DomainError("the first-moment sweep needs a model")
        tol = FIRST_MOMENT_TOL if tol is None else tol
        return [first_moment_flow_defect(model, kernel, t, T, grid, tol) for t, T in pairs]
    if functional == "sqrt":
        tol = SQRT_DEFECT_TOL if tol is None else tol
        return [second_moment_sqrt_defect(kernel, lam, t, T, tol) for t, T in pairs]
    if functional == "linear":
        tol = LINEAR_DEFECT_TOL if tol is None else tol
        return [second_moment_linear_defect(kernel, lam, sigma0, t, T, grid, tol) for t, T in pairs]
    raise DomainError(f"unknown defect functional {functional!r}")
