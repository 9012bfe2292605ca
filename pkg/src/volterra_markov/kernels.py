"""Volterra kernels, their small-time data and the limiting kernel of the CLT.

Every kernel is an immutable value object.  Evaluation is vectorised over numpy
arrays; the integral operations take scalars unless stated otherwise.  Kernels
that behave like ``t**alpha`` near zero advertise ``alpha`` through
:attr:`Kernel.singular_power`, which the quadrature fallbacks use to remove the
singularity.

Kernel configs serialise to plain dictionaries with a ``kind`` discriminator::

    {"kind": "exponential", "c": 2.0, "rate": 0.5}
    {"kind": "fractional", "H": 0.25, "scale": 1.0}
    {"kind": "gamma_fractional", "H": 0.25, "damping": 1.0, "scale": 1.0}
    {"kind": "log_modulated", "H": 0.3}
    {"kind": "constant", "c": 3.0}
    {"kind": "flat"}                       # K(t) = exp(-1/(2t)) / t
    {"kind": "tabulated", "times": [...], "values": [...]}
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import ClassVar

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import exp1, gammainc, gammaincc

from .errors import ConfigError, DegenerateKernelError, DomainError, UnsupportedKernelError
from .quadrature import gauss_legendre_panels, quad, quad_vec


def _as_output(arr: np.ndarray, like):
    return float(arr) if np.ndim(like) == 0 else arr


class Kernel:
    """Base class: quadrature fallbacks for everything without a closed form."""

    kind: ClassVar[str] = "abstract"
    has_closed_antiderivative: ClassVar[bool] = False
    has_closed_square_integral: ClassVar[bool] = False

    # -- evaluation -------------------------------------------------------
    @property
    def singular_power(self) -> float | None:
        """Exponent ``alpha`` with ``K(t) ~ t**alpha`` as ``t -> 0``, if known."""
        return None

    def _eval(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value_at_zero(self) -> float:
        raise DomainError(f"{self.label} is not defined at t = 0")

    def __call__(self, t):
        arr = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(arr < 0.0) or np.any(np.isnan(arr)):
            raise DomainError(f"{self.label} evaluated at negative or NaN time")
        out = np.empty_like(arr)
        pos = arr > 0.0
        if np.any(pos):
            out[pos] = self._eval(arr[pos])
        if not np.all(pos):
            out[~pos] = self.value_at_zero()
        return _as_output(out.reshape(np.shape(t)), t)

    def _scalar(self, s: float) -> float:
        return float(self._eval(np.array([s]))[0])

    # -- integrals --------------------------------------------------------
    def integrate(self, a: float, b: float) -> float:
        """Integral of the kernel over ``[a, b]``."""
        a, b = float(a), float(b)
        if a < 0.0 or b < a:
            raise DomainError(f"integrate requires 0 <= a <= b, got [{a}, {b}]")
        return self._integral(a, b)

    def _integral(self, a: float, b: float) -> float:
        return quad(self._scalar, a, b, alpha=self.singular_power, what=f"integral of {self.label}")

    def moment(self, a: float, b: float) -> float:
        """First moment ``int_a^b r K(r) dr``."""
        a, b = float(a), float(b)
        if a < 0.0 or b < a:
            raise DomainError(f"moment requires 0 <= a <= b, got [{a}, {b}]")
        alpha = self.singular_power
        return quad(
            lambda s: s * self._scalar(s),
            a,
            b,
            alpha=None if alpha is None else alpha + 1.0,
            what=f"moment of {self.label}",
        )

    def weighted_integral(self, a: float, b: float, rate: float) -> float:
        """``int_a^b exp(rate * s) K(s) ds``."""
        a, b = float(a), float(b)
        if a < 0.0 or b < a:
            raise DomainError(f"weighted_integral requires 0 <= a <= b, got [{a}, {b}]")
        if rate == 0.0:
            return self._integral(a, b)
        return quad(
            lambda s: math.exp(rate * s) * self._scalar(s),
            a,
            b,
            alpha=self.singular_power,
            what=f"weighted integral of {self.label}",
        )

    def squared(self) -> Kernel:
        """The kernel ``K**2`` as a kernel object."""
        return SquaredKernel(self)

    def integrate_sq(self, t: float) -> float:
        """``int_0^t K(s)**2 ds``."""
        t = float(t)
        if t < 0.0:
            raise DomainError(f"integrate_sq requires t >= 0, got {t}")
        if t == 0.0:
            return 0.0
        return self.squared().integrate(0.0, t)

    # -- solver support ---------------------------------------------------
    def panel_moments(self, h: float, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Zeroth and local first moments on the panels ``[(m-1)h, mh]``, m = 1..n.

        Returns ``(M, L)`` with ``M[m-1] = int K`` and
        ``L[m-1] = int (r - (m-1)h) K(r) dr / h`` over panel ``m``.
        """
        M = np.empty(n)
        L = np.empty(n)
        M[0] = self._integral(0.0, h)
        L[0] = self.moment(0.0, h) / h
        if n > 1:
            left = h * np.arange(1, n)
            M[1:] = gauss_legendre_panels(self._eval, left, h)
            L[1:] = gauss_legendre_panels(
                lambda r: (r - np.floor(r / h + 1e-9) * h) * self._eval(r), left, h
            ) / h
        return M, L

    def autoconv(self, t) -> np.ndarray:
        """Self-convolution ``(K * K)(t)`` evaluated on an array of times."""
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros_like(t_arr)
        pos = t_arr > 0.0
        tp = t_arr[pos]
        if tp.size:
            alpha = self.singular_power
            q = 1.0 / (alpha + 1.0) if alpha is not None and alpha < 0.0 else 2.0

            def integrand(u):
                s = 0.5 * tp * u**q
                return tp * q * u ** (q - 1.0) * self._eval(tp - s) * self._eval(s)

            out[pos] = quad_vec(integrand, 0.0, 1.0, what=f"self-convolution of {self.label}")
        return _as_output(out.reshape(np.shape(t)), t)

    # -- small-time data --------------------------------------------------
    def limit_kernel(self) -> Kernel:
        raise UnsupportedKernelError(f"no small-time limiting kernel for {self.label}")

    # -- identity ---------------------------------------------------------
    @property
    def label(self) -> str:
        params = ",".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self) if f.repr)
        return f"{self.kind}({params})"

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


# ---------------------------------------------------------------------------
# power-exponential family  A * t**alpha * exp(-d t)
# ---------------------------------------------------------------------------


def _power_exp_integral(a, b, alpha: float, d: float):
    """``int_a^b s**alpha exp(-d s) ds`` elementwise."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if d == 0.0:
        return (b ** (alpha + 1.0) - a ** (alpha + 1.0)) / (alpha + 1.0)
    if alpha == 0.0:
        return -np.exp(-d * a) * np.expm1(-d * (b - a)) / d
    if alpha == 1.0:
        prim = lambda s: -np.exp(-d * s) * (d * s + 1.0) / d**2  # noqa: E731
        return prim(b) - prim(a)
    if d > 0.0:
        s = alpha + 1.0
        pre = math.gamma(s) / d**s
        xa, xb = d * a, d * b
        lower = gammainc(s, xb) - gammainc(s, xa)
        upper = gammaincc(s, xa) - gammaincc(s, xb)
        return pre * np.where(xa > s, upper, lower)
    f = lambda lo, hi: quad(  # noqa: E731
        lambda s: s**alpha * math.exp(-d * s),
        lo,
        hi,
        alpha=alpha if alpha < 0.0 else None,
        what="power-exponential integral",
    )
    return np.vectorize(f, otypes=[float])(a, b)


class _PowerExpFamily(Kernel):
    """Closed forms for kernels ``A t**alpha exp(-d t)``."""

    has_closed_antiderivative: ClassVar[bool] = True
    has_closed_square_integral: ClassVar[bool] = True

    @property
    def amp(self) -> float:
        raise NotImplementedError

    @property
    def alpha(self) -> float:
        raise NotImplementedError

    @property
    def decay(self) -> float:
        raise NotImplementedError

    @property
    def singular_power(self) -> float:
        return self.alpha

    def _eval(self, t):
        if self.alpha == 0.0:
            return self.amp * np.exp(-self.decay * t)
        return self.amp * t**self.alpha * np.exp(-self.decay * t)

    def value_at_zero(self) -> float:
        if self.alpha > 0.0:
            return 0.0
        if self.alpha == 0.0:
            return float(self.amp)
        return super().value_at_zero()

    def _integral(self, a, b):
        return float(self.amp * _power_exp_integral(a, b, self.alpha, self.decay))

    def moment(self, a, b):
        if a < 0.0 or b < a:
            raise DomainError(f"moment requires 0 <= a <= b, got [{a}, {b}]")
        return float(self.amp * _power_exp_integral(a, b, self.alpha + 1.0, self.decay))

    def weighted_integral(self, a, b, rate):
        if a < 0.0 or b < a:
            raise DomainError(f"weighted_integral requires 0 <= a <= b, got [{a}, {b}]")
        return float(self.amp * _power_exp_integral(a, b, self.alpha, self.decay - rate))

    def squared(self) -> Kernel:
        return PowerExp(self.amp**2, 2.0 * self.alpha, 2.0 * self.decay)

    def panel_moments(self, h, n):
        edges = h * np.arange(n + 1, dtype=float)
        lo, hi = edges[:-1], edges[1:]
        M = self.amp * _power_exp_integral(lo, hi, self.alpha, self.decay)
        first = self.amp * _power_exp_integral(lo, hi, self.alpha + 1.0, self.decay)
        return M, (first - lo * M) / h

    def autoconv(self, t):
        t_arr = np.asarray(t, dtype=float)
        p = self.alpha + 1.0
        out = self.amp**2 * beta_fn(p, p) * t_arr ** (2.0 * p - 1.0) * np.exp(-self.decay * t_arr)
        return _as_output(np.asarray(out, dtype=float), t)

    def limit_kernel(self) -> Kernel:
        if self.amp == 0.0:
            raise UnsupportedKernelError(f"{self.label} vanishes identically")
        if self.alpha == 0.0:
            return Constant(1.0)
        H = self.alpha + 0.5
        return Fractional(H, math.sqrt(2.0 * H))


def _check_H(H: float) -> None:
    if not H > 0.0:
        raise DomainError(f"Hurst parameter must be positive, got {H}")


@dataclass(frozen=True)
class Exponential(_PowerExpFamily):
    """``K(t) = c exp(-rate t)``."""

    c: float
    rate: float
    kind: ClassVar[str] = "exponential"

    amp = property(lambda self: self.c)
    alpha = property(lambda self: 0.0)
    decay = property(lambda self: self.rate)


@dataclass(frozen=True)
class Constant(_PowerExpFamily):
    c: float
    kind: ClassVar[str] = "constant"

    amp = property(lambda self: self.c)
    alpha = property(lambda self: 0.0)
    decay = property(lambda self: 0.0)


@dataclass(frozen=True)
class Fractional(_PowerExpFamily):
    """Riemann-Liouville kernel ``scale * t**(H - 1/2)``."""

    H: float
    scale: float = 1.0
    kind: ClassVar[str] = "fractional"

    def __post_init__(self):
        _check_H(self.H)

    amp = property(lambda self: self.scale)
    alpha = property(lambda self: self.H - 0.5)
    decay = property(lambda self: 0.0)


@dataclass(frozen=True)
class GammaFractional(_PowerExpFamily):
    """Gamma kernel ``scale * t**(H - 1/2) * exp(-damping t)``."""

    H: float
    damping: float = 0.0
    scale: float = 1.0
    kind: ClassVar[str] = "gamma_fractional"

    def __post_init__(self):
        _check_H(self.H)
        if self.damping < 0.0:
            raise DomainError(f"damping must be nonnegative, got {self.damping}")

    amp = property(lambda self: self.scale)
    alpha = property(lambda self: self.H - 0.5)
    decay = property(lambda self: self.damping)


@dataclass(frozen=True)
class PowerExp(_PowerExpFamily):
    """Generic ``amplitude * t**power * exp(-decay_rate t)``; used for squared kernels."""

    amplitude: float
    power: float
    decay_rate: float = 0.0
    kind: ClassVar[str] = "power_exp"

    def __post_init__(self):
        if not self.power > -1.0:
            raise DomainError(f"power must exceed -1 for local integrability, got {self.power}")

    amp = property(lambda self: self.amplitude)
    alpha = property(lambda self: self.power)
    decay = property(lambda self: self.decay_rate)


# ---------------------------------------------------------------------------
# kernels without a closed antiderivative
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogModulated(Kernel):
    """``K(t) = t**(H - 1/2) / Gamma(H + 1/2) * log(1 + 1/t)``."""

    H: float
    kind: ClassVar[str] = "log_modulated"

    def __post_init__(self):
        _check_H(self.H)

    @property
    def singular_power(self) -> float:
        return self.H - 0.5

    def _eval(self, t):
        t = np.asarray(t)
        # log(1 + 1/t) without forming 1/t, which overflows for subnormal t
        with np.errstate(divide="ignore"):
            log_term = np.where(t < 1.0, np.log1p(t) - np.log(t), np.log1p(1.0 / np.maximum(t, 1.0)))
        return t ** (self.H - 0.5) / math.gamma(self.H + 0.5) * log_term

    def value_at_zero(self) -> float:
        if self.H > 0.5:
            return 0.0
        return super().value_at_zero()

    def limit_kernel(self) -> Kernel:
        return Fractional(self.H, math.sqrt(2.0 * self.H))


@dataclass(frozen=True)
class Flat(Kernel):
    """``K(t) = exp(-1/(2t)) / t``: every derivative vanishes at zero."""

    kind: ClassVar[str] = "flat"
    has_closed_antiderivative: ClassVar[bool] = True
    has_closed_square_integral: ClassVar[bool] = True

    def _eval(self, t):
        return np.exp(-0.5 / t) / t

    def value_at_zero(self) -> float:
        return 0.0

    def _integral(self, a, b):
        upper = exp1(0.5 / b) if b > 0.0 else 0.0
        lower = exp1(0.5 / a) if a > 0.0 else 0.0
        return float(upper - lower)

    def integrate_sq(self, t):
        t = float(t)
        if t < 0.0:
            raise DomainError(f"integrate_sq requires t >= 0, got {t}")
        return math.exp(-1.0 / t) if t > 0.0 else 0.0

    def limit_kernel(self) -> Kernel:
        raise UnsupportedKernelError(
            "flat kernel: int_0^t K^2 = exp(-1/t) admits no power lower bound"
        )


@dataclass(frozen=True)
class Tabulated(Kernel):
    """Piecewise-linear interpolation of sampled values on ``[times[0], times[-1]]``."""

    times: tuple
    values: tuple
    kind: ClassVar[str] = "tabulated"
    has_closed_antiderivative: ClassVar[bool] = True

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(x) for x in self.times))
        object.__setattr__(self, "values", tuple(float(x) for x in self.values))
        t = np.asarray(self.times)
        if len(t) < 2 or len(t) != len(self.values):
            raise DomainError("tabulated kernel needs >= 2 matching times and values")
        if np.any(np.diff(t) <= 0.0) or t[0] < 0.0:
            raise DomainError("tabulation times must be nonnegative and strictly increasing")

    def _check_range(self, lo: float, hi: float) -> None:
        if lo < self.times[0] or hi > self.times[-1]:
            raise DomainError(
                f"[{lo}, {hi}] outside tabulation range [{self.times[0]}, {self.times[-1]}]"
            )

    def _eval(self, t):
        t = np.asarray(t)
        if t.size:
            self._check_range(float(t.min()), float(t.max()))
        return np.interp(t, self.times, self.values)

    def value_at_zero(self) -> float:
        self._check_range(0.0, 0.0)
        return self.values[0]

    def _pieces(self, a, b):
        self._check_range(a, b)
        inner = [x for x in self.times if a < x < b]
        nodes = np.array([a, *inner, b])
        return nodes, np.interp(nodes, self.times, self.values)

    def _integral(self, a, b):
        nodes, vals = self._pieces(a, b)
        return float(np.sum(np.diff(nodes) * (vals[:-1] + vals[1:]) / 2.0))

    def moment(self, a, b):
        # r * K(r) is quadratic on each piece, so Simpson's rule is exact
        nodes, vals = self._pieces(a, b)
        mid = (nodes[:-1] + nodes[1:]) / 2.0
        fm = mid * (vals[:-1] + vals[1:]) / 2.0
        f0, f1 = nodes[:-1] * vals[:-1], nodes[1:] * vals[1:]
        return float(np.sum(np.diff(nodes) * (f0 + 4.0 * fm + f1) / 6.0))

    def integrate_sq(self, t):
        t = float(t)
        if t < 0.0:
            raise DomainError(f"integrate_sq requires t >= 0, got {t}")
        if t == 0.0:
            return 0.0
        nodes, vals = self._pieces(0.0, t)
        v0, v1 = vals[:-1], vals[1:]
        return float(np.sum(np.diff(nodes) * (v0**2 + v0 * v1 + v1**2) / 3.0))

    def squared(self) -> Kernel:
        return SquaredKernel(self, breakpoints=self.times)

    def limit_kernel(self) -> Kernel:
        raise UnsupportedKernelError("tabulated kernels carry no small-time asymptotics")


@dataclass(frozen=True)
class SquaredKernel(Kernel):
    """``K**2`` for kernels without a closed-form square."""

    base: Kernel
    breakpoints: tuple | None = field(default=None, repr=False)
    kind: ClassVar[str] = "squared"

    @property
    def has_closed_antiderivative(self) -> bool:  # type: ignore[override]
        return self.base.has_closed_square_integral

    @property
    def singular_power(self) -> float | None:
        alpha = self.base.singular_power
        return None if alpha is None else 2.0 * alpha

    def _eval(self, t):
        return self.base._eval(t) ** 2

    def value_at_zero(self) -> float:
        return self.base.value_at_zero() ** 2

    def _integral(self, a, b):
        if type(self.base).integrate_sq is not Kernel.integrate_sq:
            return self.base.integrate_sq(b) - self.base.integrate_sq(a)
        return quad(
            self._scalar, a, b, alpha=self.singular_power, points=self.breakpoints,
            what=f"integral of {self.label}",
        )

    @property
    def label(self) -> str:
        return f"squared({self.base.label})"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "base": self.base.to_dict()}


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

KERNEL_KINDS: dict[str, type[Kernel]] = {
    cls.kind: cls
    for cls in (Exponential, Constant, Fractional, GammaFractional, LogModulated, Flat, Tabulated, PowerExp)
}


def kernel_from_dict(cfg: dict) -> Kernel:
    """Build a kernel from its dictionary form; unknown keys are rejected."""
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ConfigError("kernel config must be a mapping with a 'kind' key")
    kind = cfg["kind"]
    if kind == "squared":
        return kernel_from_dict(cfg["base"]).squared()
    cls = KERNEL_KINDS.get(kind)
    if cls is None:
        raise ConfigError(f"unknown kernel kind {kind!r}; expected one of {sorted(KERNEL_KINDS)}")
    names = {f.name for f in fields(cls)}
    extra = set(cfg) - names - {"kind"}
    if extra:
        raise ConfigError(f"unknown keys for kernel kind {kind!r}: {sorted(extra)}")
    try:
        return cls(**{k: v for k, v in cfg.items() if k != "kind"})
    except TypeError as exc:
        raise ConfigError(f"bad parameters for kernel kind {kind!r}: {exc}") from None


def eval_kernel(kernel: Kernel, t):
    return kernel(t)


def integrate(kernel: Kernel, a: float, b: float) -> float:
    return kernel.integrate(a, b)


def integrate_sq(kernel: Kernel, t: float) -> float:
    return kernel.integrate_sq(t)


def lambda_n(kernel: Kernel, n: int) -> float:
    """Normalising sequence ``1 / int_0^{1/n} K(r)**2 dr``."""
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    denom = kernel.integrate_sq(1.0 / n)
    if denom <= 0.0:
        raise DegenerateKernelError(f"{kernel.label} vanishes on [0, 1/{n}]")
    return 1.0 / denom


def limit_kernel(kernel: Kernel) -> Kernel:
    return kernel.limit_kernel()


@dataclass(frozen=True)
class SmallTimeBounds:
    """Constants of the two-sided bound ``C* t^(2 gamma*) <= int_0^t K^2 <= C t^(2 gamma)``."""

    gamma: float
    gamma_star: float
    C: float
    C_star: float

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise DomainError("gamma must be positive")
        if self.gamma_star < self.gamma:
            raise DomainError("gamma_star must be >= gamma")
        if not (self.C > 0.0 and self.C_star > 0.0):
            raise DomainError("C and C_star must be positive")

    def corridor_holds(self, chi_sigma: float) -> bool:
        """Exponent corridor ``gamma* < min(gamma + 1/2, gamma (1 + chi_sigma))``."""
        if not 0.0 < chi_sigma <= 1.0:
            raise DomainError("chi_sigma must lie in (0, 1]")
        return self.gamma_star < min(self.gamma + 0.5, self.gamma * (1.0 + chi_sigma))


@dataclass
class BoundsReport:
    ok: bool
    violations: list = field(default_factory=list)  # (t, lower, value, upper)

    def __bool__(self) -> bool:
        return self.ok


def check_small_time_bounds(kernel: Kernel, bounds: SmallTimeBounds, grid) -> BoundsReport:
    """Check the two-sided small-time bound on every grid point in ``(0, 1]``."""
    grid = [float(t) for t in grid]
    if not grid or any(not 0.0 < t <= 1.0 for t in grid):
        raise DomainError("grid must be a nonempty list of points in (0, 1]")
    violations = []
    for t in grid:
        value = kernel.integrate_sq(t)
        lower = bounds.C_star * t ** (2.0 * bounds.gamma_star)
        upper = bounds.C * t ** (2.0 * bounds.gamma)
        if not lower <= value <= upper:
            violations.append((t, lower, value, upper))
    return BoundsReport(not violations, violations)
