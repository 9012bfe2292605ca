"""Gauss hypergeometric function on [0, 1] and the gamma function.

Only real parameters and real arguments in ``[0, 1]`` are supported.  The power
series is used for ``x <= 0.7``; on ``(0.7, 1)`` the function is rebuilt from
two series in ``1 - x`` (the Gauss connection formula, with the logarithmic
variant when ``c - a - b`` is an integer).  ``x = 1`` is Gauss's closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.special import digamma

from .errors import ConvergenceError, DomainError

SERIES_THRESHOLD = 0.7
MAX_TERMS = 100_000
_INTEGER_GAP = 1e-4


def gamma_fn(x: float) -> float:
    """Gamma function for positive real arguments."""
    x = float(x)
    if not x > 0.0:
        raise DomainError(f"gamma_fn requires x > 0, got {x}")
    return math.gamma(x)


def _is_nonpositive_integer(x: float) -> bool:
    return x <= 0.0 and float(x).is_integer()


def _rgamma(x: float) -> float:
    """1/Gamma(x), zero at the poles."""
    if _is_nonpositive_integer(x):
        return 0.0
    return 1.0 / math.gamma(x)


@dataclass(frozen=True)
class Hyp2F1Params:
    a: float
    b: float
    c: float
    x: float

    def __post_init__(self):
        if _is_nonpositive_integer(self.c):
            raise DomainError(f"c must not be a nonpositive integer, got {self.c}")
        if not 0.0 <= self.x <= 1.0:
            raise DomainError(f"x must lie in [0, 1], got {self.x}")
        if self.x == 1.0 and not self.c - self.a - self.b > 0.0:
            raise DomainError(
                f"2F1 diverges at x = 1 unless c - a - b > 0 (got {self.c - self.a - self.b})"
            )


def _series(a: float, b: float, c: float, x: float, tol: float) -> float:
    """Plain power series, summed until the geometric tail bound drops below tol."""
    total = 1.0
    term = 1.0
    for n in range(MAX_TERMS):
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * x
        total += term
        if term == 0.0:
            return total
        ratio = max(abs((a + n + 1) * (b + n + 1) / ((c + n + 1) * (n + 2.0)) * x), abs(x))
        if ratio < 1.0:
            tail = abs(term) * ratio / (1.0 - ratio)
            if tail <= tol * max(1.0, abs(total)) * 0.1:
                return total
    ratio = abs(x)
    bound = abs(term) * ratio / (1.0 - ratio) if ratio < 1.0 else math.inf
    raise ConvergenceError(
        f"2F1 series did not converge within {MAX_TERMS} terms",
        partial=total,
        bound=bound,
    )


def _gauss_value(a: float, b: float, c: float) -> float:
    return math.gamma(c) * math.gamma(c - a - b) * _rgamma(c - a) * _rgamma(c - b)


def _connection(a: float, b: float, c: float, x: float, tol: float) -> float:
    """Two-series 1 - x expansion for non-integer c - a - b."""
    m = c - a - b
    y = 1.0 - x
    first = math.gamma(c) * math.gamma(m) * _rgamma(c - a) * _rgamma(c - b)
    second = math.gamma(c) * math.gamma(-m) * _rgamma(a) * _rgamma(b)
    out = 0.0
    if first != 0.0:
        out += first * _series(a, b, 1.0 - m, y, tol)
    if second != 0.0:
        out += second * y**m * _series(c - a, c - b, 1.0 + m, y, tol)
    return out


def _connection_log(a: float, b: float, m: int, x: float, tol: float) -> float:
    """1 - x expansion for c = a + b + m with integer m >= 0 (logarithmic case)."""
    y = 1.0 - x
    c = a + b + m
    log_y = math.log(y)
    finite = 0.0
    if m > 0:
        pre = math.gamma(m) * math.gamma(c) * _rgamma(a + m) * _rgamma(b + m)
        term = 1.0
        for n in range(m):
            finite += term
            if n + 1 < m:
                term *= (a + n) * (b + n) / ((n + 1.0) * (1.0 - m + n)) * y
        finite *= pre
    pre_log = math.gamma(c) * _rgamma(a) * _rgamma(b)
    if pre_log == 0.0:
        return finite
    sign = -1.0 if m % 2 else 1.0  # (x - 1)^m = (-y)^m
    total = 0.0
    coeff = 1.0 / math.factorial(m)
    for n in range(MAX_TERMS):
        bracket = (
            log_y
            - digamma(n + 1.0)
            - digamma(n + m + 1.0)
            + digamma(a + n + m)
            + digamma(b + n + m)
        )
        piece = coeff * bracket
        total += piece
        coeff *= (a + m + n) * (b + m + n) / ((n + 1.0) * (n + m + 1.0)) * y
        if abs(coeff) * (abs(log_y) + 10.0 + math.log(n + m + 2.0)) <= 0.1 * tol * max(1.0, abs(total)):
            break
    else:
        raise ConvergenceError(
            "logarithmic 2F1 expansion did not converge", partial=total, bound=abs(coeff)
        )
    return finite - sign * y**m * pre_log * total


def _transformed(a: float, b: float, c: float, x: float, tol: float) -> float:
    m = c - a - b
    k = round(m)
    if abs(m - k) > _INTEGER_GAP:
        return _connection(a, b, c, x, tol)
    if m == k:
        if k >= 0:
            return _connection_log(a, b, int(k), x, tol)
        # Euler's transformation flips the sign of c - a - b
        return (1.0 - x) ** m * _connection_log(c - a, c - b, int(-k), x, tol)
    # nearly integer c - a - b: the connection formula cancels badly; sum directly
    return _series(a, b, c, x, tol)


def hyp2f1(a, b: float | None = None, c: float | None = None, x: float | None = None, tol: float = 1e-14) -> float:
    """Gauss hypergeometric function 2F1(a, b; c; x) for real x in [0, 1].

    Parameters
    ----------
    a, b, c : float
        Real parameters; ``c`` must not be a nonpositive integer.  A
        :class:`Hyp2F1Params` may be passed as ``a`` instead of all four values.
    x : float
        Argument in ``[0, 1]``.  At ``x = 1`` the Gauss summation value is
        returned, which requires ``c - a - b > 0``.
    tol : float
        Target absolute error (relative for values above 1).

    Raises
    ------
    DomainError
        Parameters outside the supported domain.
    ConvergenceError
        A series hit the iteration cap; carries the partial sum and tail bound.
    """
    p = a if isinstance(a, Hyp2F1Params) else Hyp2F1Params(float(a), float(b), float(c), float(x))
    if tol <= 0.0:
        raise DomainError("tol must be positive")
    a, b, c, x = p.a, p.b, p.c, p.x
    if x == 0.0 or a == 0.0 or b == 0.0:
        return 1.0
    if x == 1.0:
        return _gauss_value(a, b, c)
    if _is_nonpositive_integer(a) or _is_nonpositive_integer(b) or x <= SERIES_THRESHOLD:
        # terminating polynomial, or inside the fast-convergence disc
        return _series(a, b, c, x, tol)
    return _transformed(a, b, c, x, tol)


def hyp2f1_series(a: float, b: float, c: float, x: float, tol: float = 1e-14) -> float:
    """Direct power-series evaluation on [0, 1), bypassing any transformation."""
    p = Hyp2F1Params(float(a), float(b), float(c), float(x))
    if p.x == 1.0:
        raise DomainError("hyp2f1_series is defined on [0, 1) only")
    return _series(p.a, p.b, p.c, p.x, tol)


def hyp2f1_transformed(a: float, b: float, c: float, x: float, tol: float = 1e-14) -> float:
    """Evaluation through the 1 - x expansions, for any x in (0, 1)."""
    p = Hyp2F1Params(float(a), float(b), float(c), float(x))
    if not 0.0 < p.x < 1.0:
        raise DomainError("hyp2f1_transformed is defined on (0, 1) only")
    return _transformed(p.a, p.b, p.c, p.x, tol)
