"""Adaptive quadrature helpers that know about power singularities at zero."""

from __future__ import annotations

import warnings
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import QuadratureError

EPSABS = 1e-12
EPSREL = 1e-10
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _check(value: float, err: float, ier: int, what: str) -> float:
    # QUADPACK flags roundoff trouble even when the answer is fine; only give up
    # when the reported error is genuinely large.
    if ier != 0 and err > 1e3 * max(EPSABS, EPSREL * abs(value)):
        raise QuadratureError(f"quadrature for {what} did not converge", value=value, error=err)
    return value


def quad(
    f: Callable[[float], float],
    a: float,
    b: float,
    *,
    alpha: float | None = None,
    points=None,
    what: str = "integral",
) -> float:
    """Integrate ``f`` over ``[a, b]`` with ``a >= 0``.

    When ``alpha < 0`` is given, ``f`` is assumed to behave like ``s**alpha``
    near zero and the substitution ``s = v**(1/(alpha+1))`` removes the
    singularity before handing the integrand to QUADPACK.
    """
    a, b = float(a), float(b)
    if b == a:
        return 0.0
    if b < a:
        return -quad(f, b, a, alpha=alpha, points=points, what=what)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        if alpha is not None and alpha < 0.0:
            q = 1.0 / (alpha + 1.0)
            lo, hi = a ** (alpha + 1.0), b ** (alpha + 1.0)

            def g(v):
                s = v**q
                if s <= 0.0:  # also catches underflow for subnormal v
                    return 0.0
                return f(s) * q * v ** (q - 1.0)

            res = integrate.quad(g, lo, hi, epsabs=EPSABS, epsrel=EPSREL, limit=200, full_output=1)
        else:
            if points is not None:
                points = [p for p in points if a < p < b] or None
            res = integrate.quad(
                f, a, b, epsabs=EPSABS, epsrel=EPSREL, limit=200, points=points, full_output=1
            )
    value, err, info = res[0], res[1], res[2]
    ier = 0 if len(res) == 3 else res[3]
    return _check(value, err, ier, what)


def quad_vec(f: Callable[[float], np.ndarray], a: float, b: float, what: str = "integral") -> np.ndarray:
    """Vector-valued adaptive Gauss-Kronrod quadrature (max-norm control)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, err, info = integrate.quad_vec(
            f, a, b, epsabs=EPSABS, epsrel=EPSREL, norm="max", limit=2000, full_output=True
        )
    if not info.success and err > 1e3 * max(EPSABS, EPSREL * float(np.max(np.abs(value)))):
        raise QuadratureError(f"vector quadrature for {what} did not converge", error=err)
    return np.asarray(value)


def gauss_legendre_panels(f: Callable[[np.ndarray], np.ndarray], left: np.ndarray, width: float) -> np.ndarray:
    """Fixed 24-point Gauss-Legendre rule on panels ``[left_i, left_i + width]``.

    ``f`` is evaluated once on a ``(len(left), 24)`` array of nodes.
    """
    left = np.asarray(left, dtype=float)
    nodes = left[:, None] + 0.5 * width * (_GL_NODES[None, :] + 1.0)
    return 0.5 * width * (f(nodes) @ _GL_WEIGHTS)
