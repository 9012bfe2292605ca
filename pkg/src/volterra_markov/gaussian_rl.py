"""Exact Gaussian computations for the Riemann-Liouville process.

``Y_t = int_0^t (t - s)**(H - 1/2) dB_s`` is a centred Gaussian process with

    c(s, t) = t**(H-1/2) s**(H+1/2) / (H+1/2) * 2F1(1/2 - H, 1; H + 3/2; s/t),   s <= t.

A centred Gaussian process is a time-homogeneous Markov process only if
``c(s,u) c(t,t) = c(s,t) c(t,u)`` for ``s <= t <= u``; the Doob defect measures
the failure of this factorisation.  The certificate search exhibits times
``tau**3 < tau**2 < tau`` and an interval ``I`` with

    P[Y_tau in I | Y_{tau^2} = 0, Y_{tau^3} = delta] > P[Y_tau in I | Y_{tau^2} = 0],

which cannot hold for a Markov process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CovarianceError, DomainError, SearchExhaustedError, SingularBlockError
from .mc_sim import PathEnsemble
from .special_functions import hyp2f1

PIVOT_TOL = 1e-12
DEFAULT_TAUS = tuple(2.0**-k for k in range(3, 21))
MARGIN_MIN = 0.01


def normal_cdf(x: float) -> float:
    """Standard normal distribution function through the complementary error function."""
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def rl_covariance(H: float, s: float, t: float) -> float:
    """Covariance ``E[Y_s Y_t]`` of the Riemann-Liouville process (unit scale)."""
    if not H > 0.0:
        raise DomainError(f"H must be positive, got {H}")
    s, t = float(s), float(t)
    if s < 0.0 or t < 0.0:
        raise DomainError("times must be nonnegative")
    if s > t:
        s, t = t, s
    if s == 0.0:
        return 0.0
    if s == t:
        return t ** (2.0 * H) / (2.0 * H)
    return t ** (H - 0.5) * s ** (H + 0.5) / (H + 0.5) * hyp2f1(0.5 - H, 1.0, H + 1.5, s / t)


def doob_defect(H: float, s: float, t: float, u: float) -> float:
    """``c(s,u) c(t,t) - c(s,t) c(t,u)`` for ``0 < s <= t <= u``."""
    if not 0.0 < s <= t <= u:
        raise DomainError(f"doob_defect needs 0 < s <= t <= u, got {(s, t, u)}")
    c = lambda a, b: rl_covariance(H, a, b)  # noqa: E731
    return c(s, u) * c(t, t) - c(s, t) * c(t, u)


def cond_mean_asymptote(H: float, tau: float, delta: float) -> float:
    """Small-``tau`` equivalent ``delta 4H(1-2H)/(2H+1)^2 tau^(1-2H)`` of the conditional mean."""
    if not H > 0.0:
        raise DomainError(f"H must be positive, got {H}")
    if not 0.0 < tau < 1.0:
        raise DomainError(f"tau must lie in (0, 1), got {tau}")
    return delta * 4.0 * H * (1.0 - 2.0 * H) / (2.0 * H + 1.0) ** 2 * tau ** (1.0 - 2.0 * H)


@dataclass(frozen=True)
class GaussianFDD:
    """Finite-dimensional law of ``scale * Y`` at increasing positive times."""

    times: tuple
    cov: np.ndarray
    H: float
    scale: float = 1.0

    @classmethod
    def riemann_liouville(cls, H: float, times: Sequence[float], scale: float = 1.0) -> GaussianFDD:
        t = tuple(float(x) for x in times)
        if any(x <= 0.0 for x in t) or any(b <= a for a, b in zip(t, t[1:])):
            raise DomainError("times must be positive and strictly increasing")
        n = len(t)
        cov = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                cov[i, j] = cov[j, i] = scale**2 * rl_covariance(H, t[i], t[j])
        cov.setflags(write=False)
        return cls(t, cov, float(H), float(scale))

    def cholesky(self) -> np.ndarray:
        """Lower Cholesky factor; raises :class:`CovarianceError` when indefinite."""
        n = len(self.times)
        if n == 0:
            return np.zeros((0, 0))
        d = np.sqrt(np.diag(self.cov))
        corr = self.cov / np.outer(d, d)
        w = np.linalg.eigvalsh(corr)
        if w[0] < -PIVOT_TOL:
            raise CovarianceError(f"covariance is indefinite (smallest eigenvalue {w[0]:.3e})")
        try:
            return np.linalg.cholesky(corr) * d[:, None]
        except np.linalg.LinAlgError as exc:
            raise CovarianceError(f"Cholesky factorisation failed: {exc}") from None


def gaussian_condition(fdd: GaussianFDD, observed, target: int) -> tuple[float, float]:
    """Conditional mean and variance of coordinate ``target`` given observed coordinates.

    Parameters
    ----------
    observed : iterable of (index, value)
    target : int

    Raises
    ------
    SingularBlockError
        If an index repeats or the observed block is numerically singular.
    """
    obs = list(observed)
    idx = [int(i) for i, _ in obs]
    vals = np.array([float(v) for _, v in obs])
    if len(set(idx)) != len(idx):
        raise SingularBlockError("observation indices repeat; the observed block is singular")
    if target in idx:
        value = vals[idx.index(target)]
        return float(value), 0.0
    C = fdd.cov
    if not idx:
        return 0.0, float(C[target, target])
    d = np.sqrt(np.diag(C))
    A = C[np.ix_(idx, idx)] / np.outer(d[idx], d[idx])
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1.0 / PIVOT_TOL:
        raise SingularBlockError(f"observed block is singular (condition number {cond:.3e})")
    b = C[target, idx] / d[idx]
    w = np.linalg.solve(A, b)
    mean = float(w @ (vals / d[idx]))
    var = float(C[target, target] - b @ w)
    return mean, max(var, 0.0)


@dataclass(frozen=True)
class TwoPointConditional:
    """Laws of ``Y_tau`` given ``Y_{tau^2} = 0`` with and without ``Y_{tau^3} = delta``."""

    mean_two: float
    sd_two: float
    sd_one: float


def _scaled_theta(H: float, tau: float) -> np.ndarray:
    """``theta_ij tau^{-(i+j)H}`` for ``i, j = 1..3``, from exact self-similarity."""
    th = np.empty((3, 3))
    for i in range(1, 4):
        for j in range(i, 4):
            # c(tau^j, tau^i) = tau^{2iH} c(tau^{j-i}, 1)
            th[i - 1, j - 1] = th[j - 1, i - 1] = tau ** ((i - j) * H) * rl_covariance(H, tau ** (j - i), 1.0)
    return th


def two_point_condition(H: float, tau: float, delta: float = 1.0) -> TwoPointConditional:
    """Explicit 2x2 Schur complements for the times ``(tau, tau^2, tau^3)``."""
    if not 0.0 < tau < 1.0:
        raise DomainError(f"tau must lie in (0, 1), got {tau}")
    th = _scaled_theta(H, tau)
    t11, t12, t13 = (float(v) for v in th[0])
    t22, t23, t33 = float(th[1, 1]), float(th[1, 2]), float(th[2, 2])
    det = t22 * t33 - t23 * t23
    if not det > PIVOT_TOL * t22 * t33:
        raise SingularBlockError(f"observed block is singular at tau={tau}")
    mean = delta * tau ** (-2.0 * H) * (t13 * t22 - t12 * t23) / det
    quad = (t12 * t12 * t33 - 2.0 * t12 * t13 * t23 + t13 * t13 * t22) / det
    var_two = tau ** (2.0 * H) * max(t11 - quad, 0.0)
    var_one = tau ** (2.0 * H) * max(t11 - t12 * t12 / t22, 0.0)
    return TwoPointConditional(mean, math.sqrt(var_two), math.sqrt(var_one))


@dataclass(frozen=True)
class NonMarkovCertificate:
    H: float
    tau: float
    beta_times: tuple
    interval: tuple
    p_two_cond: float
    p_one_cond: float
    delta: float = 1.0

    @property
    def margin(self) -> float:
        return self.p_two_cond - self.p_one_cond

    def to_text(self) -> str:
        b1, b2, b3 = self.beta_times
        lo, hi = self.interval
        lines = [
            f"H = {self.H!r}",
            f"tau = {self.tau!r}",
            f"beta_times = {b1!r}, {b2!r}, {b3!r}",
            f"delta = {self.delta!r}",
            f"interval = [{lo!r}, {hi!r}]",
            f"p_two_cond = {self.p_two_cond!r}",
            f"p_one_cond = {self.p_one_cond!r}",
            f"margin = {self.margin!r}",
        ]
        return "\n".join(lines) + "\n"


def _one_sigma_interval(law: TwoPointConditional) -> tuple[float, float]:
    return law.mean_two - law.sd_two, law.mean_two + law.sd_two


def _likelihood_ratio_interval(law: TwoPointConditional) -> tuple[float, float]:
    """The set where the two-point conditional density exceeds the one-point one.

    Both laws are Gaussian and the two-point law has the smaller variance, so the
    set is a bounded interval.  By the Neyman-Pearson argument no other event has
    a larger probability gap.
    """
    m, a, b = law.mean_two, law.sd_two, law.sd_one
    A = 1.0 / a**2 - 1.0 / b**2
    if not A * a * a > 1e-13:
        # equal variances up to rounding: no finite interval separates the laws
        return _one_sigma_interval(law)
    log_ratio = math.log(b / a)
    disc = m * m / (a * a * b * b) + 2.0 * A * log_ratio
    sign = 1.0 if m >= 0.0 else -1.0
    far = (m / a**2 + sign * math.sqrt(disc)) / A
    near = (m * m / a**2 - 2.0 * log_ratio) / (A * far)
    return min(near, far), max(near, far)


INTERVAL_RULES = {"likelihood_ratio": _likelihood_ratio_interval, "one_sigma": _one_sigma_interval}


def certificate_at(H: float, tau: float, delta: float = 1.0, interval: str = "likelihood_ratio") -> NonMarkovCertificate:
    """Certificate candidate at one ``tau``.

    ``interval`` selects ``I``: ``"likelihood_ratio"`` takes the event with the
    largest probability gap between the two conditional laws, ``"one_sigma"``
    takes the two-point conditional mean plus or minus one two-point conditional
    standard deviation.
    """
    if interval not in INTERVAL_RULES:
        raise DomainError(f"unknown interval rule {interval!r}; expected one of {sorted(INTERVAL_RULES)}")
    law = two_point_condition(H, tau, delta)
    lo, hi = INTERVAL_RULES[interval](law)

    def prob(mean, sd):
        if sd == 0.0:
            return float(lo <= mean <= hi)
        return normal_cdf((hi - mean) / sd) - normal_cdf((lo - mean) / sd)

    p_two = prob(law.mean_two, law.sd_two)
    p_one = prob(0.0, law.sd_one)
    return NonMarkovCertificate(H, tau, (tau**3, tau**2, tau), (lo, hi), p_two, p_one, delta)


def lemma31_certificate(
    H: float,
    taus: Sequence[float] = DEFAULT_TAUS,
    margin_min: float = MARGIN_MIN,
    delta: float = 1.0,
    interval: str = "likelihood_ratio",
) -> NonMarkovCertificate:
    """Search ``tau`` for a conditional-probability inequality that no Markov process satisfies.

    Returns the first ``tau`` (in the order given) whose margin exceeds
    ``margin_min``.

    Raises
    ------
    SearchExhaustedError
        When no ``tau`` reaches ``margin_min``; carries the best margin found.
    """
    if not H > 0.0:
        raise DomainError(f"H must be positive, got {H}")
    best, best_tau = -math.inf, None
    for tau in taus:
        cert = certificate_at(H, tau, delta, interval)
        if cert.margin > margin_min:
            return cert
        if cert.margin > best:
            best, best_tau = cert.margin, tau
    raise SearchExhaustedError(f"no tau with margin > {margin_min} for H={H}", best, best_tau)


def sample_gaussian_paths(
    H: float, scale: float, times: Sequence[float], n_paths: int, seed: int
) -> PathEnsemble:
    """Exact joint samples of ``scale * Y`` at ``times`` via the Cholesky factor."""
    fdd = GaussianFDD.riemann_liouville(H, times, scale)
    L = fdd.cholesky()
    rng = np.random.Generator(np.random.Philox(seed))
    Z = rng.standard_normal((int(n_paths), len(fdd.times)))
    return PathEnsemble(
        times=np.asarray(fdd.times),
        values=Z @ L.T,
        seed=int(seed),
        scheme_id="gaussian-cholesky",
        model_id=f"riemann_liouville(H={H!r},scale={scale!r})",
        kernel_id=f"fractional(H={H!r},scale={scale!r})",
    )
