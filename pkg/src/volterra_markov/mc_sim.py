"""Monte Carlo simulation of stochastic Volterra equations.

The scheme is left-point Euler with integrated kernel weights.  With
``M_m = int_{(m-1)h}^{mh} K`` and increments ``Z_j = b(X_j) h + sigma(X~_j) dB_j``,

    X_k = x exp(-lam t_k) + sum_{j<k} (M_{k-j} / h) Z_j,

where ``X~`` is the state projected onto the state space (positive part for the
square-root model, clamp for the Jacobi model).  The recursion keeps the
unprojected state; stored paths are projected.  Each step is one
vector-matrix product over the path block.

Random numbers come from a counter-based generator (Philox) keyed by
``(seed, block)``, with a fixed block size, so an ensemble does not depend on
how many threads simulate it.
"""

from __future__ import annotations

import csv
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, InsufficientMassError, SimulationError

MAGIC = b"SVEE"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIQQ")
BLOCK_PATHS = 2048
OVERFLOW_BOUND = 1e150
MIN_EFFECTIVE = 200
WILSON_Z = 1.959963984540054
STEP_CHUNK = 64


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated paths: ``values[i, k]`` is path ``i`` at ``times[k]``."""

    times: np.ndarray
    values: np.ndarray
    seed: int
    scheme_id: str
    model_id: str = ""
    kernel_id: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float).reshape(-1, len(times))
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def metadata(self) -> dict:
        return {
            "times": [float(t) for t in self.times],
            "seed": self.seed,
            "scheme_id": self.scheme_id,
            "model": self.model_id,
            "kernel": self.kernel_id,
            "extra": self.extra,
        }

    def save(self, path) -> None:
        """Binary file ``path`` plus the metadata sidecar ``path + '.json'``."""
        path = Path(path)
        n, m = self.values.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, n, m))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        with open(str(path) + ".json", "w", newline="\n") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> PathEnsemble:
        path = Path(path)
        raw = path.read_bytes()
        if len(raw) < _HEADER.size:
            raise DomainError(f"{path} is too short to be an ensemble file")
        magic, version, n, m = _HEADER.unpack_from(raw)
        if magic != MAGIC:
            raise DomainError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise DomainError(f"{path}: unsupported version {version}")
        body = raw[_HEADER.size :]
        if len(body) != 8 * n * m:
            raise DomainError(f"{path}: expected {n}x{m} values, found {len(body) // 8}")
        values = np.frombuffer(body, dtype="<f8").reshape(n, m)
        meta = json.loads(Path(str(path) + ".json").read_text())
        if len(meta["times"]) != m:
            raise DomainError(f"{path}: sidecar lists {len(meta['times'])} times, file has {m}")
        return cls(
            times=np.array(meta["times"]),
            values=values,
            seed=meta["seed"],
            scheme_id=meta["scheme_id"],
            model_id=meta.get("model", ""),
            kernel_id=meta.get("kernel", ""),
            extra=meta.get("extra", {}),
        )

    def to_csv(self, path) -> None:
        """One row per path, one column per time."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["path"] + ["t=%.17g" % t for t in self.times])
            for i, row in enumerate(self.values):
                w.writerow([i] + ["%.17g" % v for v in row])


# ---------------------------------------------------------------------------
# random numbers
# ---------------------------------------------------------------------------


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(block)])))


def _blocks(n_paths: int, block_paths: int) -> list[tuple[int, int, int]]:
    return [(b, lo, min(lo + block_paths, n_paths)) for b, lo in enumerate(range(0, n_paths, block_paths))]


def _block_increments(seed: int, block: int, n_steps: int, width: int, h: float) -> np.ndarray:
    # the full block is always drawn so that a partial last block starts the same way
    z = _block_rng(seed, block).standard_normal((n_steps, BLOCK_PATHS))
    return math.sqrt(h) * z[:, :width]


def brownian_increments(grid, n_paths: int, seed: int) -> np.ndarray:
    """Increments ``dB`` of shape ``(N, n_paths)`` exactly as the simulators draw them."""
    out = np.empty((grid.N, n_paths))
    for b, lo, hi in _blocks(n_paths, BLOCK_PATHS):
        out[:, lo:hi] = _block_increments(seed, b, grid.N, hi - lo, grid.h)
    return out


def coarsen_increments(dB: np.ndarray, factor: int = 2) -> np.ndarray:
    """Sum consecutive groups of ``factor`` increments (fine grid to coarse grid)."""
    n = dB.shape[0]
    if n % factor:
        raise DomainError("number of steps must be divisible by the coarsening factor")
    return dB.reshape(n // factor, factor, -1).sum(axis=1)


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


def _run_sve_block(model, weights: np.ndarray, x_curve: np.ndarray, dB: np.ndarray, h: float) -> np.ndarray:
    # Steps are processed in chunks: the contribution of all increments before
    # a chunk is one matrix product, and only the in-chunk history is summed
    # step by step.
    N, width = dB.shape
    X = np.empty((N + 1, width))
    Z = np.empty((N, width))
    project = model.state_space.project
    sigma = model.diffusion.sigma
    with np.errstate(over="raise", invalid="raise"):
        try:
            for c0 in range(0, N + 1, STEP_CHUNK):
                c1 = min(c0 + STEP_CHUNK, N + 1)
                ks = np.arange(c0, c1)
                X[c0:c1] = x_curve[c0:c1, None]
                if c0 > 0:
                    toeplitz = weights[ks[:, None] - np.arange(c0)[None, :] - 1]
                    X[c0:c1] += toeplitz @ Z[:c0]
                for k in ks:
                    if k > c0:
                        X[k] += weights[k - c0 - 1 :: -1] @ Z[c0:k]
                    if k < N:
                        Z[k] = model.drift(X[k]) * h + sigma(project(X[k])) * dB[k]
        except FloatingPointError as exc:
            raise SimulationError(f"numerical blow-up during simulation: {exc}") from None
    if not np.all(np.abs(X) < OVERFLOW_BOUND):
        raise SimulationError("path norm exceeded the overflow guard")
    return project(X).T


def simulate_sve(
    model,
    kernel,
    grid,
    n_paths: int,
    seed: int,
    *,
    threads: int = 1,
    increments: np.ndarray | None = None,
) -> PathEnsemble:
    """Simulate ``n_paths`` paths of the SVE on ``grid``.

    Parameters
    ----------
    model : ModelSpec
    kernel : Kernel
    grid : Grid
    n_paths, seed : int
    threads : int
        Worker threads; results do not depend on it.
    increments : ndarray, optional
        Brownian increments of shape ``(N, n_paths)`` to use instead of the
        seeded stream (for coupling with another scheme).
    """
    n_paths = int(n_paths)
    if n_paths < 0:
        raise DomainError("n_paths must be nonnegative")
    h = grid.h
    M, _ = kernel.panel_moments(h, grid.N)
    weights = np.ascontiguousarray(M / h)
    x_curve = model.x * np.exp(-model.lam * grid.nodes)
    if increments is not None and increments.shape != (grid.N, n_paths):
        raise DomainError(f"increments must have shape {(grid.N, n_paths)}")

    def job(spec):
        b, lo, hi = spec
        dB = increments[:, lo:hi] if increments is not None else _block_increments(seed, b, grid.N, hi - lo, h)
        return _run_sve_block(model, weights, x_curve, dB, h)

    values = _run_blocks(job, n_paths, grid.N + 1, threads)
    return PathEnsemble(
        times=grid.nodes,
        values=values,
        seed=int(seed),
        scheme_id="sve-euler-integrated-weights",
        model_id=json.dumps(model.to_dict(), sort_keys=True),
        kernel_id=kernel.label,
    )


def _run_blocks(job, n_paths: int, n_times: int, threads: int) -> np.ndarray:
    specs = _blocks(n_paths, BLOCK_PATHS)
    out = np.empty((n_paths, n_times))
    if threads <= 1 or len(specs) <= 1:
        results = map(job, specs)
    else:
        pool = ThreadPoolExecutor(max_workers=int(threads))
        results = pool.map(job, specs)
    for (b, lo, hi), vals in zip(specs, results):
        out[lo:hi] = vals
    if threads > 1 and len(specs) > 1:
        pool.shutdown()
    return out


def simulate_sde_exponential(
    model,
    kernel,
    grid,
    n_paths: int,
    seed: int,
    *,
    threads: int = 1,
    increments: np.ndarray | None = None,
) -> PathEnsemble:
    """Euler scheme for ``dX = (c b(X) - lam X) dt + c sigma(X) dB`` with ``K = c exp(-lam t)``.

    For this kernel the SVE is equivalent to the SDE, so both schemes can be
    compared pathwise on shared increments.
    """
    from .kernels import Exponential

    if not isinstance(kernel, Exponential):
        raise SimulationError("the SDE representation needs an exponential kernel")
    if not math.isclose(kernel.rate, model.lam, rel_tol=0.0, abs_tol=1e-14):
        raise SimulationError("the kernel rate must equal the initial-curve rate lam")
    c, lam, h = kernel.c, model.lam, grid.h
    project = model.state_space.project
    if increments is not None and increments.shape != (grid.N, int(n_paths)):
        raise DomainError(f"increments must have shape {(grid.N, int(n_paths))}")

    def job(spec):
        b, lo, hi = spec
        dB = increments[:, lo:hi] if increments is not None else _block_increments(seed, b, grid.N, hi - lo, h)
        X = np.empty((grid.N + 1, hi - lo))
        X[0] = model.x
        for k in range(grid.N):
            X[k + 1] = X[k] + (c * model.drift(X[k]) - lam * X[k]) * h + c * model.diffusion.sigma(project(X[k])) * dB[k]
        return project(X).T

    values = _run_blocks(job, int(n_paths), grid.N + 1, threads)
    return PathEnsemble(
        times=grid.nodes,
        values=values,
        seed=int(seed),
        scheme_id="sde-euler",
        model_id=json.dumps(model.to_dict(), sort_keys=True),
        kernel_id=kernel.label,
    )


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def empirical_moment(ensemble: PathEnsemble, index: int, order: int = 1, n_batches: int | None = None):
    """Sample moment of order 1 or 2 at a time index, with its standard error.

    With ``n_batches`` the standard error comes from that many batch means;
    by default every path is its own batch (paths are independent).
    """
    if order not in (1, 2):
        raise DomainError("order must be 1 or 2")
    n = ensemble.n_paths
    if n < 2:
        raise DomainError("need at least two paths")
    if not -len(ensemble.times) <= index < len(ensemble.times):
        raise IndexError(f"time index {index} out of range")
    y = ensemble.values[:, index] ** order
    est = float(np.mean(y))
    if n_batches is None:
        se = float(np.std(y, ddof=1) / math.sqrt(n))
    else:
        if not 2 <= n_batches <= n:
            raise DomainError("n_batches must lie in [2, n_paths]")
        means = np.array([b.mean() for b in np.array_split(y, n_batches)])
        se = float(np.std(means, ddof=1) / math.sqrt(n_batches))
    return est, se


def wilson_interval(successes: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    """Wilson score interval ``(center, half_width)``."""
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return center, half


def conditional_prob_estimate(
    ensemble: PathEnsemble,
    conditioning: Sequence[tuple[int, float, float]],
    target: tuple[int, tuple[float, float]],
    min_effective: int = MIN_EFFECTIVE,
) -> tuple[float, float, int]:
    """Frequency of ``X_target in interval`` among paths inside every conditioning bin.

    Returns ``(probability, ci_half_width, n_effective)`` with a 95% Wilson interval.
    """
    V = ensemble.values
    mask = np.ones(ensemble.n_paths, dtype=bool)
    for idx, center, half in conditioning:
        if not half > 0.0:
            raise DomainError("conditioning half-widths must be positive")
        mask &= np.abs(V[:, idx] - center) <= half
    n_eff = int(mask.sum())
    if n_eff < min_effective:
        raise InsufficientMassError("too few paths in the conditioning bins", n_eff)
    idx, (lo, hi) = target
    hits = int(np.sum((V[mask, idx] >= lo) & (V[mask, idx] <= hi)))
    _, half = wilson_interval(hits, n_eff)
    return hits / n_eff, half, n_eff
