"""Online estimators for partially observed bandlimited graph signals.

Three update rules share one calling convention:

* GLMS   ``x += mu B D_S (y - x)``
* GLMP   ``x += mu B D_S (|e|^(p-1) sign(e))``, ``e = y - x``
* G-Sign ``x += mu B sign(D_S (y - x))``

Internally the node order is permuted so that sampled nodes come first.
The sign vector of G-Sign is supported on the sampled nodes only, so its
update touches just the first ``|S|`` columns of ``B``; GLMS and GLMP apply
the full ``B`` as written.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .noise import NoiseModel, sample
from .spectral import BandlimitOperator, SamplingSet

__all__ = [
    "ESTIMATORS",
    "EstimatorConfig",
    "EstimatorState",
    "StepOperator",
    "RunResult",
    "glms_step",
    "glmp_step",
    "gsign_step",
    "step",
    "run_estimation",
    "DIVERGENCE_FACTOR",
]

ESTIMATORS = ("glms", "glmp", "gsign")
_NAMES = {"glms": "glms", "glmp": "glmp", "gsign": "gsign", "g_sign": "gsign", "sign": "gsign"}
DIVERGENCE_FACTOR = 1e12
_NOISE_BLOCK = 1024


def canonical_name(name: str) -> str:
    key = str(name).lower().replace("-", "_")
    if key not in _NAMES:
        raise ValueError(f"unknown estimator {name!r}; valid estimators: {', '.join(ESTIMATORS)}")
    return _NAMES[key]


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str
    mu: float
    p: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", canonical_name(self.kind))
        if not self.mu > 0:
            raise ValueError(f"step size must be positive, got {self.mu}")
        if self.kind == "glmp":
            if self.p is None or not 1.0 < self.p < 2.0:
                raise ValueError(f"GLMP needs 1 < p < 2, got p={self.p}")
        elif self.p is not None:
            raise ValueError(f"{self.kind} does not take p")


@dataclass(frozen=True)
class EstimatorState:
    """Current estimate, iteration count and first divergent iteration."""

    estimate: np.ndarray
    k: int = 0
    diverged_at: int | None = None


class StepOperator:
    """Precomputed update for one (estimator, sampling set, band) triple.

    Works on signals in the permuted frame ``x[perm]``; :meth:`to_frame`
    and :meth:`from_frame` convert.
    """

    def __init__(self, cfg: EstimatorConfig, sampling: SamplingSet, band: BandlimitOperator):
        if sampling.n != band.n:
            raise ValueError(f"sampling set is over {sampling.n} nodes, band over {band.n}")
        self.cfg = cfg
        n = band.n
        S = sampling.nodes
        rest = np.setdiff1d(np.arange(n), S)
        self.perm = np.concatenate([S, rest])
        self.inv = np.argsort(self.perm)
        self.m = len(S)
        self.mask = np.zeros(n)
        self.mask[: self.m] = 1.0
        muB = cfg.mu * band.B[np.ix_(self.perm, self.perm)]
        self.muB = np.ascontiguousarray(muB)
        self.muB_S = np.ascontiguousarray(muB[:, : self.m])
        self.exponent = None if cfg.p is None else cfg.p - 1.0
        self.update = {"glms": self._glms, "glmp": self._glmp, "gsign": self._gsign}[cfg.kind]
        # row l1 norms of mu*B bound any single G-Sign increment in the sup norm
        self.increment_bound = float(np.abs(cfg.mu * band.B).sum(axis=1).max())

    def to_frame(self, v):
        return np.asarray(v, dtype=float)[self.perm]

    def from_frame(self, v):
        return v[self.inv]

    def _glms(self, x, y):
        return x + self.muB @ (self.mask * (y - x))

    def _glmp(self, x, y):
        e = self.mask * (y - x)
        return x + self.muB @ (np.abs(e) ** self.exponent * np.sign(e))

    def _gsign(self, x, y):
        m = self.m
        return x + self.muB_S @ np.sign(y[:m] - x[:m])


def step(state: EstimatorState, obs, sampling: SamplingSet, band: BandlimitOperator,
         cfg: EstimatorConfig) -> EstimatorState:
    """Apply one update of the configured estimator."""
    op = StepOperator(cfg, sampling, band)
    x = np.asarray(state.estimate, dtype=float)
    y = np.asarray(obs, dtype=float)
    if x.shape != (band.n,) or y.shape != (band.n,):
        raise ValueError(f"estimate and observation must have length {band.n}")
    with np.errstate(over="ignore", invalid="ignore"):
        new = op.from_frame(op.update(op.to_frame(x), op.to_frame(y)))
    diverged = state.diverged_at
    if diverged is None and not np.all(np.isfinite(new)):
        diverged = state.k + 1
    return EstimatorState(new, state.k + 1, diverged)


def _expect(cfg, kind):
    if cfg.kind != kind:
        raise ValueError(f"{kind}_step called with a {cfg.kind} configuration")


def glms_step(state, obs, sampling, band, cfg):
    _expect(cfg, "glms")
    return step(state, obs, sampling, band, cfg)


def glmp_step(state, obs, sampling, band, cfg):
    _expect(cfg, "glmp")
    return step(state, obs, sampling, band, cfg)


def gsign_step(state, obs, sampling, band, cfg):
    _expect(cfg, "gsign")
    return step(state, obs, sampling, band, cfg)


@dataclass
class RunResult:
    """Per-iteration record of one run.

    Row ``k`` of every trace refers to the estimate after the ``k``-th
    update (0-based), compared with the true signal at that step.
    """

    msd: np.ndarray
    mad: np.ndarray
    diverged_at: int | None = None
    estimates: np.ndarray | None = None
    tracked: np.ndarray | None = None
    step_times: np.ndarray | None = field(default=None, repr=False)


def run_estimation(
    cfg: EstimatorConfig,
    signal,
    noise: NoiseModel,
    sampling: SamplingSet,
    band: BandlimitOperator,
    n_iters: int,
    rng: np.random.Generator,
    *,
    x_init=None,
    record_estimates: bool = True,
    track_node: int | None = None,
    time_steps: bool = False,
    operator: StepOperator | None = None,
) -> RunResult:
    """Run one estimator for ``n_iters`` steps on noisy partial observations.

    ``signal`` is either a fixed length-N vector (steady state) or an array
    of shape ``(T, N)`` with ``T >= n_iters`` (one row per time step).
    Noise is drawn from ``rng`` in fixed blocks of iterations, so two runs
    with equally seeded generators see the same noise whatever the
    estimator.
    """
    if n_iters < 1:
        raise ValueError("n_iters must be at least 1")
    op = operator if operator is not None else StepOperator(cfg, sampling, band)
    n = band.n
    sig = np.asarray(signal, dtype=float)
    varying = sig.ndim == 2
    if varying:
        if sig.shape[1] != n or sig.shape[0] < n_iters:
            raise ValueError(f"signal must have shape (>= {n_iters}, {n}), got {sig.shape}")
        truth_p = sig[:, op.perm]
    else:
        if sig.shape != (n,):
            raise ValueError(f"signal must have length {n}, got {sig.shape}")
        truth_p = sig[op.perm]
    if track_node is not None and not 0 <= track_node < n:
        raise ValueError(f"tracked node {track_node} outside [0, {n})")

    ref = np.max(np.abs(sig)) if sig.size else 0.0
    limit = DIVERGENCE_FACTOR * (ref if ref > 0 else 1.0)
    x = np.zeros(n) if x_init is None else op.to_frame(x_init)
    mask = op.mask
    update = op.update
    track_p = None if track_node is None else int(op.inv[track_node])

    msd = np.empty(n_iters)
    mad = np.empty(n_iters)
    est = np.empty((n_iters, n)) if record_estimates else None
    tracked = np.empty(n_iters) if track_node is not None else None
    times = np.empty(n_iters) if time_steps else None
    diverged_at = None
    clock = time.perf_counter
    block = None

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_iters):
            b = k % _NOISE_BLOCK
            if b == 0:
                block = sample(noise, (min(_NOISE_BLOCK, n_iters - k), n), rng)[:, op.perm]
            truth = truth_p[k] if varying else truth_p
            y = mask * (truth + block[b])
            if times is not None:
                t0 = clock()
                x = update(x, y)
                times[k] = clock() - t0
            else:
                x = update(x, y)
            e = x - truth
            msd[k] = np.dot(e, e) / n
            mad[k] = np.abs(e).sum() / n
            if diverged_at is None and not np.max(np.abs(x)) <= limit:
                diverged_at = k
            if est is not None:
                est[k] = x
            if tracked is not None:
                tracked[k] = x[track_p]
    if est is not None:
        est = est[:, op.inv]
    return RunResult(msd, mad, diverged_at, est, tracked, times)
