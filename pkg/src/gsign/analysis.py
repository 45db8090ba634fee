"""Deviation metrics, the G-Sign step-size bound and its steady-state MSD."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .spectral import BandlimitOperator, SamplingSet, jacobi_eigh

__all__ = [
    "StepSizeError",
    "StabilityContext",
    "MetricsTrace",
    "ConvergenceReport",
    "msd",
    "mad",
    "stability_context",
    "step_size_bound",
    "spectral_radius",
    "theoretical_msd",
    "detect_convergence",
    "run_converged",
]


class StepSizeError(ValueError):
    """Step size outside the stability region, or sampling set inadmissible."""


def _pair(x_hat, x0):
    a = np.asarray(x_hat, dtype=float)
    b = np.asarray(x0, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a - b


def msd(x_hat, x0) -> float:
    """Mean squared deviation ``||x_hat - x0||^2 / N``."""
    e = _pair(x_hat, x0)
    return float(np.dot(e, e) / e.size)


def mad(x_hat, x0) -> float:
    """Mean absolute deviation ``sum |x_hat - x0| / N``."""
    e = _pair(x_hat, x0)
    return float(np.abs(e).sum() / e.size)


@dataclass(frozen=True, eq=False)
class StabilityContext:
    """Quantities entering the G-Sign stability analysis.

    ``r`` is the scalar in ``R = r I``, the fractional inverse moment of the
    noise. The noise covariance term is taken as the identity.
    """

    U_F: np.ndarray
    sample_mask: np.ndarray
    r: float
    G: np.ndarray = field(init=False)

    def __post_init__(self):
        U = np.asarray(self.U_F, dtype=float)
        d = np.asarray(self.sample_mask, dtype=float)
        if d.shape != (U.shape[0],):
            raise ValueError("sample mask length must match U_F rows")
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r}")
        G = U.T @ (d[:, None] * U)
        object.__setattr__(self, "G", 0.5 * (G + G.T))

    @property
    def size(self) -> int:
        return self.G.shape[0]

    def phi1(self, mu: float) -> np.ndarray:
        """``I - mu U_F^T D_S R U_F``."""
        return np.eye(self.size) - mu * self.r * self.G


def stability_context(band: BandlimitOperator, sampling: SamplingSet, r: float) -> StabilityContext:
    return StabilityContext(band.U_F, sampling.mask, r)


def step_size_bound(ctx: StabilityContext, gram_tol: float = 1e-10) -> float:
    """Upper limit ``2 / lambda_max(U_F^T D_S R U_F)`` of admissible step sizes."""
    g = jacobi_eigh(ctx.G)[0]
    if g[0] <= gram_tol * max(g[-1], 1.0):
        raise StepSizeError(
            f"U_F^T D_S U_F is singular (smallest eigenvalue {g[0]:.3e}); sampling set inadmissible"
        )
    # eigenvalues of G cluster near 1, so take lambda_max from the full spectrum
    return 2.0 / (ctx.r * g[-1])


def spectral_radius(ctx: StabilityContext, mu: float) -> float:
    """Spectral radius of ``I - mu U_F^T D_S R U_F``."""
    return float(np.max(np.abs(jacobi_eigh(ctx.phi1(mu))[0])))


def theoretical_msd(ctx: StabilityContext, mu: float, rtol: float = 1e-12) -> float:
    """Steady-state MSD ``mu^2 vec(G)^T (I - Q)^-1 vec(I)``, ``Q = Phi1^T kron Phi1``.

    Solved matrix-free with conjugate gradients: ``Q vec(V) = vec(Phi1 V Phi1)``
    and ``I - Q`` is symmetric positive definite inside the stability region.
    """
    if not mu > 0:
        raise StepSizeError(f"step size must be positive, got {mu}")
    rho = spectral_radius(ctx, mu)
    if rho >= 1.0 - 1e-12:
        raise StepSizeError(
            f"step size {mu:g} is at or beyond the stability bound (spectral radius {rho:.6f})"
        )
    f = ctx.size
    P = ctx.phi1(mu)

    def matvec(v):
        V = v.reshape(f, f, order="F")
        return v - (P.T @ V @ P).ravel(order="F")

    A = LinearOperator((f * f, f * f), matvec=matvec, dtype=float)
    rhs = np.eye(f).ravel(order="F")
    # (1 - rho^2)^-1 bounds the condition number
    sol, info = cg(A, rhs, rtol=rtol, atol=0.0, maxiter=50 * f * f + 1000)
    if info != 0:
        raise StepSizeError(f"(I - Q) solve did not converge (info={info}); step size near bound")
    return float(mu**2 * ctx.G.ravel(order="F") @ sol)


@dataclass
class MetricsTrace:
    """Run-averaged MSD/MAD traces plus per-run detail."""

    msd: np.ndarray
    mad: np.ndarray
    run_msd: np.ndarray | None = None
    diverged: np.ndarray | None = None
    step_times: np.ndarray | None = None

    @classmethod
    def from_runs(cls, results) -> "MetricsTrace":
        run_msd = np.stack([r.msd for r in results])
        run_mad = np.stack([r.mad for r in results])
        diverged = np.array([r.diverged_at is not None for r in results])
        times = None
        if all(r.step_times is not None for r in results):
            times = np.stack([r.step_times for r in results])
        return cls(run_msd.mean(axis=0), run_mad.mean(axis=0), run_msd, diverged, times)

    @property
    def n_iters(self) -> int:
        return len(self.msd)

    @property
    def any_diverged(self) -> bool:
        return self.diverged is not None and bool(self.diverged.any())


@dataclass(frozen=True)
class ConvergenceReport:
    converged: bool
    steady_value: float
    iterations_to_converge: int | None


def _slope_weights(w: int) -> np.ndarray:
    t = np.arange(w) - (w - 1) / 2.0
    return t / np.dot(t, t) * w


def _trend_change(tail: np.ndarray, n_batches: int = 10) -> tuple[float, float]:
    """Fitted linear change across ``tail`` and its standard error.

    The error comes from a regression on batch means, which tolerates
    moderate autocorrelation of a single learning curve.
    """
    w = len(tail)
    change = float(np.dot(_slope_weights(w), tail - tail.mean()))
    nb = min(n_batches, w // 2)
    if nb < 3:
        return change, 0.0
    t = np.arange(w) - (w - 1) / 2.0
    batches = np.array_split(np.arange(w), nb)
    tb = np.array([t[b].mean() for b in batches])
    yb = np.array([tail[b].mean() for b in batches])
    tc = tb - tb.mean()
    slope = np.dot(tc, yb - yb.mean()) / np.dot(tc, tc)
    resid = yb - yb.mean() - slope * tc
    se_slope = np.sqrt(np.dot(resid, resid) / (nb - 2) / np.dot(tc, tc))
    return change, float(se_slope * w)


def _ensemble_trend_change(run_tails: np.ndarray) -> tuple[float, float]:
    """Linear change of the run-averaged tail, with the standard error taken
    from the spread of the per-run changes (runs are independent)."""
    per_run = (run_tails - run_tails.mean(axis=1, keepdims=True)) @ _slope_weights(run_tails.shape[1])
    n = len(per_run)
    se = float(per_run.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(per_run.mean()), se


def detect_convergence(trace, window: int, rel_tol: float = 0.01, z: float = 3.0) -> ConvergenceReport:
    """Decide whether an MSD learning curve has reached a plateau.

    The steady value is the mean over the final ``window`` iterations. The
    curve counts as converged when no run diverged and the linear trend
    across that window changes the level by at most ``rel_tol`` of the
    steady value, or by no more than ``z`` standard errors (trend
    indistinguishable from Monte Carlo fluctuation). With per-run traces the
    standard error comes from the spread across runs, otherwise from batch
    means of the single curve. Iterations to converge
    is the first index after which the curve stays within a factor 1.5 of
    the steady value.
    """
    if isinstance(trace, MetricsTrace):
        values, diverged = trace.msd, trace.any_diverged
    else:
        values, diverged = np.asarray(trace, dtype=float), False
    n = len(values)
    if not 1 <= window < n + 1:
        raise ValueError(f"window must be in [1, {n}], got {window}")
    tail = values[-window:]
    if not np.all(np.isfinite(values)):
        return ConvergenceReport(False, float(np.mean(tail)), None)
    steady = float(tail.mean())
    run_msd = trace.run_msd if isinstance(trace, MetricsTrace) else None
    if run_msd is not None and len(run_msd) > 1 and np.all(np.isfinite(run_msd[:, -window:])):
        change, se = _ensemble_trend_change(run_msd[:, -window:])
    else:
        change, se = _trend_change(tail)
    flat = abs(change) <= rel_tol * abs(steady) or abs(change) <= z * se
    converged = bool(flat and not diverged)

    lo, hi = steady / 1.5, steady * 1.5
    outside = np.flatnonzero((values < lo) | (values > hi)) if steady > 0 else np.flatnonzero(values != 0)
    iters = 0 if outside.size == 0 else int(outside[-1] + 1)
    if iters >= n:
        iters = None
    return ConvergenceReport(converged, steady, iters)


def run_converged(run_msd, window: int, reference: float, factor: float = 2.0,
                  diverged: bool = False) -> bool:
    """Per-run convergence: no divergence and a final-window level within
    ``factor`` of the ensemble steady value ``reference``."""
    tail = np.asarray(run_msd[-window:], dtype=float)
    if diverged or not np.all(np.isfinite(tail)) or not reference > 0:
        return False
    level = tail.mean()
    return reference / factor <= level <= reference * factor
