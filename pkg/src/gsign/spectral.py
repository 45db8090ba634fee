"""Graph Fourier basis, bandlimiting and sampling operators.

The eigensolver is a cyclic Jacobi method in round-robin (parallel) order:
each round rotates ``n // 2`` disjoint index pairs at once, so a sweep is
``n - 1`` vectorized rounds instead of ``n (n - 1) / 2`` scalar rotations.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "EigenConvergenceError",
    "SamplingError",
    "SpectralBasis",
    "BandlimitOperator",
    "SamplingSet",
    "jacobi_eigh",
    "eigendecompose",
    "cached_eigendecompose",
    "gft",
    "igft",
    "make_bandlimit",
    "lowpass_bandlimit",
    "greedy_sampling",
]

log = logging.getLogger(__name__)

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


class EigenConvergenceError(RuntimeError):
    pass


class SamplingError(ValueError):
    """No sampling set of the requested size makes the band recoverable."""


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairings covering every (p, q), p < q, exactly once over n - 1 rounds
    (n rounds when n is odd; the dummy player sits out)."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        P, Q = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                P.append(min(a, b))
                Q.append(max(a, b))
        rounds.append((np.array(P, dtype=np.intp), np.array(Q, dtype=np.intp)))
        players = [players[0], players[-1], *players[1:-1]]
    return rounds


def jacobi_eigh(A, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS):
    """Eigen-decomposition of a real symmetric matrix by Jacobi rotations.

    Parameters
    ----------
    A : array_like, shape (n, n)
        Symmetric matrix.
    tol : float
        Stop when the off-diagonal Frobenius norm falls below
        ``tol * ||A||_F``.
    max_sweeps : int
        Raise :class:`EigenConvergenceError` if not converged by then.

    Returns
    -------
    w : ndarray
        Eigenvalues in ascending order.
    V : ndarray
        Orthonormal eigenvectors as columns, ordered like ``w``.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    V = np.eye(n)
    scale = np.linalg.norm(A)
    rounds = _round_robin(n) if n > 1 else []

    def off_norm():
        # direct sum: ||A||^2 - ||diag||^2 cancels down to sqrt(eps) ||A||
        off = A - np.diag(np.diag(A))
        return np.sqrt(np.sum(off * off))

    sweeps = 0
    while off_norm() > tol * scale:
        if sweeps == max_sweeps:
            raise EigenConvergenceError(
                f"Jacobi did not converge in {max_sweeps} sweeps "
                f"(off-diagonal norm {off_norm():.3e})"
            )
        for P, Q in rounds:
            apq = A[P, Q]
            active = apq != 0.0
            if not active.any():
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            with np.errstate(over="ignore"):
                # a subnormal a_pq overflows theta to inf, giving t = 0 (no rotation)
                theta = (A[Q, Q] - A[P, P]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c

            Ap, Aq = A[:, P], A[:, Q]
            A[:, P] = Ap * c - Aq * s
            A[:, Q] = Ap * s + Aq * c
            Ap, Aq = A[P, :], A[Q, :]
            A[P, :] = c[:, None] * Ap - s[:, None] * Aq
            A[Q, :] = s[:, None] * Ap + c[:, None] * Aq
            A[P, Q] = 0.0
            A[Q, P] = 0.0
            Vp, Vq = V[:, P], V[:, Q]
            V[:, P] = Vp * c - Vq * s
            V[:, Q] = Vp * s + Vq * c
        sweeps += 1

    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Laplacian eigenvectors ``U`` (columns) and ascending eigenvalues."""

    U: np.ndarray
    lambdas: np.ndarray

    @property
    def n(self) -> int:
        return self.U.shape[0]


def eigendecompose(L) -> SpectralBasis:
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {L.shape}")
    if not np.allclose(L, L.T, rtol=0, atol=1e-12):
        raise ValueError("matrix is not symmetric")
    w, U = jacobi_eigh(L)
    U.setflags(write=False)
    w.setflags(write=False)
    return SpectralBasis(U, w)


def _matrix_key(L: np.ndarray) -> str:
    L = np.ascontiguousarray(L, dtype=float)
    h = hashlib.sha256()
    h.update(str(L.shape).encode())
    h.update(L.tobytes())
    return h.hexdigest()[:24]


def cached_eigendecompose(L, cache_dir=None) -> SpectralBasis:
    """:func:`eigendecompose` with an ``.npz`` sidecar keyed by a hash of ``L``."""
    if cache_dir is None:
        return eigendecompose(L)
    path = Path(cache_dir) / f"spectral-{_matrix_key(np.asarray(L))}.npz"
    if path.exists():
        with np.load(path) as data:
            U, w = data["U"], data["lambdas"]
        U.setflags(write=False)
        w.setflags(write=False)
        return SpectralBasis(U, w)
    basis = eigendecompose(L)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, U=basis.U, lambdas=basis.lambdas)
    tmp.replace(path)
    log.debug("cached spectral basis at %s", path)
    return basis


def _check_len(basis: SpectralBasis, v, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[0] != basis.n:
        raise ValueError(f"{what} has length {v.shape[0]}, expected {basis.n}")
    return v


def gft(basis: SpectralBasis, x) -> np.ndarray:
    """Graph Fourier transform ``U^T x``."""
    return basis.U.T @ _check_len(basis, x, "signal")


def igft(basis: SpectralBasis, s) -> np.ndarray:
    """Inverse graph Fourier transform ``U s``."""
    return basis.U @ _check_len(basis, s, "spectrum")


@dataclass(frozen=True, eq=False)
class BandlimitOperator:
    """Frequency set ``freqs``, reduced basis ``U_F`` and projector ``B = U_F U_F^T``."""

    freqs: np.ndarray
    U_F: np.ndarray
    B: np.ndarray

    @property
    def n(self) -> int:
        return self.B.shape[0]

    @property
    def size(self) -> int:
        return len(self.freqs)


def make_bandlimit(basis: SpectralBasis, freqs) -> BandlimitOperator:
    F = np.unique(np.asarray(freqs, dtype=np.intp))
    if F.size and (F[0] < 0 or F[-1] >= basis.n):
        raise ValueError(f"frequency indices must lie in [0, {basis.n})")
    U_F = np.ascontiguousarray(basis.U[:, F])
    B = U_F @ U_F.T
    B = 0.5 * (B + B.T)
    for a in (F, U_F, B):
        a.setflags(write=False)
    return BandlimitOperator(F, U_F, B)


def lowpass_bandlimit(basis: SpectralBasis, size: int) -> BandlimitOperator:
    """Band made of the ``size`` smallest-eigenvalue frequencies."""
    if not 0 <= size <= basis.n:
        raise ValueError(f"band size must be in [0, {basis.n}], got {size}")
    return make_bandlimit(basis, np.arange(size))


@dataclass(frozen=True, eq=False)
class SamplingSet:
    """Observed node indices and the implied 0/1 diagonal selector."""

    nodes: np.ndarray
    n: int

    def __post_init__(self):
        S = np.unique(np.asarray(self.nodes, dtype=np.intp))
        if S.size and (S[0] < 0 or S[-1] >= self.n):
            raise ValueError(f"sampled nodes must lie in [0, {self.n})")
        S.setflags(write=False)
        object.__setattr__(self, "nodes", S)

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def mask(self) -> np.ndarray:
        d = np.zeros(self.n)
        d[self.nodes] = 1.0
        return d

    @property
    def D(self) -> np.ndarray:
        return np.diag(self.mask)


def greedy_sampling(U_F, m: int, tol: float = 1e-10) -> SamplingSet:
    """Greedy sampling set of size ``m`` for recovering signals in ``span(U_F)``.

    While fewer than ``|F|`` rows are chosen, the next node maximizes the
    volume (product of singular values) of the selected rows of ``U_F``;
    from ``|F|`` rows on it maximizes their smallest singular value.
    Ties resolve to the lowest node index.
    """
    U_F = np.asarray(U_F, dtype=float)
    n, f = U_F.shape
    if f == 0:
        raise ValueError("band is empty")
    if not f <= m <= n:
        raise ValueError(f"need |F| <= m <= n, got |F|={f}, m={m}, n={n}")
    chosen: list[int] = []
    free = np.ones(n, dtype=bool)

    # volume phase: squared residual of each row against the span of chosen rows
    residual = np.einsum("ij,ij->i", U_F, U_F)
    basis = np.zeros((f, f))
    for k in range(f - 1):
        j = int(np.argmax(np.where(free, residual, -np.inf)))
        if residual[j] <= tol**2:
            raise SamplingError("rows of U_F are rank deficient; band not recoverable")
        chosen.append(j)
        free[j] = False
        q = U_F[j].copy()
        for _ in range(2):
            q -= basis[:k].T @ (basis[:k] @ q)
        q /= np.linalg.norm(q)
        basis[k] = q
        residual = residual - (U_F @ q) ** 2

    # conditioning phase: smallest singular value of the chosen rows
    G = U_F[chosen].T @ U_F[chosen]
    while len(chosen) < m:
        cand = np.flatnonzero(free)
        stacked = G[None, :, :] + U_F[cand][:, :, None] * U_F[cand][:, None, :]
        smin = np.sqrt(np.clip(np.linalg.eigvalsh(stacked)[:, 0], 0.0, None))
        best = int(np.argmax(smin))
        if len(chosen) + 1 == f and smin[best] <= tol:
            raise SamplingError("no sampling set makes U_F^T D_S U_F nonsingular")
        j = int(cand[best])
        chosen.append(j)
        free[j] = False
        G = G + np.outer(U_F[j], U_F[j])
    return SamplingSet(np.array(chosen), n)
