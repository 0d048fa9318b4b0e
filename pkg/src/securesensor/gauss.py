"""PSD-aware linear algebra and the causal MMSE estimator for noiseless linear outputs.

Everything here works on the control-free process x^o[k+1] = A x^o[k] + v[k],
whose statistics do not depend on any controller.  Sensor outputs enter as
s[k] = L[k]' x^o[k]; because the measurements are noiseless, rank-deficient
gains are the norm and all inversions are relative-tolerance pseudo-inverses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemModel

__all__ = [
    "psd_sqrt",
    "psd_pinv_sqrt",
    "CovarianceLadder",
    "propagate_open_loop",
    "EstimatorState",
    "estimator_step",
    "batch_conditional_H",
    "second_moment_sequence",
    "stacked_cross_moments",
    "matrix_powers",
]

PINV_TOL = 1e-10


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def checked_eigh(M: np.ndarray, sym_tol: float = 1e-9, neg_tol: float = 1e-9):
    """Eigen-decompose a nominally symmetric PSD matrix, clamping jitter.

    Raises ValueError when the input is materially asymmetric or indefinite.
    """
    M = np.asarray(M, dtype=float)
    scale = float(np.abs(M).max(initial=0.0))
    if not np.allclose(M, M.T, rtol=0.0, atol=sym_tol * (1.0 + scale)):
        raise ValueError("matrix is not symmetric within tolerance")
    w, U = np.linalg.eigh(symmetrize(M))
    if w.min(initial=0.0) < -neg_tol * max(1.0, scale):
        raise ValueError(f"matrix is significantly indefinite (min eig {w.min():.3e})")
    return np.clip(w, 0.0, None), U


def psd_sqrt(M: np.ndarray) -> np.ndarray:
    """Unique PSD square root via eigen-decomposition (negative jitter clamped)."""
    w, U = checked_eigh(M)
    return symmetrize((U * np.sqrt(w)) @ U.T)


def psd_pinv_sqrt(M: np.ndarray, tol: float = PINV_TOL) -> np.ndarray:
    """Pseudo-inverse square root: eigenvalues <= tol * max eig map to zero."""
    w, U = checked_eigh(M)
    wmax = w.max(initial=0.0)
    inv = np.where(w > tol * wmax, 1.0 / np.sqrt(np.where(w > 0, w, 1.0)), 0.0)
    return symmetrize((U * inv) @ U.T)


def psd_pinv(M: np.ndarray, tol: float = PINV_TOL) -> np.ndarray:
    """Pseudo-inverse of a symmetric PSD matrix with a relative eigenvalue cutoff."""
    w, U = checked_eigh(M)
    wmax = w.max(initial=0.0)
    inv = np.where(w > tol * wmax, 1.0 / np.where(w > 0, w, 1.0), 0.0)
    return symmetrize((U * inv) @ U.T)


def matrix_powers(A: np.ndarray, kmax: int) -> list[np.ndarray]:
    """[I, A, A^2, ..., A^kmax]."""
    out = [np.eye(A.shape[0])]
    for _ in range(kmax):
        out.append(A @ out[-1])
    return out


@dataclass
class CovarianceLadder:
    """Second moments Sigma^o[k] of the control-free state, k = 1..n."""

    A: np.ndarray
    sigma_o: list[np.ndarray]

    @property
    def n(self) -> int:
        return len(self.sigma_o)

    @property
    def m(self) -> int:
        return self.sigma_o[0].shape[0]

    def stage(self, k: int) -> np.ndarray:
        """Sigma^o[k] for 1-based stage k."""
        return self.sigma_o[k - 1]

    def stacked(self) -> np.ndarray:
        """Joint covariance of (x^o[n], ..., x^o[1]), time-descending blocks."""
        return stacked_cross_moments(self.A, self.sigma_o)


def propagate_open_loop(model: SystemModel) -> CovarianceLadder:
    """Run Sigma^o[k+1] = A Sigma^o[k] A' + SigmaV from Sigma^o[1] = Sigma1."""
    A = model.A
    sig = [symmetrize(model.Sigma1)]
    for _ in range(model.n - 1):
        sig.append(symmetrize(A @ sig[-1] @ A.T + model.SigmaV))
    return CovarianceLadder(A=A, sigma_o=sig)


def stacked_cross_moments(A: np.ndarray, blocks: list[np.ndarray]) -> np.ndarray:
    """Big matrix with X[k] on the diagonal and A^(k-l) X[l] off it.

    ``blocks`` is indexed by stage (blocks[k-1] = X[k]); the output orders
    block rows and columns time-descending (stage n first), the shared layout
    of every stacked operator in this package.
    """
    n = len(blocks)
    m = blocks[0].shape[0]
    Ap = matrix_powers(A, n - 1)
    out = np.zeros((n * m, n * m))
    for ki in range(n):          # ki = n - k (row position), stage k = n - ki
        k = n - ki
        for li in range(ki, n):  # stage l = n - li <= k
            l = n - li
            blk = Ap[k - l] @ blocks[l - 1]
            out[ki * m:(ki + 1) * m, li * m:(li + 1) * m] = blk
            if li != ki:
                out[li * m:(li + 1) * m, ki * m:(ki + 1) * m] = blk.T
    return out


@dataclass
class EstimatorState:
    """Conditional mean of x^o[k] given s[1..k] and its second moment H[k]."""

    k: int
    xhat: np.ndarray
    H: np.ndarray


def initial_estimator_state(m: int) -> EstimatorState:
    # Prior of stage 1 is an unconditioned zero-mean state: xhat = 0, H = O.
    return EstimatorState(k=0, xhat=np.zeros(m), H=np.zeros((m, m)))


def innovation_update(prior_cov: np.ndarray, L: np.ndarray, tol: float = PINV_TOL):
    """Gain and information increment for a noiseless measurement L' x.

    Returns (G, P) with G the gain applied to the m-dimensional innovation
    L'(x - prediction) and P = G L' prior_cov the increment added to the
    estimate's second moment.
    """
    W = prior_cov @ L
    C = symmetrize(L.T @ W)
    G = W @ psd_pinv(C, tol)
    P = symmetrize(G @ W.T)
    return G, P


def estimator_step(state: EstimatorState, L: np.ndarray, x_o: np.ndarray,
                   ladder: CovarianceLadder, tol: float = PINV_TOL) -> EstimatorState:
    """Advance the causal MMSE estimator by one stage.

    ``x_o`` must already be reduced to control-free coordinates: the caller
    subtracts the control offsets, which are measurable from past outputs, so
    the measurement seen here is exactly L' x^o[k].
    """
    A = ladder.A
    k = state.k + 1
    if not 1 <= k <= ladder.n:
        raise ValueError(f"stage {k} out of horizon 1..{ladder.n}")
    if L.shape != (ladder.m, ladder.m):
        raise ValueError(f"gain shape {L.shape} != ({ladder.m},{ladder.m})")
    pred = A @ state.xhat
    prior = symmetrize(ladder.stage(k) - A @ state.H @ A.T)
    G, P = innovation_update(prior, L, tol)
    xhat = pred + G @ (L.T @ (x_o - pred))
    H = symmetrize(A @ state.H @ A.T + P)
    return EstimatorState(k=k, xhat=xhat, H=H)


def second_moment_sequence(ladder: CovarianceLadder, gains: list[np.ndarray],
                           tol: float = PINV_TOL) -> list[np.ndarray]:
    """H[k] for k = 1..n from the estimator recursion (no sample paths needed)."""
    A = ladder.A
    H = np.zeros((ladder.m, ladder.m))
    out = []
    for k in range(1, ladder.n + 1):
        prior = symmetrize(ladder.stage(k) - A @ H @ A.T)
        _, P = innovation_update(prior, gains[k - 1], tol)
        H = symmetrize(A @ H @ A.T + P)
        out.append(H)
    return out


def _column_basis(L: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis of col(L); observing U'x is equivalent to observing L'x."""
    U, s, _ = np.linalg.svd(L, full_matrices=False)
    rank = int(np.sum(s > tol * (s[0] if s.size else 0.0)))
    return U[:, :rank]


def batch_conditional_H(model: SystemModel, gains: list[np.ndarray],
                        tol: float = PINV_TOL, reduce: bool = True) -> list[np.ndarray]:
    """H[k] by direct joint-Gaussian conditioning; independent of the recursion.

    Builds Cov(x^o[k], s[1..k]) and Cov(s[1..k]) from the open-loop moments
    and conditions in one shot per stage.  With ``reduce`` each s[j] is
    replaced by an orthonormal basis of its gain's column space, an
    information-preserving change of coordinates that keeps the Gram matrices
    small when gains are rank-deficient.
    """
    n, m = model.n, model.m
    if len(gains) != n:
        raise ValueError(f"expected {n} gains, got {len(gains)}")
    ladder = propagate_open_loop(model)
    Ap = matrix_powers(model.A, n)
    obs = [_column_basis(L) if reduce else np.asarray(L, dtype=float) for L in gains]

    # cross[j][l] = Cov(x^o[j], x^o[l]) = A^(j-l) Sigma^o[l] for j >= l
    def cov_x(j: int, l: int) -> np.ndarray:
        if j >= l:
            return Ap[j - l] @ ladder.stage(l)
        return ladder.stage(j) @ Ap[l - j].T

    out = []
    for k in range(1, n + 1):
        basis = obs[:k]
        widths = [b.shape[1] for b in basis]
        tot = sum(widths)
        if tot == 0:
            out.append(np.zeros((m, m)))
            continue
        Cs = np.zeros((tot, tot))
        Cxs = np.zeros((m, tot))
        offs = np.concatenate([[0], np.cumsum(widths)])
        for j in range(1, k + 1):
            Cxs[:, offs[j - 1]:offs[j]] = cov_x(k, j) @ basis[j - 1]
            for l in range(1, j + 1):
                blk = basis[j - 1].T @ cov_x(j, l) @ basis[l - 1]
                Cs[offs[j - 1]:offs[j], offs[l - 1]:offs[l]] = blk
                if l != j:
                    Cs[offs[l - 1]:offs[l], offs[j - 1]:offs[j]] = blk.T
        out.append(symmetrize(Cxs @ psd_pinv(Cs, tol) @ Cxs.T))
    return out
