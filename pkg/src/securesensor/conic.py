"""Chained-PSD semidefinite program: conic emission and solver backends.

The problem solved here is

    min  sum_k tr(V[k] S[k])   s.t.   Sigma[k] >= S[k] >= A S[k-1] A',  S[0] = 0,

a linear SDP over n symmetric m x m blocks with 2n PSD cone constraints.  It
is emitted in standard primal conic form (scaled-triangle vectorization) and
handed to a backend:

* ``clarabel`` (default when installed): interior-point conic solver, tight
  duality gaps.
* ``barrier``: dependency-free log-det barrier path following specialized to
  the chain.  The barrier only couples neighbouring stages, so each Newton
  step is a block-tridiagonal solve; gaps around 1e-7 relative, a little
  slower than the conic backend.  Used when no conic solver is installed.

A feasible point always exists (the zero chain S[k] = A S[k-1] A' from 0), so
backend failures signal numerical breakdown, not infeasibility.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .gauss import symmetrize

__all__ = [
    "ChainedSdp",
    "SdpOptions",
    "SdpResult",
    "solve",
    "svec",
    "smat",
]

_SQRT2 = np.sqrt(2.0)


def svec(M: np.ndarray) -> np.ndarray:
    """Scaled upper-triangle vectorization, column-major; tr(MN) = svec(M).svec(N)."""
    m = M.shape[0]
    out = np.empty(m * (m + 1) // 2)
    idx = 0
    for j in range(m):
        for i in range(j + 1):
            out[idx] = M[i, j] * (1.0 if i == j else _SQRT2)
            idx += 1
    return out


def smat(v: np.ndarray) -> np.ndarray:
    m = int((np.sqrt(8 * v.size + 1) - 1) / 2)
    M = np.zeros((m, m))
    idx = 0
    for j in range(m):
        for i in range(j + 1):
            if i == j:
                M[i, j] = v[idx]
            else:
                M[i, j] = M[j, i] = v[idx] / _SQRT2
            idx += 1
    return M


def _conjugation_operator(A: np.ndarray) -> np.ndarray:
    """Matrix C with svec(A X A') = C svec(X) for symmetric X."""
    m = A.shape[0]
    d = m * (m + 1) // 2
    C = np.empty((d, d))
    idx = 0
    for j in range(m):
        for i in range(j + 1):
            E = np.zeros((m, m))
            E[i, j] = E[j, i] = 1.0 if i == j else 1.0 / _SQRT2
            C[:, idx] = svec(A @ E @ A.T)
            idx += 1
    return C


@dataclass
class SdpOptions:
    backend: str = "auto"          # auto | clarabel | barrier
    tol_rel: float = 1e-8          # relative duality-gap target
    tol_abs: float = 1e-10
    tol_feas: float = 1e-9
    max_iter: int = 300
    tiebreak: float | None = None  # trace penalty; None derives it from ||V||
    verbose: bool = False


@dataclass
class SdpResult:
    S: list[np.ndarray]
    objective: float               # sum tr(V S) at the returned point, no tie-break term
    stats: dict = field(default_factory=dict)


@dataclass
class ChainedSdp:
    """Problem data plus the standard-form emission used by the backends."""

    V: list[np.ndarray]
    sigma: list[np.ndarray]
    A: np.ndarray

    @property
    def n(self) -> int:
        return len(self.V)

    @property
    def m(self) -> int:
        return self.A.shape[0]

    def tiebreak_default(self) -> float:
        """Trace penalty that prefers the least-disclosing optimal chain.

        Cost directions the scenarios do not care about leave the optimal
        face flat; a penalty well below the backend's gap resolution cannot
        pin the vertex, so the default sits at 1e-5 of the objective scale.
        The optimal value moves by far less than that (only near-costless
        directions are affected) while the extracted projections stay sharply
        idempotent.
        """
        scale = max(float(np.linalg.norm(Vk, 2)) for Vk in self.V)
        return 1e-5 * max(scale, 1.0)

    def objective_value(self, S: list[np.ndarray]) -> float:
        return float(sum(np.tensordot(Vk, Sk) for Vk, Sk in zip(self.V, S)))

    def feasibility_margin(self, S: list[np.ndarray]) -> float:
        """Most negative constraint eigenvalue, normalized by each stage's scale."""
        worst = 0.0
        prev = np.zeros((self.m, self.m))
        for Sk, Sig in zip(S, self.sigma):
            scale = max(1.0, float(np.linalg.norm(Sig, 2)))
            lo = np.linalg.eigvalsh(symmetrize(Sk - self.A @ prev @ self.A.T)).min()
            hi = np.linalg.eigvalsh(symmetrize(Sig - Sk)).min()
            worst = min(worst, lo / scale, hi / scale)
            prev = Sk
        return float(worst)

    def to_conic(self, eps: float):
        """Standard primal form: min q'x s.t. Ax + s = b, s in PSD cones.

        Variables are the stacked svec(S[k]); cone blocks alternate
        (Sigma[k] - S[k], S[k] - A S[k-1] A') for k = 1..n.
        """
        n, m = self.n, self.m
        d = m * (m + 1) // 2
        CA = _conjugation_operator(self.A)
        I = sparse.identity(d, format="csc")
        CAs = sparse.csc_matrix(CA)
        q = np.concatenate([svec(symmetrize(Vk) + eps * np.eye(m)) for Vk in self.V])
        rows = []
        b = []
        for k in range(n):
            upper = [None] * n
            upper[k] = I
            rows.append(upper)
            b.append(svec(symmetrize(self.sigma[k])))
            lower = [None] * n
            lower[k] = -I
            if k > 0:
                lower[k - 1] = CAs
            rows.append(lower)
            b.append(np.zeros(d))
        Amat = sparse.bmat(rows, format="csc")
        return q, Amat, np.concatenate(b), [m] * (2 * n)


def _clarabel_available() -> bool:
    try:
        import clarabel  # noqa: F401
        return True
    except ImportError:
        return False


def _solve_clarabel(prob: ChainedSdp, opts: SdpOptions, eps: float) -> SdpResult:
    import clarabel

    q, Amat, b, cone_dims = prob.to_conic(eps)
    settings = clarabel.DefaultSettings()
    settings.verbose = opts.verbose
    settings.tol_gap_rel = opts.tol_rel
    settings.tol_gap_abs = opts.tol_abs
    settings.tol_feas = opts.tol_feas
    settings.max_iter = opts.max_iter
    P = sparse.csc_matrix((q.size, q.size))
    cones = [clarabel.PSDTriangleConeT(mm) for mm in cone_dims]
    solver = clarabel.DefaultSolver(P, q, Amat, b, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    if status not in ("SolverStatus.Solved", "Solved", "SolverStatus.AlmostSolved", "AlmostSolved"):
        raise RuntimeError(f"conic backend failed with status {status}; "
                           "the chained problem is always feasible, so this is numerical")
    d = prob.m * (prob.m + 1) // 2
    x = np.asarray(sol.x)
    S = [symmetrize(smat(x[k * d:(k + 1) * d])) for k in range(prob.n)]
    stats = {
        "backend": "clarabel",
        "status": status,
        "iterations": int(sol.iterations),
        "solve_time": float(sol.solve_time),
        "primal_residual": float(getattr(sol, "r_prim", np.nan)),
        "dual_residual": float(getattr(sol, "r_dual", np.nan)),
        "feasibility_margin": prob.feasibility_margin(S),
        "tiebreak": eps,
    }
    return SdpResult(S=S, objective=prob.objective_value(S), stats=stats)


def _sym_kron(M: np.ndarray) -> np.ndarray:
    """K with svec(dX)' K svec(dX) = tr(M dX M dX) for symmetric dX."""
    m = M.shape[0]
    d = m * (m + 1) // 2
    K = np.empty((d, d))
    idx = 0
    for j in range(m):
        for i in range(j + 1):
            E = np.zeros((m, m))
            E[i, j] = E[j, i] = 1.0 if i == j else 1.0 / _SQRT2
            K[:, idx] = svec(M @ E @ M)
            idx += 1
    return K


def _chol_pd(M: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(symmetrize(M))
        return True
    except np.linalg.LinAlgError:
        return False


class _BarrierState:
    """Gradient/Hessian bookkeeping of the chain's log-det barrier."""

    def __init__(self, prob: ChainedSdp):
        self.prob = prob
        self.CA = _conjugation_operator(prob.A)
        self.d = prob.m * (prob.m + 1) // 2

    def slacks(self, S):
        A = self.prob.A
        prev = np.zeros_like(S[0])
        upper, lower = [], []
        for Sk, Sig in zip(S, self.prob.sigma):
            upper.append(symmetrize(Sig - Sk))
            lower.append(symmetrize(Sk - A @ prev @ A.T))
            prev = Sk
        return upper, lower

    def feasible(self, S) -> bool:
        upper, lower = self.slacks(S)
        return all(_chol_pd(X) for X in upper + lower)

    def value(self, S) -> float:
        upper, lower = self.slacks(S)
        out = 0.0
        for X in upper + lower:
            sign, ld = np.linalg.slogdet(X)
            if sign <= 0:
                return np.inf
            out -= ld
        return out

    def grad_hess(self, S):
        """Barrier gradient (stacked svec) and block-tridiagonal Hessian."""
        n, d = self.prob.n, self.d
        A = self.prob.A
        upper, lower = self.slacks(S)
        ui = [np.linalg.inv(X) for X in upper]
        li = [np.linalg.inv(X) for X in lower]
        grad = np.zeros(n * d)
        diag = [np.zeros((d, d)) for _ in range(n)]
        off = [np.zeros((d, d)) for _ in range(n - 1)]  # off[k-1]: (k, k-1) block
        for k in range(n):
            grad[k * d:(k + 1) * d] += svec(symmetrize(ui[k])) - svec(symmetrize(li[k]))
            Ku = _sym_kron(symmetrize(ui[k]))
            Kl = _sym_kron(symmetrize(li[k]))
            diag[k] += Ku + Kl
            if k + 1 < n:
                grad[k * d:(k + 1) * d] += svec(symmetrize(A.T @ li[k + 1] @ A))
                Kn = _sym_kron(symmetrize(li[k + 1]))
                diag[k] += self.CA.T @ Kn @ self.CA
                off[k] = -Kn @ self.CA
        return grad, diag, off


def _solve_block_tridiag(diag, off, rhs, d):
    """Solve the SPD block-tridiagonal system by block LDL (Thomas) elimination."""
    from scipy.linalg import cho_factor, cho_solve
    n = len(diag)
    facs = [None] * n
    subs = [None] * (n - 1)
    Dk = diag[0]
    facs[0] = cho_factor(0.5 * (Dk + Dk.T))
    b = [rhs[k * d:(k + 1) * d].copy() for k in range(n)]
    for k in range(1, n):
        L = off[k - 1]                       # block (k, k-1)
        W = cho_solve(facs[k - 1], L.T)      # D_{k-1}^{-1} L'
        subs[k - 1] = W
        Dk = diag[k] - L @ W
        facs[k] = cho_factor(0.5 * (Dk + Dk.T))
        b[k] = b[k] - L @ cho_solve(facs[k - 1], b[k - 1])
    x = [None] * n
    x[n - 1] = cho_solve(facs[n - 1], b[n - 1])
    for k in range(n - 2, -1, -1):
        x[k] = cho_solve(facs[k], b[k]) - subs[k] @ x[k + 1]
    return np.concatenate(x)


def _solve_barrier(prob: ChainedSdp, opts: SdpOptions, eps: float) -> SdpResult:
    """Primal log-det barrier path following on the chain.

    The barrier parameter nu is 2 n m, so the duality gap after centering at
    weight t is at most nu / t; t grows geometrically until the gap target is
    met.  Every iterate stays strictly feasible.
    """
    n, m = prob.n, prob.m
    d = m * (m + 1) // 2
    state = _BarrierState(prob)
    c = np.concatenate([svec(symmetrize(Vk) + eps * np.eye(m)) for Vk in prob.V])

    # strictly interior start: midpoints of the chain intervals
    S = []
    prev = np.zeros((m, m))
    for k in range(n):
        S.append(symmetrize(0.5 * (prob.A @ prev @ prob.A.T + prob.sigma[k])))
        prev = S[-1]
    x = np.concatenate([svec(Sk) for Sk in S])

    def unpack(xv):
        return [smat(xv[k * d:(k + 1) * d]) for k in range(n)]

    nu = 2.0 * n * m
    obj0 = abs(float(c @ x)) + 1.0
    t = max(1.0, nu / obj0)
    gap_target = max(opts.tol_abs, opts.tol_rel * obj0)
    newton_total = 0
    while True:
        for _ in range(60):
            S = unpack(x)
            g_phi, diag, off = state.grad_hess(S)
            g = t * c + g_phi
            step = _solve_block_tridiag(diag, off, -g, d)
            decrement = float(-g @ step)   # Newton decrement squared
            fx = t * float(c @ x) + state.value(S)
            if decrement <= 0 or 0.5 * decrement < 1e-11 * max(1.0, abs(fx)):
                break
            alpha = 1.0
            accepted = False
            for _ in range(60):
                xn = x + alpha * step
                if state.feasible(unpack(xn)):
                    fn = t * float(c @ xn) + state.value(unpack(xn))
                    if fn < fx:
                        accepted = True
                        break
                alpha *= 0.5
            if not accepted:
                break
            x = xn
            newton_total += 1
        if nu / t <= gap_target:
            break
        t *= 10.0
        if newton_total > 4000:
            raise RuntimeError("barrier backend failed to converge; numerical breakdown")
    S = [symmetrize(Sk) for Sk in unpack(x)]
    stats = {
        "backend": "barrier",
        "iterations": newton_total,
        "duality_gap_bound": nu / t,
        "feasibility_margin": prob.feasibility_margin(S),
        "tiebreak": eps,
    }
    return SdpResult(S=S, objective=prob.objective_value(S), stats=stats)


def solve(prob: ChainedSdp, opts: SdpOptions | None = None) -> SdpResult:
    opts = opts or SdpOptions()
    eps = prob.tiebreak_default() if opts.tiebreak is None else opts.tiebreak
    backend = opts.backend
    if backend == "auto":
        backend = "clarabel" if _clarabel_available() else "barrier"
    if backend == "clarabel":
        return _solve_clarabel(prob, opts, eps)
    if backend == "barrier":
        return _solve_barrier(prob, opts, eps)
    raise ValueError(f"unknown SDP backend {backend!r}")
