"""Plant, objective, and attacker descriptions plus random benchmark instances.

The plant is a finite-horizon controlled Gauss-Markov process

    x[k+1] = A x[k] + B u[k] + v[k],    k = 1..n,

with x[1] ~ N(0, Sigma1) and v[k] ~ N(0, SigmaV) white.  An optional noisy
control-observation channel y[k] = D u[k] + w[k] can be attached; it is used
only when emitting simulation traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SystemModel",
    "FriendlyObjective",
    "AttackerSpec",
    "ValidationReport",
    "validate",
    "generate_random_instance",
]

# Relative singular-value cutoff below which a square matrix counts as singular.
SINGULARITY_TOL = 1e-12

# Relative tolerances for symmetry / definiteness checks.
SYM_TOL = 1e-9
EIG_TOL = 1e-9


def _as_matrix(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


def _as_vector(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass
class SystemModel:
    """Time-invariant plant data: dynamics, noise covariances, horizon."""

    A: np.ndarray
    B: np.ndarray
    Sigma1: np.ndarray
    SigmaV: np.ndarray
    n: int
    D: np.ndarray | None = None
    SigmaW: np.ndarray | None = None

    def __post_init__(self):
        self.A = _as_matrix(self.A)
        self.B = _as_matrix(self.B)
        self.Sigma1 = _as_matrix(self.Sigma1)
        self.SigmaV = _as_matrix(self.SigmaV)
        self.n = int(self.n)
        if self.D is not None:
            self.D = _as_matrix(self.D)
        if self.SigmaW is not None:
            self.SigmaW = _as_matrix(self.SigmaW)

    @property
    def m(self) -> int:
        """State dimension."""
        return self.A.shape[0]

    @property
    def r(self) -> int:
        """Control dimension."""
        return self.B.shape[1]


@dataclass
class FriendlyObjective:
    """Quadratic weights of the system-desired cost: sum of |x[k+1]|^2_QF + |u[k]|^2_RF."""

    QF: np.ndarray
    RF: np.ndarray

    def __post_init__(self):
        self.QF = _as_matrix(self.QF)
        self.RF = _as_matrix(self.RF)


@dataclass
class AttackerSpec:
    """One adversary: drives the state toward ``z`` while staying inconspicuous.

    The attacker's stage cost is |x[k+1] - z|^2_QA + lam * |x[k+1]|^2_QF
    + |u[k] - uF[k]|^2_RA, the last two terms acting as soft stealth
    constraints on state energy and control deviation.
    """

    QA: np.ndarray
    RA: np.ndarray
    lam: float
    z: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.QA = _as_matrix(self.QA)
        self.RA = _as_matrix(self.RA)
        self.lam = float(self.lam)
        self.z = _as_vector(self.z)


@dataclass
class ValidationReport:
    """Accumulated standing-assumption violations; empty means valid."""

    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def add(self, msg: str):
        self.problems.append(msg)

    def __str__(self):
        return "ok" if self.ok else "; ".join(self.problems)


def is_symmetric(M: np.ndarray, tol: float = SYM_TOL) -> bool:
    return np.allclose(M, M.T, rtol=0.0, atol=tol * (1.0 + np.abs(M).max(initial=0.0)))


def _min_eig(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (M + M.T)).min())


def is_psd(M: np.ndarray, tol: float = EIG_TOL) -> bool:
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    return is_symmetric(M) and _min_eig(M) >= -tol * scale


def is_pd(M: np.ndarray, tol: float = EIG_TOL) -> bool:
    scale = max(1.0, float(np.abs(M).max(initial=0.0)))
    return is_symmetric(M) and _min_eig(M) > tol * scale


def is_nonsingular(M: np.ndarray, tol: float = SINGULARITY_TOL) -> bool:
    """Scale-free non-singularity test: smallest/largest singular value ratio."""
    if M.shape[0] != M.shape[1]:
        return False
    s = np.linalg.svd(M, compute_uv=False)
    return s[-1] > tol * max(s[0], np.finfo(float).tiny)


def validate(model: SystemModel,
             obj: FriendlyObjective | None = None,
             attackers: list[AttackerSpec] | None = None) -> ValidationReport:
    """Check every standing assumption; violations are reported, never raised."""
    rep = ValidationReport()
    m, r = model.m, model.r

    if model.A.shape != (m, m):
        rep.add(f"A not square: {model.A.shape}")
    elif not is_nonsingular(model.A):
        rep.add("A singular")
    if model.B.shape != (m, r):
        rep.add(f"B shape mismatch: {model.B.shape} vs ({m},{r})")
    if model.Sigma1.shape != (m, m):
        rep.add(f"Sigma1 shape mismatch: {model.Sigma1.shape}")
    elif not is_pd(model.Sigma1):
        rep.add("Sigma1 not positive definite")
    if model.SigmaV.shape != (m, m):
        rep.add(f"SigmaV shape mismatch: {model.SigmaV.shape}")
    elif not is_pd(model.SigmaV):
        rep.add("SigmaV not positive definite")
    if model.n < 1:
        rep.add(f"horizon n must be >= 1, got {model.n}")
    if (model.D is None) != (model.SigmaW is None):
        rep.add("D and SigmaW must be given together")
    if model.D is not None and model.D.shape != (r, r):
        rep.add(f"D shape mismatch: {model.D.shape} vs ({r},{r})")
    if model.SigmaW is not None:
        if model.SigmaW.shape != (r, r):
            rep.add(f"SigmaW shape mismatch: {model.SigmaW.shape}")
        elif not is_psd(model.SigmaW):
            rep.add("SigmaW not positive semi-definite")

    if obj is not None:
        if obj.QF.shape != (m, m):
            rep.add(f"Q_F shape mismatch: {obj.QF.shape}")
        elif not is_psd(obj.QF):
            rep.add("Q_F not positive semi-definite")
        if obj.RF.shape != (r, r):
            rep.add(f"R_F shape mismatch: {obj.RF.shape}")
        elif not is_pd(obj.RF):
            rep.add("R_F not positive definite")

    for i, atk in enumerate(attackers or []):
        tag = atk.name or f"attacker {i + 1}"
        if atk.QA.shape != (m, m):
            rep.add(f"{tag}: Q_A shape mismatch: {atk.QA.shape}")
        elif not is_psd(atk.QA):
            rep.add(f"{tag}: Q_A not positive semi-definite")
        if atk.RA.shape != (r, r):
            rep.add(f"{tag}: R_A shape mismatch: {atk.RA.shape}")
        elif not is_pd(atk.RA):
            rep.add(f"{tag}: R_A not positive definite")
        if atk.lam < 0:
            rep.add(f"{tag}: lambda negative")
        if atk.z.shape != (m,):
            rep.add(f"{tag}: z shape mismatch: {atk.z.shape}")

    return rep


def _random_covariance(rng: np.random.Generator, m: int) -> np.ndarray:
    # (D + D')/2 + 2m I is diagonally dominant with positive diagonal, hence PD.
    D = rng.uniform(0.0, 1.0, size=(m, m))
    return 0.5 * (D + D.T) + 2.0 * m * np.eye(m)


def generate_random_instance(seed: int, m: int, r: int, n: int,
                             max_tries: int = 1000) -> tuple[SystemModel, dict]:
    """Draw a benchmark plant: uniform A, B scaled by 0.1, dominant covariances.

    A is resampled until non-singular; SigmaV carries an extra factor of 10 so
    that sensor information stays valuable to the controller.  Deterministic
    given the seed.
    """
    if min(m, r, n) < 1:
        raise ValueError("m, r, n must all be >= 1")
    rng = np.random.default_rng(seed)
    tries = 0
    while True:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"could not draw a non-singular A in {max_tries} tries")
        A = 0.1 * rng.uniform(0.0, 1.0, size=(m, m))
        if is_nonsingular(A):
            break
    B = 0.1 * rng.uniform(0.0, 1.0, size=(m, r))
    Sigma1 = _random_covariance(rng, m)
    SigmaV = 10.0 * _random_covariance(rng, m)
    model = SystemModel(A=A, B=B, Sigma1=Sigma1, SigmaV=SigmaV, n=n)
    svals = np.linalg.svd(A, compute_uv=False)
    diagnostics = {"tries": tries, "a_cond": float(svals[0] / svals[-1])}
    return model, diagnostics


def benchmark_objective(m: int, r: int) -> FriendlyObjective:
    """Benchmark friendly weights: identity on the first half of the state."""
    if m % 2:
        raise ValueError("benchmark Q_F needs an even state dimension")
    QF = np.zeros((m, m))
    QF[: m // 2, : m // 2] = np.eye(m // 2)
    return FriendlyObjective(QF=QF, RF=np.eye(r))


def benchmark_attackers(m: int, r: int, seed: int, lam: float = 0.1) -> list[AttackerSpec]:
    """Benchmark adversary pair: targets on the last quarter / last half of the state."""
    if m % 4:
        raise ValueError("benchmark attacker weights need m divisible by 4")
    rng = np.random.default_rng(seed)
    QA1 = np.zeros((m, m))
    QA1[-(m // 4):, -(m // 4):] = np.eye(m // 4)
    QA2 = np.zeros((m, m))
    QA2[-(m // 2):, -(m // 2):] = np.eye(m // 2)
    z1 = rng.standard_normal(m)
    z2 = rng.standard_normal(m)
    return [
        AttackerSpec(QA=QA1, RA=np.eye(r), lam=lam, z=z1, name="A1"),
        AttackerSpec(QA=QA2, RA=np.eye(r), lam=lam, z=z2, name="A2"),
    ]
