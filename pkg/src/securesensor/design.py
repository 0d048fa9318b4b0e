"""Sensor synthesis: objective assembly, chained-SDP relaxation, gain extraction.

Pipeline: per-scenario operators give the quadratic objective coefficients
(Pi, Pi_o); the relaxation over disclosure covariances S[k] is a linear SDP
with the chain constraints Sigma[k] >= S[k] >= A S[k-1] A'; the optimal
S[k] decompose through symmetric idempotent matrices whose unit eigenvectors
yield the memoryless sensor gains, and the design is certified by checking
that the gains actually achieve S[k] as estimate second moments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import conic
from .conic import ChainedSdp, SdpOptions
from .gauss import (CovarianceLadder, batch_conditional_H, checked_eigh,
                    psd_pinv_sqrt, symmetrize)
from .model import AttackerSpec, FriendlyObjective, SystemModel, validate
from .riccati import sensor_constant, truncated_sensor_tables
from .scenarios import ScenarioSet
from .stacked import OperatorSuite, build_operator_suite, sensor_cost_blocks

__all__ = [
    "ObjectiveCoefficients",
    "SdpSolution",
    "SensorDesign",
    "ExtractionError",
    "CertificationError",
    "assemble_objective",
    "solve_chained_sdp",
    "extract_gains",
    "secure_sensor_design",
]

CERTIFY_TOL = 1e-6
IDEMPOTENT_ERROR = 0.05
WARN_BAND = (0.1, 0.9)


class ExtractionError(RuntimeError):
    """Projection extraction is too far from idempotent; tighten SDP tolerances."""


class CertificationError(RuntimeError):
    """Extracted gains fail to reproduce the certified covariances."""


@dataclass
class ObjectiveCoefficients:
    """Scenario-averaged quadratic coefficients of the sensor objective.

    The strategy-dependent part is sum_k tr(V[k] H[k]); pi_o collects every
    strategy-independent term (including the per-scenario cost floors).
    """

    pi: np.ndarray
    pi_o: float
    V: list[np.ndarray]
    avg_constant: float  # measure-weighted cost floor, excluded by the Jhat metric


@dataclass
class SdpSolution:
    S: list[np.ndarray]
    objective: float
    stats: dict = field(default_factory=dict)


@dataclass
class SensorDesign:
    """Per-stage sensor gains with their certificate.

    ``gains[k-1]`` is the m x m output map of stage k (sensor emits
    gains[k-1]' x[k]); rank-deficient gains keep zeroed columns so shapes stay
    uniform.
    """

    tag: str
    gains: list[np.ndarray]
    S: list[np.ndarray] | None = None
    projections: list[np.ndarray] | None = None
    ranks: list[int] | None = None
    eigenvalue_warnings: list[str] = field(default_factory=list)
    certification: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.gains)


def assemble_objective(suite: OperatorSuite) -> ObjectiveCoefficients:
    """Measure-weighted Pi, Pi_o, and the per-stage V blocks."""
    model = suite.model
    n, m, r = model.n, model.m, model.r
    sigma_stack = suite.ladder.stacked()
    Pi = np.zeros((n * m, n * m))
    pi_o = 0.0
    avg_g = 0.0

    cache: dict[int, tuple] = {}
    for op in suite.operators:
        sc = op.scenario
        if np.isnan(sc.mu):
            raise ValueError("scenario set has unassigned measures")
        if sc.mu == 0.0 or sc.n_T == 0:
            continue
        nT = sc.n_T
        if nT not in cache:
            trunc = truncated_sensor_tables(suite.ftables, nT)
            Delta, K = sensor_cost_blocks(trunc, n, m)
            DK = Delta @ K
            const = float(np.sum(DK * (K @ sigma_stack)))  # tr(Sigma K' Delta K)
            g = sensor_constant(model, suite.ftables, nT)
            cache[nT] = (Delta, K, DK, const, g)
        Delta, K, DK, const, g = cache[nT]
        DXi = Delta @ op.Xi
        cross = op.Xi.T @ DK
        Pi += sc.mu * (op.Xi.T @ DXi + cross + cross.T)
        pi_o += sc.mu * (const + float(op.xi @ Delta @ op.xi) + g)
        avg_g += sc.mu * g

    Pi = symmetrize(Pi)
    V = _v_blocks(Pi, model.A, n, m)
    return ObjectiveCoefficients(pi=Pi, pi_o=pi_o, V=V, avg_constant=avg_g)


def _v_blocks(Pi: np.ndarray, A: np.ndarray, n: int, m: int) -> list[np.ndarray]:
    """Fold the stacked coefficient matrix into per-stage V[k].

    tr(Hhat Pi) = sum_k tr(V[k] H[k]) for any Hhat with blocks
    A^(j-l) H[l]; stage k lives at block position n - k.
    """
    Ap = [np.eye(m)]
    for _ in range(n - 1):
        Ap.append(A @ Ap[-1])
    V = []
    for k in range(1, n + 1):
        pk = (n - k) * m
        acc = Pi[pk:pk + m, pk:pk + m].copy()
        for l in range(k + 1, n + 1):
            pl = (n - l) * m
            M = Pi[pk:pk + m, pl:pl + m] @ Ap[l - k]
            acc += M + M.T
        V.append(symmetrize(acc))
    return V


def solve_chained_sdp(V: list[np.ndarray], ladder: CovarianceLadder,
                      A: np.ndarray, options: SdpOptions | None = None) -> SdpSolution:
    """Minimize sum tr(V[k] S[k]) over the feasible disclosure chain.

    The objective is normalized to unit spectral scale before the solve so
    the backend's absolute tolerances bite regardless of how small the
    coefficient matrices are; the reported objective is in original units.
    """
    vscale = max((float(np.linalg.norm(Vk, 2)) for Vk in V), default=1.0)
    if vscale <= 0.0:
        vscale = 1.0
    prob = ChainedSdp(V=[Vk / vscale for Vk in V], sigma=ladder.sigma_o, A=A)
    res = conic.solve(prob, options)
    stats = dict(res.stats)
    stats["objective_scale"] = vscale
    return SdpSolution(S=res.S, objective=vscale * res.objective, stats=stats)


def extract_gains(sol: SdpSolution, ladder: CovarianceLadder, A: np.ndarray,
                  pinv_tol: float = 1e-10,
                  idempotent_error: float = IDEMPOTENT_ERROR,
                  warn_band: tuple[float, float] = WARN_BAND) -> SensorDesign:
    """Recover per-stage gains by rounding each stage's projection to {0, 1}.

    Each stage's fresh-information matrix factors through a symmetric
    idempotent projection; interior-point backends return it with small
    eigenvalue slack, so eigenvalues are snapped to {0, 1} at 0.5 (mid-band
    values mean solver slack and are reported) and the certified chain is
    rebuilt from the rounded projections.  The rebuilt chain is feasible by
    construction and exactly attained by the extracted gains; its distance to
    the raw solver iterate is recorded for inspection.
    """
    n, m = ladder.n, ladder.m
    gains, projections, ranks, warnings = [], [], [], []
    certified = []
    prev = np.zeros((m, m))
    max_idem = 0.0
    round_dist = 0.0
    for k in range(1, n + 1):
        shifted = A @ prev @ A.T
        D = symmetrize(ladder.stage(k) - shifted)
        fresh = symmetrize(sol.S[k - 1] - shifted)
        # Solver slack can leave slightly indefinite differences; clamp it.
        Dhalf = psd_sqrt_clamped(D)
        Dinv2 = psd_pinv_sqrt(_clamp_psd(D), pinv_tol)
        P = symmetrize(Dinv2 @ fresh @ Dinv2)
        idem = float(np.linalg.norm(P @ P - P))
        max_idem = max(max_idem, idem)
        if idem > idempotent_error:
            raise ExtractionError(
                f"stage {k}: projection is {idem:.3g} from idempotent "
                f"(limit {idempotent_error}); tighten the SDP tolerances")
        w, U = np.linalg.eigh(P)
        mid = w[(w >= warn_band[0]) & (w <= warn_band[1])]
        if mid.size:
            warnings.append(
                f"stage {k}: projection eigenvalues {np.round(mid, 4).tolist()} in "
                f"warning band {warn_band}; rounded at 0.5")
        rounded = (w > 0.5).astype(float)
        Pround = symmetrize((U * rounded) @ U.T)
        gains.append(Dinv2 @ (U * rounded))
        projections.append(Pround)
        ranks.append(int(rounded.sum()))
        Sk = symmetrize(shifted + Dhalf @ Pround @ Dhalf)
        round_dist = max(round_dist, float(
            np.linalg.norm(Sk - sol.S[k - 1]) / (1.0 + np.linalg.norm(sol.S[k - 1]))))
        certified.append(Sk)
        prev = Sk
    return SensorDesign(tag="secure", gains=gains, S=certified,
                        projections=projections, ranks=ranks,
                        eigenvalue_warnings=warnings,
                        certification={"max_idempotency_error": max_idem,
                                       "rounding_distance": round_dist})


def _clamp_psd(M: np.ndarray) -> np.ndarray:
    w, U = checked_eigh(M, neg_tol=1e-6)
    return symmetrize((U * w) @ U.T)


def psd_sqrt_clamped(M: np.ndarray) -> np.ndarray:
    w, U = checked_eigh(M, neg_tol=1e-6)
    return symmetrize((U * np.sqrt(w)) @ U.T)


def secure_sensor_design(model: SystemModel, obj: FriendlyObjective,
                         attackers: list[AttackerSpec], sset: ScenarioSet,
                         options: SdpOptions | None = None,
                         certify_tol: float = CERTIFY_TOL,
                         suite: OperatorSuite | None = None,
                         pinv_tol: float = 1e-10) -> SensorDesign:
    """Full synthesis: tables, operators, SDP, extraction, certification.

    The certificate recomputes the achieved estimate second moments by direct
    joint-Gaussian conditioning and demands they match the SDP solution; a
    mismatch is a hard error because every downstream cost claim rests on it.
    """
    rep = validate(model, obj, attackers)
    if not rep.ok:
        raise ValueError(f"invalid problem data: {rep}")
    sset.validate()
    if suite is None:
        suite = build_operator_suite(model, obj, attackers, sset)
    coeffs = assemble_objective(suite)
    sol = solve_chained_sdp(coeffs.V, suite.ladder, model.A, options)
    design = extract_gains(sol, suite.ladder, model.A, pinv_tol=pinv_tol)

    achieved = batch_conditional_H(model, design.gains, tol=pinv_tol)
    rel = max(
        float(np.linalg.norm(Hk - Sk) / (1.0 + np.linalg.norm(Sk)))
        for Hk, Sk in zip(achieved, design.S))
    attained = float(sum(np.tensordot(Vk, Hk) for Vk, Hk in zip(coeffs.V, achieved)))
    certified_obj = float(sum(np.tensordot(Vk, Sk) for Vk, Sk in zip(coeffs.V, design.S)))
    design.certification.update({
        "max_rel_covariance_error": rel,
        "sdp_objective": certified_obj,
        "solver_objective": sol.objective,
        "achieved_objective": attained,
        "average_cost": attained + coeffs.pi_o - coeffs.avg_constant,
        "solver": sol.stats,
        "warnings": list(design.eigenvalue_warnings),
    })
    if rel > certify_tol:
        raise CertificationError(
            f"achieved covariances deviate from the certificate by {rel:.3g} "
            f"relative (limit {certify_tol})")
    return design
