"""Stacked block operators tying estimates to controls, per agent and scenario.

Module-wide contract: every stacked vector or matrix orders its blocks
time-descending (stage n on top).  Mixing orders is the likeliest bug in this
construction, so all assembly goes through the helpers here.

The input-coupling matrices (one per agent) are unit block-upper-triangular
with off-diagonal blocks K[t] A^(t-s-1) B; they are never inverted explicitly,
only applied or solved by block back-substitution.  The adversary's coupling
collapses to the same form because the augmented transition keeps the
(stacked friendly inputs, target) tail constant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gauss import CovarianceLadder, matrix_powers, propagate_open_loop
from .model import AttackerSpec, FriendlyObjective, SystemModel
from .riccati import (AdversarialTables, FriendlyTables, TruncatedTables,
                      adversarial_tables, friendly_tables, truncated_sensor_tables)
from .scenarios import FRIENDLY, JumpScenario, ScenarioSet, Segment

__all__ = [
    "FriendlyStack",
    "MeasurableParts",
    "AdversaryStack",
    "ScenarioOperator",
    "OperatorSuite",
    "build_friendly_stack",
    "build_psi_and_F",
    "build_adversary_stack",
    "build_scenario_operator",
    "build_operator_suite",
    "solve_coupling",
    "apply_coupling",
    "sensor_cost_blocks",
]


def block_index(n: int, k: int) -> int:
    """Position of stage k in a time-descending stack over stages n..1."""
    return n - k


def solve_coupling(A: np.ndarray, B: np.ndarray, gains_desc: list[np.ndarray],
                   rhs: np.ndarray) -> np.ndarray:
    """Solve Phi X = rhs by block back-substitution.

    Phi is unit block-upper-triangular with Phi[t, s] = gains[t] A^(t-s-1) B
    for stages s < t; ``gains_desc`` lists the per-stage (r x m) gain blocks
    top-down (highest stage first), matching the row layout of ``rhs``.
    """
    cnt = len(gains_desc)
    if cnt == 0:
        return rhs.copy()
    r = gains_desc[0].shape[0]
    m = A.shape[0]
    X = np.zeros_like(rhs, dtype=float)
    W = np.zeros((m, rhs.shape[1]))
    for idx in range(cnt - 1, -1, -1):
        row = slice(idx * r, (idx + 1) * r)
        X[row] = rhs[row] - gains_desc[idx] @ W
        W = A @ W + B @ X[row]
    return X


def apply_coupling(A: np.ndarray, B: np.ndarray, gains_desc: list[np.ndarray],
                   X: np.ndarray) -> np.ndarray:
    """Multiply the unit block-upper-triangular coupling onto X (same layout)."""
    cnt = len(gains_desc)
    if cnt == 0:
        return X.copy()
    r = gains_desc[0].shape[0]
    m = A.shape[0]
    Y = np.zeros_like(X, dtype=float)
    W = np.zeros((m, X.shape[1]))
    for idx in range(cnt - 1, -1, -1):
        row = slice(idx * r, (idx + 1) * r)
        Y[row] = X[row] + gains_desc[idx] @ W
        W = A @ W + B @ X[row]
    return Y


def coupling_dense(A: np.ndarray, B: np.ndarray, gains_desc: list[np.ndarray]) -> np.ndarray:
    cnt = len(gains_desc)
    r = gains_desc[0].shape[0] if cnt else 0
    Ap = matrix_powers(A, max(cnt - 1, 0))
    Phi = np.eye(cnt * r)
    for it in range(cnt):
        for isrc in range(it + 1, cnt):
            Phi[it * r:(it + 1) * r, isrc * r:(isrc + 1) * r] = \
                gains_desc[it] @ Ap[isrc - it - 1] @ B
    return Phi


@dataclass
class FriendlyStack:
    """Stacked friendly control law u* = -control_map @ xhat-stack."""

    phi: np.ndarray          # nr x nr input coupling
    gain_block: np.ndarray   # nr x nm block diagonal of per-stage gains
    control_map: np.ndarray  # nr x nm, coupling^-1 @ gain_block


def build_friendly_stack(model: SystemModel, tables: FriendlyTables) -> FriendlyStack:
    n, m, r = model.n, model.m, model.r
    gains_desc = tables.gain[::-1]
    Kblk = np.zeros((n * r, n * m))
    for k in range(1, n + 1):
        p = block_index(n, k)
        Kblk[p * r:(p + 1) * r, p * m:(p + 1) * m] = tables.gain[k - 1]
    phi = coupling_dense(model.A, model.B, gains_desc)
    tf = solve_coupling(model.A, model.B, gains_desc, Kblk)
    return FriendlyStack(phi=phi, gain_block=Kblk, control_map=tf)


@dataclass
class MeasurableParts:
    """Pieces that reduce augmented conditional estimates to the xhat stack.

    ``psi`` maps stacked controls to the control-induced state offsets;
    ``selector(k)`` turns the final estimate stack into the stage-k predicted
    stack (future entries propagated from xhat[k], past entries kept);
    ``F_row(k)`` is the full reduction of the stage-k augmented estimate.
    Dense outputs are meant for small horizons; the production path consumes
    the same quantities row-wise via ``response_rows``.
    """

    model: SystemModel
    fstack: FriendlyStack
    psi: np.ndarray
    pred_cols: list[np.ndarray]  # pred_cols[k-1] = sum_{l>=k} control_map[:, l] A^(l-k)

    def selector(self, k: int) -> np.ndarray:
        n, m = self.model.n, self.model.m
        Ap = matrix_powers(self.model.A, n)
        L = np.zeros((n * m, n * m))
        col = block_index(n, k)
        for l in range(k, n + 1):
            p = block_index(n, l)
            L[p * m:(p + 1) * m, col * m:(col + 1) * m] = Ap[l - k]
        if k > 1:
            tail = (k - 1) * m
            L[-tail:, -tail:] = np.eye(tail)
        return L

    def tfl(self, k: int) -> np.ndarray:
        """control_map @ selector(k) without forming the selector."""
        n, m, r = self.model.n, self.model.m, self.model.r
        out = np.zeros((n * r, n * m))
        col = block_index(n, k)
        out[:, col * m:(col + 1) * m] = self.pred_cols[k - 1]
        if k > 1:
            tail = (k - 1) * m
            out[:, -tail:] = self.fstack.control_map[:, -tail:]
        return out

    def F_row(self, k: int) -> np.ndarray:
        n, m, r = self.model.n, self.model.m, self.model.r
        tfl = self.tfl(k)
        top = -self.psi[block_index(n, k) * m:(block_index(n, k) + 1) * m] @ tfl
        top[:, block_index(n, k) * m:(block_index(n, k) + 1) * m] += np.eye(m)
        return np.vstack([top, -tfl, np.zeros((m, n * m))])

    def F_stack(self, kappa: int) -> np.ndarray:
        n = self.model.n
        return np.vstack([self.F_row(k) for k in range(n, kappa - 1, -1)])


def build_psi_and_F(model: SystemModel, fstack: FriendlyStack) -> MeasurableParts:
    n, m, r = model.n, model.m, model.r
    Ap = matrix_powers(model.A, n)
    psi = np.zeros((n * m, n * r))
    for k in range(2, n + 1):
        rp = block_index(n, k)
        for s in range(1, k):
            cp = block_index(n, s)
            psi[rp * m:(rp + 1) * m, cp * r:(cp + 1) * r] = Ap[k - s - 1] @ model.B
    tf = fstack.control_map
    pred_cols = [None] * n
    acc = tf[:, block_index(n, n) * m:(block_index(n, n) + 1) * m].copy()
    pred_cols[n - 1] = acc
    for k in range(n - 1, 0, -1):
        p = block_index(n, k)
        acc = tf[:, p * m:(p + 1) * m] + acc @ model.A
        pred_cols[k - 1] = acc
    return MeasurableParts(model=model, fstack=fstack, psi=psi, pred_cols=pred_cols)


def response_rows(model: SystemModel, parts: MeasurableParts,
                  atables: AdversarialTables) -> np.ndarray:
    """Stage rows of (adversary gain) @ (estimate reduction), stacked n..1.

    Row block k equals gain_dense(k) @ F_row(k) but is assembled without the
    (m + nr + m) x nm intermediate: the z column of F is zero and the x and
    input parts share the control-map columns.
    """
    n, m, r = model.n, model.m, model.r
    tf = parts.fstack.control_map
    rows = np.zeros((n * r, n * m))
    for k in range(n, 0, -1):
        p = block_index(n, k)
        # rowU = Kx @ Psi_k + Ku: combined weight on the estimated input stack.
        rowU = atables.gain_u[k - 1].copy()
        v = atables.gain_x[k - 1]
        for s in range(k - 1, 0, -1):
            cp = block_index(n, s)
            rowU[:, cp * r:(cp + 1) * r] += v @ model.B
            v = v @ model.A
        blk = rows[p * r:(p + 1) * r]
        blk[:, p * m:(p + 1) * m] = atables.gain_x[k - 1] - rowU @ parts.pred_cols[k - 1]
        if k > 1:
            tail = (k - 1) * m
            blk[:, -tail:] -= rowU @ tf[:, -tail:]
    return rows


@dataclass
class AdversaryStack:
    """Stacked best response of one adversary infiltrating at stage kappa.

    Controls for stages n..kappa follow u = -T @ xhat-stack - Z.
    """

    agent: str
    kappa: int
    phi: np.ndarray
    T: np.ndarray
    Z: np.ndarray


def build_adversary_stack(model: SystemModel, atables: AdversarialTables,
                          fstack: FriendlyStack, kappa: int, z: np.ndarray,
                          rows: np.ndarray | None = None,
                          parts: MeasurableParts | None = None,
                          agent: str = "") -> AdversaryStack:
    n, m, r = model.n, model.m, model.r
    if not 1 <= kappa <= n:
        raise ValueError(f"infiltration stage {kappa} outside 1..{n}")
    if rows is None:
        if parts is None:
            parts = build_psi_and_F(model, fstack)
        rows = response_rows(model, parts, atables)
    cnt = n - kappa + 1
    gains_desc = [atables.gain_x[k - 1] for k in range(n, kappa - 1, -1)]
    dev = solve_coupling(model.A, model.B, gains_desc, rows[:cnt * r])
    T = dev + fstack.control_map[:cnt * r]
    zrhs = np.vstack([(atables.gain_z[k - 1] @ z)[:, None]
                      for k in range(n, kappa - 1, -1)])
    Z = solve_coupling(model.A, model.B, gains_desc, zrhs)[:, 0]
    phi = coupling_dense(model.A, model.B, gains_desc)
    return AdversaryStack(agent=agent or atables.attacker.name, kappa=kappa,
                          phi=phi, T=T, Z=Z)


@dataclass
class ScenarioOperator:
    """Estimate-to-control law of one scenario, in raw and squared-out form.

    u*-stack (stages n_T..1) = -T @ xhat-stack - Z, and the transformed
    controls entering the sensor objective are Xi @ xhat-stack + xi.
    """

    scenario: JumpScenario
    T: np.ndarray
    Z: np.ndarray
    Xi: np.ndarray
    xi: np.ndarray


def _segment_rows(seg: Segment, n: int, r: int, source_T: np.ndarray,
                  source_Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Rows of the (agent, kappa) stack covering stages seg.stop-1 .. seg.start.
    lo = (n - seg.stop + 1) * r
    hi = (n - seg.start + 1) * r
    return source_T[lo:hi], source_Z[lo:hi]


def build_scenario_operator(scenario: JumpScenario,
                            stacks: dict[tuple[str, int], AdversaryStack],
                            fstack: FriendlyStack,
                            ftables: FriendlyTables,
                            model: SystemModel) -> ScenarioOperator:
    n, m, r = model.n, model.m, model.r
    zero_fz = np.zeros(n * r)
    t_rows, z_rows = [], []
    for seg in reversed(scenario.segments):
        if seg.start >= seg.stop:
            continue
        if seg.agent == FRIENDLY:
            if seg.start != 1:
                raise ValueError("friendly control is only modeled from stage 1")
            Ts, Zs = _segment_rows(seg, n, r, fstack.control_map, zero_fz)
        else:
            key = (seg.agent, seg.start)
            if key not in stacks:
                raise KeyError(f"no adversary stack prepared for {key}")
            st = stacks[key]
            Ts, Zs = _segment_rows(seg, n, r, st.T, st.Z)
        t_rows.append(Ts)
        z_rows.append(Zs)
    nT = scenario.n_T
    if nT == 0:
        empty = np.zeros((0, n * m))
        return ScenarioOperator(scenario=scenario, T=empty, Z=np.zeros(0),
                                Xi=empty.copy(), xi=np.zeros(0))
    T = np.vstack(t_rows)
    Z = np.concatenate(z_rows)
    trunc = truncated_sensor_tables(ftables, nT)
    gains_desc = trunc.gain[::-1]
    Xi = -apply_coupling(model.A, model.B, gains_desc, T)
    xi = -apply_coupling(model.A, model.B, gains_desc, Z[:, None])[:, 0]
    return ScenarioOperator(scenario=scenario, T=T, Z=Z, Xi=Xi, xi=xi)


def sensor_cost_blocks(trunc: TruncatedTables, n: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense stage-weight and gain blocks of the truncated sensor objective.

    Returns (Delta, K): Delta is the block diagonal of the truncated
    input-space weights (stages n_T..1) and K places the truncated gains so
    that K @ x-stack reproduces the per-stage feedback terms.
    """
    nT = trunc.nT
    r = trunc.delta[0].shape[0]
    Delta = np.zeros((nT * r, nT * r))
    K = np.zeros((nT * r, n * m))
    for k in range(1, nT + 1):
        p = block_index(nT, k)
        Delta[p * r:(p + 1) * r, p * r:(p + 1) * r] = trunc.delta[k - 1]
        cp = block_index(n, k)
        K[p * r:(p + 1) * r, cp * m:(cp + 1) * m] = trunc.gain[k - 1]
    return Delta, K


@dataclass
class OperatorSuite:
    """Everything the designer and evaluator share for one problem instance."""

    model: SystemModel
    obj: FriendlyObjective
    attackers: dict[str, AttackerSpec]
    sset: ScenarioSet
    ladder: CovarianceLadder
    ftables: FriendlyTables
    fstack: FriendlyStack
    atables: dict[str, AdversarialTables]
    adversary_rows: dict[str, np.ndarray]
    stacks: dict[tuple[str, int], AdversaryStack]
    operators: list[ScenarioOperator] = field(default_factory=list)


def build_operator_suite(model: SystemModel, obj: FriendlyObjective,
                         attackers: list[AttackerSpec],
                         sset: ScenarioSet) -> OperatorSuite:
    """Build tables, stacks for every (agent, infiltration stage) the scenario
    set needs, and the per-scenario operators."""
    named = {}
    for i, atk in enumerate(attackers, start=1):
        name = atk.name or f"A{i}"
        named[name] = atk
    ladder = propagate_open_loop(model)
    ftables = friendly_tables(model, obj)
    fstack = build_friendly_stack(model, ftables)
    parts = build_psi_and_F(model, fstack)

    needed: set[tuple[str, int]] = set()
    for sc in sset.scenarios:
        for seg in sc.segments:
            if seg.agent != FRIENDLY and seg.start < seg.stop:
                if seg.agent not in named:
                    raise KeyError(f"scenario references unknown attacker {seg.agent!r}")
                needed.add((seg.agent, seg.start))

    atabs: dict[str, AdversarialTables] = {}
    rows: dict[str, np.ndarray] = {}
    stacks: dict[tuple[str, int], AdversaryStack] = {}
    for agent in sorted({a for a, _ in needed}):
        atabs[agent] = adversarial_tables(model, obj, named[agent])
        rows[agent] = response_rows(model, parts, atabs[agent])
    for agent, kappa in sorted(needed):
        stacks[(agent, kappa)] = build_adversary_stack(
            model, atabs[agent], fstack, kappa, named[agent].z,
            rows=rows[agent], agent=agent)

    ops = [build_scenario_operator(sc, stacks, fstack, ftables, model)
           for sc in sset.scenarios]
    return OperatorSuite(model=model, obj=obj, attackers=named, sset=sset,
                         ladder=ladder, ftables=ftables, fstack=fstack,
                         atables=atabs, adversary_rows=rows, stacks=stacks,
                         operators=ops)
