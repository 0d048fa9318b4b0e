"""Completion-of-squares tables for the friendly controller and each adversary.

The friendly tables come from the standard backward recursion on (A, B, QF, RF).
Each adversary optimizes a deviation input on an augmented state
(x, stacked friendly inputs, target z); its recursion is run here on the first
block row of the augmented cost-to-go only, which is all the downstream gains
need, so the cost never touches dense (m + n r + m)-sized products.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gauss import symmetrize
from .model import AttackerSpec, FriendlyObjective, SystemModel

__all__ = [
    "FriendlyTables",
    "AdversarialTables",
    "TruncatedTables",
    "friendly_tables",
    "adversarial_tables",
    "truncated_sensor_tables",
    "sensor_constant",
]


@dataclass
class FriendlyTables:
    """Backward-recursion tables of the friendly control problem.

    qcheck[j] is the cost-to-go weight of stage j+1 (so qcheck[n] = QF),
    delta[k-1] and gain[k-1] are the input-space weight and feedback gain of
    stage k, and constant is the strategy-independent cost floor.
    """

    qcheck: list[np.ndarray]
    delta: list[np.ndarray]
    gain: list[np.ndarray]
    constant: float

    @property
    def n(self) -> int:
        return len(self.gain)


def friendly_tables(model: SystemModel, obj: FriendlyObjective) -> FriendlyTables:
    A, B = model.A, model.B
    QF, RF = symmetrize(obj.QF), symmetrize(obj.RF)
    n = model.n
    qcheck = [None] * (n + 1)
    delta = [None] * n
    gain = [None] * n
    qcheck[n] = QF
    for k in range(n, 0, -1):
        Qn = qcheck[k]
        d = symmetrize(B.T @ Qn @ B + RF)
        K = np.linalg.solve(d, B.T @ Qn @ A)
        qcheck[k - 1] = symmetrize(QF + A.T @ (Qn - Qn @ B @ np.linalg.solve(d, B.T @ Qn)) @ A)
        delta[k - 1] = d
        gain[k - 1] = K
    const = float(np.trace(model.Sigma1 @ (qcheck[0] - QF)))
    const += float(sum(np.trace(model.SigmaV @ qcheck[k]) for k in range(1, n + 1)))
    return FriendlyTables(qcheck=qcheck, delta=delta, gain=gain, constant=const)


@dataclass
class AdversarialTables:
    """Per-stage deviation gains of one adversary on the augmented state.

    The augmented state is partitioned (x | stacked friendly inputs | z) and
    every gain is stored in that split form: gain_x[k-1] (r x m),
    gain_u[k-1] (r x nr), gain_z[k-1] (r x m).  The stacked-input block
    orders stages time-descending, like every stack in this package.
    qcheck_xrows keeps the first block row of the cost-to-go per stage for
    inspection; the tables never depend on the infiltration time.
    """

    attacker: AttackerSpec
    delta: list[np.ndarray]
    gain_x: list[np.ndarray]
    gain_u: list[np.ndarray]
    gain_z: list[np.ndarray]
    qcheck_xrows: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
    m: int
    r: int
    n: int

    @property
    def aug_dim(self) -> int:
        return 2 * self.m + self.n * self.r

    def gain_dense(self, k: int) -> np.ndarray:
        """Full r x (m + nr + m) gain of stage k."""
        i = k - 1
        return np.hstack([self.gain_x[i], self.gain_u[i], self.gain_z[i]])

    def qbar_dense(self, obj: FriendlyObjective) -> np.ndarray:
        """Augmented stage weight as one dense matrix (small horizons only)."""
        m, nr = self.m, self.n * self.r
        QA = self.attacker.QA
        Q = np.zeros((self.aug_dim, self.aug_dim))
        Q[:m, :m] = QA + self.attacker.lam * obj.QF
        Q[:m, m + nr:] = -QA
        Q[m + nr:, :m] = -QA
        Q[m + nr:, m + nr:] = QA
        return Q

    def abar_dense(self, model: SystemModel, k: int) -> np.ndarray:
        """Augmented transition of stage k: the B block sits in stage k's input slot."""
        m, r, n = self.m, self.r, self.n
        Abar = np.eye(self.aug_dim)
        Abar[:m, :m] = model.A
        c = m + (n - k) * r
        Abar[:m, c:c + r] = model.B
        return Abar

    def bbar_dense(self, model: SystemModel) -> np.ndarray:
        Bbar = np.zeros((self.aug_dim, self.r))
        Bbar[:self.m, :] = model.B
        return Bbar

    def noise_map_dense(self) -> np.ndarray:
        E = np.zeros((self.aug_dim, self.m))
        E[:self.m, :] = np.eye(self.m)
        return E


def adversarial_tables(model: SystemModel, obj: FriendlyObjective,
                       attacker: AttackerSpec) -> AdversarialTables:
    """Backward recursion for one adversary, carried on the x block row only.

    The (input, z) block rows never feed back into the x row or into the
    gains, so they are not propagated.
    """
    A, B = model.A, model.B
    m, r, n = model.m, model.r, model.n
    QA = symmetrize(attacker.QA)
    RA = symmetrize(attacker.RA)
    Qxx0 = symmetrize(QA + attacker.lam * obj.QF)

    # x block row of the augmented cost-to-go at stage n+1.
    Gxx = Qxx0.copy()
    Gxu = np.zeros((m, n * r))
    Gxz = -QA.copy()
    xrows = [None] * (n + 1)
    xrows[n] = (Gxx.copy(), Gxu.copy(), Gxz.copy())

    delta = [None] * n
    gx = [None] * n
    gu = [None] * n
    gz = [None] * n

    for k in range(n, 0, -1):
        sl = slice((n - k) * r, (n - k + 1) * r)  # stage-k slot in the input block
        GxxB = Gxx @ B
        d = symmetrize(B.T @ GxxB + RA)
        BtGxu = B.T @ Gxu
        BtGxu_slot = BtGxu.copy()
        BtGxu_slot[:, sl] += B.T @ GxxB
        gx[k - 1] = np.linalg.solve(d, B.T @ Gxx @ A)
        gu[k - 1] = np.linalg.solve(d, BtGxu_slot)
        gz[k - 1] = np.linalg.solve(d, B.T @ Gxz)
        delta[k - 1] = d

        dinv_BtG = np.linalg.solve(d, GxxB.T)           # r x m
        Mxx = symmetrize(Gxx - GxxB @ dinv_BtG)
        Mxu = Gxu - GxxB @ np.linalg.solve(d, BtGxu)
        Mxz = Gxz - GxxB @ np.linalg.solve(d, B.T @ Gxz)

        MxxB_slot = np.zeros((m, n * r))
        MxxB_slot[:, sl] = Mxx @ B
        Gxx = symmetrize(Qxx0 + A.T @ Mxx @ A)
        Gxu = A.T @ (MxxB_slot + Mxu)
        Gxz = -QA + A.T @ Mxz
        xrows[k - 1] = (Gxx.copy(), Gxu.copy(), Gxz.copy())

    return AdversarialTables(attacker=attacker, delta=delta, gain_x=gx, gain_u=gu,
                             gain_z=gz, qcheck_xrows=xrows, m=m, r=r, n=n)


@dataclass
class TruncatedTables:
    """Stage tables of the sensor objective on a shortened horizon.

    Pure shifted views into the friendly tables: stage k of the truncated
    problem reuses stage k + n - nT of the full one.
    """

    nT: int
    gain: list[np.ndarray]
    delta: list[np.ndarray]
    qcheck: list[np.ndarray]


def truncated_sensor_tables(friendly: FriendlyTables, nT: int) -> TruncatedTables:
    n = friendly.n
    if not 1 <= nT <= n:
        raise ValueError(f"truncated horizon {nT} outside 1..{n}")
    s = n - nT
    return TruncatedTables(nT=nT,
                           gain=friendly.gain[s:],
                           delta=friendly.delta[s:],
                           qcheck=friendly.qcheck[s:])


def sensor_constant(model: SystemModel, friendly: FriendlyTables, nT: int) -> float:
    """Strategy-independent cost floor of the nT-horizon sensor objective."""
    n = friendly.n
    if not 1 <= nT <= n:
        raise ValueError(f"truncated horizon {nT} outside 1..{n}")
    QF = friendly.qcheck[n]  # terminal condition of the recursion
    g = float(np.trace(model.Sigma1 @ (friendly.qcheck[n - nT] - QF)))
    g += float(sum(np.trace(model.SigmaV @ friendly.qcheck[k + n - nT])
                   for k in range(1, nT + 1)))
    return g
