"""Infiltration jump process: scenario enumeration, transition data, measures.

Hand-over of the controller happens on a coarse grid: the horizon 1..n is cut
into N = ceil(n / delta) slots and slot j is run by one agent from
{F, A1..At, T}.  T models a detected infiltration: the operation mode
switches, which for the sensor designer simply terminates the horizon.

The typical set enumerated here contains the no-infiltration scenario plus,
for every attacker, every (infiltration slot, detection slot or undetected)
pair: at most one infiltration per scenario, never an agent hand-back.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "FRIENDLY",
    "TERMINATED",
    "Segment",
    "JumpScenario",
    "ScenarioSet",
    "derive_transitions",
    "make_scenario",
    "enumerate_typical",
    "assign_measures",
]

FRIENDLY = "F"
TERMINATED = "T"


def attacker_label(i: int) -> str:
    """1-based attacker index -> label."""
    return f"A{i}"


@dataclass(frozen=True)
class Segment:
    """One in-charge interval [start, stop): ``agent`` runs stages start..stop-1."""

    agent: str
    start: int
    stop: int


@dataclass(frozen=True)
class JumpScenario:
    """A realized agent sequence with its derived transition data.

    ``hbar`` lists the segment boundaries: 1, every non-terminating agent
    change, and the effective end boundary (detection time or n + 1).  Costs
    accrue over stages 1..n_T with n_T = hbar[-1] - 1.
    """

    theta: tuple[str, ...]
    delta: int
    n: int
    hbar: tuple[int, ...]
    n_T: int
    kappa_T: int
    segments: tuple[Segment, ...]
    mu: float = float("nan")
    case_id: int = 0

    @property
    def label(self) -> str:
        return ",".join(self.theta)

    @property
    def attacked(self) -> bool:
        return any(s.agent != FRIENDLY for s in self.segments)


def derive_transitions(theta, delta: int, n: int):
    """Boundary set, effective horizon, and in-charge segments of one sequence.

    Returns (hbar, n_T, kappa_T, segments).  Agent changes can only happen on
    the slot grid; a jump to T freezes the horizon at that boundary, and any
    non-T label after a T is rejected since it could never matter.
    """
    theta = tuple(theta)
    if delta < 1:
        raise ValueError("delta must be >= 1")
    N = -(-n // delta)
    if N > 1 and delta < 2:
        raise ValueError("delta must be >= 2 when the horizon spans several slots")
    if len(theta) != N:
        raise ValueError(f"need {N} slot labels for n={n}, delta={delta}; got {len(theta)}")
    if theta[0] == TERMINATED:
        raise ValueError("first slot cannot be terminated")
    seen_T = False
    for lab in theta:
        if seen_T and lab != TERMINATED:
            raise ValueError(f"label {lab!r} after termination is malformed")
        if lab == TERMINATED:
            seen_T = True

    # Boundary where slot j starts: 1 for j=1, else (j-1) * delta.
    def slot_start(j: int) -> int:
        return 1 if j == 1 else (j - 1) * delta

    end = n + 1
    changes = []
    for j in range(2, N + 1):
        if theta[j - 1] == TERMINATED:
            end = min(end, (j - 1) * delta)
            break
        if theta[j - 1] != theta[j - 2]:
            changes.append(slot_start(j))
    hbar = tuple([1] + changes + [end])
    n_T = end - 1
    kappa_T = hbar[-2]
    segments = []
    for a, b in zip(hbar[:-1], hbar[1:]):
        j = 1 if a == 1 else a // delta + 1
        segments.append(Segment(agent=theta[j - 1], start=a, stop=b))
    return hbar, n_T, kappa_T, tuple(segments)


def make_scenario(theta, delta: int, n: int, mu: float = float("nan"),
                  case_id: int = 0) -> JumpScenario:
    hbar, n_T, kappa_T, segments = derive_transitions(theta, delta, n)
    return JumpScenario(theta=tuple(theta), delta=delta, n=n, hbar=hbar, n_T=n_T,
                        kappa_T=kappa_T, segments=segments, mu=mu, case_id=case_id)


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: tuple[JumpScenario, ...]
    t: int
    n: int
    delta: int

    def __len__(self):
        return len(self.scenarios)

    @property
    def measures(self) -> np.ndarray:
        return np.array([s.mu for s in self.scenarios])

    def validate(self):
        mus = self.measures
        if np.any(np.isnan(mus)):
            raise ValueError("scenario set has unassigned measures")
        if abs(float(mus.sum()) - 1.0) > 1e-12:
            raise ValueError(f"measures sum to {mus.sum()}, not 1")
        for s in self.scenarios:
            hostile = [seg for seg in s.segments if seg.agent != FRIENDLY]
            if len(hostile) > 1:
                raise ValueError(f"scenario {s.label} has more than one infiltration")
            if hostile and hostile[0] != s.segments[-1]:
                raise ValueError(f"scenario {s.label} hands control back after infiltration")
            # Segments must tile 1..n_T exactly once.
            cursor = 1
            for seg in s.segments:
                if seg.start != cursor:
                    raise ValueError(f"scenario {s.label} segments do not tile the horizon")
                cursor = seg.stop
            if cursor != s.n_T + 1:
                raise ValueError(f"scenario {s.label} segments do not tile the horizon")


def enumerate_typical(n: int, delta: int, t: int) -> ScenarioSet:
    """All at-most-one-infiltration sequences on the slot grid, unmeasured.

    Case 1 is the all-friendly run.  For each attacker the sub-cases are
    ordered by infiltration slot, then by detection boundary ascending with
    the undetected run last, giving 1 + t N (N + 1) / 2 scenarios.
    """
    if t < 0:
        raise ValueError("attacker count must be >= 0")
    N = -(-n // delta)
    cases = [make_scenario([FRIENDLY] * N, delta, n)]
    for i in range(1, t + 1):
        lab = attacker_label(i)
        for j_inf in range(1, N + 1):
            base = [FRIENDLY] * (j_inf - 1) + [lab] * (N - j_inf + 1)
            for j_det in range(j_inf + 1, N + 1):
                theta = list(base)
                theta[j_det - 1:] = [TERMINATED] * (N - j_det + 1)
                cases.append(make_scenario(theta, delta, n))
            cases.append(make_scenario(base, delta, n))
    cases = [replace(s, case_id=i + 1) for i, s in enumerate(cases)]
    return ScenarioSet(scenarios=tuple(cases), t=t, n=n, delta=delta)


def assign_measures(sset: ScenarioSet, spec) -> ScenarioSet:
    """Attach a normalized measure to every scenario.

    ``spec`` is either an explicit nonnegative vector (one weight per
    scenario, normalized here), the string "uniform", or a mapping
    {"no_infiltration": p} that gives the all-friendly case mass p and splits
    the rest evenly.
    """
    count = len(sset)
    if isinstance(spec, str):
        if spec != "uniform":
            raise ValueError(f"unknown measure spec {spec!r}")
        w = np.full(count, 1.0)
    elif isinstance(spec, dict):
        if set(spec) != {"no_infiltration"}:
            raise ValueError(f"unknown measure spec keys {sorted(spec)}")
        p = float(spec["no_infiltration"])
        if not 0.0 <= p <= 1.0:
            raise ValueError("no_infiltration mass must be in [0, 1]")
        if sset.scenarios[0].attacked:
            raise ValueError("no_infiltration spec needs the friendly case first")
        if count == 1:
            w = np.array([1.0])
        else:
            w = np.full(count, (1.0 - p) / (count - 1))
            w[0] = p
    else:
        w = np.asarray(spec, dtype=float)
        if w.shape != (count,):
            raise ValueError(f"measure vector has {w.shape} entries, expected {count}")
        if np.any(w < 0):
            raise ValueError("measures must be nonnegative")
    tot = float(w.sum())
    if tot <= 0:
        raise ValueError("measure spec sums to zero")
    w = w / tot
    scenarios = tuple(replace(s, mu=float(wi)) for s, wi in zip(sset.scenarios, w))
    out = ScenarioSet(scenarios=scenarios, t=sset.t, n=sset.n, delta=sset.delta)
    out.validate()
    return out
