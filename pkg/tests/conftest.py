import numpy as np
import pytest

import securesensor as ss
from securesensor.model import benchmark_attackers, benchmark_objective
from securesensor.stacked import build_operator_suite

ACCEPTANCE_LINES = []


def record_acceptance(num: int, name: str, ok: bool, detail: str):
    ACCEPTANCE_LINES.append((num, name, ok, detail))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE_LINES):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {num}: {name} -- {detail}")


@pytest.fixture(scope="session")
def scalar_s1():
    """The all-ones scalar benchmark: A=B=Sigma1=SigmaV=QF=RF=1, n=2."""
    model = ss.SystemModel(A=[[1.0]], B=[[1.0]], Sigma1=[[1.0]], SigmaV=[[1.0]], n=2)
    obj = ss.FriendlyObjective(QF=[[1.0]], RF=[[1.0]])
    return model, obj


def downscaled_problem(seed: int):
    """Benchmark-style instance shrunk to n=12, m=4, r=2, delta=4, t=2."""
    model, _ = ss.generate_random_instance(seed=seed, m=4, r=2, n=12)
    obj = benchmark_objective(4, 2)
    attackers = benchmark_attackers(4, 2, seed=seed + 1)
    sset = ss.assign_measures(ss.enumerate_typical(n=12, delta=4, t=2),
                              {"no_infiltration": 0.7})
    return model, obj, attackers, sset


_suite_cache = {}


def downscaled_suite(seed: int):
    if seed not in _suite_cache:
        model, obj, attackers, sset = downscaled_problem(seed)
        _suite_cache[seed] = (model, obj, attackers, sset,
                              build_operator_suite(model, obj, attackers, sset))
    return _suite_cache[seed]


@pytest.fixture(scope="session")
def downscaled0():
    return downscaled_suite(0)


def random_model(rng: np.random.Generator, m: int, r: int, n: int) -> ss.SystemModel:
    while True:
        A = rng.normal(size=(m, m)) * 0.5
        s = np.linalg.svd(A, compute_uv=False)
        if s[-1] > 1e-6 * s[0]:
            break
    B = rng.normal(size=(m, r))
    W1 = rng.normal(size=(m, m))
    W2 = rng.normal(size=(m, m))
    Sigma1 = W1 @ W1.T + 0.5 * np.eye(m)
    SigmaV = W2 @ W2.T + 0.5 * np.eye(m)
    return ss.SystemModel(A=A, B=B, Sigma1=Sigma1, SigmaV=SigmaV, n=n)


def random_gains(rng: np.random.Generator, m: int, n: int,
                 rank_deficient: bool = True) -> list:
    gains = []
    for _ in range(n):
        kind = rng.integers(0, 4) if rank_deficient else 3
        if kind == 0:
            gains.append(np.zeros((m, m)))
        elif kind == 1:
            rank = int(rng.integers(1, m + 1))
            gains.append(rng.normal(size=(m, rank)) @ rng.normal(size=(rank, m)))
        else:
            gains.append(rng.normal(size=(m, m)))
    return gains
