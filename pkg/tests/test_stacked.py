import numpy as np
import pytest

import securesensor as ss
from securesensor.riccati import adversarial_tables, friendly_tables
from securesensor.stacked import (apply_coupling, build_adversary_stack,
                                  build_friendly_stack, build_operator_suite,
                                  build_psi_and_F, build_scenario_operator,
                                  coupling_dense, response_rows, solve_coupling)

from conftest import random_gains, random_model
from oracles import NoiseMaps


def _random_setup(seed, m=3, r=2, n=5):
    rng = np.random.default_rng(seed)
    model = random_model(rng, m, r, n)
    W = rng.normal(size=(m, m))
    obj = ss.FriendlyObjective(QF=W @ W.T, RF=np.eye(r))
    WA = rng.normal(size=(m, m))
    atk = ss.AttackerSpec(QA=WA @ WA.T, RA=1.5 * np.eye(r), lam=0.2,
                          z=rng.normal(size=m), name="A1")
    return rng, model, obj, atk


def test_friendly_stack_scalar_values(scalar_s1):
    model, obj = scalar_s1
    fs = build_friendly_stack(model, friendly_tables(model, obj))
    assert np.allclose(fs.phi, [[1.0, 0.5], [0.0, 1.0]])
    assert np.allclose(fs.gain_block, [[0.5, 0.0], [0.0, 0.6]])
    # solved causally: u[2] = -0.5 xhat[2] + 0.3 xhat[1], u[1] = -0.6 xhat[1]
    assert np.allclose(fs.control_map, [[0.5, -0.3], [0.0, 0.6]])


def test_friendly_stack_degenerate_shapes():
    rng = np.random.default_rng(0)
    model = random_model(rng, 2, 1, 1)
    obj = ss.FriendlyObjective(QF=np.eye(2), RF=np.eye(1))
    fs = build_friendly_stack(model, friendly_tables(model, obj))
    assert np.allclose(fs.phi, np.eye(1))
    assert np.allclose(fs.control_map, fs.gain_block)

    flat = ss.SystemModel(A=model.A, B=np.zeros((2, 1)), Sigma1=model.Sigma1,
                          SigmaV=model.SigmaV, n=3)
    fs0 = build_friendly_stack(flat, friendly_tables(flat, obj))
    assert np.allclose(fs0.phi, np.eye(3))


def test_coupling_solve_and_apply_are_inverse():
    rng, model, obj, _ = _random_setup(1)
    t = friendly_tables(model, obj)
    gains = t.gain[::-1]
    rhs = rng.normal(size=(model.n * model.r, 7))
    X = solve_coupling(model.A, model.B, gains, rhs)
    assert np.abs(apply_coupling(model.A, model.B, gains, X) - rhs).max() < 1e-10
    Phi = coupling_dense(model.A, model.B, gains)
    assert np.abs(Phi @ X - rhs).max() < 1e-10


def test_back_substitution_invariant():
    _, model, obj, _ = _random_setup(2)
    fs = build_friendly_stack(model, friendly_tables(model, obj))
    resid = np.abs(fs.phi @ fs.control_map - fs.gain_block).max()
    assert resid <= 1e-10 * (1.0 + np.abs(fs.gain_block).max())


def test_measurable_parts_index_structure():
    _, model, obj, _ = _random_setup(3)
    n, m, r = model.n, model.m, model.r
    fs = build_friendly_stack(model, friendly_tables(model, obj))
    parts = build_psi_and_F(model, fs)
    # stage-n selector: first block column holds the identity, nothing else
    Ln = parts.selector(n)
    assert np.allclose(Ln[:m, :m], np.eye(m))
    assert np.allclose(Ln[m:], np.hstack([np.zeros(((n - 1) * m, m)),
                                          np.eye((n - 1) * m)]))
    # selector(k) equals the assembled prediction map
    for k in (1, 2, n):
        assert np.allclose(parts.tfl(k), fs.control_map @ parts.selector(k), atol=1e-12)


def test_measurable_parts_single_stage():
    rng = np.random.default_rng(4)
    model = random_model(rng, 2, 1, 1)
    obj = ss.FriendlyObjective(QF=np.eye(2), RF=np.eye(1))
    fs = build_friendly_stack(model, friendly_tables(model, obj))
    parts = build_psi_and_F(model, fs)
    assert np.allclose(parts.psi, 0)
    F1 = parts.F_row(1)
    assert np.allclose(F1[:2], np.eye(2))          # state row: plain selector
    assert np.allclose(F1[2:3], -fs.control_map)   # input row through identity selector
    assert np.allclose(F1[3:], 0)


def test_conditional_input_reduction_exact():
    # E{stacked friendly inputs | s[1..k]} = -control_map @ selector(k) @ xhat-stack,
    # checked as exact matrices over the driving noise.
    rng = np.random.default_rng(5)
    model = random_model(rng, 2, 1, 4)
    obj = ss.FriendlyObjective(QF=np.eye(2), RF=np.eye(1))
    gains = random_gains(rng, 2, 4)
    fs = build_friendly_stack(model, friendly_tables(model, obj))
    parts = build_psi_and_F(model, fs)
    maps = NoiseMaps(model, gains)
    xhat_stack = np.vstack(maps.estimate_maps()[::-1])
    ustar = -fs.control_map @ xhat_stack
    for k in range(1, 5):
        lhs = maps.conditional(ustar, k)
        rhs = -fs.control_map @ parts.selector(k) @ xhat_stack
        assert np.abs(lhs - rhs).max() < 1e-10


def test_response_rows_match_dense_product():
    _, model, obj, atk = _random_setup(6)
    at = adversarial_tables(model, obj, atk)
    fs = build_friendly_stack(model, friendly_tables(model, obj))
    parts = build_psi_and_F(model, fs)
    rows = response_rows(model, parts, at)
    n, r = model.n, model.r
    for k in range(1, n + 1):
        dense = at.gain_dense(k) @ parts.F_row(k)
        p = n - k
        assert np.abs(rows[p * r:(p + 1) * r] - dense).max() < 1e-10


@pytest.mark.parametrize("kappa", [1, 3, 5])
def test_adversary_stack_matches_dense_solve(kappa):
    _, model, obj, atk = _random_setup(7)
    n, m, r = model.n, model.m, model.r
    at = adversarial_tables(model, obj, atk)
    fs = build_friendly_stack(model, friendly_tables(model, obj))
    parts = build_psi_and_F(model, fs)
    st = build_adversary_stack(model, at, fs, kappa, atk.z, parts=parts)
    cnt = n - kappa + 1
    aug = 2 * m + n * r
    KA = np.zeros((cnt * r, cnt * aug))
    for i, k in enumerate(range(n, kappa - 1, -1)):
        KA[i * r:(i + 1) * r, i * aug:(i + 1) * aug] = at.gain_dense(k)
    F = parts.F_stack(kappa)
    T_dense = np.linalg.solve(st.phi, KA @ F) + fs.control_map[:cnt * r]
    zbar = np.zeros(aug)
    zbar[m + n * r:] = atk.z
    Z_dense = np.linalg.solve(st.phi, KA @ np.tile(zbar, cnt))
    assert np.abs(st.T - T_dense).max() < 1e-9
    assert np.abs(st.Z - Z_dense).max() < 1e-9


def test_indifferent_adversary_mimics_friendly():
    _, model, obj, _ = _random_setup(8)
    atk = ss.AttackerSpec(QA=np.zeros((3, 3)), RA=np.eye(2), lam=0.0,
                          z=np.ones(3), name="A1")
    at = adversarial_tables(model, obj, atk)
    fs = build_friendly_stack(model, friendly_tables(model, obj))
    st = build_adversary_stack(model, at, fs, 2, atk.z)
    rows = (model.n - 1) * model.r
    assert np.abs(st.T - fs.control_map[:rows]).max() < 1e-12
    assert np.abs(st.Z).max() == 0.0


def test_zero_target_kills_offset():
    _, model, obj, atk = _random_setup(9)
    at = adversarial_tables(model, obj, atk)
    fs = build_friendly_stack(model, friendly_tables(model, obj))
    st = build_adversary_stack(model, at, fs, 2, np.zeros(model.m))
    assert np.abs(st.Z).max() == 0.0


def test_single_stage_adversary_coupling_is_identity():
    _, model, obj, atk = _random_setup(10)
    at = adversarial_tables(model, obj, atk)
    fs = build_friendly_stack(model, friendly_tables(model, obj))
    st = build_adversary_stack(model, at, fs, model.n, atk.z)
    assert np.allclose(st.phi, np.eye(model.r))


def test_all_friendly_operator_is_negated_gain_block():
    _, model, obj, _ = _random_setup(11)
    sset = ss.assign_measures(ss.enumerate_typical(model.n, 2, 0), "uniform")
    suite = build_operator_suite(model, obj, [], sset)
    op = suite.operators[0]
    assert np.abs(op.Xi + suite.fstack.gain_block).max() < 1e-12
    assert np.abs(op.xi).max() == 0.0
    assert np.abs(op.T - suite.fstack.control_map).max() == 0.0


def test_operator_shapes_and_sources():
    _, model, obj, atk = _random_setup(12)
    n, m, r = model.n, model.m, model.r
    sset = ss.assign_measures(ss.enumerate_typical(n, 2, 1), "uniform")
    suite = build_operator_suite(model, obj, [atk], sset)
    for sc, op in zip(sset.scenarios, suite.operators):
        assert op.Xi.shape == (sc.n_T * r, n * m)
        assert op.xi.shape == (sc.n_T * r,)
    # undetected attack from stage 1 uses the adversary stack rows verbatim
    full_attack = next(op for sc, op in zip(sset.scenarios, suite.operators)
                       if sc.label == ",".join(["A1"] * len(sc.theta)))
    st = suite.stacks[("A1", 1)]
    assert np.abs(full_attack.T - st.T).max() == 0.0


def test_operator_columns_are_causal():
    _, model, obj, atk = _random_setup(13)
    n, m, r = model.n, model.m, model.r
    sset = ss.assign_measures(ss.enumerate_typical(n, 2, 1), "uniform")
    suite = build_operator_suite(model, obj, [atk], sset)
    for sc, op in zip(sset.scenarios, suite.operators):
        for k in range(1, sc.n_T + 1):
            if k == n:
                continue
            row = op.Xi[(sc.n_T - k) * r:(sc.n_T - k + 1) * r]
            assert np.abs(row[:, : (n - k) * m]).max() < 1e-12


def test_scenario_operator_requires_prepared_stack():
    _, model, obj, atk = _random_setup(14)
    sset = ss.assign_measures(ss.enumerate_typical(model.n, 2, 1), "uniform")
    ft = friendly_tables(model, obj)
    fs = build_friendly_stack(model, ft)
    attacked = next(s for s in sset.scenarios if s.attacked)
    with pytest.raises(KeyError):
        build_scenario_operator(attacked, {}, fs, ft, model)
