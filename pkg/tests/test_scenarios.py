import numpy as np
import pytest

from securesensor.scenarios import (assign_measures, derive_transitions,
                                    enumerate_typical, make_scenario)


def test_worked_example_transitions():
    # n=100, delta=30: friendly through stage 59, infiltrated 60..89, detected at 90
    hbar, n_T, kappa_T, segments = derive_transitions(
        ["F", "F", "A1", "T"], delta=30, n=100)
    assert hbar == (1, 60, 90)
    assert n_T == 89
    assert kappa_T == 60
    assert [(s.agent, s.start, s.stop) for s in segments] == [("F", 1, 60), ("A1", 60, 90)]


def test_no_transition_runs_to_horizon():
    hbar, n_T, kappa_T, segments = derive_transitions(["F", "F", "F"], delta=35, n=100)
    assert hbar == (1, 101)
    assert n_T == 100
    assert segments == segments[:1] * len(segments)
    assert (segments[0].agent, segments[0].start, segments[0].stop) == ("F", 1, 101)


def test_attacker_from_first_stage():
    _, n_T, _, segments = derive_transitions(["A1", "A1", "A1"], delta=35, n=100)
    assert segments[0].start == 1 and segments[0].agent == "A1"
    assert n_T == 100


def test_malformed_sequences_rejected():
    with pytest.raises(ValueError):
        derive_transitions(["A1", "T", "A1"], delta=35, n=100)
    with pytest.raises(ValueError):
        derive_transitions(["T", "T", "T"], delta=35, n=100)
    with pytest.raises(ValueError):
        derive_transitions(["F", "F"], delta=35, n=100)  # wrong slot count


def test_detection_truncates_horizon():
    _, n_T, _, _ = derive_transitions(["A1", "T", "T"], delta=35, n=100)
    assert n_T == 34
    _, n_T, _, _ = derive_transitions(["A1", "A1", "T"], delta=35, n=100)
    assert n_T == 69


def test_enumerate_counts():
    assert len(enumerate_typical(100, 35, 2)) == 13
    assert len(enumerate_typical(100, 35, 0)) == 1
    assert len(enumerate_typical(10, 12, 1)) == 2  # single slot: all-F plus undetected attack
    # 1 + t N (N+1) / 2 in general
    for n, delta, t in [(100, 30, 1), (60, 10, 3), (12, 4, 2)]:
        N = -(-n // delta)
        assert len(enumerate_typical(n, delta, t)) == 1 + t * N * (N + 1) // 2


def test_enumerate_case_layout():
    sset = enumerate_typical(100, 35, 2)
    labels = [s.label for s in sset.scenarios]
    assert labels[0] == "F,F,F"
    assert labels[1:7] == ["A1,T,T", "A1,A1,T", "A1,A1,A1",
                           "F,A1,T", "F,A1,A1", "F,F,A1"]
    assert labels[7:] == ["A2,T,T", "A2,A2,T", "A2,A2,A2",
                          "F,A2,T", "F,A2,A2", "F,F,A2"]
    assert [s.case_id for s in sset.scenarios] == list(range(1, 14))


def test_measure_assignment_benchmark_split():
    sset = assign_measures(enumerate_typical(100, 35, 2), {"no_infiltration": 0.7})
    mus = sset.measures
    assert mus[0] == pytest.approx(0.7)
    assert np.allclose(mus[1:], 0.025)
    assert abs(mus.sum() - 1.0) < 1e-12


def test_measure_assignment_explicit_and_uniform():
    base = enumerate_typical(100, 35, 2)
    perceived = [0.85] + [0.025] * 6 + [0.0] * 6
    sset = assign_measures(base, perceived)
    assert sset.measures[0] == pytest.approx(0.85)
    assert np.allclose(sset.measures[7:], 0.0)
    assert abs(sset.measures.sum() - 1.0) < 1e-12
    two = assign_measures(enumerate_typical(10, 12, 1), "uniform")
    assert np.allclose(two.measures, 0.5)


def test_measure_assignment_rejects_bad_specs():
    base = enumerate_typical(100, 35, 2)
    with pytest.raises(ValueError):
        assign_measures(base, [0.0] * 13)
    with pytest.raises(ValueError):
        assign_measures(base, [-1.0] + [1.0] * 12)
    with pytest.raises(ValueError):
        assign_measures(base, [0.5] * 7)


def test_segments_tile_horizon_everywhere():
    for n, delta, t in [(100, 35, 2), (12, 4, 2), (100, 30, 1), (7, 3, 2)]:
        sset = assign_measures(enumerate_typical(n, delta, t), "uniform")
        sset.validate()
        for sc in sset.scenarios:
            covered = sum(seg.stop - seg.start for seg in sc.segments)
            assert covered == sc.n_T
            assert sc.hbar[-1] == sc.n_T + 1


def test_scenario_attacked_flag():
    sc = make_scenario(["F", "A1", "A1"], delta=35, n=100)
    assert sc.attacked
    assert not make_scenario(["F", "F", "F"], delta=35, n=100).attacked
