import json

import numpy as np

import securesensor as ss
from securesensor import artifacts
from securesensor.cli import main
from securesensor.design import SensorDesign


def _write_config(path, **overrides):
    cfg = {
        "model": {"generator": {"seed": 0, "m": 4, "r": 2, "n": 12}},
        "objective": {"preset": "benchmark"},
        "attackers": {"preset": "benchmark", "seed": 1, "lambda": 0.1},
        "scenarios": {"delta": 4, "measures": {"no_infiltration": 0.7}},
        "evaluation": {"trials": 0, "seed": 0},
    }
    cfg.update(overrides)
    with open(path, "w") as fh:
        json.dump(cfg, fh)
    return path


def test_generate_writes_loadable_instance(tmp_path):
    out = tmp_path / "inst.json"
    assert main(["generate", "--seed", "5", "--m", "3", "--r", "1",
                 "--n", "6", "--out", str(out)]) == 0
    model = artifacts.load_model(str(out))
    ref, _ = ss.generate_random_instance(seed=5, m=3, r=1, n=6)
    assert np.array_equal(model.A, ref.A)
    assert np.array_equal(model.SigmaV, ref.SigmaV)


def test_design_and_evaluate_flow(tmp_path):
    cfg = _write_config(tmp_path / "config.json")
    out = tmp_path / "out"
    assert main(["design", "--config", str(cfg), "--out", str(out)]) == 0
    dpath = out / "design.json"
    assert dpath.exists() and (out / "manifest.json").exists()
    design = artifacts.load_design(str(dpath))
    assert design.tag == "secure" and design.n == 12
    assert design.certification["max_rel_covariance_error"] <= 1e-6

    assert main(["evaluate", "--config", str(cfg), str(dpath),
                 "--out", str(out), "--trials", "200", "--seed", "9"]) == 0
    table = (out / "comparison.csv").read_text().strip().splitlines()
    assert table[0].startswith("case,label,measure,n_T,secure_analytic")
    assert len(table) == 1 + 13 + 1  # header, cases, average
    assert table[-1].startswith("average")


def test_design_artifact_roundtrip_bitexact(tmp_path):
    cfg = _write_config(tmp_path / "config.json")
    out = tmp_path / "out"
    main(["design", "--config", str(cfg), "--out", str(out)])
    d1 = artifacts.load_design(str(out / "design.json"))
    artifacts.save_design(str(out / "copy.json"), d1)
    d2 = artifacts.load_design(str(out / "copy.json"))
    for a, b in zip(d1.gains, d2.gains):
        assert np.array_equal(a, b)
    for a, b in zip(d1.S, d2.S):
        assert np.array_equal(a, b)


def test_design_output_deterministic(tmp_path):
    cfg = _write_config(tmp_path / "config.json")
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["design", "--config", str(cfg), "--out", str(out1)])
    main(["design", "--config", str(cfg), "--out", str(out2)])
    assert (out1 / "design.json").read_bytes() == (out2 / "design.json").read_bytes()


def test_model_roundtrip_bitexact(tmp_path):
    model, _ = ss.generate_random_instance(seed=8, m=5, r=2, n=7)
    p = tmp_path / "m.json"
    artifacts.save_model(str(p), model)
    back = artifacts.load_model(str(p))
    for field in ("A", "B", "Sigma1", "SigmaV"):
        assert np.array_equal(getattr(model, field), getattr(back, field))


def test_malformed_config_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"model": {"generator": {"seed": 0, "m": 4, "r": 2}}}')
    assert main(["design", "--config", str(p)]) == 2
    err = capsys.readouterr().err
    assert "model.generator.n" in err

    p2 = tmp_path / "bad2.json"
    p2.write_text('{"model": ')
    assert main(["design", "--config", str(p2)]) == 2
    assert "bad2.json:1" in capsys.readouterr().err


def test_dimension_mismatch_exits_2(tmp_path):
    cfg = _write_config(tmp_path / "config.json")
    wrong = SensorDesign(tag="custom", gains=[np.eye(3)] * 12)
    artifacts.save_design(str(tmp_path / "wrong.json"), wrong)
    assert main(["evaluate", "--config", str(cfg),
                 str(tmp_path / "wrong.json"), "--out", str(tmp_path)]) == 2


def test_inline_model_and_explicit_attackers(tmp_path):
    model, _ = ss.generate_random_instance(seed=2, m=4, r=2, n=8)
    inline = {
        "A": {"rows": 4, "cols": 4, "data": model.A.tolist()},
        "B": {"rows": 4, "cols": 2, "data": model.B.tolist()},
        "Sigma1": {"rows": 4, "cols": 4, "data": model.Sigma1.tolist()},
        "SigmaV": {"rows": 4, "cols": 4, "data": model.SigmaV.tolist()},
        "n": 8,
    }
    eye4 = {"rows": 4, "cols": 4, "data": np.eye(4).tolist()}
    eye2 = {"rows": 2, "cols": 2, "data": np.eye(2).tolist()}
    qa = {"rows": 4, "cols": 4, "data": np.diag([0, 0, 0, 1.0]).tolist()}
    cfg = _write_config(
        tmp_path / "config.json",
        model={"inline": inline},
        objective={"QF": eye4, "RF": eye2},
        attackers=[{"name": "A1", "QA": qa, "RA": eye2, "lambda": 0.2,
                    "z": [0.0, 0.0, 1.0, 1.0]}],
        scenarios={"delta": 3, "measures": "uniform"},
    )
    out = tmp_path / "out"
    assert main(["design", "--config", str(cfg), "--out", str(out)]) == 0
    cfg_loaded = artifacts.load_config(str(cfg))
    assert np.array_equal(cfg_loaded.model.A, model.A)
    assert len(cfg_loaded.scenario_set()) == 1 + 1 * 3 * 4 // 2


def test_evaluate_writes_summary(tmp_path):
    cfg = _write_config(tmp_path / "config.json")
    out = tmp_path / "out"
    main(["design", "--config", str(cfg), "--out", str(out)])
    main(["evaluate", "--config", str(cfg), str(out / "design.json"),
          "--out", str(out)])
    doc = json.loads((out / "summary.json").read_text())
    assert doc["kind"] == "evaluation-summary"
    tags = [d["tag"] for d in doc["designs"]]
    assert tags == ["secure", "classical", "no-sensor"]
    assert len(doc["designs"][0]["per_scenario"]) == 13


def test_reproduce_scenario1_flow(tmp_path):
    out = tmp_path / "rep"
    assert main(["reproduce", "scenario1", "--out", str(out)]) == 0
    assert (out / "design.json").exists()
    assert (out / "comparison.csv").exists()
    assert (out / "manifest.json").exists()


def test_traces_written(tmp_path):
    cfg = _write_config(tmp_path / "config.json")
    out = tmp_path / "out"
    main(["design", "--config", str(cfg), "--out", str(out)])
    assert main(["evaluate", "--config", str(cfg), str(out / "design.json"),
                 "--out", str(out), "--trials", "50", "--trace-trials", "2"]) == 0
    lines = (out / "traces.csv").read_text().strip().splitlines()
    assert lines[0].startswith("case,trial,k,agent,x1")
    assert len(lines) > 13  # at least one row per scenario


def test_traces_include_control_observations(tmp_path):
    model, _ = ss.generate_random_instance(seed=2, m=4, r=2, n=6)
    inline = {
        "A": {"rows": 4, "cols": 4, "data": model.A.tolist()},
        "B": {"rows": 4, "cols": 2, "data": model.B.tolist()},
        "Sigma1": {"rows": 4, "cols": 4, "data": model.Sigma1.tolist()},
        "SigmaV": {"rows": 4, "cols": 4, "data": model.SigmaV.tolist()},
        "D": {"rows": 2, "cols": 2, "data": np.eye(2).tolist()},
        "SigmaW": {"rows": 2, "cols": 2, "data": (0.1 * np.eye(2)).tolist()},
        "n": 6,
    }
    cfg = _write_config(tmp_path / "config.json", model={"inline": inline},
                        scenarios={"delta": 3, "measures": "uniform"})
    out = tmp_path / "out"
    main(["design", "--config", str(cfg), "--out", str(out)])
    assert main(["evaluate", "--config", str(cfg), str(out / "design.json"),
                 "--out", str(out), "--trace-trials", "1"]) == 0
    header = (out / "traces.csv").read_text().splitlines()[0]
    assert header.endswith("y1,y2")


def test_model_file_source_and_explicit_cases(tmp_path):
    inst = tmp_path / "inst.json"
    main(["generate", "--seed", "6", "--m", "4", "--r", "2", "--n", "8",
          "--out", str(inst)])
    cfg = _write_config(
        tmp_path / "config.json",
        model={"file": str(inst)},
        scenarios={"delta": 4, "measures": "uniform",
                   "cases": [["F", "F"], ["A1", "A1"], ["A1", "T"]]},
    )
    loaded = artifacts.load_config(str(cfg))
    sset = loaded.scenario_set()
    assert len(sset) == 3
    assert [sc.label for sc in sset.scenarios] == ["F,F", "A1,A1", "A1,T"]
    assert sset.scenarios[2].n_T == 3  # detection at the slot boundary
    out = tmp_path / "out"
    assert main(["design", "--config", str(cfg), "--out", str(out)]) == 0
