"""File formats: experiment configs, instance/design artifacts, reports.

Everything on disk is JSON with matrices stored row-major under explicit
dimensions ({"rows": r, "cols": c, "data": [[...], ...]}); floats are written
with shortest round-trip precision, so save/load is bit-exact.  The full
config schema is documented in :mod:`securesensor.cli`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .design import SensorDesign
from .model import (AttackerSpec, FriendlyObjective, SystemModel,
                    benchmark_attackers, benchmark_objective)
from .scenarios import ScenarioSet, assign_measures, enumerate_typical

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "build_problem",
    "save_model",
    "load_model",
    "save_design",
    "load_design",
    "save_comparison_csv",
    "save_manifest",
]


class ConfigError(ValueError):
    """Invalid input document; ``where`` points at the offending field."""

    def __init__(self, where: str, msg: str):
        self.where = where
        super().__init__(f"{where}: {msg}")


def _mat_doc(M: np.ndarray) -> dict:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return {"rows": M.shape[0], "cols": M.shape[1], "data": M.tolist()}


def _mat_load(doc, where: str) -> np.ndarray:
    if not isinstance(doc, dict) or not {"rows", "cols", "data"} <= set(doc):
        raise ConfigError(where, "expected a matrix object with rows/cols/data")
    try:
        M = np.asarray(doc["data"], dtype=float)
    except (TypeError, ValueError) as e:
        raise ConfigError(where + ".data", f"not numeric: {e}") from None
    if M.shape != (doc["rows"], doc["cols"]):
        raise ConfigError(where, f"declared {doc['rows']}x{doc['cols']} but data is {M.shape}")
    return M


def _vec_load(doc, where: str) -> np.ndarray:
    try:
        v = np.asarray(doc, dtype=float)
    except (TypeError, ValueError) as e:
        raise ConfigError(where, f"not numeric: {e}") from None
    if v.ndim != 1:
        raise ConfigError(where, f"expected a flat vector, got shape {v.shape}")
    return v


@dataclass
class ExperimentConfig:
    """One document that drives design, evaluation, and reproduction runs."""

    model: SystemModel
    objective: FriendlyObjective
    attackers: list[AttackerSpec]
    delta: int
    measures: object            # accepted by scenarios.assign_measures
    cases: list | None = None   # explicit agent sequences instead of the typical set
    trials: int = 0
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    output_dir: str | None = None
    raw: dict = field(default_factory=dict)

    def scenario_set(self, measures=None) -> ScenarioSet:
        if self.cases is None:
            base = enumerate_typical(self.model.n, self.delta, len(self.attackers))
        else:
            from dataclasses import replace
            from .scenarios import make_scenario
            scenarios = tuple(
                replace(make_scenario(theta, self.delta, self.model.n), case_id=i + 1)
                for i, theta in enumerate(self.cases))
            base = ScenarioSet(scenarios=scenarios, t=len(self.attackers),
                               n=self.model.n, delta=self.delta)
        return assign_measures(base, self.measures if measures is None else measures)


def _load_model_block(doc, where: str) -> SystemModel:
    if "file" in doc:
        return load_model(doc["file"])
    if "generator" in doc:
        g = doc["generator"]
        for key in ("seed", "m", "r", "n"):
            if key not in g:
                raise ConfigError(f"{where}.generator.{key}", "missing")
        from .model import generate_random_instance
        model, _ = generate_random_instance(int(g["seed"]), int(g["m"]),
                                            int(g["r"]), int(g["n"]))
        return model
    if "inline" in doc:
        d = doc["inline"]
        missing = {"A", "B", "Sigma1", "SigmaV", "n"} - set(d)
        if missing:
            raise ConfigError(f"{where}.inline", f"missing fields {sorted(missing)}")
        kwargs = {k: _mat_load(d[k], f"{where}.inline.{k}")
                  for k in ("A", "B", "Sigma1", "SigmaV")}
        kwargs["n"] = int(d["n"])
        for opt in ("D", "SigmaW"):
            if opt in d and d[opt] is not None:
                kwargs[opt] = _mat_load(d[opt], f"{where}.inline.{opt}")
        return SystemModel(**kwargs)
    raise ConfigError(where, "expected exactly one of 'generator', 'inline', or 'file'")


def _load_objective(doc, model: SystemModel, where: str) -> FriendlyObjective:
    if doc is None or doc == {"preset": "benchmark"} or doc == "benchmark":
        return benchmark_objective(model.m, model.r)
    if not isinstance(doc, dict) or not {"QF", "RF"} <= set(doc):
        raise ConfigError(where, "expected {'QF':…, 'RF':…} or the 'benchmark' preset")
    return FriendlyObjective(QF=_mat_load(doc["QF"], f"{where}.QF"),
                             RF=_mat_load(doc["RF"], f"{where}.RF"))


def _load_attackers(doc, model: SystemModel, where: str) -> list[AttackerSpec]:
    if doc is None:
        return []
    if isinstance(doc, dict) and doc.get("preset") == "benchmark":
        return benchmark_attackers(model.m, model.r, seed=int(doc.get("seed", 0)),
                                     lam=float(doc.get("lambda", 0.1)))
    if not isinstance(doc, list):
        raise ConfigError(where, "expected a list of attackers or the 'benchmark' preset")
    out = []
    for i, a in enumerate(doc):
        w = f"{where}[{i}]"
        for key in ("QA", "RA", "lambda", "z"):
            if key not in a:
                raise ConfigError(f"{w}.{key}", "missing")
        out.append(AttackerSpec(QA=_mat_load(a["QA"], f"{w}.QA"),
                                RA=_mat_load(a["RA"], f"{w}.RA"),
                                lam=float(a["lambda"]),
                                z=_vec_load(a["z"], f"{w}.z"),
                                name=a.get("name", f"A{i + 1}")))
    return out


def _load_measures(doc, where: str):
    if doc is None or doc == "uniform":
        return "uniform"
    if isinstance(doc, dict) and "no_infiltration" in doc:
        return {"no_infiltration": float(doc["no_infiltration"])}
    if isinstance(doc, dict) and "explicit" in doc:
        return _vec_load(doc["explicit"], f"{where}.explicit")
    if isinstance(doc, list):
        return _vec_load(doc, where)
    raise ConfigError(where, "expected 'uniform', {'no_infiltration': p}, or an explicit vector")


def parse_config(doc: dict, where: str = "config") -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError(where, "top-level document must be an object")
    if "model" not in doc:
        raise ConfigError(f"{where}.model", "missing")
    model = _load_model_block(doc["model"], f"{where}.model")
    obj = _load_objective(doc.get("objective"), model, f"{where}.objective")
    attackers = _load_attackers(doc.get("attackers"), model, f"{where}.attackers")
    sc = doc.get("scenarios", {})
    if "delta" not in sc:
        raise ConfigError(f"{where}.scenarios.delta", "missing")
    measures = _load_measures(sc.get("measures"), f"{where}.scenarios.measures")
    cases = sc.get("cases")
    if cases is not None:
        if not isinstance(cases, list) or not all(isinstance(c, list) for c in cases):
            raise ConfigError(f"{where}.scenarios.cases",
                              "expected a list of agent-label lists")
    ev = doc.get("evaluation", {})
    return ExperimentConfig(model=model, objective=obj, attackers=attackers,
                            delta=int(sc["delta"]), measures=measures, cases=cases,
                            trials=int(ev.get("trials", 0)),
                            seed=int(ev.get("seed", 0)),
                            tolerances=doc.get("tolerances", {}),
                            output_dir=doc.get("output_dir"), raw=doc)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}", e.msg) from None
    except OSError as e:
        raise ConfigError(path, str(e)) from None
    return parse_config(doc)


def build_problem(cfg: ExperimentConfig):
    """(model, objective, attackers, measured scenario set) from a config."""
    return cfg.model, cfg.objective, cfg.attackers, cfg.scenario_set()


def save_model(path: str, model: SystemModel):
    doc = {"kind": "system-model",
           "A": _mat_doc(model.A), "B": _mat_doc(model.B),
           "Sigma1": _mat_doc(model.Sigma1), "SigmaV": _mat_doc(model.SigmaV),
           "n": model.n}
    if model.D is not None:
        doc["D"] = _mat_doc(model.D)
        doc["SigmaW"] = _mat_doc(model.SigmaW)
    _dump(path, doc)


def load_model(path: str) -> SystemModel:
    with open(path) as fh:
        doc = json.load(fh)
    return _load_model_block({"inline": doc}, path)


VOLATILE_STATS = ("solve_time",)


def save_design(path: str, design: SensorDesign):
    cert = _jsonable(design.certification)
    # wall-clock metadata would break byte-for-byte reproducibility
    for key in VOLATILE_STATS:
        cert.get("solver", {}).pop(key, None)
    doc = {
        "kind": "sensor-design",
        "tag": design.tag,
        "n": design.n,
        "m": design.gains[0].shape[0],
        "gains": [_mat_doc(L) for L in design.gains],
        "S": [_mat_doc(S) for S in design.S] if design.S is not None else None,
        "projections": [_mat_doc(P) for P in design.projections]
        if design.projections is not None else None,
        "ranks": design.ranks,
        "eigenvalue_warnings": design.eigenvalue_warnings,
        "certification": cert,
    }
    _dump(path, doc)


def load_design(path: str) -> SensorDesign:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("kind") != "sensor-design":
        raise ConfigError(path, "not a sensor-design document")
    gains = [_mat_load(g, f"{path}.gains[{i}]") for i, g in enumerate(doc["gains"])]
    S = ([_mat_load(s, f"{path}.S[{i}]") for i, s in enumerate(doc["S"])]
         if doc.get("S") else None)
    proj = ([_mat_load(p, f"{path}.projections[{i}]") for i, p in enumerate(doc["projections"])]
            if doc.get("projections") else None)
    return SensorDesign(tag=doc.get("tag", "custom"), gains=gains, S=S,
                        projections=proj, ranks=doc.get("ranks"),
                        eigenvalue_warnings=doc.get("eigenvalue_warnings", []),
                        certification=doc.get("certification", {}))


def save_comparison_csv(path: str, reports, scenarios):
    """One row per case plus the weighted average, one value column per design."""
    cols = []
    for rep in reports:
        cols.append(f"{rep.tag}_analytic")
        if rep.average_empirical is not None:
            cols.append(f"{rep.tag}_empirical")
            cols.append(f"{rep.tag}_stderr")
    lines = ["case,label,measure,n_T," + ",".join(cols)]
    for i, sc in enumerate(scenarios):
        vals = []
        for rep in reports:
            row = rep.per_scenario[i]
            vals.append(repr(row.analytic))
            if rep.average_empirical is not None:
                vals.append(repr(row.empirical))
                vals.append(repr(row.stderr))
        lines.append(f"{sc.case_id},\"{sc.label}\",{sc.mu!r},{sc.n_T}," + ",".join(vals))
    avg = []
    for rep in reports:
        avg.append(repr(rep.average_analytic))
        if rep.average_empirical is not None:
            avg.append(repr(rep.average_empirical))
            avg.append(repr(rep.average_stderr))
    lines.append("average,,,," + ",".join(avg))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def save_summary(path: str, reports):
    """Per-design averages and per-case scores as one structured document."""
    doc = {"kind": "evaluation-summary", "designs": []}
    for rep in reports:
        entry = {
            "tag": rep.tag,
            "average_analytic": rep.average_analytic,
            "average_empirical": rep.average_empirical,
            "average_stderr": rep.average_stderr,
            "per_scenario": [
                {"case": r.case_id, "label": r.label, "measure": r.mu,
                 "n_T": r.n_T, "analytic": r.analytic,
                 "empirical": r.empirical, "stderr": r.stderr}
                for r in rep.per_scenario
            ],
        }
        doc["designs"].append(entry)
    _dump(path, doc)


def save_manifest(path: str, **entries):
    import numpy
    import scipy
    from . import __version__
    doc = {"securesensor": __version__, "numpy": numpy.__version__,
           "scipy": scipy.__version__}
    doc.update(_jsonable(entries))
    _dump(path, doc)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def _dump(path: str, doc: dict):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
