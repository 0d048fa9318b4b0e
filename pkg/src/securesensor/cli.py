"""Command-line front end.

Subcommands
-----------
generate    draw a benchmark plant and write it as an instance file
design      synthesize secure sensor gains from a config, write the artifact
evaluate    score designs (plus auto baselines) under a config's measures
reproduce   run the built-in benchmark flows and check their orderings

Exit codes: 0 success, 1 assertion or certification failure, 2 input error.

Config schema (JSON)
--------------------
Matrices are ``{"rows": R, "cols": C, "data": [[...], ...]}`` row-major.

::

    {
      "model": {"generator": {"seed": 0, "m": 8, "r": 2, "n": 100}}
               | {"inline": {"A": M, "B": M, "Sigma1": M, "SigmaV": M,
                             "n": 100, "D": M?, "SigmaW": M?}}
               | {"file": "instance.json"},
      "objective": {"preset": "benchmark"} | {"QF": M, "RF": M},
      "attackers": {"preset": "benchmark", "seed": 1, "lambda": 0.1}
                   | [{"name": "A1", "QA": M, "RA": M,
                       "lambda": 0.1, "z": [..m..]}, ...],
      "scenarios": {"delta": 35,
                    "measures": "uniform" | {"no_infiltration": 0.7}
                                | {"explicit": [..one weight per case..]},
                    "cases": [["F","A1","A1"], ...]?},
      "evaluation": {"trials": 0, "seed": 0},
      "tolerances": {"sdp_rel": 1e-8, "sdp_abs": 1e-10, "pinv": 1e-10},
      "output_dir": "out"
    }

Without ``scenarios.cases`` the typical at-most-one-infiltration set is
enumerated and ordered: case 1 is the no-infiltration run; then for each
attacker, infiltration slots ascending with detection boundaries ascending and
the undetected run last.  ``measures.explicit`` follows that order.  An
explicit ``cases`` list replaces the enumeration with the given slot-label
sequences (labels F, A1..At, T).

Outputs: ``design.json`` (gains, certified covariances, ranks, certificate),
``comparison.csv`` (per-case and average scores, full precision),
``manifest.json`` (versions, seeds, tolerances), optional ``traces.csv``.
Human-readable tables printed to stdout are rounded to one decimal.
"""

from __future__ import annotations

import argparse
import os
import sys

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_INPUT = 2

SCENARIO1_DEFAULTS = dict(seed=13, m=8, r=2, n=100, delta=35, no_infiltration=0.7)


def _apply_threads(threads: int | None):
    # Must happen before numpy is imported anywhere in this process.
    if threads is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ[var] = str(threads)


def _sdp_options(args, tolerances: dict):
    from .conic import SdpOptions
    opts = SdpOptions()
    if tolerances.get("sdp_rel") is not None:
        opts.tol_rel = float(tolerances["sdp_rel"])
    if tolerances.get("sdp_abs") is not None:
        opts.tol_abs = float(tolerances["sdp_abs"])
    if getattr(args, "tol_sdp", None) is not None:
        opts.tol_rel = args.tol_sdp
        opts.tol_abs = min(opts.tol_abs, args.tol_sdp)
    return opts


def _pinv_tol(args, tolerances: dict) -> float:
    if getattr(args, "tol_pinv", None) is not None:
        return args.tol_pinv
    return float(tolerances.get("pinv", 1e-10))


def _print_table(reports, scenarios):
    tags = [rep.tag for rep in reports]
    head = f"{'case':>5} {'label':<14} {'prob':>6} {'n_T':>4}" + "".join(f" {t:>12}" for t in tags)
    print(head)
    for i, sc in enumerate(scenarios):
        row = f"{sc.case_id:>5} {sc.label:<14} {sc.mu:>6.3f} {sc.n_T:>4}"
        for rep in reports:
            row += f" {rep.per_scenario[i].analytic:>12.1f}"
        print(row)
    row = f"{'avg':>5} {'':<14} {'':>6} {'':>4}"
    for rep in reports:
        row += f" {rep.average_analytic:>12.1f}"
    print(row)


def cmd_generate(args) -> int:
    from . import artifacts, model as mod
    model, diag = mod.generate_random_instance(args.seed, args.m, args.r, args.n)
    artifacts.save_model(args.out, model)
    print(f"wrote {args.out} (tries={diag['tries']}, cond(A)={diag['a_cond']:.3g})")
    return EXIT_OK


def cmd_design(args) -> int:
    from . import artifacts
    from .design import CertificationError, ExtractionError, secure_sensor_design
    from .stacked import build_operator_suite
    cfg = artifacts.load_config(args.config)
    outdir = args.out or cfg.output_dir or "."
    os.makedirs(outdir, exist_ok=True)
    model, obj, attackers, sset = artifacts.build_problem(cfg)
    opts = _sdp_options(args, cfg.tolerances)
    pinv = _pinv_tol(args, cfg.tolerances)
    suite = build_operator_suite(model, obj, attackers, sset)
    try:
        design = secure_sensor_design(model, obj, attackers, sset, options=opts,
                                      suite=suite, pinv_tol=pinv)
    except (CertificationError, ExtractionError) as e:
        print(f"design failed certification: {e}", file=sys.stderr)
        return EXIT_ASSERTION
    dpath = os.path.join(outdir, "design.json")
    artifacts.save_design(dpath, design)
    artifacts.save_manifest(os.path.join(outdir, "manifest.json"),
                            command="design", config=os.path.abspath(args.config),
                            seed=cfg.seed,
                            tolerances={"sdp_rel": opts.tol_rel, "sdp_abs": opts.tol_abs,
                                        "pinv": pinv})
    cert = design.certification
    print(f"wrote {dpath}")
    print(f"ranks: {design.ranks}")
    print(f"certified covariance error: {cert['max_rel_covariance_error']:.3g} "
          f"(sdp objective {cert['sdp_objective']:.6g})")
    for w in design.eigenvalue_warnings:
        print(f"warning: {w}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from . import artifacts
    from .evaluate import baseline_design, compare
    from .stacked import build_operator_suite
    cfg = artifacts.load_config(args.config)
    outdir = args.out or cfg.output_dir or "."
    os.makedirs(outdir, exist_ok=True)
    model, obj, attackers, sset = artifacts.build_problem(cfg)
    designs = [artifacts.load_design(p) for p in args.designs]
    for d, p in zip(designs, args.designs):
        if d.gains[0].shape != (model.m, model.m) or d.n != model.n:
            print(f"{p}: design shaped for ({d.n} stages of {d.gains[0].shape}) "
                  f"does not match the model (n={model.n}, m={model.m})", file=sys.stderr)
            return EXIT_INPUT
    tags = {d.tag for d in designs}
    for kind in ("classical", "no-sensor"):
        if kind not in tags:
            designs.append(baseline_design(kind, model))
    trials = args.trials if args.trials is not None else cfg.trials
    seed = args.seed if args.seed is not None else cfg.seed
    suite = build_operator_suite(model, obj, attackers, sset)
    reports = compare(designs, sset, model, obj, attackers, trials=trials,
                      seed=seed, suite=suite)
    cpath = os.path.join(outdir, "comparison.csv")
    artifacts.save_comparison_csv(cpath, reports, sset.scenarios)
    artifacts.save_summary(os.path.join(outdir, "summary.json"), reports)
    artifacts.save_manifest(os.path.join(outdir, "manifest.json"),
                            command="evaluate", config=os.path.abspath(args.config),
                            trials=trials, seed=seed,
                            tolerances=cfg.tolerances)
    if args.trace_trials:
        _write_traces(os.path.join(outdir, "traces.csv"), designs[0], sset, model,
                      suite, args.trace_trials, seed)
    _print_table(reports, sset.scenarios)
    print(f"wrote {cpath}")
    return EXIT_OK


def _write_traces(path, design, sset, model, suite, count, seed):
    from .evaluate import simulate_closed_loop
    lines = ["case,trial,k,agent," +
             ",".join(f"x{i+1}" for i in range(model.m)) + "," +
             ",".join(f"s{i+1}" for i in range(model.m)) + "," +
             ",".join(f"u{i+1}" for i in range(model.r)) +
             ("," + ",".join(f"y{i+1}" for i in range(model.r)) if model.D is not None else "")]
    for sc in sset.scenarios:
        if sc.n_T == 0:
            continue
        _, _, extra = simulate_closed_loop(design.gains, sc, max(count, 1), seed,
                                           model, suite, collect_traces=count)
        for row in extra.get("traces", []):
            vals = [str(sc.case_id), str(row["trial"]), str(row["k"]), row["agent"]]
            vals += [repr(v) for v in row["x"]]
            vals += [repr(v) for v in row["s"]]
            vals += [repr(v) for v in row["u"]]
            if model.D is not None:
                vals += [repr(v) for v in row["y"]]
            lines.append(",".join(vals))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _scenario1_problem(seed: int):
    from .model import (generate_random_instance, benchmark_attackers,
                        benchmark_objective)
    from .scenarios import assign_measures, enumerate_typical
    p = SCENARIO1_DEFAULTS
    model, _ = generate_random_instance(seed, p["m"], p["r"], p["n"])
    obj = benchmark_objective(p["m"], p["r"])
    attackers = benchmark_attackers(p["m"], p["r"], seed=seed + 1)
    base = enumerate_typical(p["n"], p["delta"], len(attackers))
    sset = assign_measures(base, {"no_infiltration": p["no_infiltration"]})
    return model, obj, attackers, base, sset


def _check(label: str, ok: bool, detail: str, failures: list):
    status = "ok" if ok else "FAIL"
    print(f"  [{status}] {label}: {detail}")
    if not ok:
        failures.append(f"{label}: {detail}")


def cmd_reproduce(args) -> int:
    from . import artifacts
    import numpy as np
    from .design import secure_sensor_design
    from .evaluate import baseline_design, compare
    from .scenarios import assign_measures
    from .stacked import build_operator_suite

    seed = args.seed if args.seed is not None else SCENARIO1_DEFAULTS["seed"]
    outdir = args.out or "."
    os.makedirs(outdir, exist_ok=True)
    model, obj, attackers, base, sset = _scenario1_problem(seed)
    suite = build_operator_suite(model, obj, attackers, sset)
    secure = secure_sensor_design(model, obj, attackers, sset, suite=suite)
    designs = [secure, baseline_design("classical", model),
               baseline_design("no-sensor", model)]
    failures: list[str] = []

    if args.flow == "scenario1":
        reports = compare(designs, sset, model, obj, attackers,
                          trials=args.trials or 0, seed=seed, suite=suite)
        _print_table(reports, sset.scenarios)
        sec, cla, nos = reports
        _check("secure beats classical on average",
               sec.average_analytic < cla.average_analytic,
               f"{sec.average_analytic:.3f} < {cla.average_analytic:.3f}", failures)
        _check("open loop is at least 10x worse",
               nos.average_analytic >= 10 * max(sec.average_analytic, cla.average_analytic),
               f"{nos.average_analytic:.3f} vs 10 x {max(sec.average_analytic, cla.average_analytic):.3f}",
               failures)
        attacked = all(s.analytic <= c.analytic for s, c in
                       zip(sec.per_scenario[1:], cla.per_scenario[1:]))
        _check("secure beats classical on every attacked case", attacked,
               "cases 2..%d" % len(sset), failures)
        _check("classical wins (or ties) the no-infiltration case",
               cla.per_scenario[0].analytic <= sec.per_scenario[0].analytic + 1e-9,
               f"{cla.per_scenario[0].analytic:.4g} <= {sec.per_scenario[0].analytic:.4g}",
               failures)
        artifacts.save_design(os.path.join(outdir, "design.json"), secure)
        artifacts.save_comparison_csv(os.path.join(outdir, "comparison.csv"),
                                      reports, sset.scenarios)
    else:  # scenario2
        count = len(sset)
        perceived = np.zeros(count)
        perceived[0] = 0.85
        half = (count - 1) // 2
        perceived[1:1 + half] = 0.025
        sset_p = assign_measures(base, perceived)
        suite_p = build_operator_suite(model, obj, attackers, sset_p)
        mismatched = secure_sensor_design(model, obj, attackers, sset_p, suite=suite_p)
        mismatched.tag = "secure-perceived"
        reports = compare([secure, mismatched, designs[1]], sset, model, obj,
                          attackers, trials=args.trials or 0, seed=seed, suite=suite)
        _print_table(reports, sset.scenarios)
        acc, mis, cla = reports
        _check("mismatched design cannot beat the accurate one",
               mis.average_analytic >= acc.average_analytic - 1e-6,
               f"{mis.average_analytic:.4f} >= {acc.average_analytic:.4f} - 1e-6", failures)
        _check("mismatched secure design still beats classical",
               mis.average_analytic <= cla.average_analytic,
               f"{mis.average_analytic:.3f} <= {cla.average_analytic:.3f}", failures)
        artifacts.save_design(os.path.join(outdir, "design_mu.json"), secure)
        artifacts.save_design(os.path.join(outdir, "design_perceived.json"), mismatched)
        artifacts.save_comparison_csv(os.path.join(outdir, "comparison.csv"),
                                      reports, sset.scenarios)

    artifacts.save_manifest(os.path.join(outdir, "manifest.json"),
                            command=f"reproduce:{args.flow}", seed=seed,
                            defaults=SCENARIO1_DEFAULTS)
    if failures:
        print("ordering assertions failed:", file=sys.stderr)
        for f in failures:
            print(f"  expected {f}", file=sys.stderr)
        return EXIT_ASSERTION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="securesensor",
                                 description="Secure sensor synthesis and evaluation")
    ap.add_argument("--threads", type=int, default=None,
                    help="cap BLAS/OpenMP threads for this run")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="draw a benchmark plant instance")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--m", type=int, default=8)
    g.add_argument("--r", type=int, default=2)
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("design", help="synthesize secure sensor gains")
    d.add_argument("--config", required=True)
    d.add_argument("--out", default=None)
    d.add_argument("--tol-sdp", type=float, default=None,
                   help="override the SDP duality-gap tolerance")
    d.add_argument("--tol-pinv", type=float, default=None,
                   help="override the pseudo-inverse eigenvalue cutoff")
    d.set_defaults(func=cmd_design)

    e = sub.add_parser("evaluate", help="score designs against the baselines")
    e.add_argument("--config", required=True)
    e.add_argument("designs", nargs="*", metavar="DESIGN",
                   help="design artifacts to score (baselines are added)")
    e.add_argument("--out", default=None)
    e.add_argument("--trials", type=int, default=None,
                   help="Monte Carlo trials per scenario (0 = analytic only)")
    e.add_argument("--seed", type=int, default=None)
    e.add_argument("--trace-trials", type=int, default=0,
                   help="dump per-stage traces for this many trials per case")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("reproduce", help="run a built-in benchmark flow")
    r.add_argument("flow", choices=["scenario1", "scenario2"])
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--trials", type=int, default=0)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _apply_threads(args.threads)
    try:
        return args.func(args)
    except Exception as e:  # input errors exit 2, per the interface contract
        from .artifacts import ConfigError
        if isinstance(e, (ConfigError, FileNotFoundError, ValueError, KeyError)):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_INPUT
        raise


if __name__ == "__main__":
    sys.exit(main())
