"""Config-driven experiment runner.

    barylab <kind> --config FILE [--out DIR] [--seed N] [--threads N]
    barylab verify REPORT

Exit status: 0 success, 1 failed verification, 2 invalid config or input,
3 convergence failure, 4 capacity exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .barycenters import (
    CanonicalNPC,
    SemiflowImage,
    contractivity_audit,
    evaluate,
    karcher_residual,
    map_distance_lower_bound,
    map_from_dict,
    monotonicity_audit,
    semiflow_bound,
)
from .condexp import beta_conditional_expectation, sturm_conditional_expectation
from .ergodic import Transformation, ergodic_convergence_report, ergodic_limit
from .errors import BarylabError, CapacityError, ConvergenceError, DomainError, InputError, UnsupportedError
from .geometry import Space, diameter, dist
from .ldp import IIDModel, enumerate_empirical_distribution, event_from_dict, ldp_gap_report
from .martingales import Filtration, filtered_conditional_expectation, martingale_convergence_report
from .measures import DiscreteMeasure, cost_matrix, wasserstein
from .probability import FiniteProbabilitySpace, PartitionAlgebra, RandomVariable

KINDS = ("wasserstein", "barycenter", "condexp", "martingale", "ergodic", "semiflow", "mapdist", "ldp", "audit")

# --------------------------------------------------------------------------
# schema

_SPACE = {
    "type": "object",
    "required": ["geometry", "dim"],
    "properties": {
        "geometry": {"enum": ["euclidean", "spd_trace", "spd_thompson"]},
        "dim": {"type": "integer", "minimum": 1, "maximum": 16},
        "order": {"enum": [None, "loewner"]},
    },
    "additionalProperties": False,
}
_MAP = {"type": "object", "required": ["variant"], "properties": {"variant": {"type": "string"}}}
_MEASURE = {
    "type": "object",
    "required": ["points"],
    "properties": {"points": {"type": "array", "minItems": 1}, "weights": {"type": "array", "items": {"type": "number"}}},
    "additionalProperties": False,
}
_RV = {
    "type": "object",
    "required": ["probability", "values"],
    "properties": {
        "probability": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "values": {"type": "array", "minItems": 1},
    },
}
_P = {"type": "number", "minimum": 1}
_SEED = {"type": "integer", "minimum": 0}

_KIND_SCHEMAS = {
    "wasserstein": {"required": ["space", "p", "mu", "nu"], "properties": {"p": _P, "mu": _MEASURE, "nu": _MEASURE}},
    "barycenter": {"required": ["space", "map", "measure"], "properties": {"map": _MAP, "measure": _MEASURE}},
    "condexp": {
        "required": ["space", "map", "variable", "partition"],
        "properties": {"map": _MAP, "variable": _RV, "partition": {"type": "array", "items": {"type": "integer"}},
                       "p": _P},
    },
    "martingale": {
        "required": ["space", "map", "variable", "filtration"],
        "properties": {
            "map": _MAP,
            "variable": _RV,
            "p": _P,
            "filtration": {
                "type": "object",
                "required": ["algebras"],
                "properties": {"direction": {"enum": ["increasing", "decreasing"]},
                               "algebras": {"type": "array", "minItems": 1,
                                            "items": {"type": "array", "items": {"type": "integer"}}}},
            },
        },
    },
    "ergodic": {
        "required": ["space", "map", "variable", "perm"],
        "properties": {"map": _MAP, "variable": _RV, "perm": {"type": "array", "items": {"type": "integer"}},
                       "p": _P, "n_max": {"type": "integer", "minimum": 1, "maximum": 10000}},
    },
    "semiflow": {
        "required": ["space", "map", "measure", "times"],
        "properties": {"map": _MAP, "measure": _MEASURE, "tol": {"type": "number", "exclusiveMinimum": 0},
                       "times": {"type": "array", "minItems": 1,
                                 "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}}},
    },
    "mapdist": {
        "required": ["space", "maps", "seed", "tuple_budget"],
        "properties": {"maps": {"type": "array", "items": _MAP, "minItems": 2, "maxItems": 2}, "p": _P,
                       "seed": _SEED, "tuple_budget": {"type": "integer", "minimum": 1},
                       "sizes": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1}},
    },
    "ldp": {
        "required": ["space", "map", "atoms", "weights", "event", "n"],
        "properties": {"map": _MAP, "atoms": {"type": "array", "minItems": 1},
                       "weights": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                       "event": {"type": "object", "required": ["kind"]},
                       "n": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                       "lattice": {"type": "integer", "minimum": 1}},
    },
    "audit": {
        "required": ["space", "map", "audit", "trials", "seed"],
        "properties": {"map": _MAP, "audit": {"enum": ["contractivity", "monotonicity"]}, "p": _P,
                       "trials": {"type": "integer", "minimum": 1}, "seed": _SEED,
                       "max_atoms": {"type": "integer", "minimum": 1, "maximum": 64}},
    },
}


def config_schema(kind: str) -> dict:
    extra = _KIND_SCHEMAS[kind]
    return {
        "type": "object",
        "required": ["kind"] + extra["required"],
        "properties": {"kind": {"const": kind}, "space": _SPACE, "seed": _SEED, **extra["properties"]},
    }


# --------------------------------------------------------------------------
# JSON helpers


def _clean(obj):
    """Plain JSON: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _measure(space: Space, d: dict) -> DiscreteMeasure:
    return DiscreteMeasure(space, d["points"], d.get("weights"))


def _variable(space: Space, d: dict) -> RandomVariable:
    return RandomVariable(FiniteProbabilitySpace(d["probability"]), space, d["values"])


# --------------------------------------------------------------------------
# experiments; each returns (result, checks, csv rows or None)


def _run_wasserstein(cfg, space, ctx):
    mu, nu = _measure(space, cfg["mu"]), _measure(space, cfg["nu"])
    d, plan = wasserstein(cfg["p"], mu, nu)
    result = {"distance": d, "plan": plan.to_dict(), "mu": mu.to_dict(), "nu": nu.to_dict()}
    return result, None


def _run_barycenter(cfg, space, ctx):
    beta = map_from_dict(cfg["map"])
    mu = _measure(space, cfg["measure"])
    x = evaluate(beta, mu)
    result = {"point": x, "measure": mu.to_dict()}
    if space.is_spd and cfg["map"]["variant"] in ("karcher", "canonical_npc"):
        result["karcher_residual"] = karcher_residual(x, mu)
        result["residual_tol"] = max(beta.tol, 1e-10)
    return result, None


def _run_condexp(cfg, space, ctx):
    beta = map_from_dict(cfg["map"])
    phi = _variable(space, cfg["variable"])
    part = PartitionAlgebra(tuple(cfg["partition"]))
    e = beta_conditional_expectation(beta, phi, part)
    result = {"values": [v for v in e.values], "partition": part.to_list(),
              "probability": phi.prob.weights.tolist()}
    if space.npc and cfg["map"]["variant"] == "canonical_npc":
        s = sturm_conditional_expectation(phi, part)
        result["variational_gap"] = max(dist(space, a, b) for a, b in zip(e.values, s.values))
    return result, None


def _run_martingale(cfg, space, ctx):
    beta = map_from_dict(cfg["map"])
    phi = _variable(space, cfg["variable"])
    filt = Filtration.from_dict(cfg["filtration"])
    rep = martingale_convergence_report(beta, phi, filt, cfg.get("p"))
    result = {"convergence": rep.to_dict(), "filtration": filt.to_dict()}
    if filt.increasing:
        result["filtered"] = [filtered_conditional_expectation(beta, phi, filt, k).values for k in range(len(filt))]
    rows = [["k", "s_k"]] + [[k, s] for k, s in enumerate(rep.series)]
    return result, rows


def _run_ergodic(cfg, space, ctx):
    beta = map_from_dict(cfg["map"])
    phi = _variable(space, cfg["variable"])
    T = Transformation(cfg["perm"], phi.prob)
    gamma = ergodic_limit(beta, phi, T)
    rep = ergodic_convergence_report(beta, phi, T, cfg.get("p"), cfg.get("n_max", 60))
    result = {"gamma": gamma.values, "orbits": T.orbits, "ergodic": T.ergodic, "report": rep.to_dict()}
    live = sorted(rep.per_outcome)
    rows = [["n"] + [f"d_{i}" for i in live] + ["bd_p"]]
    for k, n in enumerate(rep.n):
        rows.append([n] + [rep.per_outcome[i][k] for i in live] + [rep.aggregate[k]])
    return result, rows


def _run_semiflow(cfg, space, ctx):
    beta = map_from_dict(cfg["map"])
    mu = _measure(space, cfg["measure"])
    tol = cfg.get("tol", 1e-10)
    times = sorted(set(cfg["times"]), reverse=True)
    values = [SemiflowImage(t, beta, tol)(mu) for t in times]
    result = {"times": times, "values": values, "diameter": mu.diameter(), "p": beta.p,
              "accuracy": [SemiflowImage(t, beta, tol).accuracy for t in times]}
    rows = [["t", "distance_to_canonical"]]
    if space.npc:
        lam = CanonicalNPC()(mu)
        result["canonical"] = lam
        result["distance_to_canonical"] = [dist(space, v, lam) for v in values]
        rows += [[t, d] for t, d in zip(times, result["distance_to_canonical"])]
    return result, rows


def _run_mapdist(cfg, space, ctx):
    b1, b2 = (map_from_dict(m) for m in cfg["maps"])
    sizes = cfg.get("sizes", list(range(2, 9)))
    bound = map_distance_lower_bound(b1, b2, cfg.get("p", 1.0), space, cfg["tuple_budget"], ctx["seed"], sizes,
                                     ctx["threads"])
    return {"lower_bound": bound.value, "witness": bound.witness, "evaluated": len(bound.ratios)}, None


def _run_ldp(cfg, space, ctx):
    model = IIDModel(space, cfg["atoms"], cfg["weights"], map_from_dict(cfg["map"]))
    event = event_from_dict(cfg["event"], space)
    rep = ldp_gap_report(model, event, cfg["n"], cfg.get("lattice", 40))
    totals = [math.fsum(e.probability for e in enumerate_empirical_distribution(model, n)) for n in cfg["n"]]
    result = {**rep.to_dict(), "total_probability": totals}
    rows = [["n", "P_n", "a_n", "gap"]] + [[r["n"], r["P_n"], r["a_n"], r["gap"]] for r in rep.to_dict()["rows"]]
    return result, rows


def _run_audit(cfg, space, ctx):
    beta = map_from_dict(cfg["map"])
    if cfg["audit"] == "contractivity":
        rep = contractivity_audit(beta, cfg.get("p", 1.0), space, cfg["trials"], ctx["seed"],
                                  cfg.get("max_atoms", 6), ctx["threads"])
    else:
        rep = monotonicity_audit(beta, space, cfg["trials"], ctx["seed"], ctx["threads"])
    return rep.to_dict(), None


RUNNERS = {k: globals()[f"_run_{k}"] for k in KINDS}


def run(kind: str, cfg: dict, seed: int | None = None, threads: int = 1) -> tuple[dict, list | None]:
    """Validate ``cfg`` and run one experiment; returns the report and CSV rows."""
    if kind not in KINDS:
        raise InputError(f"unknown experiment kind {kind!r}")
    cfg = dict(cfg)
    cfg.setdefault("kind", kind)
    if seed is not None:
        cfg["seed"] = int(seed)
    try:
        jsonschema.validate(cfg, config_schema(kind))
    except jsonschema.ValidationError as exc:
        raise InputError(f"invalid config: {exc.message}") from exc
    space = Space.from_dict(cfg["space"])
    start = time.perf_counter()
    result, rows = RUNNERS[kind](cfg, space, {"seed": cfg.get("seed", 0), "threads": threads})
    report = {
        "barylab_version": __version__,
        "kind": kind,
        "config": cfg,
        "result": _clean(result),
    }
    report["checks"] = {"failures": verify_report(report)}
    report["checks"]["passed"] = not report["checks"]["failures"]
    report["timing"] = {"wall_seconds": time.perf_counter() - start, "threads": threads}
    return report, rows


# --------------------------------------------------------------------------
# verification


def _close(a, b, tol):
    return abs(float(a) - float(b)) <= tol


def verify_report(report: dict) -> list[str]:
    """Recompute the cheap invariants recorded in a report; return failed checks."""
    failures = []
    try:
        kind = report["kind"]
        cfg = report["config"]
        res = report["result"]
        space = Space.from_dict(cfg["space"])
    except (KeyError, TypeError, ValueError) as exc:
        return [f"malformed report: {exc}"]
    try:
        jsonschema.validate(cfg, config_schema(kind))
    except (jsonschema.ValidationError, KeyError) as exc:
        return [f"embedded config invalid: {exc}"]

    if kind == "wasserstein":
        mu, nu = _measure(space, cfg["mu"]), _measure(space, cfg["nu"])
        plan = np.array(res["plan"]["matrix"], dtype=float)
        if np.any(plan < 0):
            failures.append("negative plan entry")
        if np.max(np.abs(plan.sum(axis=1) - mu.weights)) > 1e-10:
            failures.append("plan row marginals differ from mu")
        if np.max(np.abs(plan.sum(axis=0) - nu.weights)) > 1e-10:
            failures.append("plan column marginals differ from nu")
        cost = float(np.sum(plan * cost_matrix(space, mu.points, nu.points, cfg["p"])))
        if not _close(cost, res["plan"]["cost"], 1e-9):
            failures.append("recorded cost differs from plan cost")
        if not _close(max(cost, 0.0) ** (1 / cfg["p"]), res["distance"], 1e-9):
            failures.append("distance differs from cost^(1/p)")
    elif kind == "barycenter":
        mu = _measure(space, cfg["measure"])
        x = space.point(res["point"])
        if "karcher_residual" in res and karcher_residual(x, mu) > res["residual_tol"]:
            failures.append("Karcher residual above tolerance")
        if mu.is_dirac and dist(space, x, mu.points[0]) > 1e-10:
            failures.append("Dirac measure not mapped to its atom")
    elif kind == "condexp":
        part = PartitionAlgebra(tuple(cfg["partition"]))
        vals = [space.point(v) for v in res["values"]]
        for block in part.blocks:
            if any(not np.array_equal(vals[block[0]], vals[i]) for i in block):
                failures.append(f"values not constant on block {block}")
        if "variational_gap" in res and res["variational_gap"] > 1e-8:
            failures.append("variational and disintegration results differ")
    elif kind == "martingale":
        series = res["convergence"]["series"]
        if series[-1] != 0.0:
            failures.append("convergence series does not end at 0")
        if any(float(s) < 0 for s in series):
            failures.append("negative distance in series")
    elif kind == "ergodic":
        T = Transformation(cfg["perm"], FiniteProbabilitySpace(cfg["variable"]["probability"]))
        gamma = [space.point(v) for v in res["gamma"]]
        if any(not np.array_equal(gamma[i], gamma[T.perm[i]]) for i in range(len(gamma))):
            failures.append("ergodic limit is not invariant")
        per = res["report"]["per_outcome"]
        for key, series in per.items():
            length = T.orbit_length(int(key))
            if any(series[n - 1] > 1e-9 for n in range(length, len(series) + 1, length)):
                failures.append(f"outcome {key}: distance above 1e-9 at a multiple of its orbit length")
    elif kind == "semiflow":
        mu = _measure(space, cfg["measure"])
        vals = [space.point(v) for v in res["values"]]
        times, acc = res["times"], res["accuracy"]
        delta = diameter(space, mu.points)
        if float(res["p"]) == 1.0 and space.npc:
            for i in range(len(times)):
                for j in range(i + 1, len(times)):
                    bound = semiflow_bound(1.0, times[i], times[j]) * delta + acc[i] + acc[j]
                    if dist(space, vals[i], vals[j]) > bound:
                        failures.append(f"time bound fails between t={times[i]} and t={times[j]}")
        if "canonical" in res:
            lam = space.point(res["canonical"])
            for t, v, a in zip(times, vals, acc):
                if dist(space, v, lam) > math.sqrt(t / 2) * delta + a + 1e-10:
                    failures.append(f"limit bound fails at t={t}")
    elif kind == "mapdist":
        if float(res["lower_bound"]) > 1 + 1e-9:
            failures.append("map distance bound exceeds 1")
        if res["witness"] is not None:
            b1, b2 = (map_from_dict(m) for m in cfg["maps"])
            mu = DiscreteMeasure(space, res["witness"])
            ratio = dist(space, b1(mu), b2(mu)) / mu.diameter()
            if not _close(ratio, res["lower_bound"], 1e-9):
                failures.append("witness does not reproduce the bound")
    elif kind == "ldp":
        for tot in res["total_probability"]:
            if not _close(tot, 1.0, 1e-10):
                failures.append(f"enumerated probabilities sum to {tot}")
        for row in res["rows"]:
            pn = float(row["P_n"])
            if not 0.0 <= pn <= 1.0:
                failures.append(f"probability out of range at n={row['n']}")
            elif pn > 0 and not _close(-math.log(pn) / row["n"], row["a_n"], 1e-12):
                failures.append(f"a_n inconsistent with P_n at n={row['n']}")
    elif kind == "audit":
        expected = not res["failures"] and float(res["max_violation"]) <= float(res["threshold"])
        if bool(res["passed"]) != expected:
            failures.append("audit verdict inconsistent with its maximum violation")
    return failures


# --------------------------------------------------------------------------
# entry point


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _csv_text(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf).writerows(_clean(rows))
    return buf.getvalue()


def _threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("BARYLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"BARYLAB_THREADS must be an integer, got {env!r}") from None
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="barylab", description="Run barycentric-map experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, default=Path("."))
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
    v = sub.add_parser("verify", help="recheck the invariants stored in a report")
    v.add_argument("report", type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        try:
            report = json.loads(args.report.read_text(encoding="utf-8"))
            failures = verify_report(report)
        except (OSError, json.JSONDecodeError, BarylabError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for f in failures:
            print(f"FAIL {f}", file=sys.stderr)
        if not failures:
            print("OK")
        return 1 if failures else 0

    try:
        cfg = json.loads(args.config.read_text(encoding="utf-8"))
        if not isinstance(cfg, dict):
            raise InputError("config must be a JSON object")
        report, rows = run(args.command, cfg, args.seed, _threads(args.threads))
        args.out.mkdir(parents=True, exist_ok=True)
        base = args.out / f"{args.command}_report"
        _write_atomic(base.with_suffix(".json"), dumps(report))
        if rows:
            _write_atomic(base.with_suffix(".csv"), _csv_text(rows))
    except (OSError, json.JSONDecodeError, InputError, DomainError, UnsupportedError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        return 3
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 4
    print(base.with_suffix(".json"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
