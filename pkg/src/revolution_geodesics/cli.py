"""Command-line entry point: ``revgeo <command> <action> [options]``.

Every subcommand prints a JSON document on stdout.  Files go to the output
directory, which is ``--out-dir``, else ``$REVGEO_OUTPUT_DIR``, else
``./revgeo_out``.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import traceback
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import annulus_dynamics as ad
from . import counting_growth as cg
from . import cz_morsebott as cz
from . import geodesic_flow as gf
from . import lift_linking as ll
from . import orbit_catalog as oc
from . import profile as pr
from . import return_map as rm

OUTPUT_ENV = "REVGEO_OUTPUT_DIR"
DEFAULT_OUTPUT = "revgeo_out"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    r_min: float = 0.5
    M: float = 4 * math.pi
    cap_junction_curvature: float = 1.0
    band: tuple = (0.0, 1.0)
    q_max: int = 12
    census_q_max: int = 60
    table_n: int = 200
    clairaut_trajectories: int = 20
    ode_rtol: float = gf.DEFAULT_RTOL
    ode_atol: float = gf.DEFAULT_ATOL
    event_tol: float = gf.EVENT_TOL
    eta_tol: float = 1e-9
    newton_tol: float = ad.NEWTON_TOL
    delta: float = 0.1
    c: float = 1.0
    offset: int = 0
    output_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        self.band = tuple(float(v) for v in self.band)
        for name in ("ode_rtol", "ode_atol", "event_tol", "eta_tol", "newton_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"tolerance {name} must be positive")
        if len(self.band) != 2 or not self.band[0] < self.band[1]:
            raise ConfigError(f"band must be a nonempty interval a < b, got {self.band}")
        if self.q_max < 1 or self.census_q_max < 1 or self.table_n < 2:
            raise ConfigError("q_max, census_q_max must be >= 1 and table_n >= 2")

    @property
    def profile_params(self) -> pr.ProfileParams:
        return pr.ProfileParams(self.r_min, self.M, self.cap_junction_curvature)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        with open(path) as fh:
            data = json.load(fh)
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["band"] = list(self.band)
        d.pop("output_dir")
        return d


def output_dir(explicit: str | None = None) -> Path:
    path = Path(explicit or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _band(text: str) -> tuple[float, float]:
    a, b = text.split(",")
    return float(Fraction(a)), float(Fraction(b))


def _pair(text: str) -> tuple[int, int]:
    p, q = text.split(",")
    return int(p), int(q)


def _emit(doc: dict) -> None:
    json.dump(doc, sys.stdout, indent=1, sort_keys=True, default=_jsonable)
    sys.stdout.write("\n")


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _write_json(path: Path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _write_dat(path: Path, x, y) -> None:
    """Two-column whitespace file for gnuplot."""
    np.savetxt(path, np.column_stack([x, y]), fmt="%.17g")


def _load_profile(path: str | None, r_min=None, length=None) -> pr.Profile:
    if path:
        with open(path) as fh:
            return pr.Profile.from_dict(json.load(fh))
    params = pr.ProfileParams(
        r_min=0.5 if r_min is None else r_min,
        M=4 * math.pi if length is None else length,
    )
    return pr.build_model_profile(params)


# --------------------------------------------------------------- subcommands
def cmd_profile(args) -> int:
    if args.action == "build":
        prof = _load_profile(None, args.r_min, args.length)
        out = Path(args.out) if args.out else output_dir(args.out_dir) / "profile.json"
        with open(out, "w") as fh:
            json.dump(prof.to_dict(), fh)
        report = pr.validate(prof)
        _emit({"profile": str(out), "valid": report.passed, "residuals": report.residuals})
        return 0 if report.passed else 1
    prof = _load_profile(args.input)
    report = pr.validate(prof)
    _emit({"valid": report.passed, "checks": report.checks, "residuals": report.residuals,
           "critical_points": report.critical_points})
    return 0 if report.passed else 1


def cmd_flow(args) -> int:
    prof = _load_profile(args.profile)
    start = gf.GeodesicState(args.s0, args.theta0, args.beta0)
    traj = gf.flow(prof, start, args.t_end, rtol=args.tol, atol=args.tol / 10)
    out = Path(args.out) if args.out else output_dir(args.out_dir) / "trajectory.csv"
    traj.to_csv(out, prof)
    _emit({
        "trajectory": str(out),
        "clairaut": traj.clairaut,
        "clairaut_drift": traj.clairaut_drift,
        "crossings": len(traj.crossings),
        "final": list(traj.final.as_array()),
    })
    return 0


def cmd_return_map(args) -> int:
    prof = _load_profile(args.profile)
    if args.action == "tabulate":
        table = rm.tabulate(prof, args.n)
        out = Path(args.out) if args.out else output_dir(args.out_dir) / "return_map.csv"
        table.to_csv(out)
        cv = rm.cross_validate(prof, table)
        _emit({"table": str(out), "cross_validation": cv.to_dict(), "passed": cv.passed()})
        return 0 if cv.passed() else 1
    ratio = Fraction(args.ratio)
    sol = rm.EtaSolver().solve(prof, ratio)
    _emit({"ratio": str(ratio), "eta": sol.eta, "f": sol.f, "residual": sol.residual,
           "evaluations": sol.evaluations})
    return 0


def cmd_orbits(args) -> int:
    prof = _load_profile(args.profile)
    a, b = args.band
    cat = oc.catalog(prof, Fraction(a).limit_denominator(10**6), Fraction(b).limit_denominator(10**6),
                     args.q_max, method=args.method)
    d = output_dir(args.out_dir)
    cat.to_csv(d / "catalog.csv")
    cat.to_json(d / "catalog.json")
    _emit({
        "catalog": str(d / "catalog.json"),
        "records": len(cat.records),
        "failures": len(cat.failures),
        "max_tau": cat.max_tau if cat.records else None,
        "action_bound_holds": cat.action_bound_holds(),
        "homology_distinct": cat.homology_distinct(),
    })
    return 0 if not cat.failures else 1


def cmd_link(args) -> int:
    if args.action == "compute":
        a = ll.S3Curve.from_json(args.curve_a, "a")
        b = ll.S3Curve.from_json(args.curve_b, "b")
        res = ll.linking_number(a, b, seed=args.seed or 0)
        _emit({"linking_number": res.value, "raw": res.raw, "residual": res.residual,
               "min_distance": res.min_distance})
        return 0
    rep = ll.verify_link_table(args.samples)
    _emit({
        "passed": rep.passed,
        "sigma": rep.sigma,
        "values": {f"{k[0]}~{k[1]}": v for k, v in rep.values.items()},
        "mismatches": [f"{k[0]}~{k[1]}" for k in rep.mismatches],
    })
    return 0 if rep.passed else 1


def cmd_annulus(args) -> int:
    spec = ad.AnnulusMapSpec.from_json(args.map) if args.map else ad.make_map(args.epsilon)
    res = ad.count_orbits(spec, args.band, args.t_max)
    d = output_dir(args.out_dir)
    res.to_csv(d / "annulus_orbits.csv")
    t = np.arange(1, args.t_max + 1)
    counts = res.counts(t)
    _write_dat(d / "annulus_counts.dat", t, counts)
    doc = {"orbits": int(counts[-1]), "failures": {f"{p},{q}": m for (p, q), m in res.failures.items()},
           "P_t": {int(k): int(v) for k, v in zip(t, counts)}}
    try:
        doc["growth"] = res.series().summary()
    except ValueError as exc:
        doc["growth"] = {"error": str(exc)}
    _emit(doc)
    return 0


def cmd_count(args) -> int:
    d = output_dir(args.out_dir)
    if args.action == "coprime":
        a, b = args.band
        t = np.arange(1, args.t_max + 1)
        counts = cg.coprime_count_series(a, b, t)
        series = cg.GrowthSeries.from_counts(t, counts)
    else:
        series = cg.geodesic_count(oc.Catalog.from_json(args.catalog))
    series.to_csv(d / f"count_{args.action}.csv")
    series.to_json(d / f"count_{args.action}.json")
    _write_dat(d / f"count_{args.action}.dat", series.t, series.count)
    _emit(series.summary())
    return 0


def cmd_cz(args) -> int:
    path = cz.SymplecticPath.from_json(args.path)
    _emit({"cz_index": cz.cz_index(path)})
    return 0


def _pair_doc(pair: cz.PerturbedPair) -> dict:
    return {"mu_max": pair.mu_max, "mu_min": pair.mu_min, "action_max": pair.action_max,
            "action_min": pair.action_min, "kind_max": pair.kind_max, "kind_min": pair.kind_min,
            "index_difference": pair.mu_max - pair.mu_min}


def cmd_mb(args) -> int:
    pair = cz.perturbed_pair(cz.PerturbationData(args.T, args.delta, args.c))
    doc = _pair_doc(pair)
    doc["flowlines"] = len(cz.gradient_flowlines(args.delta))
    _emit(doc)
    return 0


def family_homology(record: oc.OrbitRecord, delta: float, c: float, offset: int = 0) -> cz.HomologySummary:
    """Homology of the perturbed ``S^1``-family of a catalog record.

    The free coefficient ``c`` is divided by ``T^2`` (``T`` = lift action),
    which keeps the linearised rotation angle of the pair independent of
    the period.
    """
    T = record.lift_action
    pair = cz.perturbed_pair(cz.PerturbationData(T, delta, c / T**2))
    return cz.assemble_model_homology(pair, offset=offset)


def cmd_homology(args) -> int:
    cat = oc.Catalog.from_json(args.catalog)
    p, q = args.pq
    match = [r for r in cat.records if (r.p, r.q) == (p, q)]
    if not match:
        raise oc.CatalogError(f"({p}, {q}) is not in the catalog")
    summary = family_homology(match[0], args.delta, args.c, args.offset)
    _emit(summary.to_dict())
    return 0


# ------------------------------------------------------------------ pipeline
def run_pipeline(config: RunConfig) -> int:
    """Profile, return map, catalog, counts and homology; writes ``summary.json``.

    On failure the artifacts of finished stages are kept and ``failures.json``
    lists what went wrong.  Returns the process exit status.
    """
    d = output_dir(config.output_dir)
    summary: dict = {"config": config.to_dict()}
    failures: list[dict] = []

    def fail(stage, message):
        failures.append({"stage": stage, "message": message})

    def finish() -> int:
        summary["passed"] = not failures
        _write_json(d / "summary.json", summary)
        if failures:
            _write_json(d / "failures.json", {"failures": failures})
        elif (d / "failures.json").exists():
            (d / "failures.json").unlink()
        return 0 if not failures else 1

    # profile
    try:
        prof = pr.build_model_profile(config.profile_params)
    except pr.ProfileError as exc:
        fail("profile", str(exc))
        summary["profile"] = {"valid": False, "error": str(exc)}
        return finish()
    report = pr.validate(prof)
    summary["profile"] = {"valid": report.passed, "residuals": report.residuals}
    with open(d / "profile.json", "w") as fh:
        json.dump(prof.to_dict(), fh)
    if not report.passed:
        fail("profile", f"failed checks: {report.failures()}")
        return finish()

    stages = [
        ("clairaut", _stage_clairaut),
        ("return_map", _stage_return_map),
        ("catalog", _stage_catalog),
        ("counts", _stage_counts),
        ("homology", _stage_homology),
    ]
    ctx = {"profile": prof, "dir": d}
    for name, stage in stages:
        try:
            summary[name], ok = stage(config, ctx)
            if not ok:
                fail(name, "validation failed")
        except Exception as exc:  # keep going, the manifest records it
            fail(name, f"{type(exc).__name__}: {exc}")
            summary[name] = {"error": traceback.format_exception_only(type(exc), exc)[-1].strip()}
    return finish()


def _stage_clairaut(config, ctx):
    prof = ctx["profile"]
    rng = np.random.default_rng(config.seed)
    n = config.clairaut_trajectories
    starts = np.column_stack([
        rng.uniform(0.2, prof.half_length - 0.2, n),
        rng.uniform(0.0, 2 * math.pi, n),
        rng.uniform(0.0, 2 * math.pi, n),
    ])
    _, _, drift = gf.flow_batch(prof, starts, 10 * prof.M)
    doc = {"trajectories": n, "horizon": 10 * prof.M, "max_drift": float(drift.max())}
    return doc, doc["max_drift"] < 1e-8


def _stage_return_map(config, ctx):
    prof = ctx["profile"]
    table = rm.tabulate(prof, config.table_n, rtol=config.ode_rtol, atol=config.ode_atol)
    table.to_csv(ctx["dir"] / "return_map.csv")
    _write_dat(ctx["dir"] / "return_map_f.dat", table.eta, table.f)
    cv = rm.cross_validate(prof, table)
    doc = cv.to_dict()
    doc["f_monotone"] = cv.f_decreasing_margin > 0
    doc["passed"] = cv.passed()
    return doc, cv.passed()


def _stage_catalog(config, ctx):
    prof = ctx["profile"]
    a, b = (Fraction(v).limit_denominator(10**6) for v in config.band)
    solver = rm.EtaSolver(tolerance=config.eta_tol)
    cat = oc.catalog(prof, a, b, config.q_max, solver=solver, rtol=config.ode_rtol, atol=config.ode_atol)
    cat.to_csv(ctx["dir"] / "catalog.csv")
    cat.to_json(ctx["dir"] / "catalog.json")
    ctx["catalog"] = cat
    expected = len(oc.enumerate_coprime(a, b, config.q_max))
    windings = all(r.winding_total == oc.expected_winding(r.p, r.q) for r in cat.records)
    residual = max((r.closure_residual for r in cat.records), default=math.nan)
    doc = {
        "size": len(cat.records),
        "expected_size": expected,
        "failures": len(cat.failures),
        "max_closure_residual": residual,
        "windings_match": windings,
        "max_tau": cat.max_tau if cat.records else None,
        "action_bound_holds": cat.action_bound_holds(),
        "homology_distinct": cat.homology_distinct(),
        "homology_primitive": all(r.homology.primitive for r in cat.records),
    }
    ok = (len(cat.records) == expected and residual < oc.CLOSURE_TOL and windings
          and doc["action_bound_holds"] and doc["homology_distinct"] and doc["homology_primitive"])
    return doc, ok


def _stage_counts(config, ctx):
    prof = ctx["profile"]
    a, b = config.band
    t = np.arange(1, 10 * config.census_q_max + 1)
    coprime = cg.GrowthSeries.from_counts(t, cg.coprime_count_series(a, b, t))
    census_cat = oc.catalog(prof, Fraction(a).limit_denominator(10**6), Fraction(b).limit_denominator(10**6),
                            config.census_q_max, method="quadrature")
    census = cg.geodesic_count(census_cat)
    census.to_csv(ctx["dir"] / "geodesic_count.csv")
    _write_dat(ctx["dir"] / "geodesic_count.dat", census.t, census.count)
    _write_dat(ctx["dir"] / "coprime_count.dat", coprime.t, coprime.count)
    doc = {"coprime": coprime.summary(), "geodesics": census.summary(),
           "census_failures": len(census_cat.failures)}
    return doc, census.exponent >= 1.8 and not census_cat.failures


def _stage_homology(config, ctx):
    cat = ctx.get("catalog")
    if cat is None:
        raise RuntimeError("catalog stage did not finish")
    ranks = {}
    for r in cat.records:
        h = family_homology(r, config.delta, config.c, config.offset)
        ranks[f"{r.p},{r.q}"] = [h.degrees[k] for k in sorted(h.degrees)]
    ok = all(v == [1, 1] for v in ranks.values())
    flowlines = len(cz.gradient_flowlines(config.delta))
    doc = {"families": len(ranks), "all_ranks_1_1": ok, "flowlines": flowlines, "ranks": ranks}
    return doc, ok and flowlines == 2


def cmd_pipeline(args) -> int:
    config = RunConfig.from_json(args.config) if args.config else RunConfig()
    config = config.with_overrides(
        r_min=args.r_min, M=args.length, band=args.band, q_max=args.q_max,
        census_q_max=args.census_q_max, table_n=args.n, seed=args.seed, output_dir=args.out_dir,
    )
    status = run_pipeline(config)
    with open(output_dir(config.output_dir) / "summary.json") as fh:
        _emit(json.load(fh))
    return status


# -------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default=None, help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    common.add_argument("--seed", type=int, default=None, help="seed for randomised steps")

    parser = argparse.ArgumentParser(prog="revgeo", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", parents=[common], help="build or validate a profile")
    p.add_argument("action", choices=["build", "validate"])
    p.add_argument("--r-min", type=float)
    p.add_argument("--length", type=float, help="total meridian length M")
    p.add_argument("--out")
    p.add_argument("--in", dest="input")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("flow", parents=[common], help="integrate one geodesic")
    p.add_argument("action", choices=["run"])
    p.add_argument("--profile")
    p.add_argument("--s0", type=float, required=True)
    p.add_argument("--theta0", type=float, default=0.0)
    p.add_argument("--beta0", type=float, required=True)
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--tol", type=float, default=gf.DEFAULT_RTOL)
    p.add_argument("--out")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("return-map", parents=[common], help="tabulate the return map or solve f(eta) = L p/q")
    p.add_argument("action", choices=["tabulate", "solve"])
    p.add_argument("--profile")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--ratio", default="1/2")
    p.add_argument("--out")
    p.set_defaults(func=cmd_return_map)

    p = sub.add_parser("orbits", parents=[common], help="closed geodesic catalog")
    p.add_argument("action", choices=["catalog"])
    p.add_argument("--profile")
    p.add_argument("--band", type=_band, default=(0.0, 1.0))
    p.add_argument("--q-max", type=int, default=12)
    p.add_argument("--method", choices=["flow", "quadrature"], default="flow")
    p.set_defaults(func=cmd_orbits)

    p = sub.add_parser("link", parents=[common], help="linking numbers in S^3")
    p.add_argument("action", choices=["compute", "verify-table"])
    p.add_argument("--curve-a")
    p.add_argument("--curve-b")
    p.add_argument("--samples", type=int, default=ll.DEFAULT_SAMPLES)
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("annulus", parents=[common], help="periodic orbits of annulus maps")
    p.add_argument("action", choices=["count"])
    p.add_argument("--map", help="AnnulusMapSpec JSON")
    p.add_argument("--epsilon", type=float, default=0.0, help="epsilon/L when --map is absent")
    p.add_argument("--band", type=_band, default=(0.0, 1.0))
    p.add_argument("--t-max", type=int, default=10)
    p.set_defaults(func=cmd_annulus)

    p = sub.add_parser("count", parents=[common], help="growth counts")
    p.add_argument("action", choices=["coprime", "geodesics"])
    p.add_argument("--band", type=_band, default=(0.0, 1.0))
    p.add_argument("--t-max", type=int, default=1000)
    p.add_argument("--catalog")
    p.set_defaults(func=cmd_count)

    p = sub.add_parser("cz", parents=[common], help="Conley-Zehnder index of a path")
    p.add_argument("action", choices=["index"])
    p.add_argument("--path", required=True)
    p.set_defaults(func=cmd_cz)

    p = sub.add_parser("mb", parents=[common], help="Morse-Bott perturbed pair")
    p.add_argument("action", choices=["pair"])
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--T", type=float, default=1.0)
    p.set_defaults(func=cmd_mb)

    p = sub.add_parser("homology", parents=[common], help="model homology of a catalog family")
    p.add_argument("action", choices=["assemble"])
    p.add_argument("--catalog", required=True)
    p.add_argument("--pq", type=_pair, required=True)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--offset", type=int, default=0)
    p.set_defaults(func=cmd_homology)

    p = sub.add_parser("pipeline", parents=[common], help="run every stage and write summary.json")
    p.add_argument("--config", help="RunConfig JSON; flags override its fields")
    p.add_argument("--r-min", type=float)
    p.add_argument("--length", type=float, help="total meridian length M")
    p.add_argument("--band", type=_band)
    p.add_argument("--q-max", type=int)
    p.add_argument("--census-q-max", type=int)
    p.add_argument("--n", type=int, help="return-map grid size")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
