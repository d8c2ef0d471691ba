from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from .branched import PlanePair, build_system, verify_wais
from .campaign import (
    CampaignConfig,
    ConfigError,
    export_geometry_json,
    load_system,
    max_cells,
    predicted_cells,
    run,
    save_system,
)
from .complex import new_unit_cube
from .errors import CertificateError, ComplexError
from .report import CheckResult, Report


def parse_schedule(text: str) -> list[PlanePair]:
    """``"1,2;1,3"`` -> two plane pairs."""
    return [PlanePair.parse(part) for part in text.split(";") if part.strip()]


def _emit(report: Report, path: str | None) -> int:
    text = json.dumps(report.to_dict(), sort_keys=True, indent=1)
    if path:
        Path(path).write_text(text + "\n")
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}" + (f" {json.dumps(c.locator)}" if c.locator else ""))
    return 0 if report.passed else 1


def cmd_build(args) -> int:
    schedule = parse_schedule(args.schedule)
    count = predicted_cells(args.n, args.depth)[-1]
    if count > max_cells():
        raise ComplexError(f"depth {args.depth} would need {count} cells, above the ceiling {max_cells()}")
    s = build_system(new_unit_cube(args.n, args.m), schedule, args.depth, cycle=args.cycle)
    save_system(s, args.out)
    print(json.dumps({"cells": [len(x.cells) for x in s.complexes], "out": str(args.out)}))
    return 0


def cmd_verify(args) -> int:
    from .currents import check_flux, check_ipoinc, conservation_report

    s = load_system(args.system)
    checks = set(args.checks.split(","))
    report = Report()
    if "wais" in checks:
        report.extend(verify_wais(s).checks)
    else:
        for p in s.maps:
            if "flux" in checks:
                report.add(check_flux(p))
            if "ipoinc" in checks:
                report.add(check_ipoinc(p))
    if "conservation" in checks:
        report.add(conservation_report(s).to_check())
    return _emit(report, args.report)


def cmd_galleries(args) -> int:
    from .galleries import check_pushforward_measure, gallery_measure, verify_decomposition

    s = load_system(args.system)
    q = gallery_measure(s, args.level, args.axis - 1, max_count=args.max_galleries)
    report = Report()
    res = verify_decomposition(q)
    res.witness["histogram"] = q.histogram()
    report.add(res)
    if args.level > 0:
        prev = gallery_measure(s, args.level - 1, args.axis - 1, max_count=args.max_galleries)
        report.add(check_pushforward_measure(q, prev, s.maps[args.level - 1]))
    return _emit(report, args.report)


def cmd_metric(args) -> int:
    from .metric import distortion, sample_metric

    s = load_system(args.system)
    if args.matrix:
        fms = sample_metric(s.complexes[args.level], args.depth)
        np.savetxt(args.matrix, fms.dist, delimiter=",", fmt="%.12g")
    rows = []
    for lvl in args.distortion_levels or []:
        r = distortion(s.maps[lvl - 1], args.depth, samples=args.samples, seed=args.seed)
        rows.append({"level": lvl, **r.to_dict()})
    print(json.dumps(rows, indent=1))
    return 0


def cmd_polyapprox(args) -> int:
    from .metric import sample_metric
    from .nagata import nagata_cover_grid, poly_approx

    s = load_system(args.system)
    fms = sample_metric(s.complexes[args.level], args.depth)
    scale = float(Fraction(args.scale))
    try:
        cover = nagata_cover_grid(fms, scale)
    except CertificateError as exc:
        print(json.dumps({"error": str(exc), "checks": exc.certificate}))
        return 1
    _, cert = poly_approx(fms, cover)
    report = Report([CheckResult("polyapprox", cert.passed, witness={"cover": cover.to_dict(), **cert.to_dict()},
                                 locator=None if cert.passed else {"level": args.level})])
    return _emit(report, args.report)


def cmd_flatnorm(args) -> int:
    from .flatnorm import GridChain, flat_norm

    chain = GridChain.from_dict(json.loads(Path(args.chain).read_text()))
    value, s1, s2 = flat_norm(chain)
    out = {"value": value, "mass": chain.mass(), "s1": s1.to_dict(), "s2": s2.to_dict() if s2 is not None else None}
    text = json.dumps(out, sort_keys=True, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(json.dumps({"value": value, "mass": chain.mass()}))
    return 0


def cmd_cubapprox(args) -> int:
    from .flatnorm import GridChain, GridComplex, cubical_approximation, rasterize, rotated_square

    fine = GridComplex(2, 2**args.fine)
    if args.input == "rotated-square":
        t = rasterize(rotated_square(), fine)
    else:
        t = GridChain.from_dict(json.loads(Path(args.input).read_text()))
        if t.grid != fine:
            raise ComplexError("input chain does not live on the requested fine grid")
    report = Report()
    for k in args.coarse:
        _, cert = cubical_approximation(t, GridComplex(2, 2**k), eps=args.eps)
        report.add(CheckResult("cubical_approximation", cert.passed, witness={"k": k, **cert.to_dict()},
                               locator=None if cert.passed else {"k": k}))
    return _emit(report, args.report)


def cmd_report(args) -> int:
    cfg = CampaignConfig.load(args.config)
    out = args.out or cfg.output
    report, _ = run(cfg, out)
    return _emit(report, None)


def cmd_export(args) -> int:
    s = load_system(args.system)
    text = export_geometry_json(s.complexes[args.level])
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cubecurrents", description="Branched cube complexes and their currents.")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build an inverse system and save it")
    b.add_argument("--n", type=int, default=2)
    b.add_argument("--m", type=int, default=5)
    b.add_argument("--depth", type=int, required=True)
    b.add_argument("--schedule", required=True, help='planes as "alpha,beta;alpha,beta;..."')
    b.add_argument("--cycle", action="store_true", help="repeat the schedule up to the depth")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_build)

    v = sub.add_parser("verify", help="check axioms and conservation on a saved system")
    v.add_argument("--system", required=True)
    v.add_argument("--checks", default="wais,conservation", help="comma list of wais,flux,ipoinc,conservation")
    v.add_argument("--report")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("galleries", help="gallery measures and their decomposition")
    g.add_argument("--system", required=True)
    g.add_argument("--axis", type=int, required=True, help="1-based axis")
    g.add_argument("--level", type=int, required=True)
    g.add_argument("--max-galleries", type=int, default=250_000)
    g.add_argument("--report")
    g.set_defaults(func=cmd_galleries)

    mt = sub.add_parser("metric", help="sampled metrics and distortion of projections")
    mt.add_argument("--system", required=True)
    mt.add_argument("--depth", type=int, default=0)
    mt.add_argument("--level", type=int, default=0)
    mt.add_argument("--matrix", help="write the level's distance matrix as CSV")
    mt.add_argument("--distortion-levels", type=int, nargs="*")
    mt.add_argument("--samples", type=int, default=4)
    mt.add_argument("--seed", type=int, default=0)
    mt.set_defaults(func=cmd_metric)

    pa = sub.add_parser("polyapprox", help="Nagata cover and nerve map certificate")
    pa.add_argument("--system", required=True)
    pa.add_argument("--level", type=int, required=True)
    pa.add_argument("--scale", required=True, help='e.g. "1/25"')
    pa.add_argument("--depth", type=int, default=0)
    pa.add_argument("--report")
    pa.set_defaults(func=cmd_polyapprox)

    fn = sub.add_parser("flatnorm", help="flat norm of a grid chain")
    fn.add_argument("--chain", required=True)
    fn.add_argument("--out")
    fn.set_defaults(func=cmd_flatnorm)

    ca = sub.add_parser("cubapprox", help="averaged cubical approximation certificate")
    ca.add_argument("--input", default="rotated-square")
    ca.add_argument("--fine", type=int, default=6, help="fine grid exponent (side 2**-fine)")
    ca.add_argument("--coarse", type=int, nargs="+", default=[2, 3, 4, 5])
    ca.add_argument("--eps", type=float)
    ca.add_argument("--report")
    ca.set_defaults(func=cmd_cubapprox)

    r = sub.add_parser("report", help="run a configured campaign")
    r.add_argument("--config", required=True)
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)

    e = sub.add_parser("export", help="export identified geometry of one level")
    e.add_argument("--system", required=True)
    e.add_argument("--level", type=int, required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_export)
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return 2
    except (ComplexError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
