"""Command line: ``harmlab {build,solve,heat,suite,plotdata}``.

``--config`` takes a path or the name of a bundled configuration
(``flat_smoke``, ``capped_cylinder``, ``negative_controls``,
``product_trends``).  Exit codes:
0 success, 1 a FAIL verdict (or any non-PASS verdict under ``--strict``),
2 an invalid configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from .config import ConfigError, load
from .harmonic import growth_constant
from .manifold import build_manifold
from .suite import HEAT_CHECKS, Cache, emit_plotdata, run_suite, setup_case, spec_from_case, write_fields
from .verify.report import dumps

log = logging.getLogger("harmlab")

BUNDLED = ("flat_smoke", "capped_cylinder", "negative_controls", "product_trends")


def resolve_config(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    stem = p.stem if p.suffix == ".ini" else name
    if stem in BUNDLED:
        return Path(str(resources.files("harmlab") / "configs" / f"{stem}.ini"))
    raise ConfigError(f"no such configuration file or bundled name: {name}")


def _out(args, cfg) -> Path:
    return Path(args.out if args.out is not None else cfg.out)


def cmd_build(args, cfg) -> int:
    out = _out(args, cfg) / "build"
    out.mkdir(parents=True, exist_ok=True)
    for case in cfg.cases:
        spec = spec_from_case(case)
        man = build_manifold(spec, check_scale=not spec.negative_control)
        info = {"case": case.name, "spec": spec.to_dict(), "spec_hash": man.spec_hash, "V": man.V,
                "R_max": man.R_max, "h": man.h, "h_min": man.h_min, "trusted_radius": man.trusted_radius(),
                "x0": man.x0, "certificate": man.certificate}
        (out / f"{case.name}.json").write_text(dumps(info))
        print(f"{case.name}: V={man.V} R_max={man.R_max:.6g} spec_hash={man.spec_hash}")
    return 0


def cmd_solve(args, cfg) -> int:
    root = _out(args, cfg)
    out = root / "solve"
    out.mkdir(parents=True, exist_ok=True)
    cache = Cache(root / "cache")
    for case in cfg.cases:
        if case.get("map") is None:
            continue
        ctx = setup_case(case, cache, args.seed if args.seed is not None else cfg.seed, with_run=False)
        g = growth_constant(ctx.man, ctx.u)
        info = {"case": case.name, "spec_hash": ctx.man.spec_hash, "provenance": ctx.u.provenance,
                "R_solve": ctx.u.R_solve, "residual": ctx.u.residual, "offset": ctx.u.offset,
                "growth_L": g.L, "growth_L_map": g.L_map, "growth_exponent": g.exponent,
                "divergent": g.divergent, "omega_x0": float(np.sqrt(max(_det_x0(ctx), 0.0)))}
        (out / f"{case.name}.json").write_text(dumps(info))
        write_fields(ctx, root / "fields")
        print(f"{case.name}: {ctx.u.provenance} n={ctx.u.n} L={g.L_map:.6g} residual={np.max(ctx.u.residual):.3e}")
    return 0


def _det_x0(ctx) -> float:
    from .pullback import gram_field

    return float(gram_field(ctx.man, ctx.u).det[ctx.man.x0])


def _run(args, cfg, only=None) -> int:
    res = run_suite(cfg, out=args.out, jobs=args.jobs, seed=args.seed, strict=args.strict or None, only=only)
    for name, check, rep in res.reports:
        print(f"{name}.{check}: {rep.verdict}")
    if res.manifest_ok is not None:
        print(f"manifest: {'PASS' if res.manifest_ok else 'FAIL'}")
    return res.exit_code


def cmd_heat(args, cfg) -> int:
    return _run(args, cfg, only=set(HEAT_CHECKS))


def cmd_suite(args, cfg) -> int:
    return _run(args, cfg)


def cmd_plotdata(args, cfg) -> int:
    root = Path(args.out if args.out is not None else (cfg.out if cfg is not None else "out"))
    reports = sorted(root.glob("report_*.json"))
    if not reports:
        log.warning("no reports under %s", root)
    paths = emit_plotdata(reports, root / "plotdata")
    print(f"wrote {len(paths)} plot tables to {root / 'plotdata'}")
    return 0


COMMANDS = {"build": cmd_build, "solve": cmd_solve, "heat": cmd_heat, "suite": cmd_suite, "plotdata": cmd_plotdata}


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="harmlab", description="Numerical laboratory for harmonic maps and heat flow.")
    p.add_argument("verb", choices=sorted(COMMANDS))
    p.add_argument("--config", help="configuration path or bundled name")
    p.add_argument("--strict", action="store_true", help="fail on any verdict other than PASS or EXPLORATORY")
    p.add_argument("--jobs", type=int, default=None, help="worker threads")
    p.add_argument("--seed", type=int, default=None, help="seed for sampled checks")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    cfg = None
    if args.config is not None:
        try:
            cfg = load(resolve_config(args.config))
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
    elif args.verb != "plotdata":
        print("error: --config is required", file=sys.stderr)
        return 2
    if args.jobs is not None and args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    return COMMANDS[args.verb](args, cfg)


if __name__ == "__main__":
    sys.exit(main())
