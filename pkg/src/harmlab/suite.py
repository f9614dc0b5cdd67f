"""Suite runner: builds each case once, runs its checks in a worker pool and
writes the artifacts from a single writer.

Artifacts under the output directory:

``summary.csv``
    one row per (case, check), in configuration order;
``report_<case>.<check>.json``
    the serialized :class:`harmlab.verify.CheckReport`;
``fields/<case>.csv``
    the map energy and pull-back density (or the test field) on a 2-D slice
    through x0;
``cache/``
    solved maps and heat runs as ``.npz``, keyed by spec hash and inputs.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import verify as V
from .config import CaseConfig, RunConfig
from .fields import analytic_field, export_csv
from .harmonic import VectorMap, product_approximant, solve_harmonic
from .heat import HeatRun, HeatState, heat_evolve
from .manifold import Cone2D, FlatGrid, Product, RadialProfile, WarpedGrid2D, build_manifold
from .pullback import gram_field
from .verify.report import CheckReport, decide

log = logging.getLogger("harmlab")

HEAT_CHECKS = ("heat_gaussian", "mass_conservation", "semigroup", "harnack", "tail_mass", "kernel_bounds",
               "volume_ratio")


# ---------------------------------------------------------------------------
# Specs


def _spec_kwargs(o: dict, prefix: str = "") -> dict:
    return {k[len(prefix):]: v for k, v in o.items() if k.startswith(prefix)}


def spec_from_case(case: CaseConfig):
    """ManifoldSpec described by the manifold keys of a case."""
    o = case.options
    kind = o["manifold"]
    nc = bool(o.get("negative_control", False))
    try:
        if kind == "FlatGrid":
            return FlatGrid(o["m"], o["halfwidth"], o["h"], negative_control=nc)
        if kind == "RadialProfile":
            return RadialProfile(o["m"], o["profile"], o["s_max"], o["h"], negative_control=nc)
        if kind == "WarpedGrid2D":
            return WarpedGrid2D(o["profile"], o["s_max"], o["n_s"], o["n_theta"], negative_control=nc)
        if kind == "Cone2D":
            return Cone2D(o["a"], o["s_max"], o["n_s"], o["n_theta"], negative_control=nc)
        f = _spec_kwargs(o, "factor.")
        fkind = f.get("manifold", "WarpedGrid2D")
        if fkind == "Cone2D":
            factor = Cone2D(f["a"], f["s_max"], f["n_s"], f["n_theta"], negative_control=nc)
        else:
            factor = WarpedGrid2D(f["profile"], f["s_max"], f["n_s"], f["n_theta"], negative_control=nc)
        return Product(factor, o.get("k_flat", 1), o["halfwidth"], o["h"])
    except KeyError as exc:
        raise ValueError(f"case {case.name}: manifold {kind} needs key {exc.args[0]!r}") from None


def refine_spec(spec):
    """The same manifold at half the spacing."""
    if spec.kind in ("FlatGrid", "RadialProfile"):
        return replace(spec, h=spec.h / 2.0)
    if spec.kind in ("WarpedGrid2D", "Cone2D"):
        return replace(spec, n_s=2 * spec.n_s, n_theta=2 * spec.n_theta)
    return replace(spec, factor=refine_spec(spec.factor), h=spec.h / 2.0)


# ---------------------------------------------------------------------------
# Cache


class Cache:
    """npz store for solved maps and heat runs; ``None`` directory disables it."""

    def __init__(self, root: Path | None):
        self.root = Path(root) if root is not None else None
        self._lock = threading.Lock()

    @staticmethod
    def key(*parts) -> str:
        return hashlib.sha256(json.dumps(parts, sort_keys=True, default=repr).encode()).hexdigest()[:20]

    def load(self, name: str):
        if self.root is None:
            return None
        p = self.root / f"{name}.npz"
        if not p.exists():
            return None
        with np.load(p) as z:
            return {k: z[k] for k in z.files}

    def save(self, name: str, **arrays) -> None:
        if self.root is None:
            return
        with self._lock:
            self.root.mkdir(parents=True, exist_ok=True)
            tmp = self.root / f"{name}.tmp.npz"
            np.savez(tmp, **arrays)
            tmp.replace(self.root / f"{name}.npz")


def _param_value(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def _matrix(text: str) -> np.ndarray:
    return np.array([[float(x) for x in row.split()] for row in text.split(";")])


def make_map(man, case: CaseConfig, cache: Cache):
    """The VectorMap selected by the case's ``map`` key, or None."""
    gen = case.get("map")
    if gen is None:
        return None
    p = {k: _param_value(v) for k, v in case.params("map").items()}
    if gen == "linear":
        if "A" in p:
            p["A"] = _matrix(str(p["A"]))
        return analytic_field(man, "linear", p)
    if gen in ("product_coordinates", "cone_harmonic"):
        out = analytic_field(man, gen, p)
        return out if isinstance(out, VectorMap) else VectorMap.analytic(man, out[None], gen)
    if gen in ("product_approximant", "dirichlet"):
        data = str(p.get("data", "embedding_x"))
        name = "map_" + Cache.key(man.spec_hash, gen, sorted(p.items()))
        hit = cache.load(name)
        if hit is not None:
            return VectorMap(man, hit["U"], str(hit["provenance"]), float(hit["R_solve"]), hit["residual"],
                             hit["offset"], [int(i) for i in hit["iterations"]])
        if gen == "product_approximant":
            fman = build_manifold(man.spec.factor, check_scale=False)
            u = product_approximant(man, fman, data=data)
        else:
            g = analytic_field(man, data, {k: v for k, v in p.items() if k != "data"})
            u = solve_harmonic(man, np.atleast_2d(g))
        cache.save(name, U=u.U, provenance=np.array(u.provenance), R_solve=np.array(u.R_solve or 0.0),
                   residual=u.residual, offset=u.offset, iterations=np.array(u.iterations, dtype=int))
        return u
    return VectorMap.analytic(man, np.atleast_2d(analytic_field(man, gen, p)), gen)


def make_field(man, case: CaseConfig, u):
    """The scalar test field selected by the case's ``field`` key, or None."""
    name = case.get("field")
    if name is None:
        return None
    if name in ("energy", "omega_sq"):
        if u is None:
            raise ValueError(f"case {case.name}: field {name!r} needs a map")
        g = gram_field(man, u)
        return g.trace if name == "energy" else g.det
    p = {k: _param_value(v) for k, v in case.params("field").items()}
    out = analytic_field(man, name, p)
    if isinstance(out, VectorMap):
        raise ValueError(f"case {case.name}: field generator {name!r} is vector valued")
    return out


def heat_times(case: CaseConfig) -> list:
    """Every time some check of the case reads from the shared heat run."""
    checks = set(case.checks)
    t = case.ladder("t", [])
    times = set()
    if checks & {"li_identity", "identity_chain", "sigma_conjecture_probe", "subharmonic_heat_monotone",
                 "mass_conservation", "kernel_bounds"}:
        times.update(t)
    if "heat_limit" in checks:
        times.update(t)
        times.update(3.0 * x for x in t)
    if "weighted_poincare" in checks:
        tw = case.get("wp.t", t[-1] if t else 1.0)
        times.update((tw, 3.0 * tw))
    if "harnack" in checks:
        times.update(_harnack_times(case))
    if "tail_mass" in checks:
        times.update(t)
        times.add(case.get("tail.t", t[-1] if t else 1.0))
    if "heat_gaussian" in checks:
        times.update(case.ladder("gaussian.t", t))
    if "semigroup" in checks:
        ta, tb = _semigroup_times(case)
        times.update((ta, ta + tb))
    return sorted(times)


def _harnack_times(case):
    t = case.ladder("t", [1.0, 2.0])
    return case.get("harnack.t1", t[0]), case.get("harnack.t2", t[-1])


def _semigroup_times(case):
    t = case.ladder("t", [1.0])
    return case.get("semigroup.t_a", t[0]), case.get("semigroup.t_b", t[0])


# ---------------------------------------------------------------------------
# Case context


@dataclass
class CaseData:
    """Shared, read-only inputs of one case; the refined twin is built on demand."""

    case: CaseConfig
    man: object
    u: VectorMap | None
    f: np.ndarray | None
    run: HeatRun | None
    seed: int
    cache: Cache
    _fine: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def opt(self, key, default=None):
        return self.case.get(key, default)

    @property
    def tol(self) -> float:
        return self.case.get("tolerance", 0.03)

    def refine_for(self, check: str) -> bool:
        """``refine`` lists check names; ``true`` or ``all`` selects every check."""
        sel = self.case.get("refine", ())
        return check in sel or any(x.lower() in ("true", "all") for x in sel)

    def target(self):
        return self.u if self.u is not None else self.f

    def fine(self) -> "CaseData":
        with self._lock:
            if "data" not in self._fine:
                self._fine["data"] = setup_case(self.case, self.cache, self.seed, spec=refine_spec(self.man.spec),
                                                with_run=False)
            return self._fine["data"]

    def fine_run(self, times) -> HeatRun:
        fine = self.fine()
        with self._lock:
            if "run" not in self._fine:
                self._fine["run"] = cached_run(fine.man, times, self.case.get("heat.q", 0.02), self.cache)
            return self._fine["run"]


def cached_run(man, times, q, cache: Cache) -> HeatRun:
    times = sorted(set(float(t) for t in times))
    name = "heat_" + Cache.key(man.spec_hash, times, q)
    hit = cache.load(name)
    if hit is not None:
        states = [HeatState(float(t), H, float(mm)) for t, H, mm in zip(hit["t"], hit["H"], hit["mass"])]
        return HeatRun(man=man, states=states, base=int(hit["base"]), steps=int(hit["steps"]))
    run = heat_evolve(man, times, q=q)
    cache.save(name, t=run.times, H=np.stack([s.H for s in run.states]),
               mass=np.array([s.mass for s in run.states]), base=np.array(run.base), steps=np.array(run.steps))
    return run


def setup_case(case: CaseConfig, cache: Cache, seed: int, spec=None, with_run: bool = True) -> CaseData:
    spec = spec if spec is not None else spec_from_case(case)
    man = build_manifold(spec, check_scale=not spec.negative_control)
    u = make_map(man, case, cache)
    f = make_field(man, case, u)
    times = heat_times(case)
    run = cached_run(man, times, case.get("heat.q", 0.02), cache) if with_run and times else None
    return CaseData(case=case, man=man, u=u, f=f, run=run, seed=seed, cache=cache)


# ---------------------------------------------------------------------------
# Check registry: name -> fn(ctx, control) -> CheckReport


def _rho(c):
    return c.case.ladder("rho", [])


def _t(c):
    return c.case.ladder("t", [])


def _li(c, control):
    return V.check_li_identity(c.man, c.target(), _rho(c), _t(c), c.tol, c.run, control, sup=c.opt("sup"))


def _maxp(c, control):
    return V.check_max_principle(c.man, c.u, _rho(c), c.tol, control=control)


def _heat_limit(c, control):
    return V.check_heat_limit(c.man, c.u, _t(c), c.tol, c.run, control)


def _chain(c, control):
    return V.check_identity_chain(c.man, c.target(), _rho(c), _t(c), c.opt("tolerance", 0.05), c.run, control,
                                  sup=c.opt("sup"))


def _energy(c, control):
    t = _t(c)
    pairs = c.opt("t_pairs", tuple(zip(t[:-1], t[1:])))
    return V.check_energy_monotonicity(c.man, c.u, pairs, q=c.opt("heat.q", 0.02), control=control)


def _segment(c, control):
    rho = c.opt("segment.rho")
    rho = rho if rho is not None else _rho(c)[0]
    n = c.opt("segment.samples", 200)
    refine = (c.fine().man, c.fine().f) if c.refine_for("segment") else None
    return V.check_segment(c.man, c.f, rho, n, c.seed, refine=refine, control=control)


def _poincare(c, control):
    rho = c.case.ladder("poincare.rho", _rho(c))
    refine = (c.fine().man, c.fine().f) if c.refine_for("poincare") else None
    return V.check_poincare(c.man, c.f, rho, refine=refine, control=control)


def _wp(c, control):
    t = c.opt("wp.t")
    t = t if t is not None else _t(c)[-1]
    j = tuple(int(x) for x in c.opt("wp.j", ("1", "2", "4", "8")))
    refine = None
    if c.refine_for("weighted_poincare"):
        fine = c.fine()
        refine = (fine.man, c.fine_run(heat_times(c.case)), fine.f)
    return V.check_weighted_poincare(c.man, c.run, c.f, t, j, refine=refine, control=control)


def _subharmonic(c, control):
    return V.check_subharmonic_heat_monotone(c.man, c.f, _t(c), c.run, control=control,
                                             reach=c.opt("subharmonic.reach"))


def _rigidity(c, control):
    t_max = c.opt("rigidity.t_max")
    t_max = t_max if t_max is not None else _t(c)[-1]
    return V.rigidity_probe(c.man, c.u, t_max, q=c.opt("heat.q", 0.02),
                            control=control)


def _corollary(c, control):
    return V.corollary_probe(c.man, c.u, control=control)


def _cofactor(c, control):
    refine = (c.fine().man, c.fine().u) if c.refine_for("laplacian_det_residual") else None
    return V.laplacian_det_residual(c.man, c.u, refine=refine, control=control)


def _sigma(c, control):
    return V.check_sigma_conjecture_probe(c.man, c.u, c.opt("sigma.k", 2), _rho(c), _t(c), c.run)


def _bochner(c, control):
    refine = (c.fine().man, c.fine().u) if c.refine_for("bochner") else None
    return V.check_bochner(c.man, c.u, refine=refine, control=control)


def _growth(c, control):
    return V.check_growth(c.man, c.u, control=control)


def _mass(c, control):
    return V.check_mass_conservation(c.run, control=control)


def _semigroup(c, control):
    ta, tb = _semigroup_times(c.case)
    return V.check_semigroup(c.man, ta, tb, q=c.opt("heat.q", 0.02), run=c.run, control=control)


def _gaussian(c, control):
    return V.check_gaussian(c.run, c.case.ladder("gaussian.t", _t(c)), control=control)


def _harnack(c, control):
    t1, t2 = _harnack_times(c.case)
    return V.check_harnack(c.run, t1, t2, seed=c.seed, control=control)


def _volume(c, control):
    return V.check_volume_ratio(c.man, c.case.ladder("volume.rho", _rho(c)), control=control)


def _tail(c, control):
    t = c.opt("tail.t")
    t = t if t is not None else _t(c)[-1]
    R = [float(x) for x in c.opt("tail.R", ())] or [k * np.sqrt(t) for k in (2.0, 4.0, 8.0)]
    return V.check_tail_mass(c.run, t, R, control=control)


def _kernel(c, control):
    fine = c.fine_run(heat_times(c.case)) if c.refine_for("kernel_bounds") else None
    return V.check_kernel_bounds(c.run, c.opt("kernel.eps", 1.0), refine_run=fine, control=control)


CHECKS = {
    "li_identity": _li, "max_principle": _maxp, "heat_limit": _heat_limit, "identity_chain": _chain,
    "energy_monotonicity": _energy, "segment": _segment, "poincare": _poincare, "weighted_poincare": _wp,
    "subharmonic_heat_monotone": _subharmonic, "rigidity_probe": _rigidity, "corollary_probe": _corollary,
    "laplacian_det_residual": _cofactor, "sigma_conjecture_probe": _sigma, "bochner": _bochner,
    "growth": _growth, "mass_conservation": _mass, "semigroup": _semigroup, "heat_gaussian": _gaussian,
    "harnack": _harnack, "volume_ratio": _volume, "tail_mass": _tail, "kernel_bounds": _kernel,
}


# ---------------------------------------------------------------------------
# Runner


@dataclass
class SuiteResult:
    reports: list                 # (case, check, CheckReport) in configuration order
    manifest_ok: bool | None
    observed_controls: tuple
    exit_code: int
    out: Path


def _error_report(check: str, spec_hash: str, exc: BaseException, control: bool) -> CheckReport:
    return CheckReport(id=check, spec_hash=spec_hash, scales=[], measured=[], target=0.0, tolerance=0.0,
                       verdict=V.FAIL, details={"error": f"{type(exc).__name__}: {exc}"}, control=control)


def _field_slice(man) -> np.ndarray:
    """Vertices on the 2-D slice through x0: the base, or the first two axes of a flat grid."""
    names = man.flat_names[2:] if man.base.kind == "none" else man.flat_names
    mask = np.ones(man.V, dtype=bool)
    for name in names:
        c = man.coords[name]
        mask &= np.abs(c - c[man.x0]) <= 1e-12
    return mask


def write_fields(ctx: CaseData, root: Path) -> None:
    cols = {}
    if ctx.u is not None:
        g = gram_field(ctx.man, ctx.u)
        cols["energy"] = g.trace
        cols["omega_sq"] = g.det
    if ctx.f is not None:
        cols["field"] = ctx.f
    if not cols:
        return
    root.mkdir(parents=True, exist_ok=True)
    export_csv(ctx.man, root / f"{ctx.case.name}.csv", cols, mask=_field_slice(ctx.man))


def _fmt(x) -> str:
    if isinstance(x, (list, tuple)):
        return ";".join(_fmt(v) for v in x)
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, float, np.floating, np.integer)):
        return format(float(x), ".17g")
    return str(x)


def summary_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case", "check", "verdict", "control", "spec_hash", "last_measured", "target", "tolerance"])
    for case, check, rep in rows:
        last = rep.measured[-1] if len(rep.measured) else ""
        w.writerow([case, check, rep.verdict, _fmt(rep.control), rep.spec_hash, _fmt(last), _fmt(rep.target),
                    _fmt(rep.tolerance)])
    return buf.getvalue()


def run_suite(cfg: RunConfig, out=None, jobs: int | None = None, seed: int | None = None,
              strict: bool | None = None, only=None, cache_dir=None, fields: bool = True) -> SuiteResult:
    """Run every configured check and write the artifacts.

    ``only`` restricts the checks to a subset of names (the ``heat`` verb
    uses the heat-kernel checks).  Exit code 0 means no FAIL; with
    ``strict`` every verdict other than PASS and EXPLORATORY fails the run.
    A manifest mismatch always fails the run.
    """
    out = Path(out if out is not None else cfg.out)
    jobs = jobs if jobs is not None else cfg.jobs
    seed = seed if seed is not None else cfg.seed
    strict = strict if strict is not None else cfg.strict
    cache = Cache(cache_dir if cache_dir is not None else out / "cache")
    out.mkdir(parents=True, exist_ok=True)
    manifest = set(cfg.manifest or ())

    plan = []
    for case in cfg.cases:
        for check in case.checks:
            if only is None or check in only:
                plan.append((case, check))
    cases = [c for c in cfg.cases if any(p[0] is c for p in plan)]

    contexts, failures = {}, {}
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {c.name: pool.submit(setup_case, c, cache, seed) for c in cases}
        for name, fut in futures.items():
            try:
                contexts[name] = fut.result()
            except Exception as exc:  # reported per check below
                log.error("case %s: setup failed: %s", name, exc)
                failures[name] = exc

        def job(case, check):
            control = f"{case.name}.{check}" in manifest
            if case.name in failures:
                return _error_report(check, "", failures[case.name], control)
            ctx = contexts[case.name]
            try:
                rep = CHECKS[check](ctx, control)
            except Exception as exc:
                log.error("case %s, check %s: %s", case.name, check, exc)
                return _error_report(check, ctx.man.spec_hash, exc, control)
            rep.seed = seed
            return rep

        futs = [pool.submit(job, case, check) for case, check in plan]
        reports = [(case.name, check, f.result()) for (case, check), f in zip(plan, futs)]

    # single writer; a full run replaces the reports of earlier runs
    if only is None:
        for stale in out.glob("report_*.json"):
            stale.unlink()
    for name, check, rep in reports:
        (out / f"report_{name}.{check}.json").write_text(rep.to_json())
    if fields:
        for name, ctx in contexts.items():
            write_fields(ctx, out / "fields")

    observed = tuple(sorted(f"{n}.{c}" for n, c, r in reports if r.verdict == V.NEGATIVE_CONTROL_PASS))
    rows = list(reports)
    manifest_ok = None
    if cfg.manifest is not None and only is None:
        manifest_ok = set(observed) == manifest
        mrep = CheckReport(
            id="manifest", spec_hash="", scales=[], measured=[len(observed)], target=float(len(manifest)),
            tolerance=0.0, verdict=decide(manifest_ok),
            details={"expected": sorted(manifest), "observed": list(observed),
                     "missing": sorted(manifest - set(observed)), "unexpected": sorted(set(observed) - manifest)},
        )
        rows.append(("suite", "manifest", mrep))
        (out / "report_suite.manifest.json").write_text(mrep.to_json())
    (out / "summary.csv").write_text(summary_csv(rows))

    allowed = {V.PASS, V.EXPLORATORY} if strict else {V.PASS, V.EXPLORATORY, V.NEGATIVE_CONTROL_PASS, V.UNTRUSTED}
    bad = [r for _, _, r in rows if r.verdict not in allowed]
    return SuiteResult(reports=reports, manifest_ok=manifest_ok, observed_controls=observed,
                       exit_code=1 if bad else 0, out=out)


# ---------------------------------------------------------------------------
# Plot data


def emit_plotdata(reports, dest) -> list:
    """One CSV of (scale, measured, target) per report file.

    Reports whose series hold both a ``ball`` and a ``heat`` ladder are
    merged into one table with a leading ``mode`` column.  Missing or
    unreadable report files are skipped with a warning.  Returns the paths
    written.
    """
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    written = []
    for path in reports:
        path = Path(path)
        try:
            rep = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            log.warning("skipping %s: %s", path, exc)
            continue
        name = path.stem[len("report_"):] if path.stem.startswith("report_") else path.stem
        series = rep.get("series") or {}
        target = rep.get("target")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if "ball" in series and "heat" in series:
            w.writerow(["mode", "scale", "measured", "target"])
            tgt = target[0] if isinstance(target, list) else target
            for mode in ("ball", "heat"):
                for s, m in zip(series[mode]["scales"], series[mode]["measured"]):
                    w.writerow([mode, _plot(s), _plot(m), _plot(tgt)])
        else:
            w.writerow(["scale", "measured", "target"])
            scales, measured = rep.get("scales") or [], rep.get("measured") or []
            if len(scales) != len(measured):
                scales = list(range(len(measured)))
            for k, (s, m) in enumerate(zip(scales, measured)):
                if isinstance(target, list):
                    tgt = target[k] if len(target) == len(measured) else target[0]
                else:
                    tgt = target
                w.writerow([_plot(s), _plot(m), _plot(tgt)])
        p = dest / f"{name}.csv"
        p.write_text(buf.getvalue())
        written.append(p)
    return written


def _plot(x) -> str:
    if isinstance(x, list):
        return ":".join(_plot(v) for v in x)
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return format(float(x), ".17g")
    return str(x)


def load_report(path) -> dict:
    return json.loads(Path(path).read_text())
