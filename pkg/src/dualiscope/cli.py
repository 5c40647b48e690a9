"""Command-line experiment runner.

``dualiscope run --config exp.json`` executes one experiment and writes
``report.json`` and ``cases.csv`` into the output directory.
``dualiscope suite paper-exact`` runs the acceptance battery.

Exit status: 0 when every verdict passes, 1 when a check fails,
2 for configuration errors and violated preconditions.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import inequalities as ineq
from .duality import diffusion_scale_factor, max_duality_residual
from .errors import DualiscopeError, PreconditionError
from .measures import ProductMeasureSpec, chi_square_pvalue, sample_site
from .model import (
    BEP,
    BMP,
    SEP,
    SIP,
    BoundaryDrivenSIP,
    SiteGraph,
    configurations_up_to,
    graph_from_json,
    occupations,
    process_from_json,
    process_to_json,
    rational,
)
from .montecarlo import (
    estimate_K,
    replica_rng,
    simulate_bep,
    simulate_bmp,
    simulate_ctmc,
)

SCHEMA_VERSION = 1
EXPERIMENTS = (
    "verify-duality",
    "comparison",
    "sip-correlations",
    "sep-correlations",
    "diffusion-correlations",
    "boundary",
    "profile",
    "meeting",
    "simulate",
    "sample",
)


class ConfigError(DualiscopeError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class Reader:
    """Typed access into a JSON document that names the failing path."""

    def __init__(self, doc: Any, path: str = "$"):
        self.doc, self.path = doc, path

    def _sub(self, key) -> str:
        return f"{self.path}[{key}]" if isinstance(key, int) else f"{self.path}.{key}"

    def has(self, key: str) -> bool:
        return isinstance(self.doc, dict) and key in self.doc

    def child(self, key) -> "Reader":
        if isinstance(key, int):
            if not isinstance(self.doc, list) or key >= len(self.doc):
                raise ConfigError(self._sub(key), "missing list entry")
        elif not self.has(key):
            raise ConfigError(self._sub(key), "required field is missing")
        return Reader(self.doc[key], self._sub(key))

    def get(self, key: str, kind: Callable = lambda v: v, default: Any = ...):
        if not self.has(key):
            if default is ...:
                raise ConfigError(self._sub(key), "required field is missing")
            return default
        try:
            return kind(self.doc[key])
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise ConfigError(self._sub(key), str(exc)) from None

    def parse(self, key: str, fn: Callable):
        """Run a library parser on a sub-document, attributing its errors to the path."""
        sub = self.child(key)
        try:
            return fn(sub.doc)
        except (DualiscopeError, TypeError, ValueError, KeyError, AttributeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(sub.path, str(exc)) from None


def _rational_list(v) -> list:
    if not isinstance(v, list):
        raise ValueError("expected a list")
    return [rational(x) for x in v]


def _int_list(v) -> list:
    if not isinstance(v, list) or not all(isinstance(x, int) for x in v):
        raise ValueError("expected a list of integers")
    return list(v)


def _times(r: Reader) -> list:
    times = r.get("times", lambda v: [float(x) for x in v])
    if not times:
        raise ConfigError(f"{r.path}.times", "empty time grid")
    if any(t < 0 for t in times):
        raise ConfigError(f"{r.path}.times", "times must be nonnegative")
    return times


def _points(r: Reader, key: str = "points") -> list:
    """A tuple of sites or a list of such tuples."""
    v = r.get(key)
    if isinstance(v, list) and v and all(isinstance(x, int) for x in v):
        return [tuple(v)]
    if isinstance(v, list) and v and all(isinstance(p, list) and all(isinstance(x, int) for x in p) for p in v):
        return [tuple(p) for p in v]
    raise ConfigError(f"{r.path}.{key}", "expected a list of sites or a list of site lists")


def _graph(r: Reader) -> SiteGraph:
    return r.parse("graph", lambda d: graph_from_json(d if "kernel" in d else {"graph": d}))


def _measure(doc) -> ProductMeasureSpec:
    return ProductMeasureSpec(doc["family"], tuple(doc["profile"]), m=doc.get("m"), n=doc.get("n"))


def _map(fn: Callable, items: list, jobs: int) -> list:
    """Ordered map; a process pool when ``jobs > 1``."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# Experiments: each returns a list of CheckReports
# --------------------------------------------------------------------------


def _duality_case(args):
    spec, xi, etas, graph = args
    worst, count = max_duality_residual(spec, [xi], etas, graph)
    return xi, worst, count


def exp_verify_duality(r: Reader, seed, jobs) -> list:
    spec = r.parse("process", process_from_json)
    max_dual = r.get("max_dual", int, 3)
    if isinstance(spec, BoundaryDrivenSIP):
        graph = None
        xis = configurations_up_to(spec.N + 2, max_dual)
        etas = list(occupations(spec.N, r.get("max_occupancy", int, 3)))
    else:
        graph = _graph(r)
        xis = configurations_up_to(graph.size, max_dual, getattr(spec, "cap", None))
        etas = None
        if isinstance(spec, (SIP, SEP)):
            cap = r.get("max_occupancy", int, 4)
            if isinstance(spec, SEP):
                cap = min(cap, spec.n)
            etas = list(occupations(graph.size, cap))
    results = _map(_duality_case, [(spec, xi, etas, graph) for xi in xis], jobs)
    rows, worst, worst_case, cases = [], Fraction(0), None, 0
    for xi, res, count in results:
        row = {"xi": xi, "residual": res, "pairs": count}
        if isinstance(spec, (BMP, BEP)):
            row["scale"] = diffusion_scale_factor(xi, graph, spec)
        rows.append(row)
        cases += count
        if res > worst:
            worst, worst_case = res, xi
    details = {"process": process_to_json(spec), "max_residual": worst}
    if isinstance(spec, (BMP, BEP)):
        scales = {str(s) for s in (row["scale"] for row in rows) if s is not None}
        details["uniform_scale"] = sorted(scales)
    return [ineq.CheckReport("verify-duality", cases, -worst, 0.0, worst_case, rows, details)]


def _table_function(doc, num_sites: int, n: int) -> ineq.PDFunction:
    arr = np.array(doc, dtype=object)
    if arr.shape != (num_sites,) * n:
        raise ValueError(f"table shape {arr.shape} does not match ({num_sites},)*{n}")
    vals = np.vectorize(rational, otypes=[object])(arr)
    exact = all(isinstance(v, Fraction) for v in vals.flat)
    f = ineq.PDFunction(vals if exact else vals.astype(float))
    return ineq.PDFunction(f.values, f._is_symmetric())


def _comparison_case(args):
    graph, n, a, b, f, t, eps = args
    return ineq.comparison_check(graph, n, a, b, f, t, eps)


def exp_comparison(r: Reader, seed, jobs) -> list:
    graph = _graph(r)
    n = r.get("n", int)
    a, b = r.get("a", rational), r.get("b", rational)
    eps = r.get("eps", float, 1e-12)
    times = _times(r)
    fr = r.child("function")
    if fr.has("table"):
        fs = [fr.parse("table", lambda d: _table_function(d, graph.size, n))]
        for f in fs:
            if not f.symmetric:
                raise PreconditionError("test function is not symmetric")
            v = ineq.is_positive_definite(f, graph, n)
            if not v:
                raise PreconditionError(f"test function is not positive definite (min eigenvalue {v.min_eigenvalue:.3g})")
    else:
        count = fr.get("random", int)
        if seed is None:
            raise ConfigError(f"{r.path}.seed", "random test functions need a seed")
        rng = np.random.default_rng(seed)
        fs = [ineq.random_pd_function(rng, graph.size, n) for _ in range(count)]
    cases = [(graph, n, a, b, f, t, eps) for f in fs for t in times]
    reports = _map(_comparison_case, cases, jobs)
    return [ineq.merge_reports("comparison", reports)]


def _corr_case(args):
    kind, graph, param, profile, points, t = args
    if kind == "sip":
        return ineq.sip_correlation_check(graph, param, profile, points, t)
    if kind == "sep":
        return ineq.sep_correlation_check(graph, param, profile, points, t)
    return ineq.diffusion_correlation_check(param, graph, profile, points, t)


def _correlations(kind: str, r: Reader, jobs, param) -> list:
    graph = _graph(r)
    profile = r.get("profile", _rational_list)
    cases = [(kind, graph, param, profile, p, t) for p in _points(r) for t in _times(r)]
    reports = _map(_corr_case, cases, jobs)
    for rep in reports:
        if "covariance" in rep.details:
            rep.rows[0]["covariance"] = rep.details["covariance"]
    return [ineq.merge_reports(f"{kind}-correlations", reports)]


def exp_sip(r: Reader, seed, jobs) -> list:
    return _correlations("sip", r, jobs, r.get("m", rational))


def exp_sep(r: Reader, seed, jobs) -> list:
    return _correlations("sep", r, jobs, r.get("n", int))


def exp_diffusion(r: Reader, seed, jobs) -> list:
    spec = r.parse("process", process_from_json)
    if not isinstance(spec, (BMP, BEP)):
        raise ConfigError(f"{r.path}.process", "expected BMP or BEP")
    return _correlations("diffusion", r, jobs, spec)


def _boundary_spec(r: Reader) -> BoundaryDrivenSIP:
    spec = r.parse("process", process_from_json)
    if not isinstance(spec, BoundaryDrivenSIP):
        raise ConfigError(f"{r.path}.process", "expected BoundaryDrivenSIP")
    return spec


def exp_boundary(r: Reader, seed, jobs) -> list:
    s = _boundary_spec(r)
    reports = [ineq.boundary_correlation_check(s.N, s.m, s.lam_left, s.lam_right, p) for p in _points(r)]
    return [ineq.merge_reports("boundary", reports)]


def exp_profile(r: Reader, seed, jobs) -> list:
    s = _boundary_spec(r)
    prof = ineq.density_profile(s.N, s.m, s.lam_left, s.lam_right)
    worst = -max((abs(d) for d in prof.second_differences), default=Fraction(0))
    rows = [{"site": i + 1, "density": v, "reference": ref, "deviation": d}
            for i, (v, ref, d) in enumerate(zip(prof.values, prof.reference, prof.deviation))]
    return [ineq.CheckReport("profile-affinity", len(rows), worst, 0.0, None, rows, prof.to_json())]


def exp_meeting(r: Reader, seed, jobs) -> list:
    graph = _graph(r)
    starts = r.get("starts", _int_list)
    return [ineq.meeting_probability_report(graph, r.get("m", rational), starts, _times(r))]


def _dump_rows(traj_times, traj_states, replica: int) -> list:
    return [(replica, float(t), site, float(v)) for t, st in zip(traj_times, traj_states) for site, v in enumerate(st)]


def exp_simulate(r: Reader, seed, jobs, dump: list | None = None) -> list:
    if seed is None:
        raise ConfigError(f"{r.path}.seed", "stochastic experiments need a seed")
    spec = r.parse("process", process_from_json)
    graph = None if isinstance(spec, BoundaryDrivenSIP) else _graph(r)
    T = r.get("T", float)
    dt = r.get("dt", float, None)
    replicas = r.get("replicas", int, 1)
    start = r.get("start", list)
    reports = []
    worst, rows = 0.0, []
    for k in range(replicas):
        rng = replica_rng(seed, k)
        if isinstance(spec, BMP):
            tr = simulate_bmp(start, T, dt, rng, graph)
            q = (tr.states**2).sum(axis=1)
            drift = float(np.max(np.abs(q - q[0])) / max(q[0], 1e-300))
            times, states = tr.times, tr.states
            rows.append({"replica": k, "relative_drift": drift})
            worst = max(worst, drift)
        elif isinstance(spec, BEP):
            tr = simulate_bep(start, spec.m, T, dt, rng, graph)
            total0 = sum(int(round(float(v) * 2.0**40)) for v in start)
            drift = abs(sum(tr.quanta) - total0)
            times, states = tr.times, tr.states
            rows.append({"replica": k, "quanta_drift": drift, "clamped": tr.clamped})
            worst = max(worst, drift)
        else:
            tr = simulate_ctmc(spec, tuple(start), T, rng, graph)
            times, states = tr.times, tr.states
            if isinstance(spec, BoundaryDrivenSIP):
                drift = 0
            else:
                drift = max(abs(sum(s) - sum(start)) for s in states)
            rows.append({"replica": k, "jumps": tr.jumps, "mass_drift": drift})
            worst = max(worst, drift)
        if dump is not None:
            dump.extend(_dump_rows(times, states, k))
    tol = 1e-12 if isinstance(spec, BMP) else 0.0
    reports.append(ineq.CheckReport("conservation", replicas, 0.0 - worst, tol, None, rows))
    if r.has("estimate"):
        e = r.child("estimate")
        measure = e.parse("measure", _measure)
        points = e.get("points", _int_list)
        t = e.get("t", float)
        n_rep = e.get("replicas", int)
        xi = [points.count(x) for x in range(graph.size)]
        est = estimate_K(spec, measure, xi, t, n_rep, seed, graph, dt)
        exact = ineq.dual_moment(spec, measure, points, t, graph)
        margin = 3 * est.stderr - abs(est.mean - exact)
        reports.append(ineq.CheckReport("estimate-K", n_rep, margin, 0.0, tuple(points),
                                        [{"mean": est.mean, "stderr": est.stderr, "exact": exact}],
                                        {"estimate": est.to_json(), "exact": exact}))
    return reports


def exp_sample(r: Reader, seed, jobs) -> list:
    if seed is None:
        raise ConfigError(f"{r.path}.seed", "stochastic experiments need a seed")
    measure = r.parse("measure", _measure)
    size = r.get("samples", int, 100_000)
    alpha = r.get("alpha", float, 1e-3)
    rows, worst = [], 1.0
    for x, param in enumerate(measure.profile):
        rng = replica_rng(seed, x)
        s = sample_site(measure.family, param, rng, size, m=measure.m, n=measure.n)
        p = chi_square_pvalue(measure.family, param, s, m=measure.m, n=measure.n)
        rows.append({"site": x, "param": param, "pvalue": p, "mean": float(np.mean(s))})
        worst = min(worst, p)
    return [ineq.CheckReport("sampler-chi-square", len(rows), worst - alpha, 0.0, None, rows, {"alpha": alpha})]


RUNNERS = {
    "verify-duality": exp_verify_duality,
    "comparison": exp_comparison,
    "sip-correlations": exp_sip,
    "sep-correlations": exp_sep,
    "diffusion-correlations": exp_diffusion,
    "boundary": exp_boundary,
    "profile": exp_profile,
    "meeting": exp_meeting,
    "simulate": exp_simulate,
    "sample": exp_sample,
}


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def cases_csv(reports: list) -> str:
    """Long format: one line per (check, case, field)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "case", "field", "value"])
    for rep in reports:
        for i, row in enumerate(rep.rows):
            name = row.get("check", rep.name)
            for k, v in row.items():
                if k != "check":
                    w.writerow([name, i, k, _fmt(v)])
    return buf.getvalue()


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def build_report(experiment: str, config: dict, seed, reports: list) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "experiment": experiment,
        "seed": seed,
        "verdict": "pass" if all(r.verdict for r in reports) else "fail",
        "checks": [r.to_json() for r in reports],
        "config": config,
    }


def execute(config: dict, seed=None, jobs: int = 1, dump: list | None = None):
    """Parse and run one experiment config; returns ``(experiment, seed, reports)``."""
    r = Reader(config)
    if not isinstance(config, dict):
        raise ConfigError("$", "config must be a JSON object")
    name = r.get("experiment", str)
    if name not in RUNNERS:
        raise ConfigError("$.experiment", f"unknown experiment {name!r}; expected one of {', '.join(EXPERIMENTS)}")
    seed = seed if seed is not None else r.get("seed", int, None)
    if name == "simulate":
        reports = exp_simulate(r, seed, jobs, dump)
    else:
        reports = RUNNERS[name](r, seed, jobs)
    return name, seed, reports


def _jobs(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("DUALISCOPE_JOBS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        return 1


def cmd_run(args) -> int:
    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: $: invalid JSON ({exc})", file=sys.stderr)
        return 2
    dump = [] if args.dump else None
    try:
        name, seed, reports = execute(config, args.seed, _jobs(args.jobs), dump)
    except PreconditionError as exc:
        print(f"error: precondition failed: {exc}", file=sys.stderr)
        return 2
    except DualiscopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out or config.get("out", "."))
    report = build_report(name, config, seed, reports)
    write_atomic(out / "report.json", json.dumps(report, indent=2, default=str) + "\n")
    write_atomic(out / "cases.csv", cases_csv(reports))
    if dump is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replica", "time", "site", "value"])
        w.writerows((k, repr(t), s, repr(v)) for k, t, s, v in dump)
        write_atomic(out / "trajectory.csv", buf.getvalue())
    return _summarise(reports)


def _summarise(reports: list) -> int:
    status = 0
    for rep in reports:
        tag = "PASS" if rep.verdict else "FAIL"
        print(f"{tag} {rep.name}: cases={rep.cases} worst_margin={float(rep.worst_margin):.6g}")
        if not rep.verdict:
            print(f"  worst case: {rep.worst_case}", file=sys.stderr)
            status = 1
    return status


def cmd_suite(args) -> int:
    from .acceptance import PRESETS, run_preset

    if args.preset not in PRESETS:
        print(f"error: unknown preset {args.preset!r}; expected one of {', '.join(PRESETS)}", file=sys.stderr)
        return 2
    results = run_preset(args.preset, jobs=_jobs(args.jobs))
    reports = [rep for _, reps in results for rep in reps]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "preset": args.preset,
        "verdict": "pass" if all(r.verdict for r in reports) else "fail",
        "criteria": [{"criterion": key, "checks": [r.to_json() for r in reps]} for key, reps in results],
    }
    out = Path(args.out or ".")
    write_atomic(out / "report.json", json.dumps(summary, indent=2, default=str) + "\n")
    write_atomic(out / "cases.csv", cases_csv(reports))
    return _summarise(reports)


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dualiscope", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("--config", required=True, help="experiment JSON file")
    run.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--jobs", type=int, default=None, help="worker processes (default $DUALISCOPE_JOBS or 1)")
    run.add_argument("--dump", action="store_true", help="also write trajectory.csv for simulations")
    run.set_defaults(func=cmd_run)
    suite = sub.add_parser("suite", help="run an acceptance preset")
    suite.add_argument("preset", help="paper-exact, paper-stochastic or all")
    suite.add_argument("--out", default=None)
    suite.add_argument("--jobs", type=int, default=None)
    suite.set_defaults(func=cmd_suite)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
