"""Command-line experiment runner.

    poissoncluster <command> [--config PATH|NAME] [--seed N] [--out DIR] [--threads N] [--quick]

Commands: sample, laplace, properness, quasi-invariance, ibp, dirichlet,
dynamics, acceptance. Each run writes ``manifest.json`` (inputs with all
defaults, seed, estimates with SEs, pass/fail per check), CSV tables with
17 significant digits and a ``SCHEMA.md`` describing the tables. The exit
code is 0 only if every check of the run passed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, catalog
from .acceptance import CriterionResult, run_criteria
from .calculus import dirichlet_vs_generator, ibp_residual_mucl
from .config import build_model, load_config
from .configspace import Window
from .dynamics import autocorrelation, direct_ensemble, simulate, stationarity_report
from .errors import DivergenceError, ModelError
from .laplace import laplace_empirical_batch, laplace_mucl_closed
from .properness import check_sufficient, mean_droplet_mass, pgf_closed, pgf_empirical
from .quasiinv import quasi_invariance_residual
from .sampler import counts_in, sample_lifted_batch, sample_mucl_batch

COMMANDS = ["sample", "laplace", "properness", "quasi-invariance", "ibp", "dirichlet", "dynamics", "acceptance"]

TABLES = {
    "points.csv": ("Lifted sample points, one row per cluster coordinate.",
                   [("draw", "index of the independent realization"),
                    ("cluster", "cluster index within the whole batch"),
                    ("x0..x{d-1}", "coordinates of the point"),
                    ("in_window", "1 if the point lies in the observation window")]),
    "counts.csv": ("Per-draw summaries of the projected sample in the window.",
                   [("draw", "realization index"), ("points_in_window", "projected point count in K"),
                    ("clusters_hitting_window", "number of clusters with a point in K")]),
    "laplace.csv": ("Laplace functional of catalog bumps: formula vs sampler.",
                    [("function", "catalog bump index"), ("closed", "formula value"), ("closed_se", "its MC SE"),
                     ("empirical", "sample mean of exp(-<f, gamma>)"), ("empirical_se", "its SE")]),
    "pgf.csv": ("Generating functional E[q^N(K)]: formula vs sampler.",
                [("q", "argument"), ("closed", "formula value"), ("closed_se", "its SE"),
                 ("empirical", "sample mean"), ("empirical_se", "its SE")]),
    "quasi_invariance.csv": ("E[F(phi gamma)] against E[F(gamma) R(gamma)].",
                             [("pair", "catalog (diffeo, function) index"), ("lhs", "E[F(phi gamma)]"),
                              ("lhs_se", "SE"), ("rhs", "E[F R]"), ("rhs_se", "SE"), ("residual", "lhs - rhs"),
                              ("residual_se", "paired SE with normaliser uncertainty"), ("mean_R", "E[R]"),
                              ("mean_R_se", "SE")]),
    "ibp.csv": ("Integration-by-parts terms under the cluster measure.",
                [("triple", "catalog (F, G, v) index"), ("term1", "E[F grad_v G]"), ("term1_se", "SE"),
                 ("term2", "E[G grad_v F]"), ("term2_se", "SE"), ("term3", "E[F G B^v]"), ("term3_se", "SE"),
                 ("residual", "sum of the terms"), ("residual_se", "paired SE")]),
    "dirichlet.csv": ("Dirichlet form against the generator pairing.",
                      [("pair", "catalog (F, G) index"), ("form", "E(F, G)"), ("form_se", "SE"),
                       ("generator", "E[(H F) G]"), ("generator_se", "SE"), ("diffusive", "Laplacian part"),
                       ("diffusive_se", "SE"), ("drift", "drift part"), ("drift_se", "SE"),
                       ("residual", "form - generator"), ("residual_se", "paired SE")]),
    "trajectory.csv": ("Observables along the equilibrium dynamics.",
                       [("path", "path index"), ("time", "checkpoint time"), ("observable", "catalog index"),
                        ("value", "observable value")]),
    "stationarity.csv": ("Time slices against t = 0 and against a direct ensemble.",
                         [("observable", "catalog index"), ("time", "checkpoint"), ("mean_drift", "paired mean change"),
                          ("mean_drift_se", "SE"), ("var_drift", "paired variance change"), ("var_drift_se", "SE"),
                          ("ks_pvalue", "two-sample KS p-value vs direct ensemble"), ("flagged", "1 if flagged")]),
    "autocorrelation.csv": ("Correlation of each observable between t = 0 and later checkpoints (no threshold).",
                            [("observable", "catalog index"), ("time", "checkpoint"), ("correlation", "value")]),
    "criteria.csv": ("Acceptance checks, one row per individual check.",
                     [("criterion", "criterion number"), ("check", "description"), ("value", "measured value"),
                      ("reference", "oracle value"), ("tolerance", "allowed |value - reference|"),
                      ("passed", "1 if passed")]),
}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    return obj


class Run:
    """Collects tables and checks, then writes everything in one place."""

    def __init__(self, command: str, cfg: dict, args):
        self.command, self.cfg, self.args = command, cfg, args
        self.tables: dict[str, tuple[list[str], list]] = {}
        self.checks: list[dict] = []
        self.results: dict = {}
        self.errors: list[dict] = []

    def table(self, name, header, rows):
        self.tables[name] = (header, list(rows))

    def check(self, name, value, reference, se, k=3.0):
        self.checks.append({"name": name, "value": value, "reference": reference, "tolerance": k * se,
                            "passed": bool(abs(value - reference) <= k * se)})

    @property
    def passed(self) -> bool:
        return not self.errors and all(c["passed"] for c in self.checks)

    def write(self, out: Path):
        out.mkdir(parents=True, exist_ok=True)
        for name, (header, rows) in self.tables.items():
            with open(out / name, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                for r in rows:
                    w.writerow([_fmt(v) for v in r])
        manifest = {
            "tool": "poissoncluster", "version": __version__, "command": self.command,
            "seed": self.cfg["seed"], "threads": self.args.threads, "quick": self.args.quick,
            "config": self.cfg, "results": self.results, "checks": self.checks, "errors": self.errors,
            "tables": sorted(self.tables), "passed": self.passed,
        }
        (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
        (out / "SCHEMA.md").write_text(schema_markdown(sorted(self.tables)))


def schema_markdown(names=None) -> str:
    lines = ["# Output tables", "", "Floats are written with 17 significant digits. "
             "Every estimate column is followed by its standard error column.", ""]
    for name in names or sorted(TABLES):
        if name not in TABLES:
            continue
        desc, cols = TABLES[name]
        lines += [f"## {name}", "", desc, "", "| column | meaning |", "|---|---|"]
        lines += [f"| {c} | {m} |" for c, m in cols]
        lines.append("")
    return "\n".join(lines)


def _window(cfg) -> Window:
    w = cfg["experiment"]["window"]
    return Window(w["lower"], w["upper"])


def _size(cfg, key, quick):
    n = int(cfg["experiment"][key])
    return max(n // 10, 100) if quick else n


def _pick(items, idx):
    return [(i, items[i]) for i in idx if i < len(items)]


def _need_line(model):
    if model.dim != 1:
        raise ModelError("catalog test functions are defined on the line; use a dimension-1 model")


def cmd_sample(run: Run, model, rng):
    K = _window(run.cfg)
    N = _size(run.cfg, "n_draws", run.args.quick)
    batch = sample_lifted_batch(model, K, N, rng)
    inside = K.contains(batch.points)
    d = model.dim
    run.table("points.csv", ["draw", "cluster"] + [f"x{i}" for i in range(d)] + ["in_window"],
              ([int(a), int(b)] + list(p) + [bool(f)] for a, b, p, f in
               zip(batch.draw_of_point, batch.cluster_of_point, batch.points, inside)))
    counts = counts_in(batch.draw_of_point[inside], N)
    cl = batch.clusters_per_draw()
    run.table("counts.csv", ["draw", "points_in_window", "clusters_hitting_window"],
              ([i, int(a), int(b)] for i, (a, b) in enumerate(zip(counts, cl))))
    run.results = {"n_draws": N, "mean_count": float(counts.mean()),
                   "mean_count_se": float(counts.std(ddof=1) / np.sqrt(N)) if N > 1 else 0.0,
                   "sampler": batch.metadata}


def cmd_laplace(run: Run, model, rng):
    _need_line(model)
    N = _size(run.cfg, "mc_samples", run.args.quick)
    rows = []
    for i, f in _pick(catalog.bumps(), run.cfg["experiment"]["functions"]):
        K = Window(*f.support())
        closed = laplace_mucl_closed(model, f, rng=rng)
        pts, draw = sample_mucl_batch(model, K, N, rng)
        emp = laplace_empirical_batch(pts, draw, N, f, K)
        rows.append([i, closed.value, closed.se, emp.value, emp.se])
        run.check(f"laplace bump {i}", emp.value, closed.value, float(np.hypot(closed.se, emp.se)))
    run.table("laplace.csv", ["function", "closed", "closed_se", "empirical", "empirical_se"], rows)


def cmd_properness(run: Run, model, rng):
    K = _window(run.cfg)
    N = _size(run.cfg, "mc_samples", run.args.quick)
    run.results["sufficient_conditions"] = check_sufficient(model, K).as_dict()
    try:
        m = mean_droplet_mass(model, K, N, rng)
    except DivergenceError as err:
        run.results["verdict"] = "divergent"
        run.errors.append({"type": "divergence", **err.report.as_dict()})
        return
    run.results["verdict"] = "finite"
    run.results["mean_droplet_mass"] = {"value": m.value, "se": m.se}
    pts, draw = sample_mucl_batch(model, K, N, rng)
    counts = counts_in(draw, N)
    rows = []
    for q in run.cfg["experiment"]["q_grid"]:
        c = pgf_closed(model, K, q, N, rng)
        e = pgf_empirical(counts, K, q)
        rows.append([q, c.value, c.se, e.value, e.se])
        run.check(f"pgf q={q}", e.value, c.value, float(np.hypot(c.se, e.se)))
    run.table("pgf.csv", ["q", "closed", "closed_se", "empirical", "empirical_se"], rows)


def cmd_quasi_invariance(run: Run, model, rng):
    _need_line(model)
    N = _size(run.cfg, "mc_samples", run.args.quick)
    rows = []
    Fs = catalog.cylinder_functions()
    for i, phi in _pick(catalog.diffeos(), run.cfg["experiment"]["diffeos"]):
        r = quasi_invariance_residual(model, phi, Fs[i % len(Fs)], N, rng)
        rows.append([i, r.lhs.value, r.lhs.se, r.rhs.value, r.rhs.se, r.residual, r.se, r.mean_R.value, r.mean_R.se])
        run.check(f"quasi-invariance pair {i}", r.residual, 0.0, r.se)
        run.check(f"E[R] = 1 pair {i}", r.mean_R.value, 1.0, r.mean_R.se)
    run.table("quasi_invariance.csv", ["pair", "lhs", "lhs_se", "rhs", "rhs_se", "residual", "residual_se",
                                       "mean_R", "mean_R_se"], rows)


def cmd_ibp(run: Run, model, rng):
    _need_line(model)
    N = _size(run.cfg, "mc_samples", run.args.quick)
    Fs, vs = catalog.cylinder_functions(), catalog.vector_fields()
    rows = []
    for i in range(3):
        r = ibp_residual_mucl(model, Fs[i], Fs[(i + 1) % 3], vs[i], N, rng)
        rows.append([i] + [x for t in r.terms for x in t] + [r.residual, r.se])
        run.check(f"ibp triple {i}", r.residual, 0.0, r.se)
    run.table("ibp.csv", ["triple", "term1", "term1_se", "term2", "term2_se", "term3", "term3_se",
                          "residual", "residual_se"], rows)


def cmd_dirichlet(run: Run, model, rng):
    _need_line(model)
    N = _size(run.cfg, "mc_samples", run.args.quick)
    Fs = catalog.cylinder_functions()
    rows = []
    for i, (F, G) in enumerate([(Fs[0], Fs[1]), (Fs[2], Fs[2])]):
        r = dirichlet_vs_generator(model, F, G, N, rng)
        rows.append([i, *r.lhs, *r.rhs, *r.diffusive, *r.drift, r.residual, r.se])
        run.check(f"dirichlet pair {i}", r.residual, 0.0, r.se)
        run.checks.append({"name": f"E(F,F) >= 0 pair {i}", "value": r.min_form_FF, "reference": 0.0,
                           "tolerance": 0.0, "passed": r.min_form_FF >= 0})
    run.table("dirichlet.csv", ["pair", "form", "form_se", "generator", "generator_se", "diffusive", "diffusive_se",
                                "drift", "drift_se", "residual", "residual_se"], rows)


def cmd_dynamics(run: Run, model, rng):
    _need_line(model)
    e = run.cfg["experiment"]
    K = _window(run.cfg)
    paths = max(e["paths"] // 10, 50) if run.args.quick else e["paths"]
    obs = catalog.observables()
    traj = simulate(model, K, e["T"], e["dt"], paths, obs, rng, checkpoints=e["checkpoints"])
    rep = stationarity_report(traj, direct_ensemble(model, K, obs, paths, rng))
    run.table("trajectory.csv", ["path", "time", "observable", "value"], traj.rows())
    run.table("stationarity.csv", ["observable", "time", "mean_drift", "mean_drift_se", "var_drift",
                                   "var_drift_se", "ks_pvalue", "flagged"],
              ([r.observable, r.time, *r.mean_drift, *r.var_drift, r.ks_pvalue, r.flagged] for r in rep))
    run.table("autocorrelation.csv", ["observable", "time", "correlation"],
              ([j, t, c] for j in range(len(obs)) for t, c in autocorrelation(traj, j)))
    for r in rep:
        run.checks.append({"name": f"stationarity obs {r.observable} t={r.time}", "value": float(r.flagged),
                           "reference": 0.0, "tolerance": 0.0, "passed": not r.flagged})
    run.results["trajectory_metadata"] = traj.metadata


def cmd_acceptance(run: Run, model, rng):
    results: list[CriterionResult] = run_criteria(seed=run.cfg["seed"], quick=run.args.quick)
    rows = []
    for r in results:
        print(r.line())
        for c in r.checks:
            rows.append([r.number, c.name, c.value, c.reference, c.tolerance, c.passed])
        run.checks.append({"name": f"criterion {r.number}: {r.title}", "value": float(r.passed),
                           "reference": 1.0, "tolerance": 0.0, "passed": r.passed})
        if r.error:
            run.errors.append({"type": "criterion_error", "criterion": r.number, "detail": r.error})
    run.results["criteria"] = [r.as_dict() for r in results]
    run.table("criteria.csv", ["criterion", "check", "value", "reference", "tolerance", "passed"], rows)


HANDLERS = {
    "sample": cmd_sample, "laplace": cmd_laplace, "properness": cmd_properness,
    "quasi-invariance": cmd_quasi_invariance, "ibp": cmd_ibp, "dirichlet": cmd_dirichlet,
    "dynamics": cmd_dynamics, "acceptance": cmd_acceptance,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poissoncluster", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", default="gaussian-ex1",
                   help="JSON config path or bundled name (gaussian-ex1, blowup, delta-clusters)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=None, help="output directory (default out/<name>-<command>)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker count; results are computed in a fixed order and do not depend on it")
    p.add_argument("--quick", action="store_true", help="reduced sample sizes for smoke runs")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = args.config
        cfg = load_config(raw)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise jsonschema.ValidationError("seed must be a 64-bit unsigned integer")
            cfg["seed"] = args.seed
    except (jsonschema.ValidationError, json.JSONDecodeError, FileNotFoundError) as err:
        msg = err.message if isinstance(err, jsonschema.ValidationError) else str(err)
        path = "/".join(map(str, getattr(err, "absolute_path", []) or []))
        print(f"invalid config: {msg}" + (f" (at {path})" if path else ""), file=sys.stderr)
        return 2
    out = Path(args.out) if args.out else Path("out") / f"{cfg['name']}-{args.command}"
    run = Run(args.command, cfg, args)
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]))
    try:
        model = build_model(cfg)
        HANDLERS[args.command](run, model, rng)
    except DivergenceError as err:
        run.errors.append({"type": "divergence", **err.report.as_dict()})
    except ModelError as err:
        run.errors.append({"type": "model", "detail": str(err)})
    run.write(out)
    status = "passed" if run.passed else "failed"
    print(f"{args.command}: {status} ({len(run.checks)} checks, {len(run.errors)} errors) -> {out}")
    return 0 if run.passed else 1


if __name__ == "__main__":
    sys.exit(main())
