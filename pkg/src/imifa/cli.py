"""Command-line front end.

Commands: ``simulate``, ``fit``, ``summarise``, ``score`` and ``compare``.
Exit status is 0 on success, 2 on invalid input or configuration, and 1 on a
runtime failure.

A config is one TOML or JSON document::

    [data]
    path = "olive.csv"
    label_column = "area"      # optional; kept out of x, used for metrics
    center = true
    scale = "unit"             # none | unit | pareto

    [model]
    kind = "MFA"
    G = [1, 9]                 # an int, or an inclusive [lo, hi] grid range
    q = [0, 6]

    [model.mgp]                # any MgpHyper field
    [model.process]            # any ProcessPrior field
    [control]                  # any McmcControl field

    [simulate]
    n = 300
    p = 50
    G = 3
    q = [2, 2, 2]
    separation = 1.0
    replicates = 10
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .criteria import selection_criterion
from .data import PreprocessSpec, SimSpec, canonical_labels, load_matrix, preprocess, simulate_mfa, write_simulated
from .errors import ImifaError, ValidationError
from .mcmc import ChainTrace, McmcControl, ModelConfig, fit
from .metrics import adjusted_rand, error_rate
from .posthoc import summarize

log = logging.getLogger("imifa")

GRID_G = ("MFA", "MIFA")
GRID_Q = ("FA", "MFA")


# -- config -----------------------------------------------------------------

def read_config(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            doc = tomllib.loads(text)
        else:
            doc = json.loads(text)
    except ValueError as exc:
        raise ValidationError(f"{path}: cannot parse config: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: config must be a table/object")
    doc["_base"] = str(path.parent)
    return doc


def _as_range(value, name):
    if value is None:
        return [None]
    if isinstance(value, int):
        return [value]
    if isinstance(value, list) and len(value) == 2 and all(isinstance(v, int) for v in value):
        lo, hi = value
        if lo > hi:
            raise ValidationError(f"{name} range [{lo}, {hi}] is empty")
        return list(range(lo, hi + 1))
    raise ValidationError(f"{name} must be an int or an inclusive [lo, hi] pair")


def grid_from_config(doc, seed=None):
    """Candidate ``ModelConfig`` list for the ``[model]``/``[control]`` sections."""
    model = dict(doc.get("model") or {})
    control = dict(doc.get("control") or {})
    if seed is not None:
        control["seed"] = seed
    kind = model.pop("kind", "IMIFA")
    Gs = _as_range(model.pop("G", None), "G")
    qs = _as_range(model.pop("q", None), "q")
    if len(Gs) > 1 and kind not in GRID_G:
        raise ValidationError(f"a G range is only allowed for {GRID_G}, not {kind}")
    if len(qs) > 1 and kind not in GRID_Q:
        raise ValidationError(f"a q range is only allowed for {GRID_Q}, not {kind}")
    ctl = McmcControl(**control)
    grid = []
    for G in Gs:
        for q in qs:
            c = ctl
            if len(Gs) * len(qs) > 1:
                # each grid member owns an independent seed stream
                sub = int(np.random.SeedSequence([ctl.seed, len(grid)]).generate_state(1)[0])
                c = McmcControl(**{**asdict(ctl), "seed": sub})
            grid.append(ModelConfig.from_dict({**model, "kind": kind, "G": G, "q": q, "control": asdict(c)}))
    return grid


def load_data(doc):
    spec = doc.get("data") or {}
    if "path" not in spec:
        raise ValidationError("config needs data.path")
    path = Path(spec["path"])
    if not path.is_absolute() and not path.exists():
        path = Path(doc.get("_base", ".")) / path
    d = load_matrix(path, has_header=spec.get("has_header", True), label_column=spec.get("label_column"))
    return preprocess(d, PreprocessSpec(center=spec.get("center", True), scale_mode=spec.get("scale", "unit")))


def _prepare_out(out, force):
    out = Path(out)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise ValidationError(f"{out} exists and is not empty; pass --force to overwrite")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# -- simulate ---------------------------------------------------------------

def cmd_simulate(doc, out, seed=None, replicates=None, force=False):
    sim = dict(doc.get("simulate") or {})
    R = replicates if replicates is not None else sim.pop("replicates", 1)
    sim.pop("replicates", None)
    if not isinstance(R, int) or R < 1:
        raise ValidationError(f"replicate count must be a positive integer, got {R}")
    base = seed if seed is not None else sim.pop("seed", 0)
    sim.pop("seed", None)
    out = _prepare_out(out, force)
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(base).spawn(R)]
    files = []
    for r, s in enumerate(seeds, start=1):
        spec = SimSpec(seed=s, **sim)
        d, truth = simulate_mfa(spec)
        stem = out / f"replicate_{r:03d}"
        write_simulated(d, truth, stem)
        files.append(stem.name)
    _write_json(out / "config.resolved.json", {"simulate": {**sim, "replicates": R, "seed": base}, "seeds": seeds})
    return files


# -- fit / summarise --------------------------------------------------------

def _fit_one(args):
    x, cfg, run_dir, labels = args
    trace = fit(x, cfg)
    trace.save(run_dir, config=trace.meta.get("config"))
    _write_json(Path(run_dir) / "config.resolved.json", trace.meta["config"])
    summary = write_summary(run_dir, trace)
    if labels is not None:
        write_metrics(run_dir, summary.map_z, labels)
    crit = selection_criterion(cfg.kind)
    return cfg.kind, cfg.G, cfg.q, crit, summary.criteria.get(crit), trace.meta["wall_time_s"]


def cmd_fit(doc, out, seed=None, threads=1, force=False):
    data = load_data(doc)
    grid = grid_from_config(doc, seed)
    out = _prepare_out(out, force)
    t0 = time.perf_counter()
    if len(grid) == 1:
        jobs = [(data.x, grid[0], out, data.true_labels)]
    else:
        jobs = [(data.x, c, out / "models" / f"G{c.G if c.G is not None else 1}_q{c.q if c.q is not None else 'adaptive'}",
                 data.true_labels) for c in grid]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_fit_one, jobs))
    else:
        rows = [_fit_one(j) for j in jobs]
    wall = time.perf_counter() - t0
    best = max(range(len(rows)), key=lambda i: -np.inf if rows[i][4] is None else rows[i][4])
    with (out / "comparison.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "G", "q", "criterion", "value", "selected", "run_dir"])
        for i, (kind, G, q, crit, val, _) in enumerate(rows):
            w.writerow([kind, "" if G is None else G, "" if q is None else q, crit,
                        "" if val is None else repr(val), int(i == best),
                        str(Path(jobs[i][2]).relative_to(out)) or "."])
    info = {"n_models": len(rows), "wall_time_s": wall, "selected": str(Path(jobs[best][2]).relative_to(out))}
    _write_json(out / "run_info.json", info)
    if len(grid) > 1:
        _write_json(out / "config.resolved.json", {k: v for k, v in doc.items() if k != "_base"})
        summary = write_summary(out, ChainTrace.load(jobs[best][2]))
        if data.true_labels is not None:
            write_metrics(out, summary.map_z, data.true_labels)
    return info


def write_summary(run_dir, trace=None):
    """summary.json plus plot-ready CSVs under ``plots/``."""
    run_dir = Path(run_dir)
    if trace is None:
        trace = _load_trace(run_dir)
    s = summarize(trace)
    (run_dir / "summary.json").write_text(s.to_json() + "\n", encoding="utf-8")
    plots = run_dir / "plots"
    plots.mkdir(exist_ok=True)
    with (plots / "q_barchart.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["cluster", "q", "frequency"])
        for g, dist in enumerate(s.q_distributions, start=1):
            for q, f in sorted(dist.items()):
                w.writerow([g, q, repr(f)])
    with (plots / "G_frequency.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["G", "frequency"])
        for G, f in sorted(s.G_distribution.items()):
            w.writerow([G, repr(f)])
    with (plots / "loadings_heatmap.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["cluster", "row", "col", "value"])
        for g, lam in enumerate(s.posterior_mean_loadings, start=1):
            for j, row in enumerate(lam, start=1):
                for k, v in enumerate(row, start=1):
                    w.writerow([g, j, k, repr(v)])
    return s


def _load_trace(run_dir):
    run_dir = Path(run_dir)
    if (run_dir / "trace.meta.json").exists():
        return ChainTrace.load(run_dir)
    info = run_dir / "run_info.json"
    if info.exists():
        return ChainTrace.load(run_dir / json.loads(info.read_text())["selected"])
    raise FileNotFoundError(f"no trace files in {run_dir}")


def cmd_summarise(run_dir):
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory not found: {run_dir}")
    return write_summary(run_dir)


# -- score / compare --------------------------------------------------------

def read_labels(path, column=None, has_header=True):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"label file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    header = rows.pop(0) if has_header and rows else None
    if column is None:
        if rows and len(rows[0]) != 1:
            raise ValidationError(f"{path} has several columns; name one with --label-column")
        idx = 0
    elif header is not None and column in header:
        idx = header.index(column)
    elif str(column).isdigit():
        idx = int(column)
    else:
        raise ValidationError(f"{path}: no label column {column!r}")
    return canonical_labels([r[idx].strip() for r in rows])


def write_metrics(run_dir, pred, truth):
    pred, truth = np.asarray(pred), np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValidationError(f"label length {truth.size} does not match N={pred.size}")
    rate, mapping, confusion = error_rate(pred, truth)
    result = {
        "adjusted_rand": adjusted_rand(pred, truth),
        "error_rate": rate,
        "n_true_groups": int(np.unique(truth).size),
        "n_clusters": int(np.unique(pred).size),
        "mapping": (mapping + 1).tolist(),
        "confusion": confusion.tolist(),
    }
    _write_json(Path(run_dir) / "metrics.json", result)
    with (Path(run_dir) / "confusion.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["truth"] + [f"cluster_{k + 1}" for k in np.argsort(mapping)])
        for i, row in enumerate(confusion, start=1):
            w.writerow([i] + row.tolist())
    return result


def cmd_score(run_dir, labels_path, column=None, has_header=True):
    run_dir = Path(run_dir)
    path = run_dir / "summary.json"
    if path.exists():
        pred = json.loads(path.read_text())["map_z"]
    else:
        pred = write_summary(run_dir).map_z
    truth = read_labels(labels_path, column, has_header)
    return write_metrics(run_dir, pred, truth)


def cmd_compare(run_dirs, out, criterion=None):
    rows = []
    for d in map(Path, run_dirs):
        path = d / "summary.json"
        if not path.exists():
            raise FileNotFoundError(f"no summary.json in {d}; run `summarise` first")
        s = json.loads(path.read_text())
        cfg = json.loads((d / "config.resolved.json").read_text()) if (d / "config.resolved.json").exists() else {}
        rows.append((str(d), s["kind"], cfg.get("G"), cfg.get("q"), s["criteria"]))
    if criterion is None:
        kinds = {r[1] for r in rows}
        criterion = "bic_mcmc" if kinds <= {"FA", "MFA"} else "bicm"
    vals = [r[4].get(criterion) for r in rows]
    if any(v is None for v in vals):
        raise ValidationError(f"criterion {criterion} is not available for every run")
    best = int(np.argmax(vals))
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "G", "q", "criterion", "value", "selected", "run_dir"])
        for i, (d, kind, G, q, _) in enumerate(rows):
            w.writerow([kind, "" if G is None else G, "" if q is None else q, criterion,
                        repr(vals[i]), int(i == best), d])
    return rows[best][0]


# -- entry point ------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="imifa", description="Bayesian factor-analytic clustering")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write replicate datasets from an MFA")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("fit", help="run one model or a model grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("summarise", aliases=["summarize"], help="posterior summary of a run")
    p.add_argument("run_dir")

    p = sub.add_parser("score", help="ARI, error rate and confusion against known labels")
    p.add_argument("run_dir")
    p.add_argument("--labels", required=True)
    p.add_argument("--label-column")
    p.add_argument("--no-header", action="store_true")

    p = sub.add_parser("compare", help="rank summarised runs by a criterion")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--criterion", choices=("bic_mcmc", "bicm"))
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            files = cmd_simulate(read_config(args.config), args.out, args.seed, args.replicates, args.force)
            print(f"wrote {len(files)} replicate(s) to {args.out}")
        elif args.command == "fit":
            if args.threads < 1:
                raise ValidationError("--threads must be >= 1")
            info = cmd_fit(read_config(args.config), args.out, args.seed, args.threads, args.force)
            print(f"{info['n_models']} model(s) in {info['wall_time_s']:.1f}s; selected {info['selected']}")
        elif args.command in ("summarise", "summarize"):
            s = cmd_summarise(args.run_dir)
            print(f"modal G = {s.modal_G}, modal q = {s.modal_q}")
        elif args.command == "score":
            m = cmd_score(args.run_dir, args.labels, args.label_column, not args.no_header)
            print(f"ARI = {m['adjusted_rand']:.4f}, error rate = {100 * m['error_rate']:.2f}%")
        elif args.command == "compare":
            print(f"selected {cmd_compare(args.run_dirs, args.out, args.criterion)}")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ImifaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0
