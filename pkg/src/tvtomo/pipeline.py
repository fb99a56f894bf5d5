"""Workspace-level steps shared by the CLI and the HTTP service.

Each step reads its inputs from a workspace directory, writes its outputs
there atomically, and returns a JSON-ready summary dict. Outputs carry no
timestamps so reruns with identical inputs produce identical bytes.

Workspace layout::

    phantom.raw/.json      test volume          (phantom)
    phantom_masks.json     object masks         (phantom)
    data.raw/.json         noisy projections    (simulate)
    choose_report.json     weight choice        (choose)
    rule_rows.csv          per-template rows    (choose)
    lambda_vs_threshold.csv                     (choose)
    recon_NN.raw/.json     reconstructions      (reconstruct)
    trace_NN.csv           objective traces     (reconstruct)
    reconstructions.json   manifest             (reconstruct)
    hit_table.csv/.json    detection counts     (analyze)
    ideal_rule.csv/.json   threshold sweep      (analyze)
    significance.json      feature score        (significance)
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import fileio
from .analysis import hit_table, ideal_rule_sweep
from .config import RunConfig, build_model
from .errors import ValidationError
from .grid import Volume
from .noise import NoiseModel, _draw_counts, simulate_data
from .phantom import make_phantom
from .projector import apply
from .rule import SminConfig, choose_lambda, compute_s_lambda, estimate_sigma
from .solver import SolverConfig, solve
from .special import erfc
from .tv import TvConfig

__all__ = [
    "run_phantom",
    "run_simulate",
    "run_choose",
    "run_reconstruct",
    "run_analyze",
    "run_significance",
]


def _workspace(out) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _need(cfg: RunConfig, section: str):
    value = getattr(cfg, section)
    if value is None:
        raise ValidationError(f"missing config section: {section}")
    return value


def _json_out(path: Path, obj):
    fileio.atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _fmt_cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_out(path: Path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt_cell(v) for v in row) for row in rows]
    fileio.atomic_write_text(path, "\n".join(lines) + "\n")


def _require_file(path: Path, hint: str):
    if not path.exists():
        raise ValidationError(f"missing {path.name}: {hint}")


def run_phantom(cfg: RunConfig, out) -> dict:
    ws = _workspace(out)
    grid = _need(cfg, "grid")
    pc = cfg.phantom
    ph = make_phantom(pc.kind, pc.count, pc.size_range, pc.contrast_range,
                      grid.dims, grid.voxel_size, grid.origin, pc.seed)
    fileio.write_volume(ph.volume, ws / "phantom")
    fileio.write_masks([(o.obj_id, o.indices) for o in ph.objects],
                       grid.dims, ws / "phantom_masks.json")
    return {
        "command": "phantom",
        "kind": pc.kind,
        "objects": ph.count,
        "support_voxels": int(np.count_nonzero(ph.volume.data)),
        "voxels_per_object": [int(o.indices.size) for o in ph.objects],
        "contrasts": [o.contrast for o in ph.objects],
        "outputs": ["phantom.raw", "phantom.json", "phantom_masks.json"],
    }


def run_simulate(cfg: RunConfig, out) -> dict:
    ws = _workspace(out)
    model = build_model(cfg)
    nc = _need(cfg, "noise")
    _require_file(ws / "phantom.json", "run phantom first")
    vol = fileio.read_volume(ws / "phantom")
    noise = NoiseModel(dose_per_pixel=nc.dose_per_pixel, seed=nc.seed)
    stack = simulate_data(vol, model, noise)
    fileio.write_stack(stack, ws / "data")
    clean = apply(model, vol).images
    counts, n0 = _draw_counts(clean, noise, draw=0)
    return {
        "command": "simulate",
        "views": model.num_views,
        "detector_dims": list(model.geometry.detector_dims),
        "dose_per_pixel": nc.dose_per_pixel,
        "blank_level": n0,
        "mean_counts": float(counts.mean()),
        "zero_count_pixels": int((counts == 0).sum()),
        "max_clean_projection": float(clean.max()),
        "outputs": ["data.raw", "data.json"],
    }


def run_choose(cfg: RunConfig, out) -> dict:
    ws = _workspace(out)
    model = build_model(cfg)
    rc = cfg.rule
    _require_file(ws / "data.json", "run simulate first")
    data = fileio.read_stack(ws / "data")
    report = choose_lambda(data, model, diameters=rc.diameters,
                           cfg=SminConfig(a=rc.a, mu=rc.mu),
                           l=rc.translations, seed=rc.seed)
    rows = [
        {
            "diameter": r.diameter,
            "tv": r.tv,
            "sigma": r.sigma,
            "tf_norm_sq": r.tf_norm_sq,
            "s_min": r.s_min,
            "lambda": r.lam,
            "detect_term": r.detect_term,
            "bias_term": r.bias_term,
        }
        for r in report.rows
    ]
    doc = {
        "selected_lambda": report.selected_lambda,
        "binding_diameter": report.binding_diameter,
        "no_regularization": report.rule_imposes_no_regularization,
        "a": report.a,
        "mu": report.mu,
        "translations": report.num_translations,
        "seed": report.seed,
        "rows": rows,
    }
    _json_out(ws / "choose_report.json", doc)
    _csv_out(ws / "rule_rows.csv",
             ["diameter", "tv", "sigma", "tf_norm_sq", "s_min", "lambda"],
             [(r.diameter, r.tv, r.sigma, r.tf_norm_sq, r.s_min, r.lam)
              for r in report.rows])
    _csv_out(ws / "lambda_vs_threshold.csv", ["a", "lambda"],
             [(a, report.lambda_for_threshold(a)) for a in rc.a_grid])
    summary = {k: doc[k] for k in
               ("selected_lambda", "binding_diameter", "no_regularization")}
    summary["command"] = "choose"
    summary["outputs"] = ["choose_report.json", "rule_rows.csv", "lambda_vs_threshold.csv"]
    return summary


def _resolve_lambdas(cfg: RunConfig, ws: Path, lambdas) -> list[float]:
    if lambdas is not None:
        vals = [float(x) for x in lambdas]
        if not vals or any(x < 0 for x in vals):
            raise ValidationError(f"lambdas must be nonnegative and nonempty, got {vals}")
        return vals
    sc = cfg.solver
    if sc.lambdas:
        return list(sc.lambdas)
    report_path = ws / "choose_report.json"
    _require_file(report_path, "run choose first or set solver.lambdas")
    with open(report_path, "r", encoding="utf-8") as fh:
        selected = json.load(fh)["selected_lambda"]
    return [m * selected for m in sc.multipliers]


def _solve_one(args):
    index, lam, data, model, sc = args
    scfg = SolverConfig(tv=TvConfig(lam=lam, beta=sc.beta),
                        max_iters=sc.max_iters,
                        rel_change_tol=sc.rel_change_tol,
                        inner_newton_iters=sc.inner_newton_iters,
                        nonneg=sc.nonneg)
    res = solve(data, model, scfg)
    return index, res


def run_reconstruct(cfg: RunConfig, out, lambdas=None, jobs: int = 1) -> dict:
    ws = _workspace(out)
    model = build_model(cfg)
    _require_file(ws / "data.json", "run simulate first")
    data = fileio.read_stack(ws / "data")
    lams = _resolve_lambdas(cfg, ws, lambdas)
    if jobs < 1:
        raise ValidationError(f"jobs must be >= 1, got {jobs}")

    tasks = [(i, lam, data, model, cfg.solver) for i, lam in enumerate(lams)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = dict(pool.map(_solve_one, tasks))
    else:
        results = dict(map(_solve_one, tasks))

    items = []
    for i, lam in enumerate(lams):
        res = results[i]
        base = f"recon_{i:02d}"
        fileio.write_volume(res.reconstruction, ws / base)
        _csv_out(ws / f"trace_{i:02d}.csv", ["iteration", "objective"],
                 list(enumerate(res.objective_trace.tolist())))
        items.append({
            "index": i,
            "lambda": lam,
            "base": base,
            "trace": f"trace_{i:02d}.csv",
            "iterations_used": res.iterations_used,
            "converged": res.converged,
            "final_objective": float(res.objective_trace[-1]),
        })
    _json_out(ws / "reconstructions.json", {"items": items})
    return {
        "command": "reconstruct",
        "items": items,
        "outputs": ["reconstructions.json"]
        + [f"{it['base']}.raw" for it in items]
        + [it["trace"] for it in items],
    }


def run_analyze(cfg: RunConfig, out) -> dict:
    ws = _workspace(out)
    ac = cfg.analysis
    _require_file(ws / "reconstructions.json", "run reconstruct first")
    _require_file(ws / "phantom_masks.json", "run phantom first")
    with open(ws / "reconstructions.json", "r", encoding="utf-8") as fh:
        manifest = json.load(fh)["items"]
    dims, objects = fileio.read_masks(ws / "phantom_masks.json")
    items = []
    for entry in sorted(manifest, key=lambda e: e["lambda"]):
        vol = fileio.read_volume(ws / entry["base"])
        if vol.dims != dims:
            raise ValidationError(
                f"reconstruction {entry['base']} has dims {vol.dims}, masks have {dims}"
            )
        items.append((entry["lambda"], vol))
    hits = hit_table(items, objects, ac.threshold, ac.connectivity)
    ideal = ideal_rule_sweep(items, objects, ac.a_grid, ac.connectivity)
    hit_rows = [
        {"lambda": r.lam, "components": r.num_components,
         "true_hits": r.true_hits, "false_hits": r.false_hits}
        for r in hits
    ]
    ideal_rows = [
        {"lambda": r.lam, "a_ideal": r.a_ideal, "achieved": r.achieved}
        for r in ideal
    ]
    _csv_out(ws / "hit_table.csv",
             ["lambda", "components", "true_hits", "false_hits"],
             [(r.lam, r.num_components, r.true_hits, r.false_hits) for r in hits])
    _json_out(ws / "hit_table.json",
              {"threshold": ac.threshold, "connectivity": ac.connectivity,
               "rows": hit_rows})
    _csv_out(ws / "ideal_rule.csv", ["lambda", "a_ideal", "achieved"],
             [(r.lam, r.a_ideal, r.achieved) for r in ideal])
    _json_out(ws / "ideal_rule.json",
              {"connectivity": ac.connectivity, "rows": ideal_rows})
    return {
        "command": "analyze",
        "threshold": ac.threshold,
        "hit_rows": hit_rows,
        "ideal_rows": ideal_rows,
        "outputs": ["hit_table.csv", "hit_table.json", "ideal_rule.csv", "ideal_rule.json"],
    }


def run_significance(cfg: RunConfig, out, feature, lam=None) -> dict:
    ws = _workspace(out)
    model = build_model(cfg)
    rc = cfg.rule
    _require_file(ws / "data.json", "run simulate first")
    data = fileio.read_stack(ws / "data")
    feature_path = Path(feature)
    if not feature_path.is_absolute():
        feature_path = ws / feature_path
    f = fileio.read_volume(feature_path)
    if lam is None:
        report_path = ws / "choose_report.json"
        _require_file(report_path, "run choose first or give a lambda")
        with open(report_path, "r", encoding="utf-8") as fh:
            lam = json.load(fh)["selected_lambda"]
    lam = float(lam)
    est = estimate_sigma(f, data, model, l=rc.translations, seed=rc.seed)
    if not est.sigma > 0:
        raise ValidationError(f"degenerate noise estimate: sigma = {est.sigma}")
    s = compute_s_lambda(f, lam, est)
    tail = erfc(s / math.sqrt(2.0))
    doc = {
        "command": "significance",
        "lambda": lam,
        "s_lambda": s,
        "tail_probability": tail,
        "sigma": est.sigma,
        "translations": rc.translations,
        "seed": rc.seed,
    }
    _json_out(ws / "significance.json",
              {k: v for k, v in doc.items() if k != "command"})
    doc["outputs"] = ["significance.json"]
    return doc
