"""End-to-end experiment drivers behind the CLI subcommands.

Each driver loops over the configured seeds, isolates per-seed failures,
and writes CSV/JSON/SVG artifacts that embed the resolved config, so a
rerun with the same config and seed reproduces files byte for byte.
"""

from __future__ import annotations

import csv
import json
import logging
import os

import numpy as np

from . import bounds as B
from . import memorization as M
from . import svgplot
from .config import build_estimator_config, build_gmm, build_schedule, build_train_config, config_header
from .estimators import estimate, estimate_boundary, write_estimates_csv
from .geometry import make_rng, split_rng
from .gmm import PerturbedGmm, averaged_p_laplace_dense, log_density, sample_gmm
from .gmm import score_field as gmm_score_field
from .memorization import (
    DetectionResult,
    auc,
    build_scenario,
    grid_p_laplace,
    make_grid,
    percentile_rank,
    score_norm_criterion,
)
from .score_model import learned_score, load_checkpoint, reverse_sample, save_checkpoint, train
from .score_model import score_field as model_score_field

logger = logging.getLogger(__name__)

__all__ = ["run_fidelity", "run_memorization", "run_bounds", "train_model_artifact", "sample_artifact"]


def _outdir(cfg: dict, *parts: str) -> str:
    path = os.path.join(cfg["output_dir"], *parts)
    os.makedirs(path, exist_ok=True)
    return path


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump({"schema_version": 1, **payload}, f, indent=2, sort_keys=True)


def _per_seed(cfg: dict, fn) -> dict:
    """Run fn(seed) for every configured seed, collecting failures instead of aborting."""
    completed, failed = [], {}
    for seed in cfg["seeds"]:
        try:
            fn(seed)
            completed.append(seed)
        except Exception as exc:  # deliberate: a bad seed must not sink the others
            logger.exception("seed %d failed", seed)
            failed[str(seed)] = f"{type(exc).__name__}: {exc}"
    result = {"completed_seeds": completed, "failed_seeds": failed, "ok": not failed}
    if failed:
        _write_json(os.path.join(_outdir(cfg), "errors.json"), result)
    return result


def fidelity_anchors(gmm) -> tuple[np.ndarray, list[str]]:
    """Six anchor neighborhoods: the mixture means and the pairwise midpoints."""
    means = gmm.means
    k = means.shape[0]
    mids = np.array([(means[i] + means[j]) / 2.0 for i in range(k) for j in range(i + 1, k)])
    anchors = np.vstack([means, mids])
    labels = ["maximum"] * k + ["midpoint"] * mids.shape[0]
    return anchors, labels


def _field_error_stats(gmm, model, schedule, seed: int, n_points: int = 2000):
    """Direction and magnitude agreement of the learned score with the oracle."""
    rng = make_rng(10_000 + seed)
    pts = sample_gmm(gmm, n_points, rng)
    oracle = gmm_score_field(PerturbedGmm(gmm, float(schedule.alphas[0])))(pts)
    learned = learned_score(model, schedule, pts, 0)
    on = np.linalg.norm(oracle, axis=1)
    ln = np.linalg.norm(learned, axis=1)
    cos = np.sum(oracle * learned, axis=1) / np.maximum(on * ln, 1e-300)
    ratio = ln / np.maximum(on, 1e-300)
    return cos, ratio


def run_fidelity(cfg: dict) -> dict:
    """Estimator-vs-exact study at six anchors, oracle and learned fields."""
    gmm = build_gmm(cfg)
    schedule = build_schedule(cfg)
    anchors, labels = fidelity_anchors(gmm)
    p_values = cfg["estimator"]["p_values"]
    n_repeats = cfg["fidelity"]["n_repeats"]
    out = _outdir(cfg, "fidelity")

    # Dense reference values are seed-independent: one per (anchor, p).
    dense_rng = make_rng(990_001)
    exact: dict[tuple[int, float], tuple[float, float]] = {}
    with open(os.path.join(out, "exact.csv"), "w", newline="") as f:
        f.write(f"# {config_header(cfg)}\n")
        writer = csv.writer(f)
        coord_cols = [f"x0_{i}" for i in range(gmm.dim)]
        writer.writerow(["anchor_idx", "anchor_kind", *coord_cols, "p", "exact_mean", "exact_std_error", "n_dense"])
        for i, (anchor, label) in enumerate(zip(anchors, labels)):
            for p in p_values:
                mean, se, n_used, _ = averaged_p_laplace_dense(
                    gmm, anchor, p, cfg["estimator"]["radius"], cfg["fidelity"]["n_dense"], dense_rng
                )
                exact[(i, p)] = (mean, se)
                writer.writerow(
                    [i, label] + [repr(float(c)) for c in anchor] + [p, repr(mean), repr(se), n_used]
                )

    extent = (
        float(gmm.means[:, 0].min() - 2), float(gmm.means[:, 0].max() + 2),
        float(gmm.means[:, 1].min() - 2), float(gmm.means[:, 1].max() + 2),
    )
    if gmm.dim == 2:
        gx = np.linspace(extent[0], extent[1], 60)
        gy = np.linspace(extent[2], extent[3], 60)
        mx, my = np.meshgrid(gx, gy)
        dens = log_density(gmm, np.column_stack([mx.ravel(), my.ravel()])).reshape(60, 60)
        svgplot.heatmap(
            os.path.join(out, "density.svg"), dens, extent,
            title="oracle log-density with anchors", comment=config_header(cfg),
            markers=[(float(a[0]), float(a[1]), "red" if l == "maximum" else "white") for a, l in zip(anchors, labels)],
        )

    def one_seed(seed: int) -> None:
        seed_out = _outdir(cfg, "fidelity", f"seed_{seed}")
        rng = make_rng(seed)
        data = sample_gmm(gmm, cfg["training"]["n_train"], rng)
        model = train(
            data, schedule, build_train_config(cfg, seed),
            hidden_width=cfg["training"]["hidden_width"], embed_dim=cfg["training"]["embed_dim"],
        )
        fields = {"oracle": gmm_score_field(gmm), "learned": model_score_field(model, schedule, 0)}

        cos, ratio = _field_error_stats(gmm, model, schedule, seed)
        with open(os.path.join(seed_out, "field_errors.csv"), "w", newline="") as f:
            f.write(f"# {config_header(cfg, seed)}\n")
            writer = csv.writer(f)
            writer.writerow(["cosine", "magnitude_ratio"])
            for c, r in zip(cos, ratio):
                writer.writerow([repr(float(c)), repr(float(r))])
        svgplot.histogram(
            os.path.join(seed_out, "direction_error.svg"), cos,
            title=f"score direction agreement (median {np.median(cos):.3f})", comment=config_header(cfg, seed),
        )
        svgplot.histogram(
            os.path.join(seed_out, "magnitude_error.svg"), ratio,
            title=f"score magnitude ratio (median {np.median(ratio):.3f})", comment=config_header(cfg, seed),
        )

        records = []
        summary_rows = []
        rep_rngs = split_rng(make_rng(seed + 500_000), len(fields) * anchors.shape[0] * len(p_values) * 2 * n_repeats)
        ridx = 0
        for field_name, field in fields.items():
            for i, anchor in enumerate(anchors):
                for p in p_values:
                    for formulation in ("boundary", "volume"):
                        ecfg = build_estimator_config(cfg, p, formulation)
                        values = np.empty(n_repeats)
                        for rep in range(n_repeats):
                            est = estimate(field, anchor, ecfg, rep_rngs[ridx])
                            ridx += 1
                            values[rep] = est.value
                            records.append({
                                "x0": anchor, "p": p, "formulation": formulation,
                                "n_samples": ecfg.n_samples, "radius": ecfg.radius, "seed": seed,
                                "value": est.value, "std_error": est.std_error,
                                "singular_hits": est.singular_hits,
                            })
                        exact_mean, exact_se = exact[(i, p)]
                        mean = float(values.mean())
                        se_mean = float(values.std(ddof=1) / np.sqrt(n_repeats))
                        q = np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0])
                        summary_rows.append(
                            [field_name, i, labels[i], p, formulation, repr(mean),
                             repr(float(values.std(ddof=1))), repr(float(q[0])), repr(float(q[1])),
                             repr(float(q[2])), repr(float(q[3])), repr(float(q[4])),
                             repr(exact_mean), repr(abs(mean - exact_mean)),
                             repr(abs(mean - exact_mean) / max(np.hypot(se_mean, exact_se), 1e-300))]
                        )
        write_estimates_csv(os.path.join(seed_out, "estimates.csv"), records, header_comment=config_header(cfg, seed))
        with open(os.path.join(seed_out, "summary.csv"), "w", newline="") as f:
            f.write(f"# {config_header(cfg, seed)}\n")
            writer = csv.writer(f)
            writer.writerow(
                ["field", "anchor_idx", "anchor_kind", "p", "formulation", "mean", "std",
                 "min", "q25", "median", "q75", "max", "exact_mean", "abs_error", "z_score"]
            )
            writer.writerows(summary_rows)

    result = _per_seed(cfg, one_seed)
    _write_json(os.path.join(out, "result.json"), {**result, "config": cfg})
    return result


def run_memorization(cfg: dict) -> dict:
    """Replica-injection study: percentile tables, grids, and AUC summary."""
    gmm = build_gmm(cfg)
    schedule = build_schedule(cfg)
    mem_cfg = cfg["memorization"]
    p_values = cfg["estimator"]["p_values"]
    out = _outdir(cfg, "memorization")

    percentile_rows = []
    detections: list[tuple[int, DetectionResult]] = []

    def one_seed(seed: int) -> None:
        seed_out = _outdir(cfg, "memorization", f"seed_{seed}")
        grid = make_grid(gmm, mem_cfg["grid_size"], mem_cfg["pad_sigma"])
        scenario = build_scenario(gmm, mem_cfg["n_base"], mem_cfg["n_replicas"], seed)
        _write_json(os.path.join(seed_out, "scenario.json"), {"config": cfg, "scenario": scenario.to_dict()})
        model = train(
            scenario.training_set(), schedule, build_train_config(cfg, seed),
            hidden_width=cfg["training"]["hidden_width"], embed_dim=cfg["training"]["embed_dim"],
        )
        field = model_score_field(model, schedule, 0)
        mem_pt = scenario.memorized_point

        svgplot.scatter(
            os.path.join(seed_out, "training_set.svg"),
            [("base samples", scenario.base_samples, "#4878a8"), ("memorized", mem_pt[None, :], "red")],
            title=f"training set, seed {seed}", comment=config_header(cfg, seed),
        )

        for p in p_values:
            ecfg = build_estimator_config(cfg, p, "boundary")
            matrix = grid_p_laplace(field, grid, ecfg, make_rng(seed + 100_000))
            mem_val = estimate_boundary(field, mem_pt, ecfg, make_rng(seed + 200_000)).value
            pct = percentile_rank(matrix, mem_val)
            percentile_rows.append([seed, "p_laplace", p, repr(mem_val), repr(pct)])
            M.write_grid_csv(
                os.path.join(seed_out, f"grid_p{p:g}.csv"), grid, matrix, header_comment=config_header(cfg, seed)
            )
            svgplot.heatmap(
                os.path.join(seed_out, f"grid_p{p:g}.svg"), matrix,
                (float(grid.xs[0]), float(grid.xs[-1]), float(grid.ys[0]), float(grid.ys[-1])),
                title=f"p={p:g} averaged operator, memorized pct {pct:.1f}%",
                comment=config_header(cfg, seed),
                markers=[(float(mem_pt[0]), float(mem_pt[1]), "red")],
            )
            if p == min(p_values):
                background = sample_gmm(gmm, mem_cfg["n_background"], make_rng(seed + 300_000))
                bg_rngs = split_rng(make_rng(seed + 400_000), background.shape[0])
                bg_vals = [estimate_boundary(field, b, ecfg, r).value for b, r in zip(background, bg_rngs)]
                detections.append((seed, DetectionResult(
                    criterion_name="p_laplace",
                    values_memorized=[float(mem_val)],
                    values_background=[float(v) for v in bg_vals],
                    percentile=pct,
                    auc=auc([mem_val], bg_vals, "lower_is_positive"),
                )))
                mem_norm = score_norm_criterion(field, mem_pt)
                bg_norms = score_norm_criterion(field, background)
                norm_grid = score_norm_criterion(field, grid.points).reshape(grid.shape)
                # rank from the top: a large score norm is the suspicious direction here
                pct_norm = 100.0 - percentile_rank(norm_grid, mem_norm)
                detections.append((seed, DetectionResult(
                    criterion_name="score_norm",
                    values_memorized=[float(mem_norm)],
                    values_background=[float(v) for v in bg_norms],
                    percentile=pct_norm,
                    auc=auc([mem_norm], bg_norms, "higher_is_positive"),
                )))
                percentile_rows.append([seed, "score_norm", p, repr(float(mem_norm)), repr(pct_norm)])

    result = _per_seed(cfg, one_seed)
    with open(os.path.join(out, "percentiles.csv"), "w", newline="") as f:
        f.write(f"# {config_header(cfg)}\n")
        writer = csv.writer(f)
        writer.writerow(["seed", "criterion", "p", "value_at_memorized", "percentile"])
        writer.writerows(percentile_rows)
    auc_summary = {}
    for name in ("p_laplace", "score_norm"):
        vals = [d.auc for s, d in detections if d.criterion_name == name]
        auc_summary[name] = {"per_seed": vals, "mean": float(np.mean(vals)) if vals else None}
    _write_json(os.path.join(out, "auc_summary.json"), {"auc": auc_summary, "config": cfg})
    _write_json(
        os.path.join(out, "detection.json"),
        {
            "config": cfg,
            "results": [
                {"seed": s, "criterion": d.criterion_name, "percentile": d.percentile, "auc": d.auc,
                 "values_memorized": d.values_memorized, "values_background": d.values_background}
                for s, d in detections
            ],
        },
    )
    _write_json(os.path.join(out, "result.json"), {**result, "config": cfg})
    return result


def run_bounds(cfg: dict) -> dict:
    """Bound-dominance study on model-sampled anchors."""
    gmm = build_gmm(cfg)
    schedule = build_schedule(cfg)
    out = _outdir(cfg, "bounds")
    p_values = cfg["bounds"]["p_values"]
    dominance: dict[str, dict] = {}

    def one_seed(seed: int) -> None:
        seed_out = _outdir(cfg, "bounds", f"seed_{seed}")
        rng = make_rng(seed)
        data = sample_gmm(gmm, cfg["training"]["n_train"], rng)
        model = train(
            data, schedule, build_train_config(cfg, seed),
            hidden_width=cfg["training"]["hidden_width"], embed_dim=cfg["training"]["embed_dim"],
        )
        anchors = reverse_sample(model, schedule, cfg["bounds"]["n_anchors"], make_rng(seed + 700_000))
        oracle = gmm_score_field(gmm)
        learned = model_score_field(model, schedule, 0)
        seed_summaries = {}
        for p in p_values:
            ecfg = build_estimator_config(cfg, p, "boundary")
            reports = B.validate_bound(
                oracle, learned, anchors, ecfg, make_rng(seed + 800_000), cfg["bounds"]["n_segment"]
            )
            B.write_bound_reports_csv(
                os.path.join(seed_out, f"bound_reports_p{p:g}.csv"), reports, header_comment=config_header(cfg, seed)
            )
            summary = B.bound_summary(reports)
            seed_summaries[f"p{p:g}"] = summary

            ok = [r for r in reports if r.assumptions_ok]
            if ok:
                deltas = np.array([r.delta for r in ok])
                ms = np.array([r.m for r in ok])
                deltas_rng = (0.0, float(deltas.max()) * 1.1 + 1e-9)
                ms_rng = (max(float(ms.min()) * 0.9, 1e-6), float(ms.max()) * 1.1)
                dg, mg, surface = B.bound_surface(p, gmm.dim, ecfg.radius, deltas_rng, ms_rng,
                                                  M=float(max(r.M for r in ok)))
                with open(os.path.join(seed_out, f"bound_surface_p{p:g}.csv"), "w", newline="") as f:
                    f.write(f"# {config_header(cfg, seed)}\n")
                    writer = csv.writer(f)
                    writer.writerow(["delta", "m", "c_p"])
                    for i, m in enumerate(mg):
                        for j, d in enumerate(dg):
                            writer.writerow([repr(float(d)), repr(float(m)), repr(float(surface[i, j]))])
                svgplot.heatmap(
                    os.path.join(seed_out, f"bound_surface_p{p:g}.svg"), np.log10(np.maximum(surface, 1e-12)),
                    (deltas_rng[0], deltas_rng[1], ms_rng[0], ms_rng[1]),
                    title=f"log10 bound surface p={p:g} with observed (delta, m)",
                    comment=config_header(cfg, seed),
                    markers=[(r.delta, r.m, "red") for r in ok],
                )
        dominance[str(seed)] = seed_summaries

    result = _per_seed(cfg, one_seed)
    worst = 0.0
    for seed_summaries in dominance.values():
        for summary in seed_summaries.values():
            worst = max(worst, summary["max_error_bound_ratio"])
    _write_json(
        os.path.join(out, "summary.json"),
        {"per_seed": dominance, "max_error_bound_ratio": worst, "dominance_holds": worst <= 1.0, "config": cfg},
    )
    _write_json(os.path.join(out, "result.json"), {**result, "config": cfg})
    return result


def train_model_artifact(cfg: dict) -> dict:
    """Train on mixture draws and write a reloadable checkpoint."""
    gmm = build_gmm(cfg)
    schedule = build_schedule(cfg)
    seed = cfg["seeds"][0]
    out = _outdir(cfg, "model")
    data = sample_gmm(gmm, cfg["training"]["n_train"], make_rng(seed))
    model = train(
        data, schedule, build_train_config(cfg, seed),
        hidden_width=cfg["training"]["hidden_width"], embed_dim=cfg["training"]["embed_dim"],
    )
    path = os.path.join(out, "checkpoint.json")
    save_checkpoint(model, schedule, path)
    _write_json(os.path.join(out, "train_meta.json"), {"config": cfg, "seed": seed, "checkpoint": path})
    return {"ok": True, "completed_seeds": [seed], "failed_seeds": {}, "checkpoint": path}


def sample_artifact(cfg: dict, checkpoint: str | None = None, n: int = 1000) -> dict:
    """Reverse-time samples from a checkpointed (or freshly trained) model."""
    seed = cfg["seeds"][0]
    out = _outdir(cfg, "samples")
    if checkpoint is None:
        trained = train_model_artifact(cfg)
        checkpoint = trained["checkpoint"]
    model, schedule = load_checkpoint(checkpoint)
    samples = reverse_sample(model, schedule, n, make_rng(seed))
    path = os.path.join(out, "samples.csv")
    with open(path, "w", newline="") as f:
        f.write(f"# {config_header(cfg, seed)}\n")
        writer = csv.writer(f)
        writer.writerow([f"x_{i}" for i in range(samples.shape[1])])
        for row in samples:
            writer.writerow([repr(float(v)) for v in row])
    if samples.shape[1] == 2:
        svgplot.scatter(
            os.path.join(out, "samples.svg"), [("model samples", samples, "#4878a8")],
            title=f"{n} reverse-time samples", comment=config_header(cfg, seed),
        )
    return {"ok": True, "completed_seeds": [seed], "failed_seeds": {}, "samples": path}
