"""Pipeline commands operating on an output directory.

Layout of ``out/``::

    ics/manifest.json            sampled initial conditions (parameters, seeds)
    ics/train.csv, ics/test.csv  fields on the collocation grid
    manifold.ckpt                pretrained weights + latent codes
    logs/*.csv                   loss / residual histories
    finetune/sample_K.json       fine-tuned latent code of test sample K
    trajectories/sample_K_MODE.traj
    reference/sample_K.csv       spectral reference at compare.times
    predictions/sample_K_MODE.csv
    report.json, report.csv      MSE table (report.timing.json: wall times)
    figures/*.png

Wall-clock times go to ``timing.json`` sidecars only, so every other file is
byte-identical across reruns with the same config and seed.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as C
from .errors import MissingArtifactError
from .galerkin import evolve
from .iometrics import (
    ExperimentReport,
    atomic_write,
    export_grid_solution,
    export_report,
    load_checkpoint,
    load_grid_solution,
    load_trajectory,
    save_checkpoint,
    save_trajectory,
)
from .madtrain import TrainingEnsemble, finetune, pretrain
from .neuralnet import evaluate
from .pdemodels import family_for, field_from_dict, make_problem, sample_initial_condition, sample_shift
from .spectralref import GridSolution, SpectralGrid, mse, solve_reference

log = logging.getLogger(__name__)


def _need(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"missing {path}; run `madngm {producer}` first")
    return path


def _record_time(out: Path, phase: str, seconds: float):
    path = out / "timing.json"
    data = json.loads(path.read_text()) if path.exists() else {}
    data[phase] = seconds
    atomic_write(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def _write_log(path: Path, header: str, rows):
    atomic_write(path, header + "\n" + "".join(",".join(repr(v) for v in r) + "\n" for r in rows))


def _is_shifted(cfg) -> bool:
    return cfg["benchmark"] in ("ac1d_const", "ac1d_tx")


def _problem(cfg, shift=0.0):
    return make_problem(cfg["benchmark"], shift=shift)


def _colloc(problem, cfg):
    return problem.domain.uniform_grid(cfg["colloc.n"])


# --------------------------------------------------------------------------
# sample-ics


def cmd_sample_ics(cfg: dict, out) -> Path:
    """Draw training and test initial conditions; returns the manifest path."""
    out = Path(out)
    S = cfg["seed"]
    manifest = {"benchmark": cfg["benchmark"], "config_hash": C.run_hash(cfg), "train": [], "test": []}
    for split, count, tag in (("train", cfg["ensemble.n_train"], 0), ("test", cfg["ensemble.n_test"], 1)):
        rows = []
        for i in range(count):
            shift = sample_shift([S, 2 + tag, i]) if _is_shifted(cfg) else 0.0
            fam = family_for(cfg["benchmark"], shift, cfg["ic.sin_reading"])
            seed = [S, tag, i]
            field = sample_initial_condition(fam, seed)
            manifest[split].append({"id": i, "seed": seed, "shift": shift, "field": field.to_dict()})
            pts = _colloc(_problem(cfg, shift), cfg)
            vals = field(pts)
            rows.extend((i, *p, v) for p, v in zip(pts.tolist(), vals.tolist()))
        dim = _problem(cfg).dim
        cols = "sample,x,value" if dim == 1 else "sample,x,y,value"
        _write_log(out / "ics" / f"{split}.csv", cols, rows)
    path = out / "ics" / "manifest.json"
    atomic_write(path, json.dumps(manifest, indent=2) + "\n")
    return path


def _test_entry(out, manifest, sample: int) -> dict:
    if not 0 <= sample < len(manifest["test"]):
        raise MissingArtifactError(f"test sample {sample} not in {Path(out) / 'ics' / 'manifest.json'}")
    return manifest["test"][sample]


def load_manifest(out) -> dict:
    path = _need(Path(out) / "ics" / "manifest.json", "sample-ics")
    return json.loads(path.read_text())


def _sample_data(cfg, entry):
    problem = _problem(cfg, entry["shift"])
    pts = _colloc(problem, cfg)
    field = field_from_dict(entry["field"])
    return problem, pts, field, field(pts)


def build_ensemble(cfg, manifest) -> TrainingEnsemble:
    pts, vals, embs, ids = [], [], [], []
    for entry in manifest["train"]:
        problem, p, _, v = _sample_data(cfg, entry)
        pts.append(p), vals.append(v), embs.append(problem.embedding), ids.append(entry["id"])
    return TrainingEnsemble(np.array(pts), np.array(vals), embs, ids)


# --------------------------------------------------------------------------
# pretrain / finetune


def cmd_pretrain(cfg: dict, out) -> Path:
    out = Path(out)
    manifest = load_manifest(out)
    ensemble = build_ensemble(cfg, manifest)
    arch = C.arch_for(cfg)
    t0 = time.perf_counter()
    manifold = pretrain(ensemble, arch, cfg["latent.n"], cfg["latent.sigma"], C.optimizer_for(cfg, "pretrain"))
    _record_time(out, "pretrain", time.perf_counter() - t0)
    path = out / "manifold.ckpt"
    save_checkpoint(manifold, path, {"config_hash": C.run_hash(cfg), "seed": cfg["seed"]})
    _write_log(out / "logs" / "pretrain.csv", "iteration,loss", enumerate(manifold.losses.tolist()))
    return path


def cmd_finetune(cfg: dict, out, sample: int) -> Path:
    out = Path(out)
    manifest = load_manifest(out)
    manifold = load_checkpoint(_need(out / "manifold.ckpt", "pretrain"))
    ensemble = build_ensemble(cfg, manifest)
    problem, pts, _, values = _sample_data(cfg, _test_entry(out, manifest, sample))
    t0 = time.perf_counter()
    res = finetune(manifold, ensemble, problem.embedding, values, pts, C.optimizer_for(cfg, "finetune"))
    _record_time(out, f"finetune/{sample}", time.perf_counter() - t0)
    path = out / "finetune" / f"sample_{sample}.json"
    payload = {
        "sample": sample,
        "nearest_index": res.index,
        "z": res.z.tolist(),
        "warm_data_loss": res.warm_data_loss,
        "data_loss": res.data_loss,
        "warm_loss": res.warm_loss,
        "loss": res.loss,
        "config_hash": C.run_hash(cfg),
    }
    atomic_write(path, json.dumps(payload, indent=2) + "\n")
    _write_log(out / "logs" / f"finetune_{sample}.csv", "iteration,loss", enumerate(res.losses.tolist()))
    return path


def load_finetune(out, sample: int) -> dict:
    path = _need(Path(out) / "finetune" / f"sample_{sample}.json", f"finetune --sample {sample}")
    return json.loads(path.read_text())


# --------------------------------------------------------------------------
# evolve / reference


def trajectory_path(out, sample: int, mode: str) -> Path:
    return Path(out) / "trajectories" / f"sample_{sample}_{mode}.traj"


def cmd_evolve(cfg: dict, out, sample: int, progress=None) -> Path:
    out = Path(out)
    manifest = load_manifest(out)
    manifold = load_checkpoint(_need(out / "manifold.ckpt", "pretrain"))
    entry = _test_entry(out, manifest, sample)
    ft = load_finetune(out, sample)
    problem = _problem(cfg, entry["shift"])
    evo = C.evolution_for(cfg, sample)
    t0 = time.perf_counter()
    traj = evolve(problem, manifold.arch, problem.embedding, manifold.theta, np.array(ft["z"]), evo, progress)
    mode = C.mode_label(cfg)
    _record_time(out, f"evolve/{sample}/{mode}", time.perf_counter() - t0)
    path = trajectory_path(out, sample, mode)
    save_trajectory(traj, path, {"config_hash": C.run_hash(cfg), "seed": cfg["seed"], "mode": mode})
    _write_log(
        out / "logs" / f"evolve_{sample}_{mode}.csv",
        "step,time,residual",
        ((k + 1, traj.times[k + 1], r) for k, r in enumerate(traj.residuals)),
    )
    return path


def reference_grid(cfg, shift=0.0) -> SpectralGrid:
    return SpectralGrid(_problem(cfg, shift).domain, cfg["reference.n_modes"])


def reference_solution(cfg, entry) -> GridSolution:
    problem = _problem(cfg, entry["shift"])
    grid = reference_grid(cfg, entry["shift"])
    u0 = field_from_dict(entry["field"])(grid.points)
    return solve_reference(problem, u0, grid, cfg["reference.dt"], cfg["compare.times"])


def _reference_job(args):
    cfg, entry, path = args
    export_grid_solution(reference_solution(cfg, entry), path)
    return str(path)


def cmd_reference(cfg: dict, out) -> list[Path]:
    out = Path(out)
    manifest = load_manifest(out)
    jobs = [(cfg, e, out / "reference" / f"sample_{k}.csv") for k, e in enumerate(manifest["test"])]
    t0 = time.perf_counter()
    if cfg["jobs"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            list(pool.map(_reference_job, jobs))
    else:
        for j in jobs:
            _reference_job(j)
    _record_time(out, "reference", time.perf_counter() - t0)
    return [j[2] for j in jobs]


# --------------------------------------------------------------------------
# compare


def predict_on(cfg, manifold, traj, entry, ref: GridSolution) -> GridSolution:
    problem = _problem(cfg, entry["shift"])
    dt = cfg["evolve.dt"]
    fields = []
    for t in ref.times:
        k = int(round(t / dt))
        fields.append(evaluate(manifold.arch, traj.thetas[k], problem.embedding, traj.z, ref.points))
    return GridSolution(ref.times, np.array(fields), ref.points)


def cmd_compare(cfg: dict, out, figures: bool = True) -> Path:
    """MSE of every (sample, mode) trajectory against the reference."""
    from . import plotting

    out = Path(out)
    manifest = load_manifest(out)
    manifold = load_checkpoint(_need(out / "manifold.ckpt", "pretrain"))
    modes = cfg["compare.modes"] or [C.mode_label(cfg)]
    report = ExperimentReport(cfg["benchmark"], C.describe(cfg), [cfg["seed"]])
    for k, entry in enumerate(manifest["test"]):
        ref = load_grid_solution(_need(out / "reference" / f"sample_{k}.csv", "reference"))
        for mode in modes:
            traj = load_trajectory(_need(trajectory_path(out, k, mode), f"evolve --sample {k}"))
            pred = predict_on(cfg, manifold, traj, entry, ref)
            export_grid_solution(pred, out / "predictions" / f"sample_{k}_{mode}.csv")
            for i, t in enumerate(ref.times):
                report.add(k, t, mode, mse(pred, ref, i))
            if figures:
                fig = out / "figures" / f"sample_{k}_{mode}.png"
                fig.parent.mkdir(parents=True, exist_ok=True)
                if ref.dim == 1:
                    plotting.plot_profiles(ref.points[:, 0], ref.fields, pred.fields, ref.times, fig, f"sample {k}, {mode}")
                else:
                    plotting.plot_fields_2d(ref.points, ref.fields, pred.fields, ref.times, fig)
    timing = out / "timing.json"
    if timing.exists():
        report.wall_times = json.loads(timing.read_text())
    path = out / "report.json"
    export_report(report, path)
    if figures and report.rows:
        table = report.table()
        series = {m: (list(d.keys()), np.array(list(d.values()))) for m, d in table.items()}
        plotting.plot_mse_history(series, out / "figures" / "mse.png")
    return path


def cmd_run(cfg: dict, out, progress=None) -> Path:
    """Full pipeline: sample, pretrain, fine-tune and evolve every test sample, reference, compare."""
    cmd_sample_ics(cfg, out)
    cmd_pretrain(cfg, out)
    n_test = cfg["ensemble.n_test"]
    for k in range(n_test):
        cmd_finetune(cfg, out, k)
        cmd_evolve(cfg, out, k, progress)
    cmd_reference(cfg, out)
    return cmd_compare(cfg, out)
