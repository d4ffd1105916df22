"""Dataset-level commands: synth, odom, eval and ablate.

Each ``cmd_*`` function is usable from Python; ``main`` wires them to
``python -m lodestar_odom <command>``.  Exit codes: 0 success, 1 usage
error, 2 data error (missing or malformed files), 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import scenarios
from .dataset import DatasetError, iter_frames, load_manifest, write_dataset
from .descriptor import compute_descriptor
from .evaluation import (
    FIRST_POSE,
    LEAST_SQUARES,
    AssociationError,
    TrajectoryFormatError,
    ape_series_csv,
    compute_ape,
    read_trajectory,
    write_trajectory,
)
from .pipeline import OVERLAP_IMAGE, OVERLAP_OFF, PipelineConfig, format_config, parse_config, run_sequence, step_rows
from .registration import RegistrationError
from .synth import FULL, PARTIAL, FrameSpec, ScanSchedule, format_scene, generate_sequence, load_scene

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

DATA_ERRORS = (DatasetError, TrajectoryFormatError, AssociationError, OSError, ValueError)
NUMERIC_ERRORS = (RegistrationError, FloatingPointError, np.linalg.LinAlgError, ArithmeticError)


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ synth

def cmd_synth(out, preset: str = "curved-harbor", scene_path=None, trajectory_path=None,
              n_frames: Optional[int] = None, width: Optional[int] = None,
              resolution: Optional[float] = None, bins: Optional[int] = None,
              mode: Optional[str] = None, frame_period: Optional[float] = None,
              sweep_period: Optional[float] = None, seed: Optional[int] = None):
    """Render a dataset (PNG frames, manifest, ground truth) into ``out``."""
    if preset not in scenarios.SCENARIOS:
        raise UsageError(f"unknown preset {preset!r}; choose from {sorted(scenarios.SCENARIOS)}")
    kw = {} if n_frames is None else {"n_frames": n_frames}
    scene, traj, spec, sched = scenarios.SCENARIOS[preset](**kw)
    if scene_path is not None:
        scene = load_scene(scene_path)
    if seed is not None:
        scene = scene.with_noise(seed=seed)
    if trajectory_path is not None:
        traj = read_trajectory(trajectory_path)
        if frame_period is None and len(traj) > 1:
            frame_period = float(np.median(np.diff(traj.timestamps)))
    spec = FrameSpec(width or spec.width, resolution or spec.resolution, bins or spec.bins)
    sched = ScanSchedule(frame_period or sched.frame_period, sweep_period or sched.sweep_period,
                         mode or sched.mode)
    frames, gt = generate_sequence(scene, traj, spec, sched)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = write_dataset(out, frames, gt, sectors=sched.mode == PARTIAL)
    (out / "scene.txt").write_text(format_scene(scene))
    return manifest


# ------------------------------------------------------------------ odom

def load_config(path=None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return parse_config(path.read_text(), source=str(path))


def _csv_text(rows: List[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def run_odometry(dataset, config: PipelineConfig, dump_descriptors=None):
    manifest = load_manifest(dataset)
    frames = []
    for f in iter_frames(manifest):
        if frames and not frames[0].same_grid(f):
            raise DatasetError(f"frame {f.frame_id}: grid differs from frame {frames[0].frame_id}")
        frames.append(f)
        if dump_descriptors is not None:
            d = compute_descriptor(f, config.bins)
            Path(dump_descriptors).mkdir(parents=True, exist_ok=True)
            (Path(dump_descriptors) / f"{f.frame_id:06d}.csv").write_text(d.to_csv())
    return manifest, run_sequence(frames, config)


def cmd_odom(dataset, out, config: PipelineConfig = PipelineConfig(), dump_descriptors: bool = False):
    """Run odometry over a dataset; writes trajectory.txt, steps.csv and config.resolved.txt."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    dump = out / "descriptors" if dump_descriptors else None
    _, (traj, steps) = run_odometry(dataset, config, dump)
    write_trajectory(out / "trajectory.txt", traj)
    (out / "steps.csv").write_text(_csv_text(step_rows(steps)))
    (out / "config.resolved.txt").write_text(format_config(config))
    return traj, steps


# ------------------------------------------------------------------ eval

def cmd_eval(est_path, gt_path, align: str = LEAST_SQUARES, max_dt: float = 0.01, csv_path=None):
    res = compute_ape(read_trajectory(est_path), read_trajectory(gt_path), align, max_dt)
    if csv_path is not None:
        Path(csv_path).write_text(ape_series_csv(res))
    return res


# ------------------------------------------------------------------ ablate

# shorthand axes mapping on/off onto config fields
ALIASES = {
    "overlap": ("overlap_mode", {"on": OVERLAP_IMAGE, "off": OVERLAP_OFF}),
    "dense": ("dense_gate", {"on": None, "off": math.inf}),
}

RESULT_FIELDS = ["cell", "status", "trans_rmse", "rot_rmse", "trans_max", "rot_max", "n_poses", "error"]


def parse_axis(spec: str) -> Tuple[str, List[str]]:
    if "=" not in spec:
        raise UsageError(f"axis must look like key=v1,v2: {spec!r}")
    key, vals = (s.strip() for s in spec.split("=", 1))
    values = [v.strip() for v in vals.split(",") if v.strip()]
    if not key or not values:
        raise UsageError(f"empty axis in {spec!r}")
    return key, values


def parse_sweep(text: str, source: str = "<sweep>") -> List[Tuple[str, List[str]]]:
    """One ``key = v1, v2, ...`` axis per line; ``#`` starts a comment."""
    axes = []
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            axes.append(parse_axis(line))
        except UsageError as e:
            raise ValueError(f"{source}:{ln}: {e}") from None
    return axes


def cell_config(base: PipelineConfig, assignment: Sequence[Tuple[str, str]]) -> PipelineConfig:
    lines = []
    for key, val in assignment:
        if key in ALIASES:
            field, table = ALIASES[key]
            if val not in table:
                raise ValueError(f"axis {key!r} takes on/off, got {val!r}")
            mapped = table[val]
            if mapped is None:
                mapped = getattr(base, field)
            lines.append(f"{field} = {mapped!r}" if isinstance(mapped, float) else f"{field} = {mapped}")
        else:
            lines.append(f"{key} = {val}")
    return parse_config("\n".join(lines), base, source="<sweep cell>")


def _run_cell(args):
    name, dataset, cfg, outdir, align, max_dt = args
    row = {"cell": name, "status": "ok", "trans_rmse": "", "rot_rmse": "", "trans_max": "",
           "rot_max": "", "n_poses": "", "error": ""}
    try:
        manifest = load_manifest(dataset)
        if manifest.groundtruth_path is None:
            raise DatasetError(f"{dataset}: dataset has no ground truth")
        traj, _ = cmd_odom(dataset, outdir, cfg)
        res = cmd_eval(Path(outdir) / "trajectory.txt", manifest.groundtruth_path, align, max_dt,
                       Path(outdir) / "ape.csv")
        row.update(trans_rmse=f"{res.trans_rmse:.6f}", rot_rmse=f"{res.rot_rmse:.6f}",
                   trans_max=f"{res.trans_max:.6f}", rot_max=f"{res.rot_max:.6f}",
                   n_poses=len(res.trans_errors))
    except Exception as e:      # a failing cell must not stop the sweep
        row.update(status="failed", error=f"{type(e).__name__}: {e}".replace("\n", " "))
    return row


def cmd_ablate(dataset, out, axes: Sequence[Tuple[str, List[str]]],
               base: PipelineConfig = PipelineConfig(), workers: int = 1,
               align: str = LEAST_SQUARES, max_dt: float = 0.01) -> List[dict]:
    """Cartesian sweep over config axes; one odometry + APE run per cell."""
    if not axes:
        raise UsageError("ablate needs at least one axis")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    keys = [k for k, _ in axes]
    jobs, rows_cfg = [], []
    for i, combo in enumerate(itertools.product(*(v for _, v in axes))):
        assignment = list(zip(keys, combo))
        name = f"cell{i:03d}_" + "_".join(f"{k}-{v}" for k, v in assignment)
        cfg_cols = dict(assignment)
        try:
            cfg = cell_config(base, assignment)
        except ValueError as e:
            rows_cfg.append((cfg_cols, {"cell": name, "status": "failed", "error": str(e)}))
            continue
        jobs.append((name, str(dataset), cfg, str(out / name), align, max_dt))
        rows_cfg.append((cfg_cols, name))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]
    by_name = {r["cell"]: r for r in results}
    rows = []
    for cfg_cols, ref in rows_cfg:
        r = dict.fromkeys(RESULT_FIELDS, "")
        r.update(by_name[ref] if isinstance(ref, str) else ref)
        rows.append({**cfg_cols, **r})
    fields = keys + RESULT_FIELDS
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    (out / "results.csv").write_text(buf.getvalue())
    return rows


# ------------------------------------------------------------------ argv

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="python -m lodestar_odom", description="Marine radar odometry toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="render a synthetic dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--preset", default="curved-harbor", choices=sorted(scenarios.SCENARIOS))
    s.add_argument("--scene", help="scene file (overrides the preset scene)")
    s.add_argument("--trajectory", help="trajectory file 't x y theta' (overrides the preset route)")
    s.add_argument("--frames", type=int, help="number of frames for the preset route")
    s.add_argument("--width", type=int)
    s.add_argument("--resolution", type=float)
    s.add_argument("--bins", type=int)
    s.add_argument("--mode", choices=[FULL, PARTIAL])
    s.add_argument("--frame-period", type=float)
    s.add_argument("--sweep-period", type=float)
    s.add_argument("--seed", type=int)

    o = sub.add_parser("odom", help="run odometry over a dataset")
    o.add_argument("--dataset", required=True)
    o.add_argument("--config")
    o.add_argument("--out", required=True)
    o.add_argument("--dump-descriptors", action="store_true")

    e = sub.add_parser("eval", help="absolute pose error of an estimate against ground truth")
    e.add_argument("est")
    e.add_argument("gt")
    e.add_argument("--align", default=LEAST_SQUARES, choices=[LEAST_SQUARES, FIRST_POSE])
    e.add_argument("--max-dt", type=float, default=0.01)
    e.add_argument("--csv", help="per-pose error CSV")

    a = sub.add_parser("ablate", help="sweep config axes")
    a.add_argument("--dataset", required=True)
    a.add_argument("--config")
    a.add_argument("--out", required=True)
    a.add_argument("--sweep", help="sweep file, one 'key = v1, v2' axis per line")
    a.add_argument("--axis", action="append", default=[], help="key=v1,v2 (repeatable)")
    a.add_argument("--workers", type=int, default=1)
    a.add_argument("--align", default=LEAST_SQUARES, choices=[LEAST_SQUARES, FIRST_POSE])
    a.add_argument("--max-dt", type=float, default=0.01)
    return p


def _dispatch(ns) -> int:
    if ns.command == "synth":
        m = cmd_synth(ns.out, ns.preset, ns.scene, ns.trajectory, ns.frames, ns.width,
                      ns.resolution, ns.bins, ns.mode, ns.frame_period, ns.sweep_period, ns.seed)
        print(f"wrote {len(m)} frames to {ns.out}")
    elif ns.command == "odom":
        traj, steps = cmd_odom(ns.dataset, ns.out, load_config(ns.config), ns.dump_descriptors)
        print(f"{len(traj)} poses, {sum(s.degraded for s in steps)} degraded steps -> {ns.out}")
    elif ns.command == "eval":
        res = cmd_eval(ns.est, ns.gt, ns.align, ns.max_dt, ns.csv)
        print(f"Trans(m)/Rot(deg): {res.summary()}")
    elif ns.command == "ablate":
        axes = []
        if ns.sweep:
            path = Path(ns.sweep)
            if not path.is_file():
                raise FileNotFoundError(f"sweep file not found: {path}")
            axes += parse_sweep(path.read_text(), str(path))
        axes += [parse_axis(s) for s in ns.axis]
        if ns.workers < 1:
            raise UsageError("--workers must be >= 1")
        rows = cmd_ablate(ns.dataset, ns.out, axes, load_config(ns.config), ns.workers,
                          ns.align, ns.max_dt)
        failed = sum(r["status"] != "ok" for r in rows)
        print(f"{len(rows)} cells, {failed} failed -> {Path(ns.out) / 'results.csv'}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return _dispatch(ns)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
