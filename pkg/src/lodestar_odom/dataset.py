"""On-disk datasets: 8-bit PNG frames, a CSV manifest and optional sidecars.

Layout::

    <root>/manifest.csv          versioned header + one row per frame
    <root>/frames/000000.png     8-bit grayscale, intensity / 255
    <root>/sectors/000000.csv    optional per-sector scan times
    <root>/groundtruth.txt       optional, trajectory text format
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence

import numpy as np
from PIL import Image

from .geometry import RadarFrame, Trajectory
from .synth import bin_times_from_runs, sector_runs

MANIFEST_VERSION = "lodestar-dataset v1"
MANIFEST_FIELDS = ["frame_id", "filename", "timestamp", "resolution", "sectors"]


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class FrameEntry:
    frame_id: int
    filename: str
    timestamp: float
    resolution: float
    sectors: str = ""


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    frames: tuple
    groundtruth: Optional[str] = None

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def groundtruth_path(self) -> Optional[Path]:
        return None if self.groundtruth is None else self.root / self.groundtruth


def write_png(path, frame: RadarFrame) -> None:
    # fixed encoder settings keep the bytes reproducible
    Image.fromarray(frame.to_uint8(), mode="L").save(path, format="PNG", optimize=False, compress_level=6)


def read_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"))


def write_sectors(path, bin_times: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_start", "bin_end", "scan_time"])
        for b0, b1, t in sector_runs(np.asarray(bin_times)):
            w.writerow([b0, b1, f"{t:.9f}"])


def read_sectors(path, bins: Optional[int] = None) -> np.ndarray:
    runs = []
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        for ln, row in enumerate(rd, 2):
            try:
                runs.append((int(row["bin_start"]), int(row["bin_end"]), float(row["scan_time"])))
            except (KeyError, TypeError, ValueError):
                raise DatasetError(f"{path}: line {ln}: malformed sector row") from None
    if bins is None:
        bins = max((r[1] for r in runs), default=0)
    try:
        return bin_times_from_runs(runs, bins)
    except ValueError as e:
        raise DatasetError(f"{path}: {e}") from None


def write_dataset(root, frames: Sequence[RadarFrame], groundtruth: Optional[Trajectory] = None,
                  sectors: bool = True) -> DatasetManifest:
    from .evaluation import write_trajectory

    root = Path(root)
    (root / "frames").mkdir(parents=True, exist_ok=True)
    entries = []
    for f in frames:
        name = f"frames/{f.frame_id:06d}.png"
        write_png(root / name, f)
        sec = ""
        if sectors and f.bin_times is not None:
            (root / "sectors").mkdir(exist_ok=True)
            sec = f"sectors/{f.frame_id:06d}.csv"
            write_sectors(root / sec, f.bin_times)
        entries.append(FrameEntry(f.frame_id, name, f.timestamp, f.resolution, sec))
    gt = None
    if groundtruth is not None:
        gt = "groundtruth.txt"
        write_trajectory(root / gt, groundtruth)
    manifest = DatasetManifest(root, tuple(entries), gt)
    write_manifest(manifest)
    return manifest


def write_manifest(m: DatasetManifest) -> None:
    buf = io.StringIO()
    buf.write(f"# {MANIFEST_VERSION}\n")
    if m.groundtruth:
        buf.write(f"# groundtruth: {m.groundtruth}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MANIFEST_FIELDS)
    for e in m.frames:
        w.writerow([e.frame_id, e.filename, f"{e.timestamp:.9f}", repr(float(e.resolution)), e.sectors])
    (Path(m.root) / "manifest.csv").write_text(buf.getvalue())


def load_manifest(root) -> DatasetManifest:
    root = Path(root)
    path = root / "manifest.csv"
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != f"# {MANIFEST_VERSION}":
        raise DatasetError(f"{path}: line 1: expected header '# {MANIFEST_VERSION}'")
    gt = None
    body_start = 1
    while body_start < len(lines) and lines[body_start].startswith("#"):
        meta = lines[body_start][1:].strip()
        if meta.startswith("groundtruth:"):
            gt = meta.split(":", 1)[1].strip() or None
        body_start += 1
    rd = csv.DictReader(lines[body_start:])
    if rd.fieldnames is None or [f.strip() for f in rd.fieldnames] != MANIFEST_FIELDS:
        raise DatasetError(f"{path}: column header must be {','.join(MANIFEST_FIELDS)}")
    entries: List[FrameEntry] = []
    for ln, row in enumerate(rd, body_start + 2):
        try:
            e = FrameEntry(int(row["frame_id"]), row["filename"], float(row["timestamp"]),
                           float(row["resolution"]), row.get("sectors") or "")
        except (TypeError, ValueError):
            raise DatasetError(f"{path}: line {ln}: malformed row") from None
        if not (root / e.filename).is_file():
            raise DatasetError(f"{path}: line {ln}: frame {e.frame_id}: missing file {root / e.filename}")
        if e.sectors and not (root / e.sectors).is_file():
            raise DatasetError(f"{path}: line {ln}: frame {e.frame_id}: missing sidecar {root / e.sectors}")
        if entries and not e.timestamp > entries[-1].timestamp:
            raise DatasetError(
                f"{path}: line {ln}: frame {e.frame_id}: timestamp {e.timestamp} "
                f"not after {entries[-1].timestamp}"
            )
        if not (math.isfinite(e.resolution) and e.resolution > 0):
            raise DatasetError(f"{path}: line {ln}: frame {e.frame_id}: bad resolution")
        entries.append(e)
    if gt is not None and not (root / gt).is_file():
        raise DatasetError(f"{path}: ground truth file missing: {root / gt}")
    return DatasetManifest(root, tuple(entries), gt)


def load_frame(m: DatasetManifest, e: FrameEntry) -> RadarFrame:
    try:
        img = read_png(m.root / e.filename)
        bt = read_sectors(m.root / e.sectors) if e.sectors else None
        return RadarFrame.from_uint8(img, e.resolution, timestamp=e.timestamp,
                                     frame_id=e.frame_id, bin_times=bt)
    except DatasetError:
        raise
    except (OSError, ValueError) as ex:
        raise DatasetError(f"frame {e.frame_id}: {ex}") from None


def iter_frames(m: DatasetManifest) -> Iterator[RadarFrame]:
    for e in m.frames:
        yield load_frame(m, e)


def load_frames(m: DatasetManifest) -> List[RadarFrame]:
    return list(iter_frames(m))
