"""Frames published faster than the antenna turns, and why stale sectors hurt.

With four frames per revolution each new image only refreshes a quarter of
the azimuth range; the rest is copied from the previous frame.  Copied
sectors pull the rotation estimate toward zero and add stale features to
the registration.  Overlap elimination finds them and drops them.
"""
import math

import numpy as np

from lodestar_odom import scenarios
from lodestar_odom.evaluation import compute_ape
from lodestar_odom.features import eliminate_overlap, eliminate_overlap_by_time
from lodestar_odom.pipeline import PipelineConfig, run_sequence
from lodestar_odom.synth import generate_sequence

scene, route, spec, schedule = scenarios.partial_sector_harbor()
frames, gt = generate_sequence(scene, route, spec, schedule)
print(f"{len(frames)} frames every {schedule.frame_period} s, one revolution per "
      f"{schedule.sweep_period} s ({schedule.mode})")

prev, curr = frames[40], frames[41]
truly_stale = curr.bin_times <= prev.timestamp
print(f"frame 41: {truly_stale.mean():.0%} of the bins were not rescanned since frame 40")

# image difference only needs the pixels; scan times are exact when available
by_image = eliminate_overlap(prev, curr, change_threshold=0.02)
by_time = eliminate_overlap_by_time(prev, curr)
print("stale sectors (image difference):", by_image.stale_sectors[:4], "...")
print("stale sectors (scan times):      ", by_time.stale_sectors)
agree = np.mean(by_image.stale_mask() == truly_stale)
print(f"image difference agrees with the schedule on {agree:.0%} of bins "
      "(unchanged empty water also counts as stale)")

print()
print(f"{'overlap':12s}{'dense':8s}{'poses':>6s}   Trans(m)/Rot(deg)")
for overlap in ("image-diff", "timestamps", "off"):
    for dense in (True, False):
        cfg = PipelineConfig(overlap_mode=overlap, dense_gate=1.2 if dense else math.inf)
        est, steps = run_sequence(frames, cfg)
        ape = compute_ape(est, gt)
        print(f"{overlap:12s}{'on' if dense else 'off':8s}{len(est):6d}   {ape.summary()}")

# with elimination on, frames that are mostly stale are skipped until the
# antenna has swept enough new sectors; registration then spans a full turn
est, steps = run_sequence(frames, PipelineConfig(overlap_mode="image-diff"))
gaps = np.diff([s.curr_id for s in steps])
print(f"\nimage-diff run registers every {np.median(gaps):.0f}th frame on average "
      f"(max gap {gaps.max()}), {len(steps)} steps")
