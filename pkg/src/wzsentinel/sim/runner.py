"""Case and dataset generation on top of the world dynamics."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..hdmap import LaneletMap
from ..trajdata import ScenarioCase, TrackPoint, VehicleTrack, case_filename, write_case_csv
from .config import SimConfig
from .world import VEHICLE_DIMS, DensityUnreachable, World, make_world

MAX_RECORD_ATTEMPTS = 20
MANIFEST_NAME = "manifest.json"


def _snapshot(world: World, frame: int) -> dict[int, TrackPoint]:
    out = {}
    for veh in world.vehicles:
        x, y, h = world.corridor.to_global(veh.s, veh.lat)
        c, s = math.cos(h), math.sin(h)
        out[veh.id] = TrackPoint.at_frame(
            veh.id, frame, veh.agent_type, x, y,
            veh.v * c - veh.v_lat * s, veh.v * s + veh.v_lat * c,
            h + veh.yaw, veh.length, veh.width,
        )
    return out


def _record(world: World, n_frames: int) -> list[dict[int, TrackPoint]]:
    cfg = world.config
    world.record_ids = {v.id for v in world.vehicles}
    world.track_cap = cfg.density_max
    frames = [_snapshot(world, 1)]
    for f in range(2, n_frames + 1):
        world.step()
        world.record_ids.update(v.id for v in world.vehicles)
        frames.append(_snapshot(world, f))
    world.record_ids = None
    return frames


def _within_band(frames, cfg: SimConfig) -> bool:
    ids = set().union(*frames)
    present = [len(f) for f in frames]
    lo, hi = cfg.density_min, cfg.density_max
    return lo <= len(ids) <= hi and lo <= min(present) and max(present) <= hi


def _to_case(case_id: int, frames: list[dict[int, TrackPoint]]) -> ScenarioCase:
    first_seen: dict[int, int] = {}
    for k, snap in enumerate(frames):
        for vid in snap:
            first_seen.setdefault(vid, k)
    order = sorted(first_seen, key=lambda vid: (first_seen[vid], vid))
    remap = {vid: n for n, vid in enumerate(order, start=1)}
    tracks = {}
    for vid, tid in remap.items():
        pts = []
        for snap in frames:
            p = snap.get(vid)
            if p is not None:
                pts.append(TrackPoint(tid, p.timestamp_ms, p.frame_id, p.agent_type, p.x, p.y, p.vx, p.vy, p.psi_rad, p.length, p.width))
        tracks[tid] = VehicleTrack(tid, pts[0].agent_type, pts)
    return ScenarioCase(case_id, tracks)


def simulate_case(config: SimConfig, lmap: LaneletMap, case_id: int) -> tuple[ScenarioCase, World]:
    """Like :func:`run_case` but also returns the final world (for invariant checks)."""
    if not any(ll.closed for ll in lmap):
        raise ValueError("map needs a closed lane with taper annotations")
    world = make_world(config, lmap, case_id)
    capacity = sum(ln.s_end - ln.s_start for ln in world.corridor.lanes) / (
        min(dims[0] for dims in VEHICLE_DIMS.values()) + config.idm_s0
    )
    if config.density_min > capacity:
        raise DensityUnreachable(f"density_min {config.density_min} exceeds road capacity of about {capacity:.0f} vehicles")
    world.populate()
    for _ in range(int(round(config.warmup_s / config.dt))):
        world.step()
    for _ in range(MAX_RECORD_ATTEMPTS):
        frames = _record(world, config.n_frames)
        if _within_band(frames, config):
            return _to_case(case_id, frames), world
        world.step()
    raise DensityUnreachable(
        f"case {case_id}: could not hold {config.density_min}-{config.density_max} vehicles "
        f"over {MAX_RECORD_ATTEMPTS} recording attempts"
    )


def run_case(config: SimConfig, lmap: LaneletMap, case_id: int) -> ScenarioCase:
    """Warm up, then record ``config.n_frames`` frames of one case.

    Deterministic in (config, map, case_id).  Track ids are renumbered
    1..n by first appearance.
    """
    return simulate_case(config, lmap, case_id)[0]


def _job(args):
    config, lmap, case_id, out_dir = args
    case = run_case(config, lmap, case_id)
    write_case_csv(case, Path(out_dir) / case_filename(case_id))
    present = [case.n_present(f) for f in range(1, case.max_frame + 1)]
    return {
        "case_id": case_id,
        "n_vehicles": len(case.tracks),
        "file": case_filename(case_id),
        "min_present": min(present),
        "max_present": max(present),
    }


def worker_count(requested: int | None = None) -> int:
    """Worker processes, capped by ``WZ_SENTINEL_THREADS`` when set."""
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get("WZ_SENTINEL_THREADS")
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ValueError(f"WZ_SENTINEL_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def run_dataset(config: SimConfig, lmap: LaneletMap, out_dir, workers: int | None = 1, first_case: int = 1) -> dict:
    """Write ``config.n_cases`` case CSVs and a manifest to ``out_dir``.

    Returns the manifest dict.  Output does not depend on ``workers``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(config, lmap, cid, str(out_dir)) for cid in range(first_case, first_case + config.n_cases)]
    n = worker_count(workers)
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(n, len(jobs))) as pool:
            entries = list(pool.map(_job, jobs))
    else:
        entries = [_job(j) for j in jobs]
    manifest = {"seed": config.seed, "config_digest": config.digest(), "cases": entries}
    with open(out_dir / MANIFEST_NAME, "w", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
