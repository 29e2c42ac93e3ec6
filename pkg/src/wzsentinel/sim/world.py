"""Work-zone traffic dynamics.

Vehicles live in a corridor frame: arc length ``s`` along a reference
lane and lateral coordinate ``lat`` (left positive) relative to it.
Longitudinal motion follows the Intelligent Driver Model; lateral motion
tracks the target lane centre under bounded lateral speed and
acceleration, so lane changes take time instead of happening in one
step.  Vehicles in a lane that closes ahead ask to merge and accept gaps
that shrink as they grow impatient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..hdmap import LaneletMap, closest_point, point_at
from .config import SimConfig

VEHICLE_DIMS = {"car": (4.5, 1.8), "truck": (12.0, 2.5)}
# a lane change pauses while another vehicle is alongside on that side
SIDE_CLEARANCE_LAT = 0.2
SIDE_CLEARANCE_LON = 1.0
# below this speed the heading stops following the velocity vector, so a
# nearly stopped vehicle creeping sideways does not spin in place
HEADING_MIN_SPEED = 2.0


class DensityUnreachable(RuntimeError):
    pass


def idm_acceleration(v, v0, gap, dv, T, a, b, s0, delta=4.0) -> float:
    """IDM acceleration for speed ``v``, bumper gap ``gap`` and approach rate ``dv`` = v - v_leader.

    The dynamic part of the desired gap is clipped at zero so a faster
    leader never induces braking.  ``gap=inf`` gives the free-road term.
    """
    free = 1.0 - (v / v0) ** delta if v0 > 0 else -1.0
    if math.isinf(gap):
        return a * free
    if gap <= 0:
        return -math.inf
    s_star = s0 + max(0.0, v * T + v * dv / (2.0 * math.sqrt(a * b)))
    return a * (free - (s_star / gap) ** 2)


@dataclass
class Lane:
    """One lane of the corridor (a chain of lanelets)."""

    index: int
    lanelets: list[int]
    center_lat: float
    half_width: float
    s_start: float
    s_end: float
    stop_line: float | None = None  # closure: vehicles must leave before this s
    taper_start: float | None = None
    taper_end: float | None = None

    @property
    def closes(self) -> bool:
        return self.stop_line is not None

    def interval(self) -> tuple[float, float]:
        return self.center_lat - self.half_width, self.center_lat + self.half_width


class Corridor:
    """Parallel lanes of a lanelet map, ordered left to right."""

    def __init__(self, lmap: LaneletMap, parallel_tol: float = 0.05):
        chains = lmap.lane_chains()
        if not chains:
            raise ValueError("map has no lanes")
        lines = [lmap.chain_centerline(c[0]) for c in chains]
        ref = int(np.argmax([cum[-1] for _, cum in lines]))
        self.ref_points, self.ref_cum = lines[ref]
        lanes = []
        for chain, (pts, cum) in zip(chains, lines):
            probes = [closest_point(self.ref_points, self.ref_cum, p) for p in pts[:: max(1, len(pts) // 20)]]
            offsets = [pr[1] for pr in probes]
            if max(offsets) - min(offsets) > parallel_tol:
                raise ValueError(f"lane starting at lanelet {chain[0]} is not parallel to the reference lane")
            s0 = closest_point(self.ref_points, self.ref_cum, pts[0])[0]
            s1 = closest_point(self.ref_points, self.ref_cum, pts[-1])[0]
            if s1 - s0 < cum[-1] - 1.0:  # runs past the reference end
                s1 = s0 + cum[-1]
            hw = lmap[chain[0]].half_width_at(0.0)
            lane = Lane(len(lanes), chain, float(np.mean(offsets)), hw, s0, s1)
            acc = s0
            for lid in chain:
                ll = lmap[lid]
                if ll.taper_start_s is not None and lane.stop_line is None:
                    lane.taper_start = acc + ll.taper_start_s
                    lane.taper_end = acc + ll.taper_end_s
                    lane.stop_line = lane.taper_end
                if ll.closed and lane.stop_line is None:
                    lane.taper_start = lane.taper_end = lane.stop_line = acc
                acc += ll.length
            lanes.append(lane)
        lanes.sort(key=lambda ln: -ln.center_lat)
        for i, ln in enumerate(lanes):
            ln.index = i
        self.lanes = lanes
        self.road_end = max(ln.s_end for ln in lanes)
        tapers = [ln.taper_start for ln in lanes if ln.taper_start is not None]
        self.taper_start = min(tapers) if tapers else None

    def lane_at(self, lat: float) -> int:
        return int(np.argmin([abs(lat - ln.center_lat) for ln in self.lanes]))

    def to_global(self, s: float, lat: float) -> tuple[float, float, float]:
        """(x, y, reference heading) for corridor coordinates."""
        p, h = point_at(self.ref_points, self.ref_cum, s)
        return p[0] - lat * math.sin(h), p[1] + lat * math.cos(h), h

    def merge_target(self, lane: Lane) -> int | None:
        for j in (lane.index - 1, lane.index + 1):
            if 0 <= j < len(self.lanes) and not self.lanes[j].closes:
                return j
        return None


@dataclass
class SimVehicle:
    id: int
    agent_type: str
    length: float
    width: float
    s: float
    v: float
    lat: float
    lane: int
    v0_factor: float = 1.0
    T: float = 1.2
    v_lat: float = 0.0
    a_lat: float = 0.0
    target: int = -1
    merge_wait: float | None = None
    in_closed_lane: bool = False
    left_closed_at: float | None = None

    def __post_init__(self):
        if self.target < 0:
            self.target = self.lane

    def envelope(self) -> tuple[float, float]:
        return self.lat - self.width / 2.0, self.lat + self.width / 2.0

    @property
    def yaw(self) -> float:
        """Heading relative to the lane direction."""
        return math.atan2(self.v_lat, max(self.v, HEADING_MIN_SPEED))

    def half_span(self) -> float:
        """Lateral half-extent of the footprint, including its yaw."""
        c, s = math.cos(self.yaw), abs(math.sin(self.yaw))
        return self.length / 2.0 * s + self.width / 2.0 * c


@dataclass
class World:
    config: SimConfig
    corridor: Corridor
    rng_arrivals: np.random.Generator
    rng_types: np.random.Generator
    rng_drivers: np.random.Generator
    vehicles: list[SimVehicle] = field(default_factory=list)
    time: float = 0.0
    next_id: int = 1
    pending: dict[int, int] = field(default_factory=dict)
    closure_violations: int = 0
    # while recording: ids seen so far, and the cap on distinct ids
    record_ids: set | None = None
    track_cap: int | None = None

    # -- helpers ---------------------------------------------------------

    def speed_limit(self, s: float) -> float:
        cfg = self.config
        ts = self.corridor.taper_start
        if ts is None:
            return cfg.speed_limit
        ramp_start = ts - cfg.speed_ramp_m
        if s <= ramp_start:
            return cfg.speed_limit
        if s >= ts:
            return cfg.work_zone_speed_limit
        u = (s - ramp_start) / cfg.speed_ramp_m
        return cfg.speed_limit + u * (cfg.work_zone_speed_limit - cfg.speed_limit)

    def _idm(self, veh: SimVehicle, gap: float, v_leader: float) -> float:
        cfg = self.config
        return idm_acceleration(
            veh.v, veh.v0_factor * self.speed_limit(veh.s), gap, veh.v - v_leader,
            veh.T, cfg.idm_a, cfg.idm_b, cfg.idm_s0, cfg.idm_delta,
        )

    def _corridor_interval(self, veh: SimVehicle) -> tuple[float, float]:
        a = self.corridor.lanes[veh.lane].interval()
        b = self.corridor.lanes[veh.target].interval()
        return min(a[0], b[0]), max(a[1], b[1])

    @staticmethod
    def _overlaps(iv: tuple[float, float], other: SimVehicle) -> bool:
        lo, hi = other.envelope()
        return hi > iv[0] and lo < iv[1]

    def _leaders(self, veh: SimVehicle, interval) -> list[tuple[float, float]]:
        """(gap, speed) of the nearest vehicle ahead overlapping ``interval``, plus closure stop lines."""
        out = []
        lead = None
        for other in self.vehicles:
            if other is veh or other.s < veh.s or (other.s == veh.s and other.id > veh.id):
                continue
            if (lead is None or other.s < lead.s) and self._overlaps(interval, other):
                lead = other
        if lead is not None:
            out.append((lead.s - veh.s - (lead.length + veh.length) / 2.0, lead.v))
        for ln in self.corridor.lanes:
            if ln.closes and ln.interval()[1] > interval[0] + 1e-6 and ln.interval()[0] < interval[1] - 1e-6:
                if veh.s < ln.stop_line:
                    stop = ln.stop_line - self.config.stop_margin_m
                    out.append((stop - veh.s - veh.length / 2.0, 0.0))
        return out

    def _acceleration(self, veh: SimVehicle) -> float:
        cfg = self.config
        acc = self._idm(veh, math.inf, 0.0)
        for gap, v_leader in self._leaders(veh, self._corridor_interval(veh)):
            acc = min(acc, self._idm(veh, gap, v_leader))
        return min(max(acc, -cfg.max_decel), cfg.idm_a)

    def _neighbours(self, veh: SimVehicle, lane_index: int):
        """Nearest vehicles ahead and behind ``veh`` overlapping lane ``lane_index``."""
        iv = self.corridor.lanes[lane_index].interval()
        lead = lag = None
        for other in self.vehicles:
            if other is veh or not self._overlaps(iv, other):
                continue
            if other.s >= veh.s:
                if lead is None or other.s < lead.s:
                    lead = other
            elif lag is None or other.s > lag.s:
                lag = other
        return lead, lag

    def gap_acceptable(self, veh: SimVehicle, target: int) -> bool:
        cfg = self.config
        wait = veh.merge_wait or 0.0
        factor = 1.0 - 0.5 * min(wait / cfg.impatience_time_s, 1.0)
        lead, lag = self._neighbours(veh, target)
        if lead is not None:
            gap = lead.s - veh.s - (lead.length + veh.length) / 2.0
            if gap < factor * (cfg.idm_s0 + cfg.merge_lead_gap_s * veh.v):
                return False
        if lag is not None:
            gap = veh.s - lag.s - (lag.length + veh.length) / 2.0
            if gap < factor * (cfg.idm_s0 + cfg.merge_lag_gap_s * lag.v):
                return False
            if self._idm(lag, gap, veh.v) < -cfg.merge_safe_decel:
                return False
        return True

    # -- dynamics ----------------------------------------------------------

    def step(self, dt: float | None = None) -> "World":
        cfg = self.config
        dt = cfg.dt if dt is None else dt
        accs = [self._acceleration(v) for v in self.vehicles]
        for veh, acc in zip(self.vehicles, accs):
            v_new = max(veh.v + acc * dt, 0.0)
            veh.s += max(0.5 * (veh.v + v_new) * dt, 0.0)
            veh.v = v_new

        for veh in self.vehicles:
            lane = self.corridor.lanes[veh.lane]
            if lane.closes and veh.target == veh.lane and veh.s - lane.s_start >= cfg.merge_start_s:
                target = self.corridor.merge_target(lane)
                if target is not None:
                    if veh.merge_wait is None:
                        veh.merge_wait = 0.0
                    if self.gap_acceptable(veh, target):
                        veh.target = target
                    else:
                        veh.merge_wait += dt

        for veh in self.vehicles:
            self._lateral(veh, dt)
            in_closed = self.corridor.lanes[veh.lane].closes
            if in_closed:
                veh.in_closed_lane = True
                if veh.s >= self.corridor.lanes[veh.lane].stop_line:
                    self.closure_violations += 1
            elif veh.in_closed_lane and veh.left_closed_at is None:
                veh.left_closed_at = veh.s

        self.vehicles = [v for v in self.vehicles if v.s <= self.corridor.road_end]
        self._spawn(dt)
        self.time += dt
        return self

    def _side_blocked(self, veh: SimVehicle, direction: float) -> bool:
        """True when a vehicle beside ``veh`` leaves no room to move towards ``direction``."""
        stop = veh.v_lat**2 / (2.0 * self.config.a_lat_max) + SIDE_CLEARANCE_LAT
        for other in self.vehicles:
            if other is veh or (other.lat - veh.lat) * direction <= 0:
                continue
            if abs(other.s - veh.s) >= (other.length + veh.length) / 2.0 + SIDE_CLEARANCE_LON:
                continue
            if abs(other.lat - veh.lat) - other.half_span() - veh.half_span() < stop:
                return True
        return False

    def _lateral(self, veh: SimVehicle, dt: float) -> None:
        cfg = self.config
        e = self.corridor.lanes[veh.target].center_lat - veh.lat
        vmax = cfg.v_lat_max(veh.v)
        want = math.copysign(min(vmax, math.sqrt(2.0 * cfg.a_lat_max * abs(e)), abs(e) / cfg.lateral_tau_s), e)
        if abs(e) > 0.05 and self._side_blocked(veh, e):
            want = 0.0
        lo = max(veh.v_lat - cfg.a_lat_max * dt, -vmax)
        hi = min(veh.v_lat + cfg.a_lat_max * dt, vmax)
        if lo > hi:  # speed envelope shrank faster than the accel bound allows
            lo = hi = min(max(veh.v_lat, -vmax), vmax)
        v_new = min(max(want, lo), hi)
        if abs(e) < 1e-6 and abs(veh.v_lat) < 1e-6:  # settled; cut the geometric tail
            veh.a_lat = -veh.v_lat / dt
            veh.lat += e
            veh.v_lat = 0.0
        else:
            veh.a_lat = (v_new - veh.v_lat) / dt
            veh.lat += 0.5 * (veh.v_lat + v_new) * dt
            veh.v_lat = v_new
        veh.lane = self.corridor.lane_at(veh.lat)
        if abs(e) < 0.05 and veh.target != veh.lane:
            veh.target = veh.lane
        if veh.lane == veh.target and not self.corridor.lanes[veh.lane].closes:
            veh.merge_wait = None

    # -- spawning ------------------------------------------------------------

    def new_vehicle(self, lane: int, s: float, v: float | None = None) -> SimVehicle:
        cfg = self.config
        kind = "truck" if self.rng_types.random() < cfg.truck_fraction else "car"
        length, width = VEHICLE_DIMS[kind]
        jitter = np.clip(self.rng_drivers.normal(0.0, cfg.driver_jitter, size=2), -2 * cfg.driver_jitter, 2 * cfg.driver_jitter)
        v0_factor = (0.9 if kind == "truck" else 1.0) * (1.0 + jitter[0])
        veh = SimVehicle(
            id=self.next_id, agent_type=kind, length=length, width=width, s=s,
            v=0.0, lat=self.corridor.lanes[lane].center_lat, lane=lane,
            v0_factor=float(v0_factor), T=cfg.idm_T * float(1.0 + jitter[1]),
        )
        veh.v = v0_factor * self.speed_limit(s) if v is None else v
        self.next_id += 1
        return veh

    def _entry_gap(self, lane: int) -> tuple[float, float]:
        """Free space ahead of the entry point of ``lane`` and the speed of the vehicle bounding it."""
        ln = self.corridor.lanes[lane]
        iv = ln.interval()
        best = (math.inf, 0.0)
        for other in self.vehicles:
            if self._overlaps(iv, other):
                back = other.s - other.length / 2.0 - ln.s_start
                if back < best[0]:
                    best = (back, other.v)
        return best

    def _try_spawn(self, lane: int) -> bool:
        cfg = self.config
        ln = self.corridor.lanes[lane]
        veh = self.new_vehicle(lane, ln.s_start)
        gap, v_lead = self._entry_gap(lane)
        gap -= veh.length / 2.0
        v = veh.v
        if math.isfinite(gap):
            v = min(v, (gap - cfg.idm_s0) / veh.T, v_lead + 2.0)
        if v < 5.0:
            self.next_id -= 1
            return False
        veh.v = v
        self.vehicles.append(veh)
        return True

    def _spawn(self, dt: float) -> None:
        cfg = self.config
        entry_lanes = [ln.index for ln in self.corridor.lanes if ln.s_start <= 1e-6]
        for lane in entry_lanes:
            if self.rng_arrivals.random() < cfg.inflow_per_lane * dt:
                self.pending[lane] = 1
        n = len(self.vehicles)
        if n >= cfg.density_max - 1:
            return
        if self.record_ids is not None:
            # only top up a thinning road, and never exceed the track cap
            if n >= cfg.density_min + 1 or len(self.record_ids) >= self.track_cap:
                return
        if n < cfg.density_min + 1:
            lane = max(entry_lanes, key=lambda i: (self._entry_gap(i)[0], -i))
            self.pending[lane] = 1
        for lane in entry_lanes:
            if self.pending.get(lane) and len(self.vehicles) < cfg.density_max - 1:
                if self.record_ids is not None and len(self.record_ids) >= self.track_cap:
                    break
                if self._try_spawn(lane):
                    self.pending[lane] = 0
                    if self.record_ids is not None:
                        self.record_ids.add(self.vehicles[-1].id)

    def populate(self) -> None:
        """Spread an initial vehicle population along the corridor."""
        cfg = self.config
        target = (cfg.density_min + cfg.density_max) // 2
        open_lanes = [ln for ln in self.corridor.lanes if not ln.closes]
        closed_lanes = [ln for ln in self.corridor.lanes if ln.closes]
        n_closed = min(len(closed_lanes) * 3, target // 4)
        plan = []
        for k in range(n_closed):
            ln = closed_lanes[k % len(closed_lanes)]
            plan.append((ln.index, ln.s_start, ln.s_start + cfg.merge_start_s + 100.0))
        for k in range(target - n_closed):
            ln = open_lanes[k % len(open_lanes)]
            plan.append((ln.index, ln.s_start, ln.s_end))
        by_lane: dict[int, list[tuple[float, float]]] = {}
        for lane, a, b in plan:
            by_lane.setdefault(lane, []).append((a, b))
        for lane, spans in sorted(by_lane.items()):
            a, b = spans[0]
            n = len(spans)
            slots = a + (np.arange(n) + 0.5) * (b - a) / n
            slots = slots + self.rng_arrivals.uniform(-0.2, 0.2, size=n) * (b - a) / n
            for s in sorted(slots, reverse=True):
                self.vehicles.append(self.new_vehicle(lane, float(s)))


def make_world(config: SimConfig, lmap: LaneletMap, case_id: int) -> World:
    """Fresh world whose random streams depend only on (config.seed, case_id)."""
    ss = np.random.SeedSequence(entropy=config.seed, spawn_key=(case_id,))
    arrivals, types, drivers = (np.random.default_rng(s) for s in ss.spawn(3))
    return World(config, Corridor(lmap), arrivals, types, drivers)


def step(world: World, dt: float) -> World:
    """Advance ``world`` by ``dt`` seconds (in place) and return it."""
    return world.step(dt)
