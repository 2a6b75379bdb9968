"""Tick-level vehicle kinematics and the episodic intersection environment.

The car-following rule is a speed-capped safe-braking update. Per tick,
front-to-back within each lane:

- target speed is max_speed unless a stop is required; a stop is required
  when the signal forbids the lane's movement (stop point = stop line) or a
  leader blocks (stop point = leader rear - min_gap);
- with d the distance to the nearest stop point, the desired deceleration is
  v^2 / (2 d); if it is within the comfortable decel the vehicle advances at
  the largest speed that keeps a decel-limited stop feasible next tick
  (never exceeding accel-limited speed-up or max_speed), otherwise it brakes
  at min(desired, emergency_decel);
- a vehicle at rest whose path has just opened first burns a per-vehicle
  startup_delay timer, then accelerates for whatever fraction of the tick
  remains, which lets queue discharge propagate vehicle by vehicle;
- speeds clamp to [0, max_speed] and positions advance by speed * tick.

Vehicles that cross the stop line while their movement is permitted traverse
the intersection instantly and complete at the interpolated crossing time.
A crossing while the movement is forbidden is possible only when physics
forbids stopping; it is logged as a signal violation, never corrected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ugatlab.sim.demand import DemandSchedule
from ugatlab.sim.layout import ALL_RED, N_LANES, N_PHASES, PHASES, STATE_DIM, IntersectionLayout
from ugatlab.sim.params import SimConfig, VehicleParams

STOP_EPS = 0.1  # m; closer than this to a stop point counts as pinned


class ConfigurationError(ValueError):
    """Invalid layout/params/demand/config combination."""


class LifecycleError(RuntimeError):
    """Operation called in the wrong episode phase (e.g. step after done)."""


class ActionError(ValueError):
    """Phase index outside 0..7."""


class Vehicle:
    __slots__ = ("vid", "movement", "pos", "speed", "spawn_time", "startup_timer")

    def __init__(self, vid: int, movement: int, pos: float, speed: float, spawn_time: float):
        self.vid = vid
        self.movement = movement
        self.pos = pos
        self.speed = speed
        self.spawn_time = spawn_time
        self.startup_timer = 0.0


@dataclass(frozen=True)
class CompletedVehicle:
    vid: int
    movement: int
    spawn_time: float
    completion_time: float


@dataclass(frozen=True)
class MetricsRecord:
    """Episode metrics; att/tp/delay cover completed vehicles only."""

    att: float  # mean travel time, s
    tp: int  # completed vehicles
    reward_mean: float  # mean per-decision reward (<= 0)
    queue_mean: float  # mean per-decision total queue, vehicles
    delay: float  # mean 1 - free_flow/travel per completed vehicle
    delay_seconds: float  # mean raw delay, s
    spawned: int  # vehicles that entered the network

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.att, float(self.tp), self.reward_mean, self.queue_mean, self.delay)


METRIC_NAMES = ("ATT", "TP", "Reward", "Queue", "Delay")


def _safe_speed(d: float, decel: float, dt: float) -> float:
    """Largest speed this tick that still allows a decel-limited stop within d."""
    if d <= 0.0:
        return 0.0
    bd = decel * dt
    return -bd + math.sqrt(bd * bd + 2.0 * decel * d)


class TrafficSim:
    """Deterministic single-intersection episode with a reset/step interface."""

    def __init__(
        self,
        layout: IntersectionLayout,
        params: VehicleParams,
        demand: DemandSchedule,
        config: SimConfig,
    ):
        if config.yellow_time >= config.decision_interval:
            raise ConfigurationError("yellow_time must be shorter than the decision interval")
        if params.max_speed * config.tick > layout.lane_length:
            raise ConfigurationError("a vehicle must not traverse a whole lane in one tick")
        self.layout = layout
        self.params = params
        self.demand = demand
        self.config = config
        self.reset()

    # --- lifecycle -----------------------------------------------------

    def reset(self) -> np.ndarray:
        """Empty network, phase 0, clock 0; returns the all-zero initial state."""
        self.tick_count = 0
        self.phase = 0
        self.pending_phase: int | None = None
        self.lanes: list[list[Vehicle]] = [[] for _ in range(N_LANES)]
        self._backlog: list[list[tuple[float, int]]] = [[] for _ in range(N_LANES)]
        for vid, (t, movement) in enumerate(self.demand.arrivals):
            self._backlog[movement].append((t, vid))
        self._backlog_idx = [0] * N_LANES
        self.spawned = 0
        self.completed: list[CompletedVehicle] = []
        self.gap_violations: list[tuple[float, int, float]] = []
        self.signal_violations: list[tuple[float, int, int]] = []
        self._decision_rewards: list[float] = []
        self._decision_queues: list[int] = []
        self._done = False
        return self.observe()

    @property
    def time(self) -> float:
        return self.tick_count * self.config.tick

    @property
    def done(self) -> bool:
        return self._done

    # --- observation & metrics ------------------------------------------

    def observe(self) -> np.ndarray:
        """Per-lane vehicle counts plus the controlling-phase one-hot (dim 20)."""
        state = np.zeros(STATE_DIM)
        for i, lane in enumerate(self.lanes):
            state[i] = len(lane)
        display = self.pending_phase if self.pending_phase is not None else self.phase
        state[N_LANES + display] = 1.0
        return state

    def lane_queue_counts(self) -> tuple[int, ...]:
        thr = self.config.queue_speed_threshold
        return tuple(sum(1 for v in lane if v.speed < thr) for lane in self.lanes)

    def finalize_metrics(self) -> MetricsRecord:
        if not self._done:
            raise LifecycleError("finalize_metrics before the episode is done")
        free_flow = self.layout.lane_length / self.params.max_speed
        travels = [c.completion_time - c.spawn_time for c in self.completed]
        att = float(np.mean(travels)) if travels else 0.0
        delay = float(np.mean([1.0 - free_flow / t for t in travels])) if travels else 0.0
        delay_s = float(np.mean([t - free_flow for t in travels])) if travels else 0.0
        return MetricsRecord(
            att=att,
            tp=len(self.completed),
            reward_mean=float(np.mean(self._decision_rewards)) if self._decision_rewards else 0.0,
            queue_mean=float(np.mean(self._decision_queues)) if self._decision_queues else 0.0,
            delay=delay,
            delay_seconds=delay_s,
            spawned=self.spawned,
        )

    # --- control ---------------------------------------------------------

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        """Apply a phase for one decision interval; returns (state, reward, done).

        A change of phase inserts a yellow_time all-red interlude before the
        new phase takes effect; reward is -(total queued vehicles) at the
        decision instant.
        """
        if self._done:
            raise LifecycleError("step after the episode is done")
        action = int(action)
        if not 0 <= action < N_PHASES:
            raise ActionError(f"phase index {action} outside 0..{N_PHASES - 1}")
        remaining = self.config.ticks_per_decision
        if action != self.phase:
            self.pending_phase = action
            for _ in range(self.config.yellow_ticks):
                self._tick(ALL_RED)
            self.phase = action
            self.pending_phase = None
            remaining -= self.config.yellow_ticks
        permitted = PHASES[self.phase]
        for _ in range(remaining):
            self._tick(permitted)
        queues = self.lane_queue_counts()
        total_queue = sum(queues)
        reward = -float(total_queue)
        self._decision_rewards.append(reward)
        self._decision_queues.append(total_queue)
        if self.tick_count >= self.config.episode_ticks:
            self._done = True
        return self.observe(), reward, self._done

    # --- internals --------------------------------------------------------

    def _spawn(self) -> None:
        p = self.params
        now = self.time
        entry_clearance = p.vehicle_length + p.min_gap
        for lane_idx in range(N_LANES):
            backlog = self._backlog[lane_idx]
            i = self._backlog_idx[lane_idx]
            if i >= len(backlog) or backlog[i][0] > now:
                continue
            lane = self.lanes[lane_idx]
            if lane:
                d_entry = lane[-1].pos - entry_clearance  # stop point seen from pos 0
                if d_entry < 0.0:
                    continue
                speed = min(p.max_speed, _safe_speed(d_entry, p.decel, self.config.tick))
            else:
                speed = p.max_speed
            vid = backlog[i][1]
            lane.append(Vehicle(vid, lane_idx, 0.0, speed, now))
            self._backlog_idx[lane_idx] = i + 1
            self.spawned += 1

    def _tick(self, permitted: frozenset[int]) -> None:
        self._spawn()
        p = self.params
        dt = self.config.tick
        stop_line = self.layout.lane_length
        clearance = p.vehicle_length + p.min_gap
        now = self.time
        inf = math.inf

        for lane_idx, lane in enumerate(self.lanes):
            if not lane:
                continue
            lane_open = lane_idx in permitted
            leader_stop = inf  # stop point imposed by the vehicle ahead
            completed_any = False
            for veh in lane:
                pos = veh.pos
                v = veh.speed
                stop_at = leader_stop
                if not lane_open and stop_line < stop_at:
                    stop_at = stop_line
                d = stop_at - pos

                if d <= STOP_EPS:
                    # pinned at a stop point; hold and keep the startup timer armed
                    new_v = 0.0
                    veh.startup_timer = p.startup_delay
                elif v <= 0.0 and veh.startup_timer > 0.0:
                    if veh.startup_timer >= dt:
                        veh.startup_timer -= dt
                        new_v = 0.0
                    else:
                        free = dt - veh.startup_timer
                        veh.startup_timer = 0.0
                        new_v = min(p.accel * free, p.max_speed)
                        if d < inf:
                            new_v = min(new_v, _safe_speed(d, p.decel, dt))
                elif d == inf:
                    new_v = min(v + p.accel * dt, p.max_speed)
                else:
                    desired = v * v / (2.0 * d)
                    if desired <= p.decel:
                        new_v = min(v + p.accel * dt, p.max_speed, _safe_speed(d, p.decel, dt))
                    else:
                        new_v = v - min(desired, p.emergency_decel) * dt
                        if new_v < 0.0:
                            new_v = 0.0

                veh.speed = new_v
                new_pos = pos + new_v * dt
                veh.pos = new_pos
                leader_stop = new_pos - clearance

                if new_pos >= stop_line:
                    if not lane_open:
                        self.signal_violations.append((now, lane_idx, veh.vid))
                    crossing = now + (stop_line - pos) / new_v if new_v > 0.0 else now
                    self.completed.append(
                        CompletedVehicle(veh.vid, veh.movement, veh.spawn_time, crossing)
                    )
                    veh.pos = inf  # marks the vehicle for removal below
                    completed_any = True
            if completed_any:
                self.lanes[lane_idx] = [v for v in lane if v.pos != inf]

        self.tick_count += 1
        self._check_tick_invariants()

    def _check_tick_invariants(self) -> None:
        active = sum(len(lane) for lane in self.lanes)
        if self.spawned != active + len(self.completed):
            raise RuntimeError(
                f"conservation broken at t={self.time}: spawned {self.spawned} != "
                f"active {active} + completed {len(self.completed)}"
            )
        min_gap = self.params.min_gap
        length = self.params.vehicle_length
        for lane_idx, lane in enumerate(self.lanes):
            for ahead, behind in zip(lane, lane[1:]):
                gap = ahead.pos - length - behind.pos
                if gap < min_gap - 1e-9:
                    self.gap_violations.append((self.time, lane_idx, gap))

    def state_signature(self) -> str:
        """Stable text fingerprint of the full mutable state (for replay checks)."""
        rows = [f"t={self.tick_count} phase={self.phase} done={self._done}"]
        for i, lane in enumerate(self.lanes):
            for v in lane:
                rows.append(f"{i}:{v.vid}:{v.pos!r}:{v.speed!r}:{v.startup_timer!r}")
        rows.append(f"spawned={self.spawned} completed={len(self.completed)}")
        rows.extend(f"c:{c.vid}:{c.completion_time!r}" for c in self.completed)
        rows.extend(f"r:{r!r}" for r in self._decision_rewards)
        return "\n".join(rows)
