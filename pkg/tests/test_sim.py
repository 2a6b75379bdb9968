import math

import numpy as np
import pytest

from ugatlab.sim import (
    ActionError,
    DemandSchedule,
    IntersectionLayout,
    LifecycleError,
    PHASES,
    SCENARIOS,
    SimConfig,
    TrafficSim,
    generate_demand,
    load_demand,
    movement_index,
    movements_compatible,
    save_demand,
)
from ugatlab.sim.engine import Vehicle
from ugatlab.sim.layout import ALL_RED


def make_sim(params="Default", demand=None, **cfg):
    if isinstance(params, str):
        params = SCENARIOS[params]
    demand = demand if demand is not None else DemandSchedule(arrivals=())
    return TrafficSim(IntersectionLayout(), params, demand, SimConfig(**cfg))


def put_vehicle(sim, lane, pos, speed, vid=900):
    sim.lanes[lane].append(Vehicle(vid, lane, pos, speed, sim.time))
    sim.spawned += 1


# --- layout -------------------------------------------------------------


def test_every_phase_is_conflict_free_and_exactly_eight():
    assert len(PHASES) == 8
    for permitted in PHASES:
        moves = sorted(permitted)
        for i, a in enumerate(moves):
            for b in moves[i + 1 :]:
                assert movements_compatible(a, b), (a, b)


def test_right_turns_always_permitted():
    for permitted in PHASES:
        for approach in "NESW":
            assert movement_index(approach, "right") in permitted


# --- reset & observe ------------------------------------------------------


def test_reset_returns_empty_state_with_phase_zero():
    sim = make_sim()
    state = sim.reset()
    assert state.shape == (20,)
    assert np.all(state[:12] == 0)
    np.testing.assert_array_equal(state[12:], [1, 0, 0, 0, 0, 0, 0, 0])


def test_first_arrival_at_time_zero_enters_on_first_tick():
    demand = DemandSchedule(arrivals=((0.0, 5),))
    sim = make_sim(demand=demand)
    sim._tick(PHASES[0])
    assert sim.spawned == 1
    assert len(sim.lanes[5]) == 1
    sim2 = make_sim(demand=demand)
    state, _, _ = sim2.step(0)
    assert state[5] == 1.0


def test_observe_matches_roster_scan_mid_episode():
    demand = generate_demand(2000, 300, seed=3)
    sim = make_sim(demand=demand, episode_length=300.0)
    rng = np.random.default_rng(0)
    for _ in range(15):
        sim.step(int(rng.integers(8)))
    state = sim.observe()
    for lane in range(12):
        assert state[lane] == len(sim.lanes[lane])


def test_observe_counts_placed_vehicles():
    sim = make_sim()
    for k in range(3):
        put_vehicle(sim, 0, 10.0 + 10 * k, 0.0, vid=k)
    assert sim.observe()[0] == 3.0


# --- determinism -----------------------------------------------------------


def test_same_inputs_replay_byte_identically():
    demand = generate_demand(2000, 600, seed=11)
    actions = np.random.default_rng(4).integers(8, size=60)
    sigs = []
    for _ in range(2):
        sim = make_sim("V1", demand=demand, episode_length=600.0)
        for a in actions:
            sim.step(int(a))
            if sim.done:
                break
        sigs.append(sim.state_signature())
    assert sigs[0] == sigs[1]


# --- step & reward ----------------------------------------------------------


def test_empty_network_reward_zero():
    sim = make_sim()
    _, reward, _ = sim.step(0)
    assert reward == 0.0


def test_single_vehicle_stopped_at_red_gives_reward_minus_one():
    sim = make_sim()
    lane = movement_index("E", "through")  # red under phase 0
    put_vehicle(sim, lane, 299.95, 0.0)
    _, reward, _ = sim.step(0)
    assert reward == -1.0
    assert len(sim.lanes[lane]) == 1  # held at the line, not completed


def test_action_validation_and_lifecycle():
    sim = make_sim(episode_length=10.0)
    with pytest.raises(ActionError):
        sim.step(8)
    _, _, done = sim.step(0)
    assert done
    with pytest.raises(LifecycleError):
        sim.step(0)


def test_phase_change_inserts_all_red_interlude():
    sim = make_sim()
    lane = movement_index("E", "through")
    put_vehicle(sim, lane, 299.95, 0.0)
    # switching to the EW phase: 3 s all-red then 7 s green discharges the car
    sim.step(2)
    assert len(sim.lanes[lane]) == 0
    assert len(sim.completed) == 1
    assert not sim.signal_violations


# --- kinematics ---------------------------------------------------------------


def test_rest_to_speed_under_green_default_accel():
    sim = make_sim("Default")
    lane = movement_index("N", "through")
    put_vehicle(sim, lane, 50.0, 0.0)
    sim._tick(PHASES[0])
    veh = sim.lanes[lane][0]
    assert veh.speed == pytest.approx(2.60)
    assert veh.pos == pytest.approx(50.0 + 2.60)


def test_red_far_from_stop_line_cruises_at_max_speed():
    sim = make_sim("Default")
    lane = movement_index("E", "through")  # red under phase 0
    put_vehicle(sim, lane, 0.0, 13.89)
    sim._tick(PHASES[0])
    assert sim.lanes[lane][0].speed == pytest.approx(13.89)


def test_pinned_vehicle_arms_startup_timer():
    sim = make_sim("V1")
    lane = movement_index("N", "through")
    put_vehicle(sim, lane, 299.95, 0.0)
    sim._tick(ALL_RED)
    veh = sim.lanes[lane][0]
    assert veh.speed == 0.0
    assert veh.startup_timer == pytest.approx(0.50)


def test_startup_delay_waits_then_uses_remaining_fraction():
    # V1: 0.5 s standstill then accel for the remaining 0.5 s of the tick
    sim = make_sim("V1")
    lane = movement_index("N", "through")
    put_vehicle(sim, lane, 150.0, 0.0)
    sim.lanes[lane][0].startup_timer = 0.50  # armed while previously pinned
    sim._tick(PHASES[0])  # green, path open
    veh = sim.lanes[lane][0]
    assert veh.speed == pytest.approx(1.00 * 0.5)
    assert veh.pos == pytest.approx(150.0 + 0.5)


def test_startup_delay_v2_slower_than_v1():
    speeds = {}
    for name in ("V1", "V2"):
        sim = make_sim(name)
        lane = movement_index("N", "through")
        put_vehicle(sim, lane, 150.0, 0.0)
        sim.lanes[lane][0].startup_timer = SCENARIOS[name].startup_delay
        sim._tick(PHASES[0])
        speeds[name] = sim.lanes[lane][0].speed
    assert speeds["V2"] == pytest.approx(1.00 * 0.25)
    assert speeds["V2"] < speeds["V1"]


def scalar_requeue_oracle(positions, speeds, params, ticks, dt=1.0, stop_line=300.0, lane_open=True):
    # independent re-simulation of the documented update rule for one lane;
    # starts from the pinned state (startup timers armed), drops crossers
    cars = [
        {"vid": k, "pos": p, "vel": v, "timer": params.startup_delay}
        for k, (p, v) in enumerate(zip(positions, speeds))
    ]
    clearance = params.vehicle_length + params.min_gap
    hist = []
    for _ in range(ticks):
        leader_stop = math.inf
        crossed = []
        for car in cars:
            stop_at = leader_stop
            if not lane_open and stop_line < stop_at:
                stop_at = stop_line
            d = stop_at - car["pos"]
            if d <= 0.1:
                v_new = 0.0
                car["timer"] = params.startup_delay
            elif car["vel"] <= 0.0 and car["timer"] > 0.0:
                if car["timer"] >= dt:
                    car["timer"] -= dt
                    v_new = 0.0
                else:
                    free = dt - car["timer"]
                    car["timer"] = 0.0
                    v_new = min(params.accel * free, params.max_speed)
                    if d != math.inf:
                        bd = params.decel * dt
                        v_new = min(v_new, -bd + math.sqrt(bd * bd + 2 * params.decel * d))
            elif d == math.inf:
                v_new = min(car["vel"] + params.accel * dt, params.max_speed)
            else:
                desired = car["vel"] * car["vel"] / (2 * d)
                if desired <= params.decel:
                    bd = params.decel * dt
                    safe = -bd + math.sqrt(bd * bd + 2 * params.decel * d)
                    v_new = min(car["vel"] + params.accel * dt, params.max_speed, safe)
                else:
                    v_new = max(car["vel"] - min(desired, params.emergency_decel) * dt, 0.0)
            car["vel"] = v_new
            car["pos"] += v_new * dt
            leader_stop = car["pos"] - clearance
            if lane_open and car["pos"] >= stop_line:
                crossed.append(car["vid"])
        cars = [c for c in cars if c["vid"] not in crossed]
        hist.append({c["vid"]: (c["pos"], c["vel"]) for c in cars})
    return hist


def test_two_vehicle_queue_discharge_matches_scalar_oracle():
    params = SCENARIOS["V1"]
    sim = make_sim("V1")
    lane = movement_index("N", "through")
    starts = [(299.95, 0.0), (299.95 - 7.5, 0.0)]
    for k, (pos, speed) in enumerate(starts):
        put_vehicle(sim, lane, pos, speed, vid=k)
    sim._tick(ALL_RED)  # arm both startup timers at the stop points
    expected = scalar_requeue_oracle(
        [p for p, _ in starts], [s for _, s in starts], params, ticks=10
    )
    for tick in range(10):
        sim._tick(PHASES[0])
        live = {v.vid: v for v in sim.lanes[lane]}
        assert set(live) == set(expected[tick])
        for vid, (pos, vel) in expected[tick].items():
            assert live[vid].pos == pytest.approx(pos, abs=1e-9)
            assert live[vid].speed == pytest.approx(vel, abs=1e-9)


def test_min_gap_never_violated_during_discharge():
    demand = generate_demand(3000, 600, seed=9)
    for name in ("Default", "V4"):
        sim = make_sim(name, demand=demand, episode_length=600.0)
        rng = np.random.default_rng(1)
        while not sim.done:
            sim.step(int(rng.integers(8)))
        assert sim.gap_violations == []


# --- metrics -------------------------------------------------------------------


def test_unimpeded_vehicle_att_equals_free_flow_and_zero_delay():
    demand = DemandSchedule(arrivals=((0.0, movement_index("N", "through")),))
    sim = make_sim("Default", demand=demand, episode_length=60.0)
    while not sim.done:
        sim.step(0)  # N-through stays green
    record = sim.finalize_metrics()
    free_flow = 300.0 / 13.89
    assert record.tp == 1
    assert record.att == pytest.approx(free_flow, abs=1e-9)
    assert record.delay == pytest.approx(0.0, abs=1e-9)
    assert record.delay_seconds == pytest.approx(0.0, abs=1e-9)


def test_no_vehicles_reports_zeros():
    sim = make_sim(episode_length=20.0)
    while not sim.done:
        sim.step(0)
    record = sim.finalize_metrics()
    assert record.tp == 0
    assert record.att == 0.0
    assert record.spawned == 0


def test_finalize_before_done_raises():
    sim = make_sim()
    with pytest.raises(LifecycleError):
        sim.finalize_metrics()


def replay_metrics(rewards, queues, completions, free_flow):
    # scalar recomputation from logged per-decision and per-vehicle rows
    att = sum(c[1] - c[0] for c in completions) / len(completions) if completions else 0.0
    delay = (
        sum(1.0 - free_flow / (c[1] - c[0]) for c in completions) / len(completions)
        if completions
        else 0.0
    )
    return (
        att,
        len(completions),
        sum(rewards) / len(rewards),
        sum(queues) / len(queues),
        delay,
    )


def test_fifty_vehicle_episode_metrics_match_log_replay():
    demand = generate_demand(2000, 120, seed=21)
    sim = make_sim("Default", demand=demand, episode_length=400.0)
    rewards, queues = [], []
    rng = np.random.default_rng(2)
    while not sim.done:
        _, r, _ = sim.step(int(rng.integers(8)))
        # reward must equal -(queued vehicles) recomputed from the roster
        roster_queue = sum(
            sum(1 for v in lane if v.speed < sim.config.queue_speed_threshold)
            for lane in sim.lanes
        )
        assert r == -float(roster_queue)
        rewards.append(r)
        queues.append(-r)
    record = sim.finalize_metrics()
    completions = [(c.spawn_time, c.completion_time) for c in sim.completed]
    assert len(completions) >= 50
    att, tp, reward_mean, queue_mean, delay = replay_metrics(
        rewards, queues, completions, 300.0 / 13.89
    )
    assert record.att == pytest.approx(att, abs=1e-9)
    assert record.tp == tp
    assert record.reward_mean == pytest.approx(reward_mean, abs=1e-9)
    assert record.queue_mean == pytest.approx(queue_mean, abs=1e-9)
    assert record.delay == pytest.approx(delay, abs=1e-9)


def test_conservation_holds_across_a_congested_episode():
    demand = generate_demand(4000, 900, seed=5)
    sim = make_sim("V4", demand=demand, episode_length=900.0)
    while not sim.done:
        sim.step(0)  # starve most lanes to force backlog and queues
    active = sum(len(lane) for lane in sim.lanes)
    assert sim.spawned == active + len(sim.completed)
    assert sim.finalize_metrics().tp <= sim.spawned


# --- monotone congestion response -----------------------------------------------


def fixed_cycle_queue_mean(params_name, demand):
    sim = make_sim(params_name, demand=demand, episode_length=1800.0)
    k = 0
    while not sim.done:
        sim.step((k // 3) % 4)
        k += 1
    return sim.finalize_metrics().queue_mean


def test_v4_queues_at_least_default_under_fixed_cycle():
    # at saturating demand the discharge capacity binds and standing queues
    # dominate the count; light demand lets V4 hide waiting in slow crawling
    demand = generate_demand(3600, 1800, seed=31)
    assert fixed_cycle_queue_mean("V4", demand) >= fixed_cycle_queue_mean("Default", demand)


# --- demand files -----------------------------------------------------------------


def test_demand_round_trip(tmp_path):
    demand = generate_demand(2000, 300, seed=17)
    path = tmp_path / "demand.csv"
    save_demand(demand, path)
    loaded = load_demand(path)
    assert loaded == demand


def test_demand_header_is_validated(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("arrival_time_s,entry_approach,movement\n1.0,N,left\n")
    with pytest.raises(ValueError):
        load_demand(path)


def test_demand_reward_requires_positive_rate():
    with pytest.raises(ValueError):
        generate_demand(0, 100, seed=0)
