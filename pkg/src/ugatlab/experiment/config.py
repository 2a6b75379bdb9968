"""Resolved configuration for one protocol run."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ugatlab.dqn import DqnConfig
from ugatlab.grounding import GroundingConfig
from ugatlab.sim import SCENARIOS, IntersectionLayout, SimConfig

ALGORITHMS = ("direct", "gat", "ugat", "ugat_static")
HEADS = ("edl", "dropout", "ensemble", "logits")

FORMAT_VERSION = 1


def _default_dqn() -> DqnConfig:
    # lane counts scaled to lane-capacity order, phase one-hot untouched
    return DqnConfig(state_scale=tuple([1.0 / 50.0] * 12 + [1.0] * 8))


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "V1"  # which variant plays the stand-in for reality
    algorithm: str = "ugat"
    head: str = "edl"
    static_alpha: float | None = None  # required when algorithm == ugat_static
    seeds: tuple[int, ...] = (1, 2, 3)
    pretrain_episodes: int = 100  # policy episodes before grounding starts
    iterations: int = 10  # grounding iterations
    epochs_per_iteration: int = 5  # policy-training episodes per iteration
    steps_per_episode: int = 120  # decision steps per training episode
    rollout_episodes: int = 2  # data-collection episodes per env per iteration
    rollout_epsilon: float = 0.05
    eval_episodes: int = 5  # held-out demand schedules for final evaluation
    direct_episodes: int = 300  # training budget of the direct-transfer baseline
    demand_vph: float = 2600.0  # binding demand; lighter loads mask the dynamics gap
    demand_seed: int = 7
    dqn: DqnConfig = field(default_factory=_default_dqn)
    grounding: GroundingConfig = field(default_factory=GroundingConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    layout: IntersectionLayout = field(default_factory=IntersectionLayout)
    out_dir: str | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; pick from {sorted(SCENARIOS)}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; pick from {ALGORITHMS}")
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}; pick from {HEADS}")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if self.algorithm == "ugat_static":
            if self.static_alpha is None:
                raise ValueError("ugat_static needs static_alpha")
            if not (0.0 <= self.static_alpha or math.isinf(self.static_alpha)):
                raise ValueError(f"static_alpha must be >= 0 or +inf: {self.static_alpha}")
        if self.algorithm != "direct":
            if self.iterations < 1 or self.epochs_per_iteration < 1:
                raise ValueError("grounding algorithms need iterations >= 1 and epochs >= 1")
        if self.steps_per_episode < 1 or self.eval_episodes < 1 or self.rollout_episodes < 1:
            raise ValueError("episode/rollout counts must be >= 1")

    @property
    def training_sim(self) -> SimConfig:
        """Training/rollout episodes run steps_per_episode decision intervals."""
        return SimConfig(
            decision_interval=self.sim.decision_interval,
            tick=self.sim.tick,
            yellow_time=self.sim.yellow_time,
            episode_length=self.steps_per_episode * self.sim.decision_interval,
            queue_speed_threshold=self.sim.queue_speed_threshold,
            seed=self.sim.seed,
        )

    @property
    def protocol_label(self) -> str:
        if self.algorithm == "ugat_static":
            return f"ugat_static_{self.static_alpha:g}"
        return self.algorithm
