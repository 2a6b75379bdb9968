"""Sim-to-real laboratory for RL traffic signal control.

Twin configurable single-intersection simulators stand in for simulation
and reality; the harness trains DQN policies, grounds their actions through
learned forward/inverse dynamics models with uncertainty gating, and
measures the transfer performance gap across five traffic metrics.
"""

__version__ = "0.1.0"
