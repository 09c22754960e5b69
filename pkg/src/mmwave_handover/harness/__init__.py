"""Experiment harness: scenario config, world generation, episode loop, CSV outputs."""

from mmwave_handover.harness.config import POLICIES, SimConfig, load_scenario

__all__ = ["POLICIES", "SimConfig", "load_scenario"]
