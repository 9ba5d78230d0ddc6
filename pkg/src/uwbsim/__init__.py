"""Behavioural simulator for a clip-and-gate UWB transmitter link.

The transmitter clips a driven LC tank at its peaks to form sub-nanosecond
pulses, gates them with on-off keyed data aligned by a delay-locked loop, and
radiates them through a band-limited antenna. Channel, receiver and the
inductive power link are modelled at the behavioural level.
"""
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario
from .runner import LinkReport, run_scenario, sweep, write_report

__all__ = ["Scenario", "ScenarioError", "load_scenario", "parse_scenario",
           "LinkReport", "run_scenario", "sweep", "write_report"]
__version__ = "0.1.0"
