"""Scenario-driven verification harness."""

from .config import ConfigError, Scenario, bundled_scenario, load_scenario, parse_scenario
from .manufacture import Recipe, generate_manufactured, manufactured_target
from .suites import RunReport, report_json, run_scenario

__all__ = [
    "ConfigError",
    "Recipe",
    "RunReport",
    "Scenario",
    "bundled_scenario",
    "generate_manufactured",
    "load_scenario",
    "manufactured_target",
    "parse_scenario",
    "report_json",
    "run_scenario",
]
