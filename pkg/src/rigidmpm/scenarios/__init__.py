"""Benchmark scenarios, configuration, analytic references and result writers."""
from .analytic import analytic_cube_stress, analytic_sphere_position, l2_stress_error
from .config import load_config, validate_config
from .runner import run_scenario
from .templates import template

__all__ = ["analytic_cube_stress", "analytic_sphere_position", "l2_stress_error", "load_config",
           "validate_config", "run_scenario", "template"]
