from .scenario import FAST_CHAIN, Scenario, bundled_scenarios, load_scenario
from .simulation import Simulation, request_bound, run

__all__ = ["FAST_CHAIN", "Scenario", "Simulation", "bundled_scenarios", "load_scenario",
           "request_bound", "run"]
