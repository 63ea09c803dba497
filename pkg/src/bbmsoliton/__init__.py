"""Soliton-like asymptotic solutions of the variable-coefficient BBM equation.

    a u_t + b u_x + c u u_x - eps^2 u_xxt = 0,  a = a0 + eps a1 (same for b, c).
"""

__version__ = "0.1.0"

from .assemble import AsymptoticSolution, build_solution, eval_solution  # noqa: E402
from .errors import BBMError  # noqa: E402
from .scenario import Scenario, load_scenario, load_scenario_file, scenario_from_mapping  # noqa: E402
from .verify import direct_solve, order_sweep, residual, residual_report  # noqa: E402

__all__ = [
    "AsymptoticSolution", "BBMError", "Scenario", "build_solution", "direct_solve",
    "eval_solution", "load_scenario", "load_scenario_file", "order_sweep", "residual",
    "residual_report", "scenario_from_mapping", "__version__",
]
