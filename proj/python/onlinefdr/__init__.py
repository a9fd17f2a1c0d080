"""Online false discovery rate control.

Simplified LORD and SAFFRON threshold rules, alpha-investing, planning-ahead
variants for batched or dependent p-values, monotone stopping wrappers, and a
Monte Carlo verification harness.
"""

from ._onlinefdr import (
    StreamMetrics,
    batch_schedule,
    check_condition_1,
    normal_cdf,
    run_procedure,
    simulate_cell,
)

__all__ = [
    "StreamMetrics",
    "batch_schedule",
    "check_condition_1",
    "normal_cdf",
    "run_procedure",
    "simulate_cell",
]
