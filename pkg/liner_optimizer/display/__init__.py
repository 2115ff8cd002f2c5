from liner_optimizer.display.tables import (
    display_history,
    display_optimization_report,
    display_solver_stats,
    display_spectrum,
    display_validation_summary,
)

__all__ = [
    "display_history",
    "display_spectrum",
    "display_validation_summary",
    "display_optimization_report",
    "display_solver_stats",
]
