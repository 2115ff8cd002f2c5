from typing import Dict, Optional, Sequence

import numpy as np

from liner_optimizer.core.pod import cumulative_energy
from liner_optimizer.core.risk import BoxplotSummary
from liner_optimizer.display.utils import (
    STATUS_COLORS,
    Colors,
    create_table,
    display_section,
    format_float,
    format_impedance,
)
from liner_optimizer.models import IterationRecord, OptState, SolverStats


def display_history(history: Sequence[IterationRecord], title: str = "BFGS iterations") -> None:
    headers = ["ITER", "J", "|GRAD|", "XI", "ALPHA", "STEP"]
    rows = [
        [
            record.iter,
            format_float(record.J),
            format_float(record.grad_norm),
            format_impedance(record.xi_r, record.xi_i),
            format_float(record.alpha),
            format_float(record.step_len),
        ]
        for record in history
    ]
    create_table(headers, rows, title)


def display_spectrum(singular_values: np.ndarray, selected: Optional[int] = None, limit: int = 20) -> None:
    """Leading singular values with scaled values and retained energy."""
    s = np.asarray(singular_values, dtype=float)
    retained = cumulative_energy(s) if s.size else s
    rows = []
    for i in range(min(limit, s.size)):
        index = str(i + 1)
        if selected is not None and i + 1 == selected:
            index = Colors.colorize(index, Colors.GREEN)
        rows.append([index, format_float(s[i]), format_float(s[i] / s[0]), f"{retained[i]:.6f}"])
    if selected is not None and selected > limit:
        rows.append(
            [
                Colors.colorize(str(selected), Colors.GREEN),
                format_float(s[selected - 1]),
                format_float(s[selected - 1] / s[0]),
                f"{retained[selected - 1]:.6f}",
            ]
        )
    create_table(["MODE", "SINGULAR VALUE", "SCALED", "RETAINED"], rows, "POD spectrum")


def display_validation_summary(summaries: Dict[int, BoxplotSummary]) -> None:
    headers = ["N", "MEDIAN", "Q1", "Q3", "IQR", "OUTLIERS", "DRAWS"]
    rows = [
        [
            N,
            format_float(s.median),
            format_float(s.q1),
            format_float(s.q3),
            format_float(s.iqr),
            Colors.colorize(str(s.outliers), Colors.YELLOW if s.outliers else ""),
            s.count,
        ]
        for N, s in sorted(summaries.items())
    ]
    create_table(headers, rows, "ROM relative error")


def display_optimization_report(reports: Dict[str, OptState], timings: Dict[str, float]) -> None:
    """One column per run, in the layout of a convergence summary table."""
    display_section("IMPEDANCE OPTIMIZATION")
    labels = list(reports)
    rows = [
        ["optimal xi"] + [format_impedance(reports[l].xi.xi_r, reports[l].xi.xi_i) for l in labels],
        ["alpha (VaR)"] + [format_float(reports[l].alpha) for l in labels],
        ["J"] + [format_float(reports[l].J) for l in labels],
        ["iterations"] + [reports[l].iter for l in labels],
        ["PDE solves"] + [reports[l].pde_solves for l in labels],
        ["wall time [s]"] + [f"{timings.get(l, 0.0):.2f}" for l in labels],
        ["status"]
        + [Colors.colorize(reports[l].status, STATUS_COLORS[reports[l].status]) for l in labels],
    ]
    create_table([""] + labels, rows)


def display_solver_stats(stats: SolverStats, title: str = "Full-order solves") -> None:
    counts = stats.as_dict()
    create_table(["COUNTER", "VALUE"], [[name, value] for name, value in counts.items()], title)
