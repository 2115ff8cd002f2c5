from typing import List, Sequence

from tabulate import tabulate


# Terminal colors
class Colors:
    HEADER = "\033[95m"
    CYAN = "\033[96m"
    GREEN = "\033[92m"
    YELLOW = "\033[93m"
    RED = "\033[91m"
    ENDC = "\033[0m"
    BOLD = "\033[1m"

    @classmethod
    def colorize(cls, text: str, color: str) -> str:
        return f"{color}{text}{cls.ENDC}" if color else text


STATUS_COLORS = {
    "RUNNING": Colors.CYAN,
    "CONVERGED_GRADIENT": Colors.GREEN,
    "CONVERGED_OBJECTIVE": Colors.GREEN,
    "CONVERGED_STEP": Colors.GREEN,
    "MAX_ITERATIONS": Colors.YELLOW,
    "LINE_SEARCH_FAILED": Colors.RED,
}


def format_float(value: float, digits: int = 6) -> str:
    """Compact scientific form for values far from 1, fixed point otherwise."""
    if value is None:
        return "-"
    magnitude = abs(value)
    if magnitude != 0 and (magnitude < 1e-3 or magnitude >= 1e5):
        return f"{value:.{digits - 2}e}"
    return f"{value:.{digits}f}"


def format_impedance(xi_r: float, xi_i: float) -> str:
    sign = "-" if xi_i < 0 else "+"
    return f"{xi_r:.4f} {sign} {abs(xi_i):.4f}i"


def create_table(headers: Sequence[str], data: List[List[str]], title: str = "") -> None:
    """Create and print a formatted table with an optional title."""
    if title:
        print(f"\n{Colors.BOLD}{title}:{Colors.ENDC}")
    if not data:
        print(f"{Colors.YELLOW}No data to display.{Colors.ENDC}")
        return
    print(tabulate(data, headers=headers, tablefmt="fancy_grid"))


def display_section(title: str) -> None:
    print(f"\n{Colors.BOLD}{Colors.HEADER}=== {title} ==={Colors.ENDC}\n")
