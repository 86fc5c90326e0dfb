"""Plain-text reports."""

from minilib import mathx
from minilib.textutil import title_case, truncate


def format_row(label, value, width=20):
    """One aligned report line."""
    name = truncate(title_case(label), width)
    return name.ljust(width) + " " + str(value)


def summary(values):
    """Mean and range of values as report lines."""
    rows = [format_row("count", len(values))]
    if values:
        rows.append(format_row("mean", round(mathx.mean(values), 3)))
        rows.append(format_row("range", max(values) - min(values)))
    return rows
