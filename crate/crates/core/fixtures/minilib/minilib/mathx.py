"""Numeric helpers."""


def clamp(x, lo, hi):
    """Limit x to the closed interval [lo, hi]."""
    if lo > hi:
        raise ValueError("empty interval")
    return max(lo, min(x, hi))


def lerp(a, b, t):
    """Linear interpolation between a and b."""
    return a + (b - a) * t


def mean(values):
    """Arithmetic mean of a non-empty sequence."""
    total = 0.0
    count = 0
    for v in values:
        total += v
        count += 1
    if count == 0:
        raise ValueError("mean of empty sequence")
    return total / count


def scale_all(values, factor):
    """Multiply every value by factor."""
    out = []
    for v in values:
        out.append(v * factor)
    return out


class RunningStats:
    """Incremental count and mean."""

    def __init__(self):
        self.count = 0
        self.total = 0.0

    def push(self, x):
        self.count += 1
        self.total += x
        return self.count

    def average(self):
        if self.count == 0:
            return 0.0
        return self.total / self.count
