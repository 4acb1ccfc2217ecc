"""Registered easing functions.

Every entry maps [0,1] onto [0,1], fixes both endpoints, and is monotone;
the acceptance suite checks those properties on a dense grid. Linear is the
default when a transition's control omits easing.
"""

from __future__ import annotations


def _in_out(f):
    def g(t: float) -> float:
        if t < 0.5:
            return f(2.0 * t) / 2.0
        return 1.0 - f(2.0 * (1.0 - t)) / 2.0

    return g


EASING = {
    "linear": lambda t: t,
    "ease-in-quad": lambda t: t * t,
    "ease-out-quad": lambda t: 1.0 - (1.0 - t) ** 2,
    "ease-in-out-quad": _in_out(lambda t: t * t),
    "ease-in-cubic": lambda t: t**3,
    "ease-out-cubic": lambda t: 1.0 - (1.0 - t) ** 3,
    "ease-in-out-cubic": _in_out(lambda t: t**3),
}

DEFAULT_EASING = "linear"
