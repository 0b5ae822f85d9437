"""Type-agnostic array math used by code that runs on plain ndarrays, dual
numbers, or tape variables alike.

Dispatch is by duck typing: differentiable containers expose ``tanh``,
``square``, ``sqrt``, ``sum`` methods and a ``value`` attribute; bare numpy
inputs fall through to the numpy ufuncs.
"""

from __future__ import annotations

import numpy as np


def value_of(x):
    """Strip the derivative channel, if any, and return the plain payload."""
    return x.value if hasattr(x, "value") else x


def tanh(x):
    return x.tanh() if hasattr(x, "tanh") else np.tanh(x)


def square(x):
    return x.square() if hasattr(x, "square") else np.square(x)


def sqrt(x):
    return x.sqrt() if hasattr(x, "sqrt") else np.sqrt(x)


def sum_all(x):
    if hasattr(x, "sum"):
        return x.sum()
    return np.sum(x)


def row(x, i):
    """Row ``i`` of a 2-d value as a 1-d value."""
    return x.row(i) if hasattr(x, "row") else x[i]
