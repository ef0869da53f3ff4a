"""Built-in benchmark objectives, written out by hand.

The same formulas also exist as expression strings (``EXPRESSIONS``) so the
parsed and hand-written versions can be checked against each other.
"""

from math import cos, log, sin, sqrt

import numpy as np


def trig_sum(x):
    """14-variable sum of sines, cosines and squared cosines; global minimum -10."""
    x = np.asarray(x, dtype=float)
    return float(np.sum(np.sin(x[0:5])) + np.sum(np.cos(x[5:10])) + 4 * np.sum(np.cos(x[10:14]) ** 2))


def trig_sum_batch(xs):
    xs = np.asarray(xs, dtype=float)
    return (
        np.sum(np.sin(xs[:, 0:5]), axis=1)
        + np.sum(np.cos(xs[:, 5:10]), axis=1)
        + 4 * np.sum(np.cos(xs[:, 10:14]) ** 2, axis=1)
    )


def nested_sine_argument(x):
    x1, x2, x3, x4 = x[:4]
    return x1 / (x4 * cos(log(x1**2 * x2 / x3)))


def nested_sine(x):
    """Four-variable sine of a log-cosine quotient; minimum -1."""
    return sin(nested_sine_argument(x))


def long_sine_argument(x):
    (x1, x2, x3, x4, x5, x6, x7, x8, x9, x10, x11, x12, x13, x14,
     x15, x16, x17, x18, x19, x20, x21, x22, x23, x24, x25, x26, x27, x28) = x[:28]
    return (
        x1 / x2 * cos(log(x1**3 * x3 / x4)) * sin(x5 / x2)
        + cos(sqrt(x6) * x1 / x5**2)
        - x9**2 * (x10 - x11 * x1 / x4)
        + sin(x7**3 / (x1 * x3 + x4)) * cos(x8 / x3 * sin(x7))
        + cos(x12**2 - x9 * x10)
        + cos(x21 * x22 / x23 - sin(x24))
        + cos(x13 * x14) * log(x15 / x16 + x14 * x15**2 * sin(x13 * cos(x16 / x15)))
        + sin(x1**2 * x17 / x18 + cos(cos(x19 / x20)))
        + sin(x25 * x1 * sqrt(x6) * x26)
        + cos(x27 * x28**2)
        - x3 * log(x27 * x28 / x21 - sin(x5 * x11))
    )


def long_sine(x):
    """28-variable sine of a long composite expression; minimum -1."""
    return sin(long_sine_argument(x))


EXPRESSIONS = {
    "trig_sum": (
        "sin(x1)+sin(x2)+sin(x3)+sin(x4)+sin(x5)"
        "+cos(x6)+cos(x7)+cos(x8)+cos(x9)+cos(x10)"
        "+4*(cos(x11)^2+cos(x12)^2+cos(x13)^2+cos(x14)^2)"
    ),
    "nested_sine": "sin(x1/(x4*cos(log(x1^2*x2*x3^(-1)))))",
    "long_sine": (
        "sin(x1*x2^(-1)*cos(log(x1^3*x3/x4))*sin(x5/x2)"
        " + cos(x6^(1/2)*x1*x5^(-2)) - x9^2*(x10 - x11*x1*x4^(-1))"
        " + sin(x7^3/(x1*x3 + x4))*cos(x8*x3^(-1)*sin(x7))"
        " + cos(x12^2 - x9*x10) + cos(x21*x22/x23 - sin(x24))"
        " + cos(x13*x14)*log(x15/x16 + x14*x15^2*sin(x13*cos(x16/x15)))"
        " + sin(x1^2*x17/x18 + cos(cos(x19/x20)))"
        " + sin(x25*x1*x6^(1/2)*x26) + cos(x27*x28^2)"
        " - x3*log((x27*x28/x21 - sin(x5*x11))))"
    ),
}

BUILTIN = {
    "trig_sum": (trig_sum, 14),
    "nested_sine": (nested_sine, 4),
    "long_sine": (long_sine, 28),
}
