"""Closed-form references used by the tests.

Everything here is independent of the package: the only inputs are the
classical formulas for the Neumann/Robin interval and the Neumann square.
"""

import numpy as np
from scipy.optimize import bisect


def robin_interval_lambda1(h: float) -> float:
    """Lowest eigenvalue of ``-u'' = lam u`` on [0, 1], ``u'(0) + h u(0) = 0``, ``u'(1) = 0``.

    With ``u = cos(sqrt(lam) (1 - x))`` the left condition reads
    ``sqrt(lam) tan(sqrt(lam)) = -h``; for ``h > 0`` the root is negative and
    ``kappa tanh(kappa) = h`` with ``lam = -kappa^2``.
    """
    if h == 0:
        return 0.0
    if h > 0:
        kappa = bisect(lambda k: k * np.tanh(k) - h, 1e-14, 10.0 + h, xtol=1e-15)
        return -kappa * kappa
    r = bisect(lambda r: r * np.tan(r) + h, 1e-14, np.pi / 2 - 1e-14, xtol=1e-15)
    return r * r


def neumann_interval(K: int) -> np.ndarray:
    return (np.arange(K) * np.pi) ** 2


def neumann_square_distinct(count: int) -> np.ndarray:
    vals = sorted({m * m + n * n for m in range(12) for n in range(12)})
    return np.pi**2 * np.array(vals[:count], dtype=float)


# Frozen outputs of robin_interval_lambda1, recorded once from the bisection.
FROZEN_LAMBDA1 = {
    0.01: -0.010033422391646486,
    0.1: -0.10342392591415824,
    1.0: -1.4392288398906428,
    -0.5: 0.4267632438877321,
}
