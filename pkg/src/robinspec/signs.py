"""Sign continuation of a trace known only in absolute value.

Given ``xi = |psi|`` sampled along a connected boundary arc, the sign of
``psi`` is fixed at the largest sample and carried along the arc.  At every
zero the leading behaviour is ``xi ~ a |s - s_r|^m`` with a finite integer
order ``m``; the sign changes across the zero exactly when ``m`` is odd.
The order is read off as the log-log slope of ``xi`` on either side.

Zeros are found in two ways:

* *bands*: maximal runs of samples below ``zero_tol * max(xi)``;
* *dips*: interior local minima below ``dip_tol * max(xi)`` that are the
  smallest sample within ``fit_window`` nodes, for zeros falling between
  grid nodes.

For each zero the root location ``s_r`` is chosen (within the band, or on
either side of the dip node) to minimize the misfit of a common-slope
power law on both sides.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigError, OrderAmbiguityError

ORDER_TOL = 0.25


@dataclass
class ZeroZone:
    kind: str  # "band" or "dip"
    first: int
    last: int
    root: float = float("nan")
    order_left: float = float("nan")
    order_right: float = float("nan")
    order: int = 0
    flip: bool = False

    def to_dict(self) -> dict:
        return {"kind": self.kind, "first": self.first, "last": self.last, "root": self.root,
                "order_left": self.order_left, "order_right": self.order_right,
                "order": self.order, "flip": self.flip}


@dataclass
class SignResult:
    values: np.ndarray
    anchor: int
    zones: list = field(default_factory=list)
    band_mask: np.ndarray | None = None

    @property
    def n_flips(self) -> int:
        return sum(z.flip for z in self.zones)


def _runs(mask: np.ndarray):
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    ends = np.concatenate([idx[breaks], [idx[-1]]])
    return list(zip(starts.tolist(), ends.tolist()))


def _side_points(s, usable, root, lo, hi, window, left):
    """Up to ``window`` usable samples in ``[lo, hi]`` nearest to ``root`` on one side."""
    idx = np.arange(lo, hi + 1)
    idx = idx[usable[idx]]
    if left:
        return idx[s[idx] < root][-window:]
    return idx[s[idx] > root][:window]


def _joint_misfit(s, logxi, root, left, right):
    # log xi = c_side + m log|s - root|, common m, separate intercepts
    x = np.concatenate([np.log(root - s[left]), np.log(s[right] - root)])
    y = np.concatenate([logxi[left], logxi[right]])
    ind = np.concatenate([np.ones(left.size), np.zeros(right.size)])
    A = np.column_stack([x, ind, 1.0 - ind])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(np.sum((A @ coef - y) ** 2))


def _slope(s, logxi, root, idx):
    if idx.size < 2:
        return float("nan")
    x = np.log(np.abs(s[idx] - root))
    return float(np.polyfit(x, logxi[idx], 1)[0])


def recover_sign(xi, arc, zero_tol: float = 1e-6, fit_window: int = 4,
                 dip_tol: float = 0.1) -> SignResult:
    """Signed trace ``psi`` with ``|psi| == xi`` and ``psi(anchor) > 0``.

    Parameters
    ----------
    xi : array_like
        Nonnegative samples along the arc.
    arc : array_like
        Strictly increasing arc coordinates of the samples.
    zero_tol : float
        Relative threshold defining zero bands.
    fit_window : int
        Samples per side used in the log-log order fit (at least 2).
    dip_tol : float
        Relative depth below which an isolated local minimum is examined as
        a possible sub-grid zero.

    Raises
    ------
    OrderAmbiguityError
        If a side's order estimate is more than 0.25 from an integer, the
        two sides disagree in parity, or a side has too few samples.
    """
    xi = np.asarray(xi, dtype=float)
    s = np.asarray(arc, dtype=float)
    if xi.shape != s.shape or xi.ndim != 1:
        raise ConfigError("xi and arc must be 1-D arrays of equal length")
    if np.any(xi < 0):
        raise ConfigError("xi must be nonnegative")
    if xi.size > 1 and np.any(np.diff(s) <= 0):
        raise ConfigError("arc coordinates must be strictly increasing")
    top = float(xi.max(initial=0.0))
    if not top > 0:
        raise ConfigError("xi vanishes identically; no anchor for the sign")
    if fit_window < 2:
        raise ConfigError("fit_window must be at least 2")

    m = xi.size
    anchor = int(np.argmax(xi))
    small = xi < zero_tol * top
    zones: list[ZeroZone] = []
    for a, b in _runs(small):
        if a == 0 or b == m - 1:
            continue  # touches the arc end: nothing to propagate across
        zones.append(ZeroZone("band", a, b))
    last_dip = -2
    for i in range(1, m - 1):
        if small[i - 1] or small[i] or small[i + 1] or last_dip == i - 1:
            continue
        if not (xi[i] <= xi[i - 1] and xi[i] <= xi[i + 1] and xi[i] < dip_tol * top):
            continue
        if xi[i] > xi[max(0, i - fit_window):i + fit_window + 1].min():
            continue
        zones.append(ZeroZone("dip", i, i))
        last_dip = i
    zones.sort(key=lambda z: z.first)

    logxi = np.full(m, -np.inf)
    pos = xi > 0
    logxi[pos] = np.log(xi[pos])
    usable = pos & ~small
    for n, z in enumerate(zones):
        lo = zones[n - 1].last + 1 if n > 0 else 0
        hi = zones[n + 1].first - 1 if n + 1 < len(zones) else m - 1
        # the root lies strictly between the zone's outer neighbours
        a, b = s[z.first - 1], s[z.last + 1]

        def sides(r):
            return (_side_points(s, usable, r, lo, hi, fit_window, True),
                    _side_points(s, usable, r, lo, hi, fit_window, False))

        def misfit(r):
            left, right = sides(r)
            if left.size == 0 or right.size == 0 or left.size + right.size < 3:
                return np.inf
            return _joint_misfit(s, logxi, r, left, right)

        # the misfit is singular at a usable sample, so a dip node splits the search
        brackets = [(a, s[z.first]), (s[z.first], b)] if z.kind == "dip" else [(a, b)]
        best_x, best_f = 0.5 * (s[z.first] + s[z.last]), np.inf
        for lo_s, hi_s in brackets:
            span = hi_s - lo_s
            res = minimize_scalar(misfit, bounds=(lo_s + 1e-9 * span, hi_s - 1e-9 * span),
                                  method="bounded", options={"xatol": 1e-10 * span})
            if res.fun < best_f:
                best_x, best_f = float(res.x), float(res.fun)
        z.root = best_x
        left, right = sides(z.root)
        z.order_left = _slope(s, logxi, z.root, left)
        z.order_right = _slope(s, logxi, z.root, right)
        est = [z.order_left, z.order_right]
        if any(not np.isfinite(v) for v in est):
            raise OrderAmbiguityError(
                f"zero near s={z.root:.6g}: too few samples to estimate its order", z.to_dict())
        rounded = [int(round(v)) for v in est]
        if any(abs(v - r) > ORDER_TOL for v, r in zip(est, rounded)) or (rounded[0] - rounded[1]) % 2:
            raise OrderAmbiguityError(
                f"zero near s={z.root:.6g}: order estimates {est[0]:.3f} / {est[1]:.3f} "
                "are not a consistent integer", z.to_dict())
        z.flip = bool(rounded[0] % 2)
        z.order = int(round(0.5 * (est[0] + est[1])))
        if z.order % 2 != rounded[0] % 2:
            z.order = rounded[0]

    flips = np.zeros(m, dtype=int)
    for z in zones:
        if z.flip:
            flips += s > z.root
    sign = np.where(flips % 2 == 0, 1.0, -1.0)
    sign *= sign[anchor]
    band_mask = np.zeros(m, dtype=bool)
    for z in zones:
        if z.kind == "band":
            band_mask[z.first:z.last + 1] = True
    return SignResult(sign * xi, anchor, zones, band_mask)
