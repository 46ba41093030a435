"""Coefficient fields and perturbation directions supported on the patch.

Volume fields (potential ``q``, conformal factor ``c``) are plain arrays with
one value per mesh node; boundary fields (impedances) are arrays with one
value per boundary-cycle node.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import BoundaryMesh, Mesh, SigmaPatch


def rng_stream(seed: int, label: str) -> np.random.Generator:
    """Independent PCG64 stream keyed by ``(seed, label)``.

    PCG64 is numpy's 128-bit-state permuted congruential generator; the label
    is hashed with SHA-256 so streams do not depend on Python's hash seed.
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), key])
    return np.random.Generator(np.random.PCG64(ss))


def smooth_profile(t) -> np.ndarray:
    """``exp(1 - 1/(1 - t^2))`` on ``|t| < 1``, zero elsewhere; peak value 1."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def hat_profile(t) -> np.ndarray:
    return np.clip(1.0 - np.abs(np.asarray(t, dtype=float)), 0.0, None)


# ---------------------------------------------------------------- presets

def _eval_preset(spec, coords: np.ndarray, name: str) -> np.ndarray:
    n = coords.shape[0]
    if isinstance(spec, (int, float)):
        return np.full(n, float(spec))
    if isinstance(spec, (list, tuple, np.ndarray)):
        arr = np.asarray(spec, dtype=float)
        if arr.shape != (n,):
            raise ConfigError(f"{name}: expected {n} node values, got shape {arr.shape}")
        return arr
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{name}: expected a number, a node array or a preset object")
    kind = spec["kind"]
    try:
        if kind == "constant":
            return np.full(n, float(spec["v"]))
        if kind == "gaussian_bump":
            center = np.atleast_1d(np.asarray(spec["center"], dtype=float))
            if center.size != coords.shape[1]:
                raise ConfigError(f"{name}.center: expected {coords.shape[1]} coordinates")
            width = float(spec["width"])
            if width <= 0:
                raise ConfigError(f"{name}.width must be positive")
            r2 = ((coords - center) ** 2).sum(axis=1)
            return float(spec.get("base", 0.0)) + float(spec["height"]) * np.exp(-r2 / (2 * width**2))
        if kind == "values":
            return _eval_preset(list(spec["values"]), coords, name)
    except KeyError as exc:
        raise ConfigError(f"{name}: preset {kind!r} is missing {exc.args[0]!r}") from None
    raise ConfigError(f"{name}: unknown preset {kind!r}")


def volume_field(spec, mesh: Mesh, name: str = "field") -> np.ndarray:
    """Evaluate a preset (``constant``, ``gaussian_bump``) or node array on the mesh.

    ``gaussian_bump`` is ``base + height * exp(-|x - center|^2 / (2 width^2))``.
    """
    values = _eval_preset(spec, mesh.coords, name)
    if not np.all(np.isfinite(values)):
        raise ConfigError(f"{name}: non-finite values")
    return values


def boundary_field(spec, bmesh: BoundaryMesh, name: str = "omega") -> np.ndarray:
    values = _eval_preset(spec, bmesh.coords, name)
    if not np.all(np.isfinite(values)):
        raise ConfigError(f"{name}: non-finite values")
    return values


def check_perturbation(p, sigma: SigmaPatch) -> None:
    """Raise if the boundary field ``p`` is nonzero outside the patch."""
    p = np.asarray(p)
    outside = ~sigma.mask()
    if np.any(p[outside] != 0):
        raise ConfigError("perturbation is not supported in sigma")


# ------------------------------------------------------------ bump bases

@dataclass(frozen=True, eq=False)
class BumpBasis:
    """Nonnegative boundary fields supported in the patch.

    ``fields`` has shape ``(J, n_boundary)``; ``centers`` and ``widths`` are
    arc coordinates (half-width of the support).
    """

    sigma: SigmaPatch
    fields: np.ndarray
    centers: np.ndarray
    widths: np.ndarray
    shape: str

    def __len__(self):
        return self.fields.shape[0]

    def __iter__(self):
        return iter(self.fields)

    def collocation(self) -> np.ndarray:
        """``J x |sigma|`` matrix of bump values on the patch nodes."""
        return self.fields[:, self.sigma.positions]

    def combine(self, coeffs) -> np.ndarray:
        return np.asarray(coeffs, dtype=float) @ self.fields


def bump_basis(sigma: SigmaPatch, J: int, shape: str = "hat") -> BumpBasis:
    """Equispaced overlapping bumps on the patch.

    Bump centres are spread evenly over the patch arc with the first and last
    on the end nodes.  ``hat`` bumps are piecewise linear with half-width
    equal to the centre spacing, so they sum to exactly one on the patch and
    ``J == |sigma|`` gives the nodal basis.  ``smooth`` bumps use
    :func:`smooth_profile` with half-width 1.5 spacings and are renormalized
    by their sum, which keeps them compactly supported and nonnegative while
    summing to one.
    """
    J = int(J)
    m = sigma.size
    if J < 2 or J > m:
        raise ConfigError(f"bump basis size J={J} must satisfy 2 <= J <= |sigma|={m}")
    if shape not in ("hat", "smooth"):
        raise ConfigError(f"unknown bump shape {shape!r}")

    s = sigma.arc
    if J == m:
        # nodal basis: exact even when nodes are not equispaced along the arc
        fields = np.zeros((J, sigma.bmesh.size))
        fields[np.arange(J), sigma.positions] = 1.0
        gaps = np.diff(s)
        widths = np.concatenate([[gaps[0]], np.maximum(gaps[:-1], gaps[1:]), [gaps[-1]]]) if m > 1 else np.ones(1)
        return BumpBasis(sigma, fields, s.copy(), widths, shape)

    centers = np.linspace(s[0], s[-1], J)
    spacing = centers[1] - centers[0]
    if shape == "hat":
        local = hat_profile((s[None, :] - centers[:, None]) / spacing)
        widths = np.full(J, spacing)
    else:
        width = 1.5 * spacing
        local = smooth_profile((s[None, :] - centers[:, None]) / width)
        local /= local.sum(axis=0, keepdims=True)
        widths = np.full(J, width)
    fields = np.zeros((J, sigma.bmesh.size))
    fields[:, sigma.positions] = local
    return BumpBasis(sigma, fields, centers, widths, shape)


def random_bump(sigma: SigmaPatch, seed: int, amplitude: float, label: str = "random_bump") -> np.ndarray:
    """Smooth bump at a seeded random location inside the patch.

    Centre and half-width are drawn from :func:`rng_stream`; the result is
    rescaled so that its maximum equals ``amplitude`` exactly and it vanishes
    on the first and last patch nodes.
    """
    if not amplitude > 0:
        raise ConfigError(f"amplitude must be positive, got {amplitude}")
    s = sigma.arc
    lo, hi = s[0], s[-1]
    span = hi - lo
    if sigma.size < 3 or span <= 0:
        # too few nodes for an interior bump: use the patch indicator
        return sigma.extend(np.full(sigma.size, float(amplitude)))
    rng = rng_stream(seed, label)
    step = span / (sigma.size - 1)
    for _ in range(64):
        half = rng.uniform(0.1, 0.4) * span
        half = max(half, 1.5 * step)
        center = rng.uniform(lo + half, hi - half) if hi - lo > 2 * half else 0.5 * (lo + hi)
        vals = smooth_profile((s - center) / half)
        vals[0] = vals[-1] = 0.0
        if vals.max() > 0:
            break
    peak = int(np.argmax(vals))
    vals *= amplitude / vals[peak]
    vals[peak] = amplitude
    return sigma.extend(vals)
