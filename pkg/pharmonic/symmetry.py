"""Blow-up symmetry defects.

The defect of T_{x,r} f against a class of symmetric maps is computed with a
surrogate approximant: the best target point on every ray (homogeneous maps), on
every half-space (invariance along a hyperplane), on every meridian half-plane
(invariance along a line in three dimensions) or overall (constants). These are
exact minimizers over maps that are constant on the sampled pieces, hence upper
bounds for the infimum over the full class.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ScaleUnderresolved
from .fields import DiscreteMap
from .lattice import Point, ball_volume, node_block
from .presets import blended_map
from .energy import cell_gradient
from .schemas import SymmetryReport
from .target import Target

logger = logging.getLogger(__name__)

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


@dataclass(frozen=True)
class Quadrature:
    n_directions: int = 64
    n_radial: int = 12
    n_candidates: int = 200
    refine_passes: int = 2


def ray_directions(m: int, count: int) -> np.ndarray:
    """Quasi-uniform unit vectors: offset angles in the plane, a Fibonacci lattice in space.

    The count is rounded up to even so no direction lies on a coordinate hyperplane x_m = 0.
    """
    count += count % 2
    i = np.arange(count) + 0.5
    if m == 2:
        a = 2 * np.pi * i / count
        return np.stack([np.cos(a), np.sin(a)], axis=-1)
    z = 1.0 - 2.0 * i / count
    rho = np.sqrt(1.0 - z * z)
    phi = GOLDEN_ANGLE * np.arange(count)
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)


@lru_cache(maxsize=16)
def gauss_unit(n: int) -> Tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _check_blowup(fmap: DiscreteMap, x: np.ndarray, r: float) -> None:
    fmap.lattice.check_ball(x, r)
    if r < fmap.resolution_floor - 1e-12:
        raise ScaleUnderresolved(f"blow-up radius {r:.4g} below {fmap.resolution_floor:.4g}")


class RaySample:
    """T_{x,r} f sampled at Gauss nodes along a fixed set of rays"""

    def __init__(self, fmap: DiscreteMap, x: Point, r: float, quad: Quadrature):
        self.fmap = fmap
        self.x = np.asarray(x, dtype=np.float64)
        self.r = float(r)
        _check_blowup(fmap, self.x, self.r)
        m = fmap.lattice.dim
        self.m = m
        self.dirs = ray_directions(m, quad.n_directions)
        t, w = gauss_unit(quad.n_radial)
        pts = self.dirs[:, None, :] * t[None, :, None]
        self.values = fmap.sample((self.x + self.r * pts).reshape(-1, m)).reshape(len(self.dirs), len(t), -1)
        # average over B_1: |S^{m-1}| / |B_1| = m
        self.weights = np.broadcast_to(m / len(self.dirs) * w * t ** (m - 1), self.values.shape[:2])

    @property
    def target(self) -> Target:
        return self.fmap.target


def binned_defect(
    target: Target, values: np.ndarray, weights: np.ndarray, labels: np.ndarray, nbins: int, p: float
) -> Tuple[float, np.ndarray]:
    """Sum of w |T - c_bin|^p with c_bin the best target point of each bin"""
    dim = values.shape[-1]
    centres = np.zeros((nbins, dim))
    if p == 2:
        wsum = np.bincount(labels, weights=weights, minlength=nbins)
        for j in range(dim):
            centres[:, j] = np.bincount(labels, weights=weights * values[:, j], minlength=nbins)
        filled = wsum > 0
        centres[filled] /= wsum[filled, None]
        if target.is_sphere:
            norm = np.linalg.norm(centres, axis=-1)
            lost = filled & (norm <= 1e-12)
            for b in np.flatnonzero(lost):
                centres[b] = values[labels == b][0]
            centres[filled] = target.project(centres[filled])
    else:
        for b in range(nbins):
            mask = labels == b
            if mask.any():
                centres[b] = target.best_constant(values[mask], weights[mask], p)
    err = target.distance(values, centres[labels]) ** p
    return float(np.sum(weights * err)), centres


def _homogeneous_raw(sample: RaySample, p: float) -> Tuple[float, np.ndarray]:
    n_dir, n_rad, dim = sample.values.shape
    labels = np.repeat(np.arange(n_dir), n_rad)
    return binned_defect(sample.target, sample.values.reshape(-1, dim), sample.weights.ravel(), labels, n_dir, p)


def _constant_raw(sample: RaySample, p: float) -> Tuple[float, np.ndarray]:
    dim = sample.values.shape[-1]
    vals = sample.values.reshape(-1, dim)
    return binned_defect(sample.target, vals, sample.weights.ravel(), np.zeros(len(vals), dtype=int), 1, p)


def _halfspace_raw(sample: RaySample, normal: np.ndarray, p: float) -> Tuple[float, np.ndarray]:
    n_dir, n_rad, dim = sample.values.shape
    side = (sample.dirs @ normal < 0).astype(int)
    labels = np.repeat(side, n_rad)
    return binned_defect(sample.target, sample.values.reshape(-1, dim), sample.weights.ravel(), labels, 2, p)


def _frame(axis: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing axis to an orthonormal frame of R^3"""
    helper = np.eye(3)[int(np.argmin(np.abs(axis)))]
    e = np.cross(axis, helper)
    e /= np.linalg.norm(e)
    return e, np.cross(axis, e)


def _axial_raw(fmap: DiscreteMap, x: np.ndarray, r: float, axis: np.ndarray, quad: Quadrature, p: float):
    """Defect against maps of the angle around the line R axis, using cylindrical quadrature"""
    n_phi = max(quad.n_directions // 2, 8)
    s, ws = gauss_unit(quad.n_radial)
    u, wu = gauss_unit(quad.n_radial)
    tau_unit = 2.0 * u - 1.0
    half = np.sqrt(1.0 - s * s)
    phi = 2 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    e, f = _frame(axis)
    radial = np.cos(phi)[:, None] * e + np.sin(phi)[:, None] * f
    pts = (
        s[None, :, None, None] * radial[:, None, None, :]
        + (half[:, None] * tau_unit[None, :])[None, :, :, None] * axis
    )
    w = (2 * np.pi / n_phi) * (ws * s * 2.0 * half)[:, None] * wu[None, :] / ball_volume(3)
    weights = np.broadcast_to(w, (n_phi,) + w.shape).ravel()
    values = fmap.sample((x + r * pts).reshape(-1, 3))
    labels = np.repeat(np.arange(n_phi), w.size)
    defect, centres = binned_defect(fmap.target, values, weights, labels, n_phi, p)
    return defect, (centres, e, f)


def _unit_from_angles(m: int, angles: Sequence[float]) -> np.ndarray:
    if m == 2:
        return np.array([np.cos(angles[0]), np.sin(angles[0])])
    theta, phi = angles
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def _angles_from_unit(m: int, u: np.ndarray) -> List[float]:
    if m == 2:
        return [float(np.arctan2(u[1], u[0]))]
    return [float(np.arccos(np.clip(u[2], -1.0, 1.0))), float(np.arctan2(u[1], u[0]))]


def candidate_directions(m: int, count: int) -> np.ndarray:
    """Coordinate axes first, then a quasi-uniform sample of lines through 0"""
    axes = list(np.eye(m))
    if m == 2:
        a = np.pi * np.arange(count) / count
        rest = np.stack([np.cos(a), np.sin(a)], axis=-1)
    else:
        i = np.arange(count)
        z = 1.0 - (i + 0.5) / count
        rho = np.sqrt(1.0 - z * z)
        rest = np.stack([rho * np.cos(GOLDEN_ANGLE * i), rho * np.sin(GOLDEN_ANGLE * i), z], axis=-1)
    return np.vstack(axes + [rest])


def _search(objective: Callable[[np.ndarray], float], m: int, quad: Quadrature) -> Tuple[np.ndarray, float]:
    """Exhaustive scan over candidate directions, then bounded scalar refinement of the angles"""
    cands = candidate_directions(m, quad.n_candidates)
    scores = np.array([objective(u) for u in cands])
    order = np.lexsort((np.arange(len(scores)), scores))
    best = cands[order[0]]
    best_score = float(scores[order[0]])
    spacing = np.pi / quad.n_candidates if m == 2 else 1.5 * np.sqrt(2 * np.pi / quad.n_candidates)
    for start in order[: min(3, len(order))]:
        angles = _angles_from_unit(m, cands[start])
        score = float(scores[start])
        for _ in range(quad.refine_passes):
            for a in range(len(angles)):
                def along(val: float, a: int = a) -> float:
                    trial = list(angles)
                    trial[a] = val
                    return objective(_unit_from_angles(m, trial))

                res = minimize_scalar(
                    along, bounds=(angles[a] - spacing, angles[a] + spacing), method="bounded",
                    options={"xatol": 1e-7},
                )
                if res.fun < score:
                    angles[a], score = float(res.x), float(res.fun)
        if score < best_score:
            best, best_score = _unit_from_angles(m, angles), score
    return best, best_score


def _complement(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the hyperplane perpendicular to u, as rows"""
    _, _, vt = np.linalg.svd(u[None, :])
    return vt[1:]


def _report(x: np.ndarray, r: float, k: int, defect: float, raw: float, basis: np.ndarray, approx=None) -> SymmetryReport:
    return SymmetryReport(
        x=[float(c) for c in x], r=float(r), k=k, defect=float(defect), raw_defect=float(raw),
        subspace=[[float(c) for c in row] for row in basis], approximant=approx,
    )


def _raw_symmetric(
    fmap: DiscreteMap, x: np.ndarray, r: float, k: int, p: float, quad: Quadrature, sample: Optional[RaySample] = None
) -> Tuple[float, np.ndarray, object]:
    """Best defect among k-symmetric surrogates (1 <= k <= m) and the invariant subspace basis"""
    m = fmap.lattice.dim
    if k == m:
        sample = sample or RaySample(fmap, x, r, quad)
        d, centres = _constant_raw(sample, p)
        return d, np.eye(m), centres
    if k == m - 1:
        sample = sample or RaySample(fmap, x, r, quad)
        if m == 2:
            # V = span(v); the defect depends on the normal to V
            objective = lambda v: _halfspace_raw(sample, np.array([-v[1], v[0]]), p)[0]
            v, d = _search(objective, m, quad)
            return d, v[None, :], _halfspace_raw(sample, np.array([-v[1], v[0]]), p)[1]
        normal, d = _search(lambda n: _halfspace_raw(sample, n, p)[0], m, quad)
        return d, _complement(normal), _halfspace_raw(sample, normal, p)[1]
    axis, d = _search(lambda v: _axial_raw(fmap, x, r, v, quad, p)[0], m, quad)
    return d, axis[None, :], _axial_raw(fmap, x, r, axis, quad, p)[1]


def homogeneous_defect(
    fmap: DiscreteMap, x: Point, r: float, p: float = 2.0, quad: Optional[Quadrature] = None
) -> SymmetryReport:
    """Defect of T_{x,r} f against homogeneous maps, capped by the constant fit so it never exceeds defect(m)"""
    quad = quad or Quadrature()
    sample = RaySample(fmap, x, r, quad)
    raw, centres = _homogeneous_raw(sample, p)
    const, _ = _constant_raw(sample, p)
    dirs = sample.dirs

    def approximant(y: np.ndarray) -> np.ndarray:
        return centres[np.argmax(np.asarray(y) @ dirs.T, axis=-1)]

    return _report(sample.x, r, 0, min(raw, const), raw, np.zeros((0, fmap.lattice.dim)), approximant)


def k_symmetric_defect(
    fmap: DiscreteMap, x: Point, r: float, k: int, p: float = 2.0, quad: Optional[Quadrature] = None
) -> SymmetryReport:
    """Defect against maps that are homogeneous and invariant along some k-plane, nested over k' >= k"""
    m = fmap.lattice.dim
    if not 1 <= k <= m:
        raise ValueError(f"symmetry order must lie in [1, {m}], got {k}")
    quad = quad or Quadrature()
    x = np.asarray(x, dtype=np.float64)
    sample = RaySample(fmap, x, r, quad)
    best = None
    raw_k = None
    for kk in range(m, k - 1, -1):
        d, basis, approx = _raw_symmetric(fmap, x, r, kk, p, quad, sample)
        if kk == k:
            raw_k = d
        if best is None or d <= best[0]:
            best = (d, basis, approx)
    return _report(x, r, k, best[0], raw_k, best[1], best[2])


def defect_chain(fmap: DiscreteMap, x: Point, r: float, p: float = 2.0, quad: Optional[Quadrature] = None) -> List[float]:
    """Nested defects for k = 0..m, nondecreasing in k"""
    quad = quad or Quadrature()
    x = np.asarray(x, dtype=np.float64)
    m = fmap.lattice.dim
    sample = RaySample(fmap, x, r, quad)
    raws = [_homogeneous_raw(sample, p)[0]]
    raws += [_raw_symmetric(fmap, x, r, k, p, quad, sample)[0] for k in range(1, m + 1)]
    return list(np.minimum.accumulate(np.array(raws)[::-1])[::-1])


def is_symmetric(fmap: DiscreteMap, x: Point, r: float, k: int, eps: float, p: float = 2.0, quad: Optional[Quadrature] = None) -> bool:
    if k == 0:
        return homogeneous_defect(fmap, x, r, p, quad).defect < eps
    return k_symmetric_defect(fmap, x, r, k, p, quad).defect < eps


def symmetry_order(fmap: DiscreteMap, x: Point, r: float, eta: float, p: float = 2.0, quad: Optional[Quadrature] = None) -> int:
    """Largest k with T_{x,r} f (k, eta)-symmetric, -1 if not even almost homogeneous.

    Evaluated from the cheapest classes outward: constants, then rays, then planes.
    A point that is not almost homogeneous is taken as not almost k-symmetric for
    every k >= 1, since k-symmetric maps are homogeneous.
    """
    quad = quad or Quadrature()
    x = np.asarray(x, dtype=np.float64)
    m = fmap.lattice.dim
    sample = RaySample(fmap, x, r, quad)
    if _constant_raw(sample, p)[0] < eta:
        return m
    if _homogeneous_raw(sample, p)[0] >= eta:
        return -1
    for k in range(m - 1, 0, -1):
        if _raw_symmetric(fmap, x, r, k, p, quad, sample)[0] < eta:
            return k
    return 0


def directional_energy(fmap: DiscreteMap, v: Sequence[float], p: float = 2.0) -> float:
    """Integral of |d_v f|^p over the domain"""
    lat = fmap.lattice
    v = np.asarray(v, dtype=np.float64)
    v = v / np.linalg.norm(v)
    box = tuple(slice(0, s) for s in lat.cell_shape)
    grad = cell_gradient(fmap.values[node_block(box)], lat.h)
    dv = np.einsum("i,...in->...n", v, grad)
    return float(np.sum(lat.cell_volume * np.sum(dv * dv, axis=-1) ** (0.5 * p)))


def cone_splitting_sweep(
    lattice, ts: Sequence[float], offset: float = 0.4, r: float = 0.5, p: float = 2.0, quad: Optional[Quadrature] = None
) -> List[dict]:
    """Blend radial and axial maps; record 0-defects at 0 and at offset e_1 and the 1-defect at 0"""
    quad = quad or Quadrature(n_directions=48, n_radial=10, n_candidates=60)
    x2 = np.zeros(lattice.dim)
    x2[0] = offset
    rows = []
    for t in ts:
        fmap = blended_map(lattice, float(t))
        d0_origin = homogeneous_defect(fmap, np.zeros(lattice.dim), r, p, quad).defect
        d0_offset = homogeneous_defect(fmap, x2, r, p, quad).defect
        one = k_symmetric_defect(fmap, np.zeros(lattice.dim), r, 1, p, quad)
        rows.append({
            "t": float(t), "d0_origin": d0_origin, "d0_offset": d0_offset,
            "d1": one.defect, "axis": one.subspace[0] if one.subspace else [],
        })
        logger.info(f"cone splitting t={t:.3f}: d0(0)={d0_origin:.3e} d0(x2)={d0_offset:.3e} d1={one.defect:.3e}")
    return rows


def calibrate_cone_splitting(rows: List[dict], eps_cs: float) -> float:
    """Smallest eta_cs with no counterexample among rows whose two 0-defects are below eps_cs"""
    hits = [row["d1"] for row in rows if row["d0_origin"] < eps_cs and row["d0_offset"] < eps_cs]
    return max(hits) if hits else 0.0


def cone_splitting_counterexamples(rows: List[dict], eps_cs: float, eta_cs: float) -> List[dict]:
    return [
        row for row in rows
        if row["d0_origin"] < eps_cs and row["d0_offset"] < eps_cs and row["d1"] >= eta_cs
    ]
