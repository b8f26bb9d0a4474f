from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union
import logging

import numpy as np
from scipy.signal import fftconvolve

from .errors import ScaleUnderresolved, TestFieldNotCompact
from .fields import DiscreteMap
from .lattice import (
    DOMAIN_SLACK,
    Lattice,
    Point,
    VectorField,
    corner_gradients,
    node_block,
)

logger = logging.getLogger(__name__)

# theta pairs below this many cells are too coarse for the monotonicity check
PROFILE_FLOOR_CELLS = 5


@dataclass(frozen=True)
class Ball:
    center: Tuple[float, ...]
    radius: float


@dataclass(frozen=True)
class Annulus:
    center: Tuple[float, ...]
    r_in: float
    r_out: float


Region = Union[Ball, Annulus, None]


def _edge_sq(values: np.ndarray, h: float, dim: int) -> List[np.ndarray]:
    """|u(b) - u(a)|^2 / h^2 for every lattice edge, one array per direction"""
    out = []
    for d in range(dim):
        diff = np.diff(values, axis=d) / h
        out.append(np.sum(diff * diff, axis=-1))
    return out


def density_block(values: np.ndarray, h: float, p: float, eps: float = 0.0) -> np.ndarray:
    """Cell energy density of a node block: mean over the 2^m cell corners of (|G|^2 + eps^2)^(p/2)"""
    dim = values.ndim - 1
    edges = _edge_sq(values, h, dim)
    cells = tuple(s - 1 for s in values.shape[:dim])
    dens = np.zeros(cells)
    for sigma in np.ndindex(*([2] * dim)):
        g2 = np.zeros(cells)
        for d in range(dim):
            sl = tuple(slice(0, cells[e]) if e == d else slice(sigma[e], sigma[e] + cells[e]) for e in range(dim))
            g2 += edges[d][sl]
        dens += (g2 + eps * eps) ** (0.5 * p)
    return dens / 2 ** dim


def energy_density(fmap: DiscreteMap, p: float) -> np.ndarray:
    """Cell density |grad f|^p on the whole box of cells; cached on the map"""
    key = ("density", float(p))
    if key not in fmap.cache:
        fmap.cache[key] = density_block(fmap.values, fmap.lattice.h, p)
    return fmap.cache[key]


def energy_cells(fmap: DiscreteMap, p: float) -> np.ndarray:
    """Cell masses |grad f|^p dV, domain-clipped"""
    return energy_density(fmap, p) * fmap.lattice.cell_volume


def _ball_energy(fmap: DiscreteMap, center: np.ndarray, r: float, p: float) -> float:
    lat = fmap.lattice
    box, w = lat.ball_weights(center, r, cells=True)
    key = ("density", float(p))
    if key in fmap.cache:
        dens = fmap.cache[key][box]
    else:
        dens = density_block(fmap.values[node_block(box)], lat.h, p)
    return float(np.sum(w * dens))


def p_energy(fmap: DiscreteMap, region: Region = None, p: float = 2.0) -> float:
    lat = fmap.lattice
    if region is None:
        return float(np.sum(energy_cells(fmap, p)))
    if isinstance(region, Ball):
        center = np.asarray(region.center, dtype=np.float64)
        lat.check_scale(region.radius)
        lat.check_ball(center, region.radius)
        return _ball_energy(fmap, center, region.radius, p)
    center = np.asarray(region.center, dtype=np.float64)
    lat.check_scale(region.r_out)
    lat.check_ball(center, region.r_out)
    if region.r_in <= 0:
        return _ball_energy(fmap, center, region.r_out, p)
    return _ball_energy(fmap, center, region.r_out, p) - _ball_energy(fmap, center, region.r_in, p)


def theta(fmap: DiscreteMap, x: Point, r: float, p: float = 2.0) -> float:
    """Normalized energy r^(p-m) E_p(f, B_r(x))"""
    return r ** (p - fmap.lattice.dim) * p_energy(fmap, Ball(tuple(np.asarray(x, dtype=float)), r), p)


@dataclass
class ScaleProfile:
    x: Tuple[float, ...]
    scales: np.ndarray
    theta: np.ndarray
    p: float
    m: int
    gamma: float = 0.5

    def index(self, r: float) -> int:
        hits = np.flatnonzero(np.isclose(self.scales, r, rtol=1e-9, atol=0.0))
        if hits.size == 0:
            raise KeyError(f"r={r} is not a ladder scale")
        return int(hits[0])

    def W(self, s: float, r: float) -> float:
        """Energy pinching theta(x, r) - theta(x, s) between two ladder scales"""
        return float(self.theta[self.index(r)] - self.theta[self.index(s)])

    def monotonicity_violations(self, tol_mono: float, floor: float = 0.0) -> List[Tuple[float, float]]:
        """Ladder pairs r > s >= floor with theta(r) < theta(s) - tol_mono"""
        bad = []
        for i, r in enumerate(self.scales):
            for j in range(i + 1, len(self.scales)):
                s = self.scales[j]
                if s >= floor - DOMAIN_SLACK and self.theta[i] < self.theta[j] - tol_mono:
                    bad.append((float(r), float(s)))
        return bad

    def rows(self) -> List[List[float]]:
        return [list(self.x) + [float(r), float(t)] for r, t in zip(self.scales, self.theta)]


def scale_ladder(lattice: Lattice, gamma: float, r_max: float, floor_cells: float = 3.0) -> np.ndarray:
    if not 0 < gamma < 1:
        raise ValueError(f"ladder ratio must lie in (0, 1), got {gamma}")
    scales = []
    r = r_max
    while r >= floor_cells * lattice.h - DOMAIN_SLACK:
        scales.append(r)
        r *= gamma
    if not scales:
        raise ScaleUnderresolved(f"r_max={r_max} below {floor_cells:g}h")
    return np.array(scales)


def scale_profile(fmap: DiscreteMap, x: Point, gamma: float = 0.5, r_max: float = 0.5, p: float = 2.0) -> ScaleProfile:
    x = tuple(float(c) for c in np.asarray(x, dtype=float))
    scales = scale_ladder(fmap.lattice, gamma, r_max)
    values = np.array([theta(fmap, x, r, p) for r in scales])
    return ScaleProfile(x=x, scales=scales, theta=values, p=p, m=fmap.lattice.dim, gamma=gamma)


def ball_mass_grid(lattice: Lattice, masses: np.ndarray, r: float) -> np.ndarray:
    """Sum of cell masses over B_r(x) for every node x, NaN where the ball leaves the domain"""
    lattice.check_scale(r)
    kern = lattice.ball_kernel(r)
    half = kern.shape[0] // 2
    full = fftconvolve(masses, kern, mode="full")
    sl = tuple(slice(half - 1, half - 1 + s) for s in lattice.shape)
    fits = lattice.radius + r <= 1.0 + DOMAIN_SLACK
    return np.where(fits, np.clip(full[sl], 0.0, None), np.nan)


def theta_field(fmap: DiscreteMap, r: float, p: float = 2.0) -> np.ndarray:
    """theta(x, r) at every node x with B_r(x) inside the domain, NaN elsewhere"""
    key = ("theta", float(p), float(r))
    if key not in fmap.cache:
        lat = fmap.lattice
        fmap.cache[key] = ball_mass_grid(lat, energy_cells(fmap, p), r) * r ** (p - lat.dim)
    return fmap.cache[key]


def cell_gradient(values: np.ndarray, h: float) -> np.ndarray:
    """Q1 gradient at cell centres, the mean of the corner gradients; shape (*cells, m, N)"""
    dim = values.ndim - 1
    total = None
    for sigma in np.ndindex(*([2] * dim)):
        g = corner_gradients(values, h, sigma)
        total = g if total is None else total + g
    return total / 2 ** dim


def stress_tensor(values: np.ndarray, h: float, p: float, eps: float = 0.0) -> np.ndarray:
    """Corner-averaged |grad f|^(p-2) (|grad f|^2 delta_ij - p grad_i f . grad_j f), shape (*cells, m, m)"""
    dim = values.ndim - 1
    total = None
    for sigma in np.ndindex(*([2] * dim)):
        g = corner_gradients(values, h, sigma)
        gram = np.einsum("...in,...jn->...ij", g, g)
        a = np.trace(gram, axis1=-2, axis2=-1)
        weight = (a + eps * eps) ** (0.5 * (p - 2)) if p != 2 else np.ones_like(a)
        weight = np.where(a > 0, weight, 0.0)
        t = weight[..., None, None] * (a[..., None, None] * np.eye(dim) - p * gram)
        total = t if total is None else total + t
    return total / 2 ** dim


def stationarity_residual(fmap: DiscreteMap, xi: VectorField, p: float = 2.0) -> float:
    """First variation of E_p along the domain deformation xi, normalized by E_p(f) * max|grad xi|"""
    lat = fmap.lattice
    lat.check_same(xi.lattice)
    if xi.components != lat.dim:
        raise TestFieldNotCompact(f"test field needs {lat.dim} components, got {xi.components}")
    off_support = lat.boundary_band | ~lat.inside
    if np.any(np.abs(xi.values[off_support]) > 0.0):
        raise TestFieldNotCompact("test field does not vanish on the boundary band")
    total = p_energy(fmap, None, p)
    if total <= 0.0:
        return 0.0
    dxi = cell_gradient(xi.values, lat.h)
    scale = float(np.max(np.abs(dxi)))
    if scale == 0.0:
        return 0.0
    stress = stress_tensor(fmap.values, lat.h, p)
    # dxi[..., i, j] = d_i xi^j, stress[..., i, j] pairs with it entrywise
    integrand = np.sum(stress * dxi, axis=(-2, -1))
    return float(np.sum(integrand * lat.cell_volume)) / (total * scale)


def bump_fields(lattice: Lattice, count: int, seed: int = 0) -> List[VectorField]:
    """Random smooth compactly supported test fields: sums of exp(-1/(1-t^2)) bumps"""
    rng = np.random.default_rng(seed)
    margin = 1.0 - 2 * lattice.h
    coords = lattice.coords
    fields = []
    for _ in range(count):
        values = np.zeros(lattice.shape + (lattice.dim,))
        for _ in range(int(rng.integers(1, 4))):
            rho = rng.uniform(0.15, 0.5)
            direction = rng.normal(size=lattice.dim)
            direction /= np.linalg.norm(direction)
            center = direction * rng.uniform(0.0, margin - rho)
            t2 = np.sum((coords - center) ** 2, axis=-1) / rho ** 2
            inside = t2 < 1.0
            bump = np.zeros(lattice.shape)
            bump[inside] = np.exp(-1.0 / (1.0 - t2[inside]))
            values += bump[..., None] * rng.normal(size=lattice.dim)
        values[lattice.boundary_band | ~lattice.inside] = 0.0
        fields.append(VectorField(lattice, values))
    return fields


def radial_energy(fmap: DiscreteMap, x: Point, r_in: float, r_out: float, p: float = 2.0) -> float:
    """r_out^(p-m) times the integral of |grad f|^(p-2) |d_r f|^2 over the annulus around x"""
    lat = fmap.lattice
    x = np.asarray(x, dtype=np.float64)
    lat.check_scale(r_out)
    lat.check_ball(x, r_out)
    box, w_out = lat.ball_weights(x, r_out, cells=True)
    w = w_out.copy()
    if r_in > 0:
        inner_box, w_in = lat.ball_weights(x, r_in, cells=True)
        sub = tuple(slice(i.start - o.start, i.stop - o.start) for i, o in zip(inner_box, box))
        w[sub] -= w_in
    grad = cell_gradient(fmap.values[node_block(box)], lat.h)
    centers = lat.cell_centers[box] - x
    dist = np.linalg.norm(centers, axis=-1, keepdims=True)
    omega = centers / np.where(dist > 0, dist, 1.0)
    dr = np.einsum("...i,...in->...n", omega, grad)
    g2 = np.sum(grad * grad, axis=(-2, -1))
    weight = g2 ** (0.5 * (p - 2)) if p != 2 else np.ones_like(g2)
    weight = np.where(g2 > 0, weight, 0.0)
    return r_out ** (p - lat.dim) * float(np.sum(w * weight * np.sum(dr * dr, axis=-1)))
