from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import product
from typing import Optional, Sequence, Tuple, Union
import logging

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import gamma as gamma_fn

from .errors import DomainExit, LatticeMismatch, NodeOutOfRange, ScaleUnderresolved

logger = logging.getLogger(__name__)

MIN_SCALE_CELLS = 3
DOMAIN_SLACK = 1e-9
SUBSAMPLES = 4

Point = Union[Sequence[float], np.ndarray]
NodeRef = Union[int, Tuple[int, ...]]


def parse_h(h: Union[str, float, Fraction]) -> int:
    """Turn a cell width like "1/64" into the number of cells per unit length"""
    frac = Fraction(str(h)).limit_denominator(4096)
    if frac <= 0 or frac.numerator != 1:
        raise ValueError(f"cell width must be of the form 1/n, got {h}")
    return frac.denominator


def ball_volume(m: int, r: float = 1.0) -> float:
    return float(np.pi ** (m / 2) / gamma_fn(m / 2 + 1) * r ** m)


@dataclass(frozen=True)
class Lattice:
    """Regular grid of spacing 1/n on the box [-1, 1]^m, clipped to the unit ball.

    Arrays live on the whole box; node masks say which entries belong to the domain.
    Cells are the box cells between neighbouring nodes.
    """

    dim: int
    n: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"lattice dimension must be 2 or 3, got {self.dim}")
        if self.n < 2:
            raise ValueError(f"lattice needs at least 2 cells per unit length, got {self.n}")

    @classmethod
    def from_h(cls, dim: int, h: Union[str, float, Fraction]) -> "Lattice":
        return cls(dim, parse_h(h))

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def h_label(self) -> str:
        return f"1/{self.n}"

    @property
    def shape(self) -> Tuple[int, ...]:
        return (2 * self.n + 1,) * self.dim

    @property
    def cell_shape(self) -> Tuple[int, ...]:
        return (2 * self.n,) * self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return (np.arange(2 * self.n + 1, dtype=np.float64) - self.n) / self.n

    @cached_property
    def cell_axis(self) -> np.ndarray:
        return (np.arange(2 * self.n, dtype=np.float64) + 0.5 - self.n) / self.n

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape (*box, m)"""
        return np.stack(np.meshgrid(*([self.axis] * self.dim), indexing="ij"), axis=-1)

    @cached_property
    def radius(self) -> np.ndarray:
        return np.linalg.norm(self.coords, axis=-1)

    @cached_property
    def inside(self) -> np.ndarray:
        return self.radius <= 1.0 + DOMAIN_SLACK

    @cached_property
    def boundary_band(self) -> np.ndarray:
        return self.inside & (self.radius >= 1.0 - self.h - DOMAIN_SLACK)

    @cached_property
    def interior(self) -> np.ndarray:
        """Domain nodes whose full central stencil stays in the domain"""
        full = self.inside.copy()
        for d in range(self.dim):
            full &= np.roll(self.inside, 1, axis=d) & np.roll(self.inside, -1, axis=d)
        return full & ~self.boundary_band

    @cached_property
    def node_ids(self) -> np.ndarray:
        """Flat box positions of domain nodes in row-major order"""
        return np.flatnonzero(self.inside.ravel())

    @property
    def node_count(self) -> int:
        return int(self.node_ids.size)

    def node(self, ref: NodeRef) -> Tuple[int, ...]:
        """Box multi-index of a node given by domain index or by box multi-index"""
        if isinstance(ref, (int, np.integer)):
            if not 0 <= ref < self.node_count:
                raise NodeOutOfRange(f"node {ref} not in [0, {self.node_count})")
            return tuple(int(i) for i in np.unravel_index(self.node_ids[ref], self.shape))
        idx = tuple(int(i) for i in ref)
        if len(idx) != self.dim or any(not 0 <= i < s for i, s in zip(idx, self.shape)):
            raise NodeOutOfRange(f"node {idx} outside the box {self.shape}")
        if not self.inside[idx]:
            raise NodeOutOfRange(f"node {idx} lies outside the unit ball")
        return idx

    def node_coords(self, ref: NodeRef) -> np.ndarray:
        return self.coords[self.node(ref)]

    def check_same(self, other: "Lattice") -> None:
        if (self.dim, self.n) != (other.dim, other.n):
            raise LatticeMismatch(f"lattice m={self.dim} h={self.h_label} vs m={other.dim} h={other.h_label}")

    def check_scale(self, r: float, floor_cells: float = MIN_SCALE_CELLS) -> None:
        if r < floor_cells * self.h - DOMAIN_SLACK:
            raise ScaleUnderresolved(f"r={r:.4g} below {floor_cells:g}h={floor_cells * self.h:.4g}")

    def check_ball(self, x: Point, r: float) -> None:
        if np.linalg.norm(np.asarray(x, dtype=np.float64)) + r > 1.0 + DOMAIN_SLACK:
            raise DomainExit(f"B_{r:.4g}({np.round(np.asarray(x, dtype=float), 4).tolist()}) leaves B_1(0)")

    # -- region weights -------------------------------------------------

    def _box_range(self, x: np.ndarray, r: float, cells: bool) -> Tuple[slice, ...]:
        top = 2 * self.n - 1 if cells else 2 * self.n
        out = []
        for c in x:
            lo = int(np.floor((c - r) * self.n)) + self.n - 1
            hi = int(np.ceil((c + r) * self.n)) + self.n + 1
            out.append(slice(max(lo, 0), min(hi, top) + 1))
        return tuple(out)

    @cached_property
    def _sub_offsets(self) -> np.ndarray:
        t = ((np.arange(SUBSAMPLES) + 0.5) / SUBSAMPLES - 0.5) * self.h
        return np.array(list(product(t, repeat=self.dim)))

    def _cube_fraction(self, centers: np.ndarray, x: np.ndarray, r: float) -> np.ndarray:
        """Fraction of each h-cube (given by its centre) lying in B_r(x) and in B_1(0)"""
        reach = 0.5 * self.h * np.sqrt(self.dim)
        d = np.linalg.norm(centers - x, axis=-1)
        d1 = np.linalg.norm(centers, axis=-1)
        frac = ((d + reach <= r) & (d1 + reach <= 1.0)).astype(np.float64)
        mixed = ~((d - reach >= r) | (d1 - reach >= 1.0)) & (frac == 0.0)
        if mixed.any():
            pts = centers[mixed][:, None, :] + self._sub_offsets[None, :, :]
            hit = (np.linalg.norm(pts - x, axis=-1) <= r) & (np.linalg.norm(pts, axis=-1) <= 1.0)
            frac[mixed] = hit.mean(axis=1)
        return frac

    def ball_weights(self, x: Point, r: float, cells: bool = False) -> Tuple[Tuple[slice, ...], np.ndarray]:
        """Quadrature weights of B_r(x) on the sub-box it touches.

        Node weights use the dual cube around each node, cell weights the cell itself.
        """
        x = np.asarray(x, dtype=np.float64)
        box = self._box_range(x, r, cells)
        axis = self.cell_axis if cells else self.axis
        grids = np.meshgrid(*[axis[s] for s in box], indexing="ij")
        centers = np.stack(grids, axis=-1)
        w = self._cube_fraction(centers, x, r) * self.h ** self.dim
        if not cells:
            w = np.where(self.inside[box], w, 0.0)
        return box, w

    def ball_kernel(self, r: float) -> np.ndarray:
        """Fractions of the cells around a node that lie in B_r(node), shape (2K,)*m.

        Entry j on each axis is the cell whose centre sits at offset (j - K + 1/2) h.
        """
        half = int(np.ceil(r * self.n)) + 1
        offs = (np.arange(2 * half) - half + 0.5) * self.h
        centers = np.stack(np.meshgrid(*([offs] * self.dim), indexing="ij"), axis=-1)
        reach = 0.5 * self.h * np.sqrt(self.dim)
        d = np.linalg.norm(centers, axis=-1)
        frac = (d + reach <= r).astype(np.float64)
        mixed = (d - reach < r) & (frac == 0.0)
        pts = centers[mixed][:, None, :] + self._sub_offsets[None, :, :]
        frac[mixed] = (np.linalg.norm(pts, axis=-1) <= r).mean(axis=1)
        return frac

    @cached_property
    def cell_volume(self) -> np.ndarray:
        """Domain fraction of every cell times h^m"""
        _, w = self.ball_weights(np.zeros(self.dim), 1.0, cells=True)
        return w

    @cached_property
    def node_volume(self) -> np.ndarray:
        _, w = self.ball_weights(np.zeros(self.dim), 1.0)
        return w

    @cached_property
    def cell_centers(self) -> np.ndarray:
        return np.stack(np.meshgrid(*([self.cell_axis] * self.dim), indexing="ij"), axis=-1)


@dataclass(frozen=True, eq=False)
class ScalarField:
    lattice: Lattice
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.lattice.shape:
            raise LatticeMismatch(f"scalar values {self.values.shape} vs box {self.lattice.shape}")
        if not np.all(np.isfinite(self.values[self.lattice.inside])):
            raise ValueError("scalar field has non-finite values in the domain")

    def node_values(self) -> np.ndarray:
        return self.values[self.lattice.inside]


@dataclass(frozen=True, eq=False)
class VectorField:
    lattice: Lattice
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != self.lattice.dim + 1 or self.values.shape[:-1] != self.lattice.shape:
            raise LatticeMismatch(f"vector values {self.values.shape} vs box {self.lattice.shape}")
        if not np.all(np.isfinite(self.values[self.lattice.inside])):
            raise ValueError("vector field has non-finite values in the domain")

    @property
    def components(self) -> int:
        return int(self.values.shape[-1])

    def node_values(self) -> np.ndarray:
        return self.values[self.lattice.inside]

    def sample(self, points: np.ndarray) -> np.ndarray:
        return interpolate(self, points)

    def blown_up(self, lattice: Lattice, values: np.ndarray, center: np.ndarray, radius: float) -> "VectorField":
        """Field of the same kind holding the samples of T_{center,radius}"""
        return VectorField(lattice, values)


def gradient(field: VectorField, node: NodeRef) -> np.ndarray:
    """Gradient at one node as an (m, N) matrix.

    Central differences where both neighbours are domain nodes, one-sided otherwise.
    """
    lat = field.lattice
    idx = lat.node(node)
    u = field.values
    rows = []
    for d in range(lat.dim):
        plus = list(idx)
        minus = list(idx)
        plus[d] += 1
        minus[d] -= 1
        has_plus = plus[d] < lat.shape[d] and lat.inside[tuple(plus)]
        has_minus = minus[d] >= 0 and lat.inside[tuple(minus)]
        if has_plus and has_minus:
            rows.append((u[tuple(plus)] - u[tuple(minus)]) / (2 * lat.h))
        elif has_plus:
            rows.append((u[tuple(plus)] - u[idx]) / lat.h)
        elif has_minus:
            rows.append((u[idx] - u[tuple(minus)]) / lat.h)
        else:
            rows.append(np.zeros(field.components))
    return np.vstack(rows)


def nodal_gradient(field: VectorField) -> np.ndarray:
    """Whole-field version of gradient: shape (*box, m, N), zero off the domain"""
    lat = field.lattice
    u = field.values
    inside = lat.inside
    out = np.zeros(lat.shape + (lat.dim, field.components))
    for d in range(lat.dim):
        fwd = np.zeros_like(u)
        bwd = np.zeros_like(u)
        has_fwd = np.zeros(lat.shape, dtype=bool)
        has_bwd = np.zeros(lat.shape, dtype=bool)
        lo = [slice(None)] * lat.dim
        hi = [slice(None)] * lat.dim
        lo[d] = slice(0, -1)
        hi[d] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        diff = (u[hi] - u[lo]) / lat.h
        fwd[lo] = diff
        bwd[hi] = diff
        has_fwd[lo] = inside[hi]
        has_bwd[hi] = inside[lo]
        both = (has_fwd & has_bwd)[..., None]
        only_fwd = (has_fwd & ~has_bwd)[..., None]
        only_bwd = (has_bwd & ~has_fwd)[..., None]
        g = np.where(both, 0.5 * (fwd + bwd), 0.0)
        g = np.where(only_fwd, fwd, g)
        g = np.where(only_bwd, bwd, g)
        out[..., d, :] = np.where(inside[..., None], g, 0.0)
    return out


def corner_gradients(values: np.ndarray, h: float, sigma: Tuple[int, ...]) -> np.ndarray:
    """Edge differences at corner sigma of every cell of a node block, shape (*cells, m, N).

    Direction d uses the cell edge parallel to e_d that passes through the corner.
    """
    dim = len(sigma)
    cells = tuple(s - 1 for s in values.shape[:dim])
    out = np.empty(cells + (dim,) + values.shape[dim:])
    for d in range(dim):
        a = []
        b = []
        for e in range(dim):
            if e == d:
                a.append(slice(0, cells[e]))
                b.append(slice(1, cells[e] + 1))
            else:
                a.append(slice(sigma[e], sigma[e] + cells[e]))
                b.append(slice(sigma[e], sigma[e] + cells[e]))
        out[..., d, :] = (values[tuple(b)] - values[tuple(a)]) / h
    return out


def node_block(cell_box: Tuple[slice, ...]) -> Tuple[slice, ...]:
    """Node slices covering the cells of a cell sub-box"""
    return tuple(slice(s.start, s.stop + 1) for s in cell_box)


def integrate_ball(field: ScalarField, center: Point, radius: float) -> float:
    lat = field.lattice
    lat.check_scale(radius)
    lat.check_ball(center, radius)
    box, w = lat.ball_weights(center, radius)
    return float(np.sum(w * np.where(lat.inside[box], field.values[box], 0.0)))


def resample(field: VectorField, center: Point, radius: float, target: Optional[Lattice] = None) -> VectorField:
    """Blow-up T_{x,r}: samples f(x + r y) at the nodes y of the target lattice.

    Sampled fields are interpolated multilinearly; maps keep their target and,
    when they have one, a rescaled closed form, so the result feeds energy and
    symmetry analysis like any other map.
    """
    lat = field.lattice
    target = target or lat
    center = np.asarray(center, dtype=np.float64)
    lat.check_ball(center, radius)
    pts = center + radius * target.coords.reshape(-1, target.dim)
    values = field.sample(pts).reshape(target.shape + (field.components,))
    return field.blown_up(target, values, center, radius)


def interpolate(field: VectorField, points: np.ndarray) -> np.ndarray:
    lat = field.lattice
    interp = RegularGridInterpolator((lat.axis,) * lat.dim, field.values, method="linear")
    return interp(np.clip(points, -1.0, 1.0))
