from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .energy import ScaleProfile, scale_ladder, theta
from .errors import DegenerateFit, DomainExit, ScaleUnderresolved
from .fields import DiscreteMap
from .lattice import DOMAIN_SLACK, Lattice, ball_volume, nodal_gradient
from .schemas import CensusReport, ClusterReport, CoveringNode, CoveringTree, MinkowskiReport
from .symmetry import Quadrature, homogeneous_defect, is_symmetric, symmetry_order

logger = logging.getLogger(__name__)

# regularity scale below this many cells marks a node as singular
SINGULAR_CELLS = 0.75
HOLDER_OFFSETS = 10_000
UNRESOLVED_PAIR_CELLS = 3

CLASSIFY_QUADRATURE = Quadrature(n_directions=32, n_radial=8, n_candidates=40, refine_passes=1)


@dataclass
class StrataLabels:
    """Per-point symmetry orders on the strata ladder s_i = gamma^i and bad-scale tuples.

    orders[x, i] is the largest k with T_{x,s_i} f (k, eta)-symmetric (-1 for none);
    tuples[x, i] is 1 when T_{x, gamma^i / (5 gamma)} f is not (0, eps)-symmetric.
    """

    points: np.ndarray
    scales: np.ndarray
    hscales: np.ndarray
    orders: np.ndarray
    tuples: np.ndarray
    gamma: float
    eps: float
    eta: float
    k_max: int
    m: int

    @property
    def depth(self) -> int:
        return int(len(self.scales))

    def members(self, k: int, j: int) -> np.ndarray:
        """Membership in S^k_{eta, gamma^j}: not (k+1, eta)-symmetric at any ladder scale down to gamma^j"""
        if j < 1 or j > self.depth:
            raise ValueError(f"depth {j} outside the classified range 1..{self.depth}")
        return np.all(self.orders[:, :j] <= k, axis=1)

    def membership_table(self) -> Dict[Tuple[int, int], np.ndarray]:
        return {(k, j): self.members(k, j) for k in range(self.k_max + 1) for j in range(1, self.depth + 1)}

    def rows(self) -> List[List[object]]:
        out = []
        for idx, x in enumerate(self.points):
            pattern = "".join(str(int(t)) for t in self.tuples[idx])
            flags = [int(np.all(self.orders[idx] <= k)) for k in range(self.k_max + 1)]
            out.append([float(c) for c in x] + [pattern] + flags)
        return out


def analysis_points(lattice: Lattice, radius: float = 0.5, stride: int = 1) -> np.ndarray:
    """Lattice nodes in B_radius(0), every stride-th node per axis counted from the origin"""
    mask = lattice.inside & (lattice.radius <= radius + DOMAIN_SLACK)
    offset = (np.indices(lattice.shape) - lattice.n) % stride == 0
    mask &= np.all(offset, axis=0)
    return lattice.coords[mask]


def _floor(fmap: DiscreteMap) -> float:
    return fmap.resolution_floor


def classify_strata(
    fmap: DiscreteMap,
    gamma: float = 0.5,
    eps: float = 0.1,
    eta: float = 0.1,
    k_max: Optional[int] = None,
    j_max: int = 4,
    p: float = 2.0,
    points: Optional[np.ndarray] = None,
    stride: int = 1,
    quad: Optional[Quadrature] = None,
    workers: int = 1,
) -> StrataLabels:
    if not 0 < gamma <= 0.5:
        raise ValueError(f"gamma must lie in (0, 1/2], got {gamma}")
    m = fmap.lattice.dim
    k_max = m - 1 if k_max is None else k_max
    quad = quad or CLASSIFY_QUADRATURE
    pts = analysis_points(fmap.lattice, 0.5, stride) if points is None else np.atleast_2d(points)
    floor = _floor(fmap)
    depth = 0
    for i in range(1, j_max + 1):
        if min(gamma ** i, gamma ** (i - 1) / 5) < floor - DOMAIN_SLACK:
            break
        depth = i
    if depth < j_max:
        logger.warning(f"strata depth truncated from {j_max} to {depth}: scales below {floor:.4g}")
    scales = np.array([gamma ** i for i in range(1, depth + 1)])
    hscales = np.array([gamma ** (i - 1) / 5 for i in range(1, depth + 1)])
    logger.info(f"Classifying {len(pts)} points on {depth} scales (gamma={gamma}, eta={eta}, eps={eps})")

    def classify(x: np.ndarray) -> Tuple[List[int], List[int]]:
        orders = [symmetry_order(fmap, x, s, eta, p, quad) for s in scales]
        bad = [int(homogeneous_defect(fmap, x, s, p, quad).defect >= eps) for s in hscales]
        return orders, bad

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(classify, pts))
    else:
        rows = [classify(x) for x in pts]
    orders = np.array([r[0] for r in rows], dtype=int).reshape(len(pts), depth)
    tuples = np.array([r[1] for r in rows], dtype=np.int8).reshape(len(pts), depth)
    return StrataLabels(
        points=pts, scales=scales, hscales=hscales, orders=orders, tuples=tuples,
        gamma=gamma, eps=eps, eta=eta, k_max=k_max, m=m,
    )


def count_bad_scales(profile: ScaleProfile, delta: float, A: int = 2) -> int:
    """Number of ladder windows (r_i, r_{i+A}) on which theta drops by more than delta"""
    th = profile.theta
    return int(sum(1 for i in range(len(th) - A) if th[i] - th[i + A] > delta))


def bad_scale_profile(fmap: DiscreteMap, x: Sequence[float], gamma: float = 0.5, p: float = 2.0) -> ScaleProfile:
    """theta on the ladder gamma^i / 5 down to 5h"""
    scales = scale_ladder(fmap.lattice, gamma, 0.2, floor_cells=5)
    values = np.array([theta(fmap, x, r, p) for r in scales])
    return ScaleProfile(x=tuple(float(c) for c in x), scales=scales, theta=values, p=p, m=fmap.lattice.dim, gamma=gamma)


def bad_scale_bound(fmap: DiscreteMap, x: Sequence[float], delta: float, A: int = 2, p: float = 2.0) -> float:
    """A (theta(x, 1/3) - theta(x, 5h)) / delta + 1"""
    drop = theta(fmap, x, 1.0 / 3.0, p) - theta(fmap, x, 5 * fmap.lattice.h, p)
    return A * max(drop, 0.0) / delta + 1


def _farthest_point_net(pts: np.ndarray, radius: float) -> List[int]:
    chosen = [0]
    dist = np.linalg.norm(pts - pts[0], axis=1)
    while dist.max() > radius + 1e-12:
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(pts - pts[nxt], axis=1))
    return chosen


def _tube_width(pts: np.ndarray, k: int) -> float:
    """Largest distance from the points to their best-fit affine k-plane"""
    centred = pts - pts.mean(axis=0)
    if k == 0 or len(pts) <= 1:
        return float(np.linalg.norm(centred, axis=1).max())
    _, _, vt = np.linalg.svd(centred, full_matrices=False)
    plane = vt[:k]
    resid = centred - centred @ plane.T @ plane
    return float(np.linalg.norm(resid, axis=1).max())


def tube_net_bound(m: int, k: int, gamma: float) -> int:
    """Most centres a gamma-separated net can place in B_1 cap B_gamma(V^k).

    Disjoint balls of radius gamma/2 around the centres fit inside a k-disc of
    radius 1 + gamma/2 times an (m-k)-ball of radius 3 gamma/2.
    """
    k = min(k, m)
    ratio = ball_volume(k) * ball_volume(m - k) / ball_volume(m)
    return int(np.floor(ratio * (1 + 2 / gamma) ** k * 3 ** (m - k)))


def ball_net_bound(m: int, gamma: float) -> int:
    """Most centres a gamma-separated net can place in B_1"""
    return int(np.floor((1 + 2 / gamma) ** m))


def build_covering(labels: StrataLabels, k: int, gamma: Optional[float] = None, j: Optional[int] = None) -> CoveringTree:
    """Inductive ball covering of S^k_{eta, gamma^j}, one family per prefix of the bad-scale tuple"""
    gamma = gamma or labels.gamma
    j = labels.depth if j is None else j
    if j > labels.depth:
        logger.warning(f"covering depth {j} exceeds classified depth {labels.depth}; using {labels.depth}")
        j = labels.depth
    m = labels.m
    member = labels.members(k, j) if j >= 1 else np.zeros(len(labels.points), dtype=bool)
    pts = labels.points[member]
    T = labels.tuples[member, :j].astype(int)
    nodes = [CoveringNode(id=0, level=0, center=[0.0] * m, radius=1.0, pattern=[], parent=None)]
    balls_per_level = [1]
    families_per_level = [1]
    widths: List[float] = []
    if len(pts) == 0:
        return CoveringTree(
            k=k, eta=labels.eta, gamma=gamma, j=j, nodes=nodes, balls_per_level=balls_per_level,
            families_per_level=families_per_level, c0=0.0, c1=0.0, D=1, bound=1.0, stratum_points=0, uncovered=0,
        )

    assign = np.zeros(len(pts), dtype=int)
    per_parent: Dict[Tuple[int, int], int] = {}
    good_children = 0
    for a in range(1, j + 1):
        radius = gamma ** a
        new_assign = np.full(len(pts), -1)
        keys = sorted({(int(assign[i]), tuple(T[i, :a])) for i in range(len(pts))})
        for parent, pattern in keys:
            idx = np.flatnonzero((assign == parent) & np.all(T[:, :a] == pattern, axis=1))
            group = pts[idx]
            centres = _farthest_point_net(group, radius)
            first_id = len(nodes)
            for c in centres:
                nodes.append(CoveringNode(
                    id=len(nodes), level=a, center=[float(v) for v in group[c]], radius=radius,
                    pattern=[int(t) for t in pattern], parent=parent,
                ))
            nearest = np.argmin(
                np.linalg.norm(group[:, None, :] - group[centres][None, :, :], axis=-1), axis=1
            )
            new_assign[idx] = first_id + nearest
            # both families of a parent count towards its branching
            per_parent[(a, parent)] = per_parent.get((a, parent), 0) + len(centres)
            if pattern[-1] == 0:
                good_children = max(good_children, len(centres))
            widths.append(_tube_width(group, min(k, m)))
        assign = new_assign
        balls_per_level.append(sum(1 for n in nodes if n.level == a))
        families_per_level.append(len({tuple(T[i, :a]) for i in range(len(pts))}))

    leaves = np.array([n.center for n in nodes if n.level == j])
    gaps = np.linalg.norm(pts[:, None, :] - leaves[None, :, :], axis=-1).min(axis=1)
    uncovered = int(np.sum(gaps > gamma ** j + 1e-12))
    D = int(T.sum(axis=1).max()) + 1
    n0 = tube_net_bound(m, k, gamma)
    n1 = ball_net_bound(m, gamma)
    bound = float(j ** D * n1 ** min(D, j) * n0 ** max(j - D, 0))
    tree = CoveringTree(
        k=k, eta=labels.eta, gamma=gamma, j=j, nodes=nodes, balls_per_level=balls_per_level,
        families_per_level=families_per_level, c0=n0 * gamma ** k, c1=n1 * gamma ** m, D=D, bound=bound,
        stratum_points=int(len(pts)), uncovered=uncovered, tube_widths=widths,
        max_children=max(per_parent.values()), good_children=good_children, tube_bound=n0,
    )
    logger.info(f"Covering k={k} j={j}: {tree.leaf_count} leaves, bound {bound:.3g}, uncovered {uncovered}")
    return tree


@dataclass
class RegularityScaleField:
    """r_f on the lattice nodes (NaN off the domain), capped at r_cap"""

    lattice: Lattice
    r_f: np.ndarray
    alpha: float
    r_cap: float
    grad_norm: np.ndarray = field(repr=False, default=None)

    def region(self, r: float) -> np.ndarray:
        """B_r(f) as a node mask"""
        return self.lattice.inside & (np.nan_to_num(self.r_f, nan=np.inf) < r)

    def singular(self) -> np.ndarray:
        return self.region(SINGULAR_CELLS * self.lattice.h)

    def volume(self, r: float) -> float:
        return float(np.sum(self.lattice.node_volume[self.region(r)]))


def _offsets(lattice: Lattice, r_cap: float, limit: int) -> Tuple[np.ndarray, np.ndarray]:
    R = int(np.ceil(r_cap * lattice.n))
    grid = np.indices((2 * R + 1,) * lattice.dim).reshape(lattice.dim, -1).T - R
    d2 = np.sum(grid * grid, axis=1)
    keep = (d2 > 0) & (d2 <= (r_cap * lattice.n) ** 2 + 1e-9)
    grid, d2 = grid[keep], d2[keep]
    order = np.lexsort(tuple(grid.T[::-1]) + (d2,))
    grid, d2 = grid[order], d2[order]
    if len(grid) > limit:
        # nearest half in full, the rest by a fixed stride
        head = limit // 2
        tail = np.arange(head, len(grid), int(np.ceil((len(grid) - head) / (limit - head))))
        sel = np.concatenate([np.arange(head), tail])
        grid, d2 = grid[sel], d2[sel]
    return grid, d2


def regularity_scale(fmap: DiscreteMap, alpha: float = 0.25, r_cap: float = 1.0, max_offsets: int = HOLDER_OFFSETS) -> RegularityScaleField:
    """Largest r with r sup|grad f| + r^(1+alpha) [grad f]_alpha <= 1 over B_r(x).

    The Hölder quotient is taken over pairs anchored at x. Sups grow shell by shell of
    lattice offsets; between shells the norm is increasing in r and solved by bisection.
    """
    lat = fmap.lattice
    grad = nodal_gradient(fmap).reshape(lat.shape + (-1,))
    gnorm = np.linalg.norm(grad, axis=-1)
    r_f = np.full(lat.shape, np.nan)
    r_f[lat.inside] = r_cap
    result = RegularityScaleField(lat, r_f, alpha, r_cap, gnorm)
    if not np.any(gnorm[lat.inside] > 0):
        return result

    offsets, d2 = _offsets(lat, r_cap, max_offsets)
    R = int(np.ceil(r_cap * lat.n))
    pshape = tuple(s + 2 * R for s in lat.shape)
    inside_p = np.pad(lat.inside, R).ravel()
    gnorm_p = np.pad(gnorm, R).ravel()
    grad_p = np.pad(grad, [(R, R)] * lat.dim + [(0, 0)]).reshape(-1, grad.shape[-1])
    strides = np.array([int(np.prod(pshape[d + 1:])) for d in range(lat.dim)])
    flat_off = offsets @ strides

    box_pos = np.flatnonzero(lat.inside.ravel())
    multi = np.array(np.unravel_index(box_pos, lat.shape)).T + R
    active = multi @ strides
    owner = box_pos
    M = gnorm_p[active].copy()
    H = np.zeros_like(M)
    centre_grad = grad_p[active]
    out = r_f.ravel()
    h = lat.h
    lo_r = 0.0

    def settle(mask: np.ndarray, hi_r: float) -> None:
        lo = np.full(mask.sum(), lo_r)
        hi = np.full(mask.sum(), hi_r)
        Mm, Hm = M[mask], H[mask]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            over = mid * Mm + mid ** (1 + alpha) * Hm > 1.0
            hi = np.where(over, mid, hi)
            lo = np.where(over, lo, mid)
        out[owner[mask]] = lo

    shells = np.flatnonzero(np.diff(np.concatenate([[-1], d2])) != 0)
    bounds = list(shells) + [len(d2)]
    for s in range(len(shells)):
        if active.size == 0:
            break
        rho = min(np.sqrt(d2[bounds[s]]) * h, r_cap)
        cross = rho * M + rho ** (1 + alpha) * H > 1.0
        if cross.any():
            settle(cross, rho)
            keep = ~cross
            active, owner, M, H, centre_grad = active[keep], owner[keep], M[keep], H[keep], centre_grad[keep]
        if rho >= r_cap:
            break
        for q in range(bounds[s], bounds[s + 1]):
            nb = active + flat_off[q]
            ok = inside_p[nb]
            M = np.where(ok, np.maximum(M, gnorm_p[nb]), M)
            quotient = np.linalg.norm(grad_p[nb] - centre_grad, axis=1) / rho ** alpha
            H = np.where(ok, np.maximum(H, quotient), H)
        lo_r = rho
        jump = lo_r * M + lo_r ** (1 + alpha) * H > 1.0
        if jump.any():
            out[owner[jump]] = lo_r
            keep = ~jump
            active, owner, M, H, centre_grad = active[keep], owner[keep], M[keep], H[keep], centre_grad[keep]
    if active.size:
        cross = r_cap * M + r_cap ** (1 + alpha) * H > 1.0
        if cross.any():
            settle(cross, r_cap)
    result.r_f = out.reshape(lat.shape)
    return result


def scale_invariant_norm(fmap: DiscreteMap, node: Tuple[int, ...], r: float, alpha: float = 0.25) -> float:
    """||f||_{x,r} at one node, by brute force over the lattice nodes of B_r(x)"""
    lat = fmap.lattice
    grad = nodal_gradient(fmap).reshape(lat.shape + (-1,))
    x = lat.coords[node]
    dist = np.linalg.norm(lat.coords - x, axis=-1)
    ball = lat.inside & (dist <= r + DOMAIN_SLACK)
    sup = float(np.linalg.norm(grad[ball], axis=-1).max())
    others = ball & (dist > 0)
    holder = 0.0
    if others.any():
        holder = float((np.linalg.norm(grad[others] - grad[node], axis=-1) / dist[others] ** alpha).max())
    return r * sup + r ** (1 + alpha) * holder


def tube_volume(lattice: Lattice, points: np.ndarray, radii: Sequence[float]) -> List[float]:
    """Vol(B_r(S) ∩ B_1(0)) from fractional lattice cells"""
    vol = lattice.cell_volume
    cells = vol > 0
    centres = lattice.cell_centers[cells]
    weights = vol[cells]
    tree = cKDTree(points)
    dist, _ = tree.query(centres)
    reach = 0.5 * lattice.h * np.sqrt(lattice.dim)
    out = []
    for r in radii:
        full = dist + reach <= r
        mixed = np.abs(dist - r) < reach
        total = float(np.sum(weights[full & ~mixed]))
        if mixed.any():
            sub = centres[mixed][:, None, :] + lattice._sub_offsets[None, :, :]
            d_sub, _ = tree.query(sub.reshape(-1, lattice.dim))
            frac = (d_sub.reshape(sub.shape[:2]) <= r).mean(axis=1)
            total += float(np.sum(weights[mixed] * frac))
        out.append(total)
    return out


def minkowski_fit(points: np.ndarray, radii: Sequence[float], lattice: Lattice) -> MinkowskiReport:
    """Slope of log Vol(B_r(S)) against log r"""
    radii = np.sort(np.asarray(radii, dtype=np.float64))
    if len(radii) < 4 or radii[-1] < 10 * radii[0] * (1 - 1e-9):
        raise DegenerateFit(f"need at least 4 radii spanning a decade, got {radii.tolist()}")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64)).reshape(-1, lattice.dim)
    if len(points) == 0:
        logger.warning("Minkowski fit on an empty set; exponent undefined")
        return MinkowskiReport(exponent=None, intercept=None, radii=radii.tolist(), volumes=[0.0] * len(radii), degenerate=True)
    volumes = tube_volume(lattice, points, radii)
    slope, intercept = np.polyfit(np.log(radii), np.log(volumes), 1)
    return MinkowskiReport(exponent=float(slope), intercept=float(intercept), radii=radii.tolist(), volumes=volumes)


def minkowski_radii(lattice: Lattice, r_min_cells: float = 3.0, r_max: float = 0.6, count: int = 6) -> np.ndarray:
    # keep at least a decade of radii on coarse lattices
    return np.geomspace(min(r_min_cells * lattice.h, r_max / 10), r_max, count)


def singularity_census(
    fmap: DiscreteMap,
    r_cut: float = 0.1,
    census_radius: float = 0.5,
    alpha: float = 0.25,
    p: float = 2.0,
    delta: float = 0.5,
    rf: Optional[RegularityScaleField] = None,
) -> CensusReport:
    """Connected clusters of nodes with r_f < r_cut inside B_census_radius"""
    lat = fmap.lattice
    rf = rf or regularity_scale(fmap, alpha, r_cap=1.25 * r_cut)
    mask = rf.region(r_cut) & (lat.radius <= census_radius + DOMAIN_SLACK)
    structure = ndimage.generate_binary_structure(lat.dim, lat.dim)
    labelled, count = ndimage.label(mask, structure=structure)
    flags: List[str] = []
    borderline = lat.dim == int(np.floor(p)) + 1
    if not borderline:
        flags.append("non-borderline")
    clusters = []
    members = []
    for c in range(1, count + 1):
        sel = labelled == c
        coords = lat.coords[sel]
        members.append(coords)
        clusters.append(ClusterReport(
            center=[float(v) for v in coords.mean(axis=0)], nodes=int(sel.sum()),
            min_scale=float(np.nanmin(rf.r_f[sel])),
        ))
    for a in range(count):
        for b in range(a + 1, count):
            gap = np.min(np.linalg.norm(members[a][:, None, :] - members[b][None, :, :], axis=-1))
            if gap < UNRESOLVED_PAIR_CELLS * lat.h:
                flags.append("unresolved-pair")
                logger.warning(f"clusters {a} and {b} are {gap:.3g} apart, below {UNRESOLVED_PAIR_CELLS}h")
    centres = np.array([cl.center for cl in clusters]).reshape(-1, lat.dim)
    for a, cl in enumerate(clusters):
        cl.pinched, cl.isolated = _annulus_check(fmap, centres, a, delta, p)
        if cl.pinched and cl.isolated is False:
            flags.append("pinch-violation")
    report = CensusReport(count=count, r_cut=r_cut, clusters=clusters, borderline=borderline, flags=sorted(set(flags)))
    logger.info(f"Census of {fmap.label}: {count} clusters below r_cut={r_cut}")
    return report


def _annulus_check(fmap: DiscreteMap, centres: np.ndarray, a: int, delta: float, p: float) -> Tuple[Optional[bool], Optional[bool]]:
    """Energy pinching on an annulus around cluster a, and whether it holds no other cluster"""
    lat = fmap.lattice
    c = centres[a]
    r_out = min(0.25, 1.0 - float(np.linalg.norm(c)))
    r_in = max(r_out / 4, 3 * lat.h)
    if r_out < 2 * r_in:
        return None, None
    try:
        pinched = theta(fmap, c, r_out, p) - theta(fmap, c, r_in, p) <= delta
    except (ScaleUnderresolved, DomainExit):
        return None, None
    dist = np.linalg.norm(centres - c, axis=1)
    others = np.delete(dist, a)
    isolated = not np.any((others > r_in) & (others < r_out))
    return bool(pinched), bool(isolated)


def inclusion_chain(
    fmap: DiscreteMap,
    rf: RegularityScaleField,
    radii: Sequence[float],
    eps_incl: float,
    p: float = 2.0,
    sample: int = 12,
    quad: Optional[Quadrature] = None,
) -> List[Dict[str, object]]:
    """Checks S(f) in B_r(f), and that sampled points of B_r(f) fail (m - floor(p))-symmetry at some scale >= r"""
    lat = fmap.lattice
    k = lat.dim - int(np.floor(p))
    quad = quad or CLASSIFY_QUADRATURE
    singular = rf.singular()
    rows = []
    for r in radii:
        region = rf.region(r)
        contained = bool(np.all(region[singular]))
        candidates = lat.coords[region & (lat.radius <= 0.5 + DOMAIN_SLACK)]
        if len(candidates) > sample:
            candidates = candidates[np.linspace(0, len(candidates) - 1, sample).astype(int)]
        ladder = [s for s in (0.5 * 0.5 ** i for i in range(8)) if s >= r - DOMAIN_SLACK and s >= _floor(fmap)]
        failures = 0
        if 0 <= k <= lat.dim:
            for x in candidates:
                if all(is_symmetric(fmap, x, s, k, eps_incl, p, quad) for s in ladder):
                    failures += 1
        rows.append({"r": float(r), "singular_in_region": contained, "checked": int(len(candidates)), "symmetric_points": failures})
    return rows


def strata_volumes(labels: StrataLabels, k: int, lattice: Lattice) -> Tuple[List[float], List[float], Optional[float]]:
    """Vol(B_{gamma^j}(S^k_{eta, gamma^j})) for every classified depth j, and the fitted log-log slope"""
    radii, volumes = [], []
    for j in range(1, labels.depth + 1):
        pts = labels.points[labels.members(k, j)]
        r = labels.gamma ** j
        radii.append(r)
        volumes.append(tube_volume(lattice, pts, [r])[0] if len(pts) else 0.0)
    usable = [(r, v) for r, v in zip(radii, volumes) if v > 0]
    slope = None
    if len(usable) >= 2:
        slope = float(np.polyfit(np.log([u[0] for u in usable]), np.log([u[1] for u in usable]), 1)[0])
    return radii, volumes, slope
