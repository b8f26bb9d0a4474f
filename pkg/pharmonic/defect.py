from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .energy import ball_mass_grid, energy_density, radial_energy
from .errors import NotInSigma
from .fields import DiscreteMap
from .lattice import DOMAIN_SLACK, MIN_SCALE_CELLS, Lattice, Point
from .schemas import ClusterReport, ConcentrationReport
from .stratification import tube_volume

logger = logging.getLogger(__name__)

TAIL = 2
SIGMA_R_MAX = 0.3
SIGMA_LADDER = 6
HOMOGENEITY_SCALES = (0.1, 0.2, 0.3)
DENSITY_RADIUS = 0.5


@dataclass
class EnergyMeasure:
    """|grad u|^p dV aggregated on lattice cells, plus optional point masses"""

    lattice: Lattice
    density: np.ndarray
    p: float
    label: str = "measure"
    atoms: List[Tuple[Tuple[float, ...], float]] = field(default_factory=list)

    @classmethod
    def from_map(cls, fmap: DiscreteMap, p: float = 2.0) -> "EnergyMeasure":
        return cls(fmap.lattice, energy_density(fmap, p), p, fmap.label)

    @classmethod
    def point_mass(cls, lattice: Lattice, center: Point, mass: float, p: float) -> "EnergyMeasure":
        """A Dirac of the given mass; homogeneous about its center when m = p"""
        return cls(
            lattice, np.zeros(lattice.cell_shape), p, "point-mass",
            [(tuple(float(c) for c in center), float(mass))],
        )

    @property
    def masses(self) -> np.ndarray:
        return self.density * self.lattice.cell_volume

    @property
    def total(self) -> float:
        return float(np.sum(self.masses)) + sum(m for _, m in self.atoms)

    def mass(self, x: Point, r: float) -> float:
        """mu(B_r(x) ∩ B_1(0))"""
        lat = self.lattice
        x = np.asarray(x, dtype=np.float64)
        box, w = lat.ball_weights(x, r, cells=True)
        out = float(np.sum(w * self.density[box]))
        for c, m in self.atoms:
            if np.linalg.norm(np.asarray(c) - x) < r:
                out += m
        return out

    def theta(self, x: Point, r: float) -> float:
        return r ** (self.p - self.lattice.dim) * self.mass(x, r)

    def theta_grid(self, r: float) -> np.ndarray:
        lat = self.lattice
        grid = ball_mass_grid(lat, self.masses, r)
        for c, m in self.atoms:
            grid = grid + m * (np.linalg.norm(lat.coords - np.asarray(c), axis=-1) < r)
        return grid * r ** (self.p - lat.dim)


def accumulate(
    maps: Sequence[DiscreteMap], p: float = 2.0, limit: Optional[DiscreteMap] = None
) -> Tuple[List[EnergyMeasure], EnergyMeasure]:
    """Energy measures of a map sequence and of its weak-limit candidate (the last map unless supplied)"""
    if not maps:
        raise ValueError("empty map sequence")
    lat = maps[0].lattice
    for fmap in maps[1:]:
        lat.check_same(fmap.lattice)
    if limit is not None:
        lat.check_same(limit.lattice)
    measures = [EnergyMeasure.from_map(fmap, p) for fmap in maps]
    totals = [m.total for m in measures]
    logger.info(f"Accumulated {len(measures)} measures, masses {[round(t, 4) for t in totals]}")
    limit_measure = EnergyMeasure.from_map(limit if limit is not None else maps[-1], p)
    return measures, limit_measure


def sigma_radii(lattice: Lattice, floor_cells: float = MIN_SCALE_CELLS, r_max: float = SIGMA_R_MAX, count: int = SIGMA_LADDER) -> np.ndarray:
    """Geometric ladder from floor_cells * h up to r_max; a node joins Sigma only if it passes at every rung.

    The smallest tail map has to carry mass eps_thresh inside the smallest rung,
    so sequences whose early scales are wide need a larger floor.
    """
    return np.geomspace(floor_cells * lattice.h, r_max, count)


def detect_sigma(
    measures: Sequence[EnergyMeasure],
    eps_thresh: float = 1.0,
    radii: Optional[Sequence[float]] = None,
    limit: Optional[EnergyMeasure] = None,
    tail: int = TAIL,
    tol: float = 1e-6,
) -> ConcentrationReport:
    """Concentration set: nodes where the tail minimum of theta_mu over every ladder radius exceeds eps_thresh"""
    if len(measures) < tail:
        raise ValueError(f"need at least {tail} measures in the sequence tail, got {len(measures)}")
    last = measures[-1]
    lat = last.lattice
    radii = sigma_radii(lat) if radii is None else np.asarray(radii, dtype=np.float64)
    for mu in measures:
        lat.check_same(mu.lattice)
    flags: List[str] = []

    liminf = np.full(lat.shape, np.inf)
    for mu in measures[-tail:]:
        for r in radii:
            liminf = np.fmin(liminf, np.nan_to_num(mu.theta_grid(r), nan=-np.inf))
    sigma = lat.inside & (liminf > eps_thresh)
    structure = ndimage.generate_binary_structure(lat.dim, lat.dim)
    labelled, count = ndimage.label(sigma, structure=structure)
    cells = np.argwhere(sigma)

    if limit is None:
        limit = EnergyMeasure(lat, np.zeros(lat.cell_shape), last.p, "zero")
        flags.append("no-limit-map")
    else:
        lat.check_same(limit.lattice)
    nu = last.masses - limit.masses
    total = last.total
    limit_mass = limit.total
    defect_mass = total - limit_mass

    clusters = []
    for c in range(1, count + 1):
        sel = labelled == c
        pts = lat.coords[sel]
        center = pts.mean(axis=0)
        clusters.append(ClusterReport(
            center=[float(v) for v in center], nodes=int(sel.sum()), min_scale=float(min(radii)),
            extent=float(np.max(np.linalg.norm(pts - center, axis=1))),
        ))
    density_ratio = None
    if clusters:
        centres = np.array([cl.center for cl in clusters])
        cell_mask = lat.cell_volume > 0
        _, owner = cKDTree(centres).query(lat.cell_centers[cell_mask])
        per_cell = nu[cell_mask]
        atom_share = np.zeros(len(clusters))
        for a, m in last.atoms:
            atom_share[int(cKDTree(centres).query(np.asarray(a))[1])] += m
        for a, m in limit.atoms:
            atom_share[int(cKDTree(centres).query(np.asarray(a))[1])] -= m
        for idx, cl in enumerate(clusters):
            cl.mass = float(np.sum(per_cell[owner == idx])) + float(atom_share[idx])
            if cl.mass < -tol:
                flags.append("negative-defect")
                logger.warning(f"defect mass {cl.mass:.4g} below zero around {cl.center}")
        near = sum(last.mass(cl.center, min(DENSITY_RADIUS, 1.0 - np.linalg.norm(cl.center))) for cl in clusters)
        density_ratio = near / total if total > 0 else None
        volume_table = [[float(r), v] for r, v in zip(radii, tube_volume(lat, lat.coords[sigma], radii))]
    else:
        flags.append("empty-sigma")
        volume_table = [[float(r), 0.0] for r in radii]

    report = ConcentrationReport(
        sigma_cells=cells.tolist(), clusters=clusters, densities=[float(v) for v in liminf[sigma]],
        total_mass=total, limit_mass=limit_mass, defect_mass=defect_mass, volume_table=volume_table,
        density_ratio=density_ratio, flags=sorted(set(flags)),
    )
    logger.info(f"Sigma: {count} clusters, {len(cells)} cells, defect mass {defect_mass:.5g}")
    return report


def homogeneity_check(
    measure: EnergyMeasure,
    x: Point,
    scales: Sequence[float],
    report: Optional[ConcentrationReport] = None,
    fmap: Optional[DiscreteMap] = None,
) -> float:
    """Relative spread of theta_mu(x, .) over the scales, plus the radial energy on the annuli between them"""
    lat = measure.lattice
    x = np.asarray(x, dtype=np.float64)
    if report is not None:
        cells = np.asarray(report.sigma_cells).reshape(-1, lat.dim)
        where = lat.coords[tuple(cells.T)] if len(cells) else np.zeros((0, lat.dim))
        if len(where) == 0 or np.min(np.linalg.norm(where - x, axis=1)) > lat.h * np.sqrt(lat.dim) + DOMAIN_SLACK:
            raise NotInSigma(f"{x.tolist()} is not in the detected concentration set")
    scales = sorted(float(s) for s in scales)
    values = np.array([measure.theta(x, r) for r in scales])
    top = max(float(values.max()), 1e-12)
    deviation = float(values.max() - values.min()) / top
    if fmap is not None:
        radial = max(
            (radial_energy(fmap, x, s, r, measure.p) for s, r in zip(scales[:-1], scales[1:])),
            default=0.0,
        )
        deviation += radial / top
    return deviation
