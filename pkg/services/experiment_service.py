from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np
from pydantic import ValidationError

from config import ExperimentConfig
from pharmonic.defect import HOMOGENEITY_SCALES, accumulate, detect_sigma, homogeneity_check, sigma_radii
from pharmonic.energy import PROFILE_FLOOR_CELLS, bump_fields, p_energy, scale_profile, stationarity_residual, theta
from pharmonic.errors import (
    ConfigError,
    Divergence,
    DomainExit,
    InvariantViolation,
    LabError,
    NodeOutOfRange,
    NotInSigma,
    ScaleUnderresolved,
)
from pharmonic.fields import DiscreteMap, load_field
from pharmonic.lattice import Lattice, ball_volume, nodal_gradient
from pharmonic.minimizer import SolveConfig, make_bubble_sequence, solve
from pharmonic.presets import (
    analytic_preset,
    boundary_preset,
    bubble_ball_energy,
    bubble_map,
    constant_map,
    field_boundary,
    radial_map,
)
from pharmonic.schemas import CheckResult, SolveReport, VerifyReport
from pharmonic.stratification import (
    CLASSIFY_QUADRATURE,
    StrataLabels,
    bad_scale_bound,
    bad_scale_profile,
    build_covering,
    classify_strata,
    count_bad_scales,
    inclusion_chain,
    minkowski_fit,
    minkowski_radii,
    regularity_scale,
    singularity_census,
    strata_volumes,
)
from pharmonic.symmetry import (
    Quadrature,
    calibrate_cone_splitting,
    cone_splitting_counterexamples,
    cone_splitting_sweep,
    defect_chain,
    homogeneous_defect,
    k_symmetric_defect,
)
from pharmonic.target import Target
from services.report_writer import ReportWriter

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DIVERGENCE = 3
EXIT_INVARIANT = 4

USAGE_ERRORS = (ConfigError, NodeOutOfRange, NotInSigma, ScaleUnderresolved, DomainExit)
HOMOGENEOUS_PRESETS = ("radial", "axial", "blend", "constant")

MONOTONICITY_POINTS = 50
STATIONARITY_FIELDS = 10
STATIONARITY_TOL = 0.05
BAD_SCALE_POINTS = 10
# relative lattice error of theta for x/|x| grows like h/r
THETA_TOL = 0.03
THETA_CELL_ALLOWANCE = 0.5
BUBBLE_RATIO_BOUND = 50.0
BUBBLE_SLOPE_MIN = 1.7
SIGMA_FLOOR_CELLS = 6
SOLVER_ENERGY_TOL = 0.05
SOLVER_RESIDUAL_MAX = 0.1
SPHERE3 = Target("sphere", 3)


def radial_theta(m: int, p: float) -> float:
    """theta(0, r) of x/|x|: (m-1)^(p/2) |S^(m-1)| / (m-p)"""
    return (m - 1) ** (0.5 * p) * m * ball_volume(m, 1.0) / (m - p)


def sigma_reach(r_min: float, lam: float) -> float:
    """How far Sigma of a centred bubble at scale 1/lam extends when eps_thresh is 1"""
    return r_min + 1.5 / lam


def _basis_cell(basis: Sequence[Sequence[float]]) -> str:
    """Basis vectors of V as 'a b c' groups joined by ';'"""
    return ";".join(" ".join(f"{c:.6g}" for c in row) for row in basis)


class ExperimentService:
    def __init__(self, config: ExperimentConfig, writer: Optional[ReportWriter] = None):
        self.config = config
        self.writer = writer or ReportWriter(config)
        self.lattice = Lattice.from_h(config.m, config.h)
        self.target = Target.parse(config.target)
        self.quad = Quadrature(config.n_directions, config.n_radial, config.n_candidates)
        self.checks: List[CheckResult] = []
        self.handlers: Dict[str, Callable[..., Any]] = {
            "solve": self._handle_solve,
            "verify": self._handle_verify,
            "symmetry": self._handle_symmetry,
            "strata": self._handle_strata,
            "covering": self._handle_covering,
            "minkowski": self._handle_minkowski,
            "census": self._handle_census,
            "defect": self._handle_defect,
            "reproduce": self._handle_reproduce,
        }
        self.experiments: Dict[str, Callable[[], Dict[str, Any]]] = {
            "theta-constancy": self._theta_constancy,
            "monotonicity": self._monotonicity,
            "minkowski-xoverx": self._minkowski_xoverx,
            "minkowski-bubble": self._minkowski_bubble,
            "census": self._census,
            "cone-splitting": self._cone_splitting,
            "bubble-defect": self._bubble_defect,
            "defect-noninteger": self._defect_noninteger,
            "integrability": self._integrability,
            "regularity-m-le-p": self._regularity_m_le_p,
            "solver-convergence": self._solver_convergence,
        }

    @property
    def violations(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def run(self, command: str, **options: Any) -> int:
        handler = self.handlers.get(command)
        if handler is None:
            logger.error(f"Unknown command {command!r}; known: {', '.join(self.handlers)}")
            return EXIT_USAGE
        logger.info(f"Running {command} (config {self.writer.config_hash[:12]})")
        try:
            handler(**options)
            if self.violations and self.config.strict:
                raise InvariantViolation(", ".join(c.name for c in self.violations))
        except InvariantViolation as e:
            logger.error(f"{command}: {e}")
            return EXIT_INVARIANT
        except Divergence as e:
            logger.error(f"{command}: {e}")
            return EXIT_DIVERGENCE
        except USAGE_ERRORS as e:
            logger.error(f"{command}: {e}")
            return EXIT_USAGE
        except LabError as e:
            logger.error(f"{command}: {e}")
            return EXIT_FAILURE
        except ValueError as e:
            logger.error(f"{command}: {e}")
            return EXIT_USAGE
        if self.violations:
            logger.warning(f"{command}: {len(self.violations)} checks failed: {[c.name for c in self.violations]}")
        return EXIT_OK

    def _check(self, name: str, passed: bool, value: Optional[float] = None, bound: Optional[float] = None, detail: str = "") -> CheckResult:
        result = CheckResult(
            name=name, passed=bool(passed),
            value=None if value is None else float(value),
            bound=None if bound is None else float(bound),
            detail=detail,
        )
        if not result.passed:
            logger.warning(f"check {name} failed: value={value} bound={bound} {detail}")
        self.checks.append(result)
        return result

    # -- inputs -----------------------------------------------------------

    def solve_config(self, p: Optional[float] = None) -> SolveConfig:
        cfg = self.config
        try:
            return SolveConfig(
                p=cfg.p if p is None else p, max_iter=cfg.max_iter, tol_energy=cfg.tol_energy,
                tol_grad=cfg.tol_grad, init=cfg.init, seed=cfg.seed, perturbation=cfg.perturbation,
                eps_reg=cfg.eps_reg,
            )
        except ValidationError as e:
            raise ConfigError(str(e))

    def solve_boundary(self, spec: str, lattice: Lattice, target: Target, p: Optional[float] = None) -> Tuple[DiscreteMap, SolveReport]:
        boundary = boundary_preset(spec, lattice.dim, target)
        return solve(boundary, target, lattice, self.solve_config(p), label=spec)

    def input_map(self, default_preset: Optional[str] = None) -> DiscreteMap:
        """The map under analysis: a field file, an analytic preset, or a solve of the configured boundary"""
        cfg = self.config
        if cfg.field_path:
            fmap = load_field(cfg.field_path)
            self.lattice = fmap.lattice
            return fmap
        preset = cfg.preset or default_preset
        if preset:
            return analytic_preset(preset, self.lattice, cfg.preset_param)
        fmap, report = self.solve_boundary(cfg.boundary, self.lattice, self.target)
        self._check("solver-energy-monotone", report.energy_monotone, detail=fmap.label)
        return fmap

    # -- subcommands ------------------------------------------------------

    def _handle_solve(self, out: Optional[str] = None, **_: Any) -> SolveReport:
        cfg = self.config
        if cfg.field_path:
            boundary = field_boundary(load_field(cfg.field_path))
            fmap, report = solve(boundary, self.target, self.lattice, self.solve_config(), label="field-trace")
        else:
            fmap, report = self.solve_boundary(cfg.boundary, self.lattice, self.target)
        self._check("solver-energy-monotone", report.energy_monotone, detail=fmap.label)
        self.writer.write_field(fmap, out or "solution.field")
        self.writer.write_json("solve_report.json", "solve", report)
        profile = scale_profile(fmap, np.zeros(fmap.lattice.dim), cfg.gamma, cfg.r_max, cfg.p)
        header = [f"x{i + 1}" for i in range(fmap.lattice.dim)] + ["r", "theta"]
        self.writer.write_csv("profile.csv", header, profile.rows())
        return report

    def _handle_verify(self, **_: Any) -> VerifyReport:
        fmap = self.input_map(default_preset="radial")
        name = self.config.preset or ("radial" if not self.config.field_path else fmap.label)
        report = self.verify_suite(fmap, name)
        self.writer.write_json("verify.json", "verify", report)
        return report

    def verify_suite(self, fmap: DiscreteMap, name: str) -> VerifyReport:
        """theta constancy (homogeneous presets), monotonicity, stationarity and the bad-scale bound"""
        cfg = self.config
        lat = fmap.lattice
        p = cfg.p
        start = len(self.checks)
        origin = np.zeros(lat.dim)

        if name in HOMOGENEOUS_PRESETS:
            scales = [r for r in np.geomspace(cfg.r_max, 0.1, 5) if r >= 3 * lat.h]
            values = np.array([theta(fmap, origin, r, p) for r in scales])
            reference = radial_theta(lat.dim, p) if name == "radial" and lat.dim > p else values[0]
            for r, value in zip(scales, values):
                tol = THETA_TOL + THETA_CELL_ALLOWANCE * lat.h / r
                err = abs(value - reference) / max(abs(reference), 1e-12)
                self._check("theta-constancy", err <= tol, err, tol, f"r={r:.4g} theta={value:.6g}")

        rng = np.random.default_rng(cfg.seed)
        dirs = rng.normal(size=(MONOTONICITY_POINTS - 1, lat.dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = 0.5 * rng.uniform(size=(MONOTONICITY_POINTS - 1, 1)) ** (1.0 / lat.dim)
        points = np.vstack([origin, dirs * radii])
        floor = PROFILE_FLOOR_CELLS * lat.h
        bad_pairs = 0
        for x in points:
            profile = scale_profile(fmap, x, cfg.gamma, cfg.r_max, p)
            tol = cfg.tol_mono * max(float(profile.theta[0]), 1.0)
            bad_pairs += len(profile.monotonicity_violations(tol, floor))
        self._check("monotonicity", bad_pairs == 0, bad_pairs, 0, f"{len(points)} base points")

        residuals = [abs(stationarity_residual(fmap, xi, p)) for xi in bump_fields(lat, STATIONARITY_FIELDS, cfg.seed)]
        worst = max(residuals)
        self._check("stationarity", worst <= STATIONARITY_TOL, worst, STATIONARITY_TOL, f"{len(residuals)} test fields")

        over = 0
        for x in points[:BAD_SCALE_POINTS]:
            count = count_bad_scales(bad_scale_profile(fmap, x, cfg.gamma, p), cfg.delta, cfg.A)
            if count > bad_scale_bound(fmap, x, cfg.delta, cfg.A, p):
                over += 1
        self._check("bad-scale-bound", over == 0, over, 0, f"{BAD_SCALE_POINTS} base points")
        return VerifyReport(preset=name, checks=self.checks[start:])

    def _handle_symmetry(self, x: Optional[Sequence[float]] = None, r: Optional[float] = None, k: Optional[int] = None, **_: Any) -> Dict[str, Any]:
        cfg = self.config
        fmap = self.input_map()
        m = fmap.lattice.dim
        x = np.zeros(m) if x is None else np.asarray(x, dtype=np.float64)
        r = cfg.r_max if r is None else r
        k = 0 if k is None else k
        reports = [homogeneous_defect(fmap, x, r, cfg.p, self.quad)]
        if k >= 1:
            reports.append(k_symmetric_defect(fmap, x, r, k, cfg.p, self.quad))
        verdict = reports[-1].is_symmetric(cfg.epsilon)
        logger.info(f"T_(x={x.tolist()}, r={r:g}) is{'' if verdict else ' not'} ({k}, {cfg.epsilon:g})-symmetric")
        header = [f"x{i + 1}" for i in range(m)] + ["r", "k", "defect", "symmetric", "basis"]
        rows = [
            list(rep.x) + [rep.r, rep.k, rep.defect, int(rep.is_symmetric(cfg.epsilon)), _basis_cell(rep.subspace)]
            for rep in reports
        ]
        self.writer.write_csv("symmetry.csv", header, rows)
        payload: Dict[str, Any] = {
            "homogeneous": reports[0],
            "chain": defect_chain(fmap, x, r, cfg.p, self.quad),
            "k": k,
            "eps": cfg.epsilon,
            "is_symmetric": verdict,
        }
        if k >= 1:
            payload["k_symmetric"] = reports[-1]
        self.writer.write_json("symmetry.json", "symmetry", payload)
        return payload

    def classify(self, fmap: DiscreteMap) -> StrataLabels:
        cfg = self.config
        return classify_strata(
            fmap, cfg.gamma, cfg.epsilon, cfg.eta, cfg.strata_k_max, cfg.j_max, cfg.p,
            stride=cfg.stride, quad=self.quad, workers=cfg.workers,
        )

    def _handle_strata(self, **_: Any) -> StrataLabels:
        fmap = self.input_map()
        labels = self.classify(fmap)
        header = [f"x{i + 1}" for i in range(labels.m)] + ["tuple"] + [f"S{k}" for k in range(labels.k_max + 1)]
        self.writer.write_csv("strata.csv", header, labels.rows())
        counts = {f"S{k}_j{j}": int(mask.sum()) for (k, j), mask in labels.membership_table().items()}
        # membership shrinks with the scale and grows with k
        nested = all(
            np.all(labels.members(k, j + 1) <= labels.members(k, j))
            for k in range(labels.k_max + 1) for j in range(1, labels.depth)
        ) and all(
            np.all(labels.members(k, j) <= labels.members(k + 1, j))
            for k in range(labels.k_max) for j in range(1, labels.depth + 1)
        )
        self._check("strata-nesting", nested)
        volumes = {}
        for k in range(labels.k_max + 1):
            radii, vols, slope = strata_volumes(labels, k, fmap.lattice)
            volumes[f"S{k}"] = {"radii": radii, "volumes": vols, "slope": slope}
        self.writer.write_json("strata.json", "strata", {
            "points": len(labels.points), "depth": labels.depth, "scales": labels.scales, "counts": counts,
            "volumes": volumes,
        })
        return labels

    def _handle_covering(self, k: Optional[int] = None, **_: Any) -> Dict[str, Any]:
        cfg = self.config
        fmap = self.input_map()
        labels = self.classify(fmap)
        k = 0 if k is None else k
        tree = build_covering(labels, k, cfg.gamma, labels.depth)
        self._check("covering-soundness", tree.uncovered == 0, tree.uncovered, 0)
        self._check("covering-cardinality", tree.leaf_count <= tree.bound, tree.leaf_count, tree.bound)
        self._check("covering-tube-branching", tree.good_children <= tree.tube_bound, tree.good_children, tree.tube_bound)
        if tree.stratum_points and labels.depth:
            member = labels.members(k, labels.depth)
            worst = 0
            for x, t in zip(labels.points[member], labels.tuples[member]):
                if int(t.sum()) > bad_scale_bound(fmap, x, cfg.delta, cfg.A, cfg.p):
                    worst += 1
            self._check("bad-scale-tuple-bound", worst == 0, worst, 0)
        payload = tree.model_dump(by_alias=True)
        payload["leaf_count"] = tree.leaf_count
        self.writer.write_json("covering.json", "covering", payload)
        return payload

    def _handle_minkowski(self, **_: Any) -> Dict[str, Any]:
        cfg = self.config
        fmap = self.input_map()
        lat = fmap.lattice
        incl_radii = [2 * lat.h, 4 * lat.h, 8 * lat.h]
        rf = regularity_scale(fmap, cfg.alpha, r_cap=min(cfg.reg_r_max, max(incl_radii)))
        singular = lat.coords[rf.singular()]
        fit = minkowski_fit(singular, minkowski_radii(lat), lat)
        self.writer.write_csv("minkowski.csv", ["r", "volume"], list(zip(fit.radii, fit.volumes)))
        chain = inclusion_chain(fmap, rf, incl_radii, cfg.eps_incl, cfg.p, quad=CLASSIFY_QUADRATURE)
        for row in chain:
            self._check("inclusion-singular", row["singular_in_region"], detail=f"r={row['r']:.4g}")
            self._check("inclusion-symmetry", row["symmetric_points"] == 0, row["symmetric_points"], 0, f"r={row['r']:.4g}")
        payload = {"fit": fit, "singular_nodes": len(singular), "inclusion": chain}
        self.writer.write_json("minkowski.json", "minkowski", payload)
        return payload

    def _handle_census(self, **_: Any) -> Dict[str, Any]:
        cfg = self.config
        fmap = self.input_map()
        report = singularity_census(fmap, cfg.r_cut, cfg.census_radius, cfg.alpha, cfg.p, cfg.delta)
        self._check("annulus-isolation", "pinch-violation" not in report.flags)
        self.writer.write_json("census.json", "census", report)
        return report.model_dump()

    def _handle_defect(self, seq: Optional[str] = None, limit: Optional[str] = None, **_: Any) -> Dict[str, Any]:
        cfg = self.config
        if not seq:
            raise ConfigError("defect needs a sequence directory (--seq)")
        files = sorted(f for f in Path(seq).iterdir() if f.suffix in (".field", ".csv"))
        if not files:
            raise ConfigError(f"no field files in {seq}")
        maps = [load_field(f) for f in files]
        limit_map = load_field(limit) if limit else None
        measures, limit_measure = accumulate(maps, cfg.p, limit_map)
        report = detect_sigma(measures, cfg.eps_thresh, None, limit_measure if limit_map else None)
        homogeneity = [
            homogeneity_check(measures[-1], cl.center, HOMOGENEITY_SCALES, fmap=maps[-1])
            for cl in report.clusters
            if np.linalg.norm(cl.center) + max(HOMOGENEITY_SCALES) <= 1.0
        ]
        payload = {"files": [f.name for f in files], "report": report, "homogeneity": homogeneity}
        self.writer.write_json("defect.json", "defect", payload)
        return payload

    def _handle_reproduce(self, experiment: Optional[str] = None, **_: Any) -> Dict[str, Any]:
        if experiment not in self.experiments:
            raise ConfigError(f"unknown experiment {experiment!r}; known: {', '.join(self.experiments)}")
        logger.info(f"Reproducing {experiment}")
        start = len(self.checks)
        payload = self.experiments[experiment]()
        payload["checks"] = [c.model_dump() for c in self.checks[start:]]
        self.writer.write_json(f"reproduce_{experiment}.json", f"reproduce {experiment}", payload)
        return payload

    # -- reproduce registry -------------------------------------------------

    def _theta_constancy(self) -> Dict[str, Any]:
        lat = Lattice(3, 64)
        fmap = radial_map(lat)
        closed = radial_theta(3, 2.0)
        rows = []
        for r in (0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5):
            value = theta(fmap, np.zeros(3), r, 2.0)
            err = abs(value - closed) / closed
            tol = THETA_TOL + THETA_CELL_ALLOWANCE * lat.h / r
            rows.append([r, value, err, tol])
            self._check("theta-constancy", err <= tol, err, tol, f"r={r}")
        self.writer.write_csv("theta_constancy.csv", ["r", "theta", "rel_error", "tolerance"], rows)
        return {"closed_form": closed, "rows": rows}

    def _monotonicity(self) -> Dict[str, Any]:
        cfg = self.config
        lat = Lattice(3, 24)
        maps = [radial_map(lat)]
        for spec in ("radial", "constant", "equator-winding:1", "tilted:0.5", "tilted:2"):
            fmap, report = self.solve_boundary(spec, lat, SPHERE3, p=2.0)
            self._check("solver-energy-monotone", report.energy_monotone, detail=spec)
            maps.append(fmap)
        rng = np.random.default_rng(cfg.seed)
        rows = []
        for fmap in maps:
            dirs = rng.normal(size=(MONOTONICITY_POINTS, 3))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            points = dirs * 0.5 * rng.uniform(size=(MONOTONICITY_POINTS, 1)) ** (1.0 / 3)
            bad = 0
            for x in points:
                profile = scale_profile(fmap, x, 0.7, 0.5, 2.0)
                bad += len(profile.monotonicity_violations(cfg.tol_mono * max(float(profile.theta[0]), 1.0), PROFILE_FLOOR_CELLS * lat.h))
            rows.append([fmap.label, MONOTONICITY_POINTS, bad])
            self._check("monotonicity", bad == 0, bad, 0, fmap.label)
        self.writer.write_csv("monotonicity.csv", ["map", "points", "violations"], rows)
        return {"rows": rows}

    def _minkowski_xoverx(self) -> Dict[str, Any]:
        cfg = self.config
        lat = Lattice(3, 64)
        fmap = radial_map(lat)
        rf = regularity_scale(fmap, cfg.alpha, r_cap=2 * lat.h)
        singular = lat.coords[rf.singular()]
        fit = minkowski_fit(singular, np.geomspace(3 * lat.h, 0.6, 6), lat)
        self._check("minkowski-exponent", fit.exponent is not None and fit.exponent >= 2.7, fit.exponent, 2.7)
        chain = inclusion_chain(fmap, rf, [lat.h, 2 * lat.h], cfg.eps_incl, 2.0, quad=CLASSIFY_QUADRATURE)
        for row in chain:
            self._check("inclusion-singular", row["singular_in_region"], detail=f"r={row['r']:.4g}")
            self._check("inclusion-symmetry", row["symmetric_points"] == 0, row["symmetric_points"], 0)
        self.writer.write_csv("minkowski_xoverx.csv", ["r", "volume"], list(zip(fit.radii, fit.volumes)))
        return {"fit": fit, "singular_nodes": len(singular), "inclusion": chain}

    def _minkowski_bubble(self) -> Dict[str, Any]:
        cfg = self.config
        lat = Lattice(2, 64)
        fmap = bubble_map(lat, 8.0)
        energy = p_energy(fmap, None, 2.0)
        rf = regularity_scale(fmap, cfg.alpha, r_cap=0.4)
        rows = []
        for r in np.geomspace(0.05, 0.4, 5):
            vol = rf.volume(r)
            rows.append([float(r), vol, vol / (r ** 2 * energy)])
        ratio = max(row[2] for row in rows)
        self._check("bubble-volume-ratio", ratio <= BUBBLE_RATIO_BOUND, ratio, BUBBLE_RATIO_BOUND)
        usable = [row for row in rows if row[1] > 0]
        slope = float(np.polyfit(np.log([u[0] for u in usable]), np.log([u[1] for u in usable]), 1)[0]) if len(usable) >= 2 else None
        self._check("bubble-volume-slope", slope is not None and slope >= BUBBLE_SLOPE_MIN, slope, BUBBLE_SLOPE_MIN)
        self.writer.write_csv("minkowski_bubble.csv", ["r", "volume", "ratio"], rows)
        return {"energy": energy, "rows": rows, "slope": slope}

    def _census(self) -> Dict[str, Any]:
        cfg = self.config
        rows = []
        cases = [
            ("radial", radial_map, (3, 12), (3, 24), 1, 2.0),
            ("constant", lambda lat: constant_map(lat, SPHERE3), (3, 12), (3, 24), 0, 2.0),
            ("two-bubble", lambda lat: bubble_map(lat, 8.0, ((-0.4, 0.0), (0.4, 0.0))), (2, 64), (2, 128), 2, 2.0),
        ]
        for name, build, coarse, fine, expected, p in cases:
            for dim, n in (coarse, fine):
                fmap = build(Lattice(dim, n))
                for factor in (0.8, 1.0, 1.2):
                    r_cut = cfg.r_cut * factor
                    report = singularity_census(fmap, r_cut, cfg.census_radius, cfg.alpha, p, cfg.delta)
                    rows.append([name, f"1/{n}", r_cut, report.count, ";".join(report.flags)])
                    self._check("census-count", report.count == expected, report.count, expected, f"{name} h=1/{n} r_cut={r_cut:.3g}")
        self.writer.write_csv("census.csv", ["map", "h", "r_cut", "count", "flags"], rows)
        return {"rows": rows}

    def _cone_splitting(self) -> Dict[str, Any]:
        cfg = self.config
        lat = Lattice(3, 16)
        rows = cone_splitting_sweep(lat, np.linspace(0.0, 1.0, 20), p=2.0)
        calibrated = calibrate_cone_splitting(rows, cfg.eps_cs)
        bad = cone_splitting_counterexamples(rows, cfg.eps_cs, cfg.eta_cs)
        self._check("cone-splitting", not bad, len(bad), 0, f"eps_cs={cfg.eps_cs} eta_cs={cfg.eta_cs}")
        table = [[row["t"], row["d0_origin"], row["d0_offset"], row["d1"]] for row in rows]
        self.writer.write_csv("cone_splitting.csv", ["t", "d0_origin", "d0_offset", "d1"], table)
        return {"rows": rows, "calibrated_eta_cs": calibrated, "counterexamples": len(bad)}

    def _bubble_defect(self) -> Dict[str, Any]:
        cfg = self.config
        lat = Lattice(2, 128)
        indices = [1, 2, 3, 4]
        maps = [make_bubble_sequence(i, lat) for i in indices]
        limit = constant_map(lat, SPHERE3)
        measures, limit_measure = accumulate(maps, 2.0, limit)
        # the first tail bubble (lambda = 8) must hold eps_thresh inside the smallest rung
        radii = sigma_radii(lat, floor_cells=SIGMA_FLOOR_CELLS)
        report = detect_sigma(measures, cfg.eps_thresh, radii, limit_measure)
        origin_cell = [lat.n, lat.n]
        self._check("sigma-single-cluster", len(report.clusters) == 1, len(report.clusters), 1)
        self._check("sigma-contains-origin", origin_cell in report.sigma_cells)
        if report.clusters:
            offset = float(np.linalg.norm(report.clusters[0].center))
            self._check("sigma-centered", offset <= lat.h, offset, lat.h)
        lam = 2.0 ** indices[-1]
        reach = sigma_reach(radii[0], lam)
        spread = max((float(np.linalg.norm(lat.coords[tuple(c)])) for c in report.sigma_cells), default=0.0)
        self._check("sigma-extent", spread <= reach, spread, reach, f"{len(report.sigma_cells)} nodes")
        expected = bubble_ball_energy(lam, 1.0)
        err = abs(report.defect_mass - expected) / expected
        self._check("defect-mass", err <= 0.05, err, 0.05, f"closed form {expected:.6g}")
        rows = []
        deviations = []
        for i, fmap, mu in zip(indices, maps, measures):
            closed = bubble_ball_energy(2.0 ** i, 1.0)
            mass_err = abs(mu.total - closed) / closed
            self._check("bubble-mass", mass_err <= 0.03, mass_err, 0.03, f"lambda={2 ** i}")
            deviation = homogeneity_check(mu, np.zeros(2), HOMOGENEITY_SCALES, fmap=fmap)
            deviations.append(deviation)
            grad_max = float(np.max(np.linalg.norm(nodal_gradient(fmap), axis=(-2, -1))))
            rows.append([i, 2.0 ** i, mu.total, closed, deviation, grad_max])
        decreasing = all(b < a for a, b in zip(deviations, deviations[1:]))
        self._check("homogeneity-decreasing", decreasing, detail=str([round(d, 4) for d in deviations]))
        self.writer.write_csv("bubble_defect.csv", ["i", "lambda", "mass", "closed_form", "homogeneity", "grad_max"], rows)
        self.writer.write_csv("bubble_sigma_volume.csv", ["r", "volume"], report.volume_table)

        pair = [bubble_map(lat, 2.0 ** i, ((-0.4, 0.0), (0.4, 0.0))) for i in (2, 3, 4)]
        pair_measures, _ = accumulate(pair, 2.0)
        pair_report = detect_sigma(pair_measures, cfg.eps_thresh, radii, limit_measure)
        self._check("two-bubble-clusters", len(pair_report.clusters) == 2, len(pair_report.clusters), 2)
        return {"single": report, "rows": rows, "two_bubble": pair_report, "sigma_radii": radii}

    def _defect_noninteger(self) -> Dict[str, Any]:
        cfg = self.config
        lat = Lattice(3, 16)
        p = 2.5
        maps = []
        for i in (1, 2, 3, 4):
            fmap, _ = self.solve_boundary(f"tilted:{1 + 0.5 * 4.0 ** -i:.10g}", lat, SPHERE3, p=p)
            maps.append(fmap)
        limit, _ = self.solve_boundary("tilted:1", lat, SPHERE3, p=p)
        measures, limit_measure = accumulate(maps, p, limit)
        report = detect_sigma(measures, cfg.eps_thresh, (0.2, 0.3, 0.4), limit_measure)
        share = abs(report.defect_mass) / max(report.total_mass, 1e-12)
        self._check("noninteger-defect", share <= 0.01, share, 0.01)
        return {"report": report, "defect_share": share}

    def _integrability(self) -> Dict[str, Any]:
        exponents = (2.0, 2.5, 2.9, 3.0, 3.5)
        maps = [radial_map(Lattice(3, n)) for n in (16, 32, 64)]
        rows = []
        for q in exponents:
            e16, e32, e64 = (p_energy(fmap, None, q) for fmap in maps)
            change = (e32 - e16) / e16
            # increments under halving shrink like 2^(q-3) while the integral converges
            shrink = (e64 - e32) / (e32 - e16) if e32 != e16 else 0.0
            rows.append([q, e16, e32, e64, change, shrink])
            if q <= 2.5:
                self._check("integrable", abs(change) < 0.1, change, 0.1, f"q={q}")
            if q == 2.5:
                self._check("integrable-increments", abs(shrink) < 1.0, shrink, 1.0, f"q={q}")
            elif q >= 3.0:
                self._check("non-integrable", change > 0.1, change, 0.1, f"q={q}")
        header = ["q", "E_q(h=1/16)", "E_q(h=1/32)", "E_q(h=1/64)", "rel_change", "increment_ratio"]
        self.writer.write_csv("integrability.csv", header, rows)
        return {"rows": rows}

    def _regularity_m_le_p(self) -> Dict[str, Any]:
        cfg = self.config
        p = 2.5
        rows = []
        for spec in ("constant", "tilted:0.5", "tilted:1", "tilted:2", "equator-winding:1"):
            grads = []
            for n in (16, 32):
                fmap, _ = self.solve_boundary(spec, Lattice(2, n), SPHERE3, p=p)
                census = singularity_census(fmap, cfg.r_cut, cfg.census_radius, cfg.alpha, p, cfg.delta)
                self._check("regular-census", census.count == 0, census.count, 0, f"{spec} h=1/{n}")
                grads.append(float(np.max(np.linalg.norm(nodal_gradient(fmap), axis=(-2, -1)))))
                rows.append([spec, f"1/{n}", census.count, grads[-1]])
            ratio = grads[1] / grads[0] if grads[0] > 0 else 1.0
            self._check("gradient-stable", ratio <= 1.5, ratio, 1.5, spec)
        self.writer.write_csv("regularity_m_le_p.csv", ["boundary", "h", "census", "grad_max"], rows)
        return {"rows": rows}

    def _solver_convergence(self) -> Dict[str, Any]:
        closed = radial_theta(3, 2.0)
        rows = []
        for n in (12, 24):
            fmap, report = self.solve_boundary("radial", Lattice(3, n), SPHERE3, p=2.0)
            self._check("solver-energy-monotone", report.energy_monotone, detail=f"h=1/{n}")
            self._check("solver-stationarity", report.stationarity_residual <= SOLVER_RESIDUAL_MAX, report.stationarity_residual, SOLVER_RESIDUAL_MAX, f"h=1/{n}")
            rows.append([f"1/{n}", report.energy, abs(report.energy - closed) / closed, report.stationarity_residual, report.iterations])
        fine_err = rows[-1][2]
        self._check("radial-energy", fine_err <= SOLVER_ENERGY_TOL, fine_err, SOLVER_ENERGY_TOL, f"closed form {closed:.6g}")
        drift = abs(rows[1][1] - rows[0][1]) / rows[1][1]
        self._check("energy-refinement", drift <= SOLVER_ENERGY_TOL, drift, SOLVER_ENERGY_TOL)
        self._check("residual-refinement", rows[1][3] < rows[0][3], rows[1][3], rows[0][3])
        self.writer.write_csv("solver_convergence.csv", ["h", "energy", "rel_error", "residual", "iterations"], rows)
        return {"closed_form": closed, "rows": rows}
