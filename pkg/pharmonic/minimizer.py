from typing import Callable, List, Optional, Tuple
import logging

import numpy as np
from pydantic import BaseModel, field_validator
from scipy import sparse
from scipy.sparse.linalg import cg, splu

from .energy import bump_fields, p_energy, stationarity_residual
from .errors import ConfigError, Divergence
from .fields import DiscreteMap
from .lattice import Lattice
from .presets import BoundaryMap, bubble_map, trace_extension
from .schemas import SolveReport
from .target import Target

logger = logging.getLogger(__name__)

DIRECT_SOLVE_LIMIT = 250_000
ARMIJO_C = 1e-4
MAX_BACKTRACKS = 40


class SolveConfig(BaseModel):
    p: float = 2.0
    step_rule: str = "armijo"
    step: float = 1.0
    max_iter: int = 400
    tol_energy: float = 1e-9
    tol_grad: float = 1e-5
    init: str = "radial"
    seed: int = 0
    perturbation: float = 1e-3
    eps_reg: float = 1e-6
    residual_fields: int = 3

    @field_validator("p")
    @classmethod
    def _p_above_one(cls, v: float) -> float:
        if v <= 1:
            raise ValueError(f"p must exceed 1, got {v}")
        return v

    @field_validator("step", "tol_energy", "tol_grad", "eps_reg")
    @classmethod
    def _positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("thresholds and steps must be positive")
        return v

    @field_validator("step_rule")
    @classmethod
    def _known_rule(cls, v: str) -> str:
        if v not in ("armijo", "fixed"):
            raise ValueError(f"step rule must be 'armijo' or 'fixed', got {v!r}")
        return v

    @field_validator("init")
    @classmethod
    def _known_init(cls, v: str) -> str:
        if v not in ("radial", "harmonic", "supplied"):
            raise ValueError(f"init must be radial, harmonic or supplied, got {v!r}")
        return v


def edge_laplacian(lattice: Lattice) -> sparse.csr_matrix:
    """Stiffness matrix of the cell-averaged Dirichlet energy: E_2(U) = U^T K U / 2 per component"""
    shape = lattice.shape
    ids = np.arange(int(np.prod(shape))).reshape(shape)
    vol = lattice.cell_volume
    scale = 4.0 / (2 ** lattice.dim * lattice.h ** 2)
    rows, cols, data = [], [], []
    for d in range(lattice.dim):
        pad = [(0, 0) if e == d else (1, 1) for e in range(lattice.dim)]
        w = np.pad(vol, pad)
        for e in range(lattice.dim):
            if e == d:
                continue
            lo = [slice(None)] * lattice.dim
            hi = [slice(None)] * lattice.dim
            lo[e] = slice(0, -1)
            hi[e] = slice(1, None)
            w = w[tuple(lo)] + w[tuple(hi)]
        w = (w * scale).ravel()
        a_sl = [slice(None)] * lattice.dim
        b_sl = [slice(None)] * lattice.dim
        a_sl[d] = slice(0, -1)
        b_sl[d] = slice(1, None)
        a = ids[tuple(a_sl)].ravel()
        b = ids[tuple(b_sl)].ravel()
        keep = w > 0
        a, b, w = a[keep], b[keep], w[keep]
        rows += [a, b, a, b]
        cols += [a, b, b, a]
        data += [w, w, -w, -w]
    size = ids.size
    return sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    ).tocsr()


class _Preconditioner:
    """K_ff^{-1} on the free nodes; factorized once, reused for every iteration"""

    def __init__(self, k_ff: sparse.csr_matrix):
        self.k_ff = k_ff
        self.lu = splu(k_ff.tocsc()) if k_ff.shape[0] <= DIRECT_SOLVE_LIMIT else None
        if self.lu is None:
            logger.info(f"Using conjugate gradients for {k_ff.shape[0]} free nodes")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.lu is not None:
            return self.lu.solve(rhs)
        out = np.empty_like(rhs)
        for j in range(rhs.shape[1]):
            out[:, j], _ = cg(self.k_ff, rhs[:, j], rtol=1e-6, maxiter=500)
        return out


def energy_and_gradient(values: np.ndarray, lattice: Lattice, p: float, eps: float) -> Tuple[float, np.ndarray]:
    """Discrete E_p and its gradient with respect to every box node value"""
    h = lattice.h
    dim = lattice.dim
    vol = lattice.cell_volume
    cells = lattice.cell_shape
    diffs = [np.diff(values, axis=d) / h for d in range(dim)]
    sq = [np.sum(g * g, axis=-1) for g in diffs]
    grad = np.zeros_like(values)
    energy = 0.0
    for sigma in np.ndindex(*([2] * dim)):
        slices = []
        g2 = np.zeros(cells)
        for d in range(dim):
            sl = tuple(slice(0, cells[e]) if e == d else slice(sigma[e], sigma[e] + cells[e]) for e in range(dim))
            slices.append(sl)
            g2 += sq[d][sl]
        base = g2 + eps * eps
        energy += float(np.sum(vol * base ** (0.5 * p)))
        weight = vol * p * base ** (0.5 * p - 1) if p != 2 else 2.0 * vol
        weight = np.where(base > 0, weight, 0.0)
        for d, sl in enumerate(slices):
            flux = weight[..., None] * diffs[d][sl] / h
            a = tuple(slice(0, cells[e]) if e == d else sl[e] for e in range(dim))
            b = tuple(slice(1, cells[e] + 1) if e == d else sl[e] for e in range(dim))
            grad[b] += flux
            grad[a] -= flux
    norm = 2 ** dim
    return energy / norm, grad / norm


def _retract(target: Target, values: np.ndarray) -> np.ndarray:
    return target.project(values) if target.is_sphere else values


def harmonic_extension(lattice: Lattice, fixed_values: np.ndarray, free: np.ndarray, target: Target) -> np.ndarray:
    """Discrete harmonic extension of the fixed nodes, then projected onto the target"""
    K = edge_laplacian(lattice)
    flat_free = free.ravel()
    N = fixed_values.shape[-1]
    U = fixed_values.reshape(-1, N).copy()
    k_ff = K[flat_free][:, flat_free]
    k_fb = K[flat_free][:, ~flat_free]
    rhs = -(k_fb @ U[~flat_free])
    U[flat_free] = _Preconditioner(k_ff).solve(rhs)
    if target.is_sphere:
        small = np.linalg.norm(U, axis=-1) < 1e-6
        U[small, -1] += 1e-3
    return _retract(target, U).reshape(fixed_values.shape)


def solve(
    boundary: BoundaryMap,
    target: Target,
    lattice: Lattice,
    config: Optional[SolveConfig] = None,
    init_map: Optional[DiscreteMap] = None,
    label: str = "solution",
) -> Tuple[DiscreteMap, SolveReport]:
    """Projected, Sobolev-preconditioned descent for E_p with the trace fixed on the boundary band"""
    config = config or SolveConfig()
    p = config.p
    fixed_values = trace_extension(lattice, boundary)
    if fixed_values.shape[-1] != target.n:
        raise ConfigError(f"boundary trace has {fixed_values.shape[-1]} components, target {target} needs {target.n}")
    fixed_values = _retract(target, fixed_values)
    free = lattice.inside & ~lattice.boundary_band
    trace = fixed_values[lattice.boundary_band]

    if np.max(np.abs(trace - trace[0])) < 1e-14:
        logger.info(f"Constant boundary trace for {label}; returning the constant map")
        values = np.broadcast_to(trace[0], fixed_values.shape).copy()
        fmap = DiscreteMap(lattice, values, target=target, label=label)
        return fmap, SolveReport(
            label=label, energy=0.0, iterations=0, grad_norm=0.0, converged=True,
            stationarity_residual=0.0, energy_bound=0.0, energy_history=[0.0],
        )

    if config.init == "supplied":
        if init_map is None:
            raise ConfigError("init 'supplied' needs an initial field")
        lattice.check_same(init_map.lattice)
        values = np.where(free[..., None], init_map.values, fixed_values)
    elif config.init == "harmonic":
        values = harmonic_extension(lattice, fixed_values, free, target)
    else:
        values = fixed_values.copy()

    rng = np.random.default_rng(config.seed)
    if config.perturbation > 0:
        noise = config.perturbation * rng.normal(size=values.shape)
        values = np.where(free[..., None], _retract(target, values + noise), values)
    values = _retract(target, values)

    K = edge_laplacian(lattice)
    flat_free = free.ravel()
    precond = _Preconditioner(K[flat_free][:, flat_free])
    eps = config.eps_reg if p < 2 else 0.0
    omega = float(np.sum(lattice.cell_volume))
    norm_h = lattice.h ** (lattice.dim / 2)

    energy, grad = energy_and_gradient(values, lattice, p, eps)
    history = [energy]
    flags: List[str] = []
    converged = False
    step = config.step
    grad_norm = float("inf")
    logger.info(f"Solving {label}: m={lattice.dim} h={lattice.h_label} p={p} target={target} init={config.init}")

    it = 0
    for it in range(1, config.max_iter + 1):
        U = values[free]
        g = grad[free]
        if target.is_sphere:
            g = target.tangent_project(U, g)
        grad_norm = float(np.linalg.norm(g)) / norm_h
        if grad_norm < config.tol_grad:
            converged = True
            break
        scale = 1.0 if p == 2 else 0.5 * p * max(energy / omega, 1e-12) ** ((p - 2) / p)
        direction = -precond.solve(g) / scale
        if target.is_sphere:
            direction = target.tangent_project(U, direction)
        slope = float(np.sum(g * direction))
        if slope >= 0:
            direction, slope = -g, -float(np.sum(g * g))

        t = step if config.step_rule == "fixed" else min(1.0, 2.0 * step)
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            trial = values.copy()
            trial[free] = _retract(target, U + t * direction)
            trial_energy, trial_grad = energy_and_gradient(trial, lattice, p, eps)
            if not np.isfinite(trial_energy):
                raise Divergence(f"energy became {trial_energy} at iteration {it}")
            if config.step_rule == "fixed" or trial_energy <= energy + ARMIJO_C * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            converged = True
            flags.append("line-search-stalled")
            break
        step = t
        decrease = energy - trial_energy
        values, energy, grad = trial, trial_energy, trial_grad
        history.append(energy)
        if abs(decrease) <= config.tol_energy * max(abs(energy), 1e-30):
            converged = True
            break
    else:
        flags.append("max-iterations")
        logger.warning(f"{label}: no convergence after {config.max_iter} iterations (grad norm {grad_norm:.3e})")

    fmap = DiscreteMap(lattice, values, target=target, label=label)
    monotone = bool(np.all(np.diff(history) <= 1e-12 * max(abs(history[0]), 1.0)))
    residuals = [
        abs(stationarity_residual(fmap, xi, p)) for xi in bump_fields(lattice, config.residual_fields, config.seed)
    ]
    report = SolveReport(
        label=label,
        energy=energy,
        iterations=it,
        grad_norm=grad_norm,
        converged=converged,
        stationarity_residual=max(residuals) if residuals else 0.0,
        energy_bound=p_energy(fmap, None, p),
        energy_monotone=monotone,
        flags=flags,
        energy_history=history,
    )
    logger.info(f"Solved {label}: E={energy:.6g} after {it} iterations, converged={converged}")
    return fmap, report


def bubble_scale(i: int) -> float:
    return 2.0 ** i


def make_bubble_sequence(i: int, lattice: Lattice, scaling: Optional[Callable[[int], float]] = None) -> DiscreteMap:
    """The i-th rescaled inverse stereographic projection, lambda_i = 2^i unless another scaling is given"""
    lam = (scaling or bubble_scale)(i)
    if lam < 1:
        raise ConfigError(f"bubble scale must be at least 1, got {lam}")
    fmap = bubble_map(lattice, lam)
    if 1.0 / lam < 3 * lattice.h:
        fmap.flags.append("bubble-underresolved")
        logger.warning(f"bubble lambda={lam:g} concentrates below 3h={3 * lattice.h:.4g}")
    return fmap
