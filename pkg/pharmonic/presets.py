"""Analytic maps with closed forms, and boundary traces for the solver.

Every preset returns a DiscreteMap sampled on a lattice together with its closed
form, so that blow-ups of presets are exact while energies still come from the grid.
"""
from typing import Callable, Optional, Sequence, Tuple
import re

import numpy as np

from .errors import ConfigError
from .fields import DiscreteMap
from .lattice import Lattice
from .target import Target

BoundaryMap = Callable[[np.ndarray], np.ndarray]

_BOUNDARY_RE = re.compile(r"^(constant|radial|equator-winding|tilted)(?::([-+0-9.eE]+))?$")


def _unit_or(v: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = norm > 1e-12
    return np.where(safe, v / np.where(safe, norm, 1.0), fallback)


def _sampled(lattice: Lattice, target: Target, fn: Callable[[np.ndarray], np.ndarray], label: str) -> DiscreteMap:
    pts = lattice.coords.reshape(-1, lattice.dim)
    values = fn(pts).reshape(lattice.shape + (target.n,))
    return DiscreteMap(lattice, values, target=target, closed_form=fn, label=label)


def radial_map(lattice: Lattice) -> DiscreteMap:
    """x/|x| into S^{m-1}; the origin is sent to e_1"""
    m = lattice.dim
    e1 = np.eye(m)[0]

    def fn(x: np.ndarray) -> np.ndarray:
        return _unit_or(x, e1)

    return _sampled(lattice, Target("sphere", m), fn, "x/|x|")


def constant_map(lattice: Lattice, target: Target, value: Optional[Sequence[float]] = None) -> DiscreteMap:
    c = np.asarray(value if value is not None else np.eye(target.n)[-1], dtype=np.float64)
    c = target.project(c)

    def fn(x: np.ndarray) -> np.ndarray:
        return np.broadcast_to(c, x.shape[:-1] + (target.n,)).copy()

    return _sampled(lattice, target, fn, "constant")


def linear_map(lattice: Lattice, matrix: np.ndarray, offset: Optional[np.ndarray] = None) -> DiscreteMap:
    """f(x) = A x + b into flat R^N"""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    offset = np.zeros(matrix.shape[0]) if offset is None else np.asarray(offset, dtype=np.float64)

    def fn(x: np.ndarray) -> np.ndarray:
        return x @ matrix.T + offset

    return _sampled(lattice, Target("flat", matrix.shape[0]), fn, "linear")


def _rational_parts(z: np.ndarray, centers: Sequence[complex]) -> Tuple[np.ndarray, ...]:
    """P = prod (z - a_k), Q = sum_k prod_{j != k} (z - a_j) and their derivatives"""
    P = np.ones_like(z)
    dP = np.zeros_like(z)
    Q = np.zeros_like(z)
    dQ = np.zeros_like(z)
    for a in centers:
        # (P, Q) -> ((z-a)P, P + (z-a)Q), derivatives by the product rule
        Q, dQ = P + (z - a) * Q, dP + Q + (z - a) * dQ
        P, dP = (z - a) * P, P + (z - a) * dP
    return P, dP, Q, dQ


def bubble_field(x: np.ndarray, lam: float, centers: Sequence[complex] = (0j,)) -> np.ndarray:
    """Inverse stereographic projection of w = lam / sum_k 1/(z - a_k), z = x_1 + i x_2.

    One centre gives the rescaled bubble with |grad u|^2 = 8 lam^2 / (1 + lam^2 |x|^2)^2.
    """
    z = x[..., 0] + 1j * x[..., 1]
    P, _, Q, _ = _rational_parts(z, centers)
    num = lam * P * np.conj(Q)
    a2 = lam ** 2 * np.abs(P) ** 2
    b2 = np.abs(Q) ** 2
    den = a2 + b2
    return np.stack([2 * num.real / den, 2 * num.imag / den, (a2 - b2) / den], axis=-1)


def bubble_energy_density(x: np.ndarray, lam: float, centers: Sequence[complex] = (0j,)) -> np.ndarray:
    """|grad u|^2 of bubble_field, in closed form"""
    z = x[..., 0] + 1j * x[..., 1]
    P, dP, Q, dQ = _rational_parts(z, centers)
    wron = np.abs(dP * Q - P * dQ) ** 2
    return 8 * lam ** 2 * wron / (lam ** 2 * np.abs(P) ** 2 + np.abs(Q) ** 2) ** 2


def bubble_ball_energy(lam: float, radius: float = 1.0) -> float:
    """Dirichlet energy of the centred bubble on B_radius(0)"""
    t = (lam * radius) ** 2
    return 8 * np.pi * t / (1 + t)


def bubble_map(lattice: Lattice, lam: float, centers: Sequence[Sequence[float]] = ((0.0, 0.0),)) -> DiscreteMap:
    if lattice.dim != 2:
        raise ConfigError("bubbles live on two-dimensional domains")
    zs = tuple(complex(c[0], c[1]) for c in centers)

    def fn(x: np.ndarray) -> np.ndarray:
        return bubble_field(x, lam, zs)

    label = f"bubble(lambda={lam:g})" if len(zs) == 1 else f"bubbles(lambda={lam:g},k={len(zs)})"
    return _sampled(lattice, Target("sphere", 3), fn, label)


def axial_map(lattice: Lattice) -> DiscreteMap:
    """(0, x_2, x_3)/|(x_2, x_3)|: homogeneous and invariant along e_1; the axis goes to e_1"""
    if lattice.dim != 3:
        raise ConfigError("the axial preset needs m = 3")
    e1 = np.eye(3)[0]

    def fn(x: np.ndarray) -> np.ndarray:
        v = x.copy()
        v[..., 0] = 0.0
        return _unit_or(v, e1)

    return _sampled(lattice, Target("sphere", 3), fn, "axial")


def blended_map(lattice: Lattice, t: float) -> DiscreteMap:
    """Normalised (1 - t) x/|x| + t axial(x); t = 0 is radial, t = 1 is axial"""
    if lattice.dim != 3:
        raise ConfigError("the blended preset needs m = 3")
    e1 = np.eye(3)[0]

    def fn(x: np.ndarray) -> np.ndarray:
        radial = _unit_or(x, e1)
        ax = x.copy()
        ax[..., 0] = 0.0
        return _unit_or((1 - t) * radial + t * _unit_or(ax, e1), e1)

    return _sampled(lattice, Target("sphere", 3), fn, f"blend(t={t:g})")


ANALYTIC_PRESETS = ("radial", "constant", "bubble", "two-bubble", "axial", "blend")


def analytic_preset(name: str, lattice: Lattice, param: Optional[float] = None) -> DiscreteMap:
    if name == "radial":
        return radial_map(lattice)
    if name == "constant":
        return constant_map(lattice, Target("sphere", 3))
    if name == "bubble":
        return bubble_map(lattice, param or 4.0)
    if name == "two-bubble":
        return bubble_map(lattice, param or 8.0, ((-0.4, 0.0), (0.4, 0.0)))
    if name == "axial":
        return axial_map(lattice)
    if name == "blend":
        return blended_map(lattice, 0.5 if param is None else param)
    raise ConfigError(f"unknown analytic preset {name!r}; known: {', '.join(ANALYTIC_PRESETS)}")


def boundary_preset(spec: str, m: int, target: Target) -> BoundaryMap:
    """Trace g on the unit sphere, as a function of unit directions omega of shape (..., m)"""
    match = _BOUNDARY_RE.match(spec.strip())
    if not match:
        raise ConfigError(f"unknown boundary preset {spec!r}")
    kind, arg = match.group(1), match.group(2)
    n = target.n
    if kind == "constant":
        c = np.eye(n)[-1]
        return lambda w: np.broadcast_to(c, w.shape[:-1] + (n,)).copy()
    if kind == "radial":
        if n != m:
            raise ConfigError(f"radial boundary needs target sphere:{m}, got {target}")
        return lambda w: w.copy()
    if kind == "equator-winding":
        k = int(float(arg or 1))
        if n < 2:
            raise ConfigError("equator winding needs at least two target components")

        def winding(w: np.ndarray) -> np.ndarray:
            phi = np.arctan2(w[..., 1], w[..., 0])
            out = np.zeros(w.shape[:-1] + (n,))
            out[..., 0] = np.cos(k * phi)
            out[..., 1] = np.sin(k * phi)
            return out

        return winding
    a = float(arg or 1.0)
    if not target.is_sphere:
        raise ConfigError("tilted boundary needs a sphere target")

    def tilted(w: np.ndarray) -> np.ndarray:
        out = np.zeros(w.shape[:-1] + (n,))
        k = min(m, n - 1)
        out[..., :k] = a * w[..., :k]
        out[..., -1] = 1.0
        return target.project(out)

    return tilted


def trace_extension(lattice: Lattice, g: BoundaryMap) -> np.ndarray:
    """g(x/|x|) at every box node, with the origin sent to g(e_1)"""
    e1 = np.eye(lattice.dim)[0]
    omega = _unit_or(lattice.coords, e1)
    return g(omega.reshape(-1, lattice.dim)).reshape(lattice.shape + (-1,))


def field_boundary(fmap: DiscreteMap) -> BoundaryMap:
    """Trace of a stored field, read half a cell inside the unit sphere"""
    radius = 1.0 - 0.5 * fmap.lattice.h

    def trace(w: np.ndarray) -> np.ndarray:
        values = fmap.sample(w * radius)
        return fmap.target.project(values) if fmap.target.is_sphere else values

    return trace
