from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union
import logging
import re

import numpy as np
from scipy import ndimage

from .errors import ConfigError, LatticeMismatch
from .lattice import Lattice, VectorField, interpolate
from .target import Target

logger = logging.getLogger(__name__)

MAGIC = "PHARMFIELD"
FORMAT_VERSION = "v1"
RESOLUTION_FLOOR_CELLS = 8

ClosedForm = Callable[[np.ndarray], np.ndarray]

_HEADER_RE = re.compile(r"(\w+)=(\S+)")


@dataclass(frozen=True, eq=False)
class DiscreteMap(VectorField):
    """Samples of a map B_1(0) -> target on a lattice.

    Values cover the whole box; entries off the domain hold an extension of the
    boundary trace so that cell stencils next to the sphere are well defined.
    Analytic presets also keep their closed form, used whenever the map is
    sampled away from lattice nodes.
    """

    target: Target = Target("sphere", 3)
    closed_form: Optional[ClosedForm] = None
    label: str = "field"
    flags: List[str] = field(default_factory=list)
    cache: Dict[str, object] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        super().__post_init__()
        if self.values.shape[-1] != self.target.n:
            raise LatticeMismatch(f"map has {self.values.shape[-1]} components, target {self.target} needs {self.target.n}")

    @property
    def is_analytic(self) -> bool:
        return self.closed_form is not None

    @property
    def resolution_floor(self) -> float:
        """Smallest blow-up radius that symmetry analysis accepts"""
        return 0.0 if self.is_analytic else RESOLUTION_FLOOR_CELLS * self.lattice.h

    def sample(self, points: np.ndarray) -> np.ndarray:
        if self.closed_form is not None:
            return self.closed_form(np.asarray(points, dtype=np.float64))
        return interpolate(self, points)

    def with_values(self, values: np.ndarray, label: Optional[str] = None) -> "DiscreteMap":
        """Same lattice and target, new samples; the closed form does not carry over"""
        return DiscreteMap(self.lattice, values, target=self.target, label=label or self.label)

    def blown_up(self, lattice: Lattice, values: np.ndarray, center: np.ndarray, radius: float) -> "DiscreteMap":
        rescaled = None
        if self.closed_form is not None:
            base = self.closed_form

            def rescaled(y: np.ndarray) -> np.ndarray:
                return base(center + radius * np.asarray(y, dtype=np.float64))

        label = f"T[{self.label}; x={np.round(center, 4).tolist()} r={radius:g}]"
        return DiscreteMap(lattice, values, target=self.target, closed_form=rescaled, label=label, flags=list(self.flags))


def fill_outside(lattice: Lattice, values: np.ndarray) -> np.ndarray:
    """Copy each off-domain entry from its nearest domain node"""
    idx = ndimage.distance_transform_edt(~lattice.inside, return_distances=False, return_indices=True)
    return values[tuple(idx)]


def save_field(fmap: DiscreteMap, path: Union[str, Path], meta: Optional[Dict[str, str]] = None) -> Path:
    path = Path(path)
    lat = fmap.lattice
    extra = "".join(f" {k}={v}" for k, v in sorted((meta or {}).items()))
    if path.suffix == ".csv":
        header = f"{MAGIC}-CSV {FORMAT_VERSION} m={lat.dim} h={lat.h_label} target={fmap.target}{extra}"
        coords = lat.coords[lat.inside]
        table = np.column_stack([np.arange(lat.node_count), coords, fmap.node_values()])
        cols = ["index"] + [f"x{i + 1}" for i in range(lat.dim)] + [f"v{i + 1}" for i in range(fmap.components)]
        np.savetxt(path, table, delimiter=",", header=header + "\n" + ",".join(cols), comments="# ", fmt="%.17g")
    else:
        header = (
            f"{MAGIC} {FORMAT_VERSION} m={lat.dim} h={lat.h_label} N={fmap.components} "
            f"nodes={lat.node_count} endian=little target={fmap.target}{extra}\n"
        )
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(fmap.node_values().astype("<f8").tobytes())
    logger.info(f"Wrote field {fmap.label} to {path}")
    return path


def load_field(path: Union[str, Path], label: Optional[str] = None) -> DiscreteMap:
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, "r") as fh:
            meta = _parse_header(fh.readline().lstrip("# ").strip(), f"{MAGIC}-CSV")
        table = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        lat = Lattice.from_h(int(meta["m"]), meta["h"])
        nodes = table[:, 1 + lat.dim:]
    else:
        with open(path, "rb") as fh:
            meta = _parse_header(fh.readline().decode("ascii").strip(), MAGIC)
            raw = fh.read()
        lat = Lattice.from_h(int(meta["m"]), meta["h"])
        dtype = "<f8" if meta.get("endian", "little") == "little" else ">f8"
        count = int(meta["nodes"])
        if count != lat.node_count:
            raise LatticeMismatch(f"{path} has {count} nodes, lattice m={lat.dim} h={lat.h_label} has {lat.node_count}")
        nodes = np.frombuffer(raw, dtype=dtype).astype(np.float64).reshape(count, int(meta["N"]))
    target = Target.parse(meta.get("target", f"sphere:{nodes.shape[1]}"))
    values = np.zeros(lat.shape + (nodes.shape[1],))
    values[lat.inside] = nodes
    return DiscreteMap(lat, fill_outside(lat, values), target=target, label=label or path.stem)


def _parse_header(line: str, magic: str) -> Dict[str, str]:
    if not line.startswith(magic + " "):
        raise ConfigError(f"not a field file: header starts with {line[:24]!r}")
    meta = dict(_HEADER_RE.findall(line))
    for key in ("m", "h"):
        if key not in meta:
            raise ConfigError(f"field header lacks {key}=")
    return meta
