from typing import Any, Dict, List, Optional
from pydantic import BaseModel, ConfigDict, Field


class SolveReport(BaseModel):
    label: str
    energy: float
    iterations: int
    grad_norm: float
    converged: bool
    stationarity_residual: float
    energy_bound: float
    energy_monotone: bool = True
    flags: List[str] = []
    energy_history: List[float] = []


class SymmetryReport(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    x: List[float]
    r: float
    k: int
    defect: float
    raw_defect: float
    subspace: List[List[float]] = []
    approximant: Optional[Any] = Field(default=None, exclude=True)

    def is_symmetric(self, eps: float) -> bool:
        return self.defect < eps


class CoveringNode(BaseModel):
    id: int
    level: int
    center: List[float]
    radius: float
    pattern: List[int] = Field(default_factory=list, serialization_alias="tuple")
    parent: Optional[int] = None


class CoveringTree(BaseModel):
    k: int
    eta: float
    gamma: float
    j: int
    nodes: List[CoveringNode]
    balls_per_level: List[int]
    families_per_level: List[int]
    c0: float
    c1: float
    D: int
    bound: float
    stratum_points: int
    uncovered: int
    tube_widths: List[float] = []
    max_children: int = 0
    good_children: int = 0
    tube_bound: int = 0

    @property
    def leaves(self) -> List[CoveringNode]:
        return [n for n in self.nodes if n.level == self.j]

    @property
    def leaf_count(self) -> int:
        return len(self.leaves)


class ClusterReport(BaseModel):
    center: List[float]
    nodes: int
    min_scale: float
    mass: Optional[float] = None
    extent: Optional[float] = None
    pinched: Optional[bool] = None
    isolated: Optional[bool] = None


class CensusReport(BaseModel):
    count: int
    r_cut: float
    clusters: List[ClusterReport]
    borderline: bool
    flags: List[str] = []


class MinkowskiReport(BaseModel):
    exponent: Optional[float]
    intercept: Optional[float]
    radii: List[float]
    volumes: List[float]
    degenerate: bool = False


class ConcentrationReport(BaseModel):
    sigma_cells: List[List[int]]
    clusters: List[ClusterReport]
    densities: List[float]
    total_mass: float
    limit_mass: float
    defect_mass: float
    volume_table: List[List[float]]
    density_ratio: Optional[float] = None
    flags: List[str] = []


class CheckResult(BaseModel):
    name: str
    passed: bool
    value: Optional[float] = None
    bound: Optional[float] = None
    detail: str = ""


class VerifyReport(BaseModel):
    preset: str
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


class RunEnvelope(BaseModel):
    tool_version: str
    config_hash: str
    command: str
    generated_at: str
    payload: Dict[str, Any]
