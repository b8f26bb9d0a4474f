from dataclasses import dataclass
import re

import numpy as np

from .errors import ConfigError, ProjectionUndefined

# a vector whose norm is within this many ulps of 1 is already on the sphere
UNIT_ULPS = 8
ZERO_NORM = 1e-300

_TARGET_RE = re.compile(r"^\s*(sphere|flat)\s*:\s*(\d+)\s*$")


@dataclass(frozen=True)
class Target:
    """Round sphere S^{n-1} in R^n, or flat R^N used for linear test problems"""

    kind: str
    n: int

    def __post_init__(self):
        if self.kind not in ("sphere", "flat"):
            raise ConfigError(f"unknown target kind {self.kind!r}")
        if self.n < 1 or (self.kind == "sphere" and self.n < 2):
            raise ConfigError(f"target {self.kind}:{self.n} has no points")

    @classmethod
    def parse(cls, spec: str) -> "Target":
        match = _TARGET_RE.match(spec)
        if not match:
            raise ConfigError(f"target must look like 'sphere:n' or 'flat:N', got {spec!r}")
        return cls(match.group(1), int(match.group(2)))

    @property
    def is_sphere(self) -> bool:
        return self.kind == "sphere"

    @property
    def embedding_dim(self) -> int:
        return self.n

    def __str__(self) -> str:
        return f"{self.kind}:{self.n}"

    def project(self, v: np.ndarray) -> np.ndarray:
        """Nearest-point projection; works row-wise on (..., n) arrays"""
        v = np.asarray(v, dtype=np.float64)
        if not self.is_sphere:
            return v
        norm = np.linalg.norm(v, axis=-1, keepdims=True)
        if np.any(norm <= ZERO_NORM):
            raise ProjectionUndefined("zero vector has no nearest point on the sphere")
        on_sphere = np.abs(norm - 1.0) <= UNIT_ULPS * np.finfo(np.float64).eps
        return np.where(on_sphere, v, v / norm)

    def tangent_project(self, point: np.ndarray, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if not self.is_sphere:
            return v
        point = np.asarray(point, dtype=np.float64)
        return v - np.sum(v * point, axis=-1, keepdims=True) * point

    def distance(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Chordal distance, the ambient Euclidean one"""
        return np.linalg.norm(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64), axis=-1)

    def best_constant(self, values: np.ndarray, weights: np.ndarray, p: float, iters: int = 30) -> np.ndarray:
        """argmin over target points c of sum_k w_k |v_k - c|^p, reducing the first axis of values.

        values has shape (K, ..., n) and weights shape (K,). Exact mean-then-project for
        p = 2, reweighted least squares otherwise.
        """
        weights = np.asarray(weights, dtype=np.float64)
        w = weights.reshape((-1,) + (1,) * (values.ndim - 1))
        c = self._safe_project(np.sum(w * values, axis=0) / max(float(weights.sum()), ZERO_NORM), values)
        if p == 2 or values.shape[0] == 1:
            return c
        for _ in range(iters):
            dist = np.maximum(self.distance(values, c[None]), 1e-9)
            rw = w * dist[..., None] ** (p - 2)
            nxt = self._safe_project(np.sum(rw * values, axis=0) / np.sum(rw, axis=0), values)
            if np.max(np.abs(nxt - c)) < 1e-12:
                return nxt
            c = nxt
        return c

    def _safe_project(self, mean: np.ndarray, values: np.ndarray) -> np.ndarray:
        if not self.is_sphere:
            return mean
        # a vanishing mean makes every sample an equally good p = 2 fit
        small = np.linalg.norm(mean, axis=-1, keepdims=True) <= 1e-12
        return self.project(np.where(small, values[0], mean))
