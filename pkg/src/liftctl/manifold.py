"""Base manifolds: flat space R^n and the unit sphere S2 embedded in R^3.

Both are represented by their ambient embedding together with tangent
projection, retraction, geodesic distance and parallel transport. These four
primitives are everything the rest of the package needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import AntipodalPointsError, DegenerateStepError, OffManifoldError

POINT_TOL = 1e-9
ANGLE_TOL = 1e-6


class ManifoldKind(Enum):
    FLAT = "flat"
    SPHERE2 = "sphere2"


@dataclass(frozen=True)
class Manifold:
    """An embedded manifold, either Flat(n) or the unit sphere in R^3."""

    kind: ManifoldKind
    ambient_dim: int
    intrinsic_dim: int

    @staticmethod
    def flat(n: int) -> "Manifold":
        if n < 1:
            raise ValueError("flat dimension must be >= 1")
        return Manifold(ManifoldKind.FLAT, n, n)

    @staticmethod
    def sphere2() -> "Manifold":
        return Manifold(ManifoldKind.SPHERE2, 3, 2)

    @property
    def is_flat(self) -> bool:
        return self.kind is ManifoldKind.FLAT

    def check_point(self, x: np.ndarray) -> np.ndarray:
        """Validate that x lies on the manifold within POINT_TOL."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.ambient_dim,):
            raise OffManifoldError(
                f"point has shape {x.shape}, expected ({self.ambient_dim},)"
            )
        if self.kind is ManifoldKind.SPHERE2:
            err = abs(np.linalg.norm(x) - 1.0)
            if err > POINT_TOL:
                raise OffManifoldError(f"|x| deviates from 1 by {err:.3e}")
        return x

    def project_tangent(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Orthogonal projection of an ambient vector onto T_x M."""
        x = self.check_point(x)
        w = np.asarray(w, dtype=float)
        if self.kind is ManifoldKind.FLAT:
            return w.copy()
        return w - x * (x @ w)

    def retract(self, x: np.ndarray, step: np.ndarray) -> np.ndarray:
        """Map x + step back onto the manifold."""
        x = self.check_point(x)
        step = np.asarray(step, dtype=float)
        y = x + step
        if self.kind is ManifoldKind.FLAT:
            return y
        nrm = np.linalg.norm(y)
        if nrm < POINT_TOL:
            raise DegenerateStepError("step lands at the origin; cannot normalize")
        return y / nrm

    def base_distance(self, x: np.ndarray, y: np.ndarray) -> float:
        """Geodesic distance: Euclidean on flat space, great circle on S2."""
        x = self.check_point(x)
        y = self.check_point(y)
        if self.kind is ManifoldKind.FLAT:
            return float(np.linalg.norm(y - x))
        if np.array_equal(x, y):
            return 0.0  # arccos(x.x) has a ~1e-8 rounding floor
        c = np.clip(x @ y, -1.0, 1.0)
        return float(np.arccos(c))

    def parallel_transport(self, x: np.ndarray, y: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Transport v from T_x M to T_y M along the minimizing geodesic.

        On flat space this is the identity. On the sphere it is the rotation
        in the plane span{x, y} that fixes the orthogonal complement.
        """
        x = self.check_point(x)
        y = self.check_point(y)
        v = np.asarray(v, dtype=float)
        if self.kind is ManifoldKind.FLAT:
            return v.copy()
        c = np.clip(x @ y, -1.0, 1.0)
        theta = np.arccos(c)
        if theta > np.pi - ANGLE_TOL:
            raise AntipodalPointsError("antipodal points: geodesic is not unique")
        u = y - c * x
        u_nrm = np.linalg.norm(u)
        if u_nrm < 1e-14:
            return v.copy()
        u = u / u_nrm
        a = u @ v
        v_perp = v - a * u
        return v_perp + a * (np.cos(theta) * u - np.sin(theta) * x)

    def random_point(self, rng: np.random.Generator) -> np.ndarray:
        """Draw a point on the manifold (standard normal, normalized on S2)."""
        z = rng.standard_normal(self.ambient_dim)
        if self.kind is ManifoldKind.FLAT:
            return z
        return z / np.linalg.norm(z)

    def random_tangent(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw a tangent vector at x."""
        z = rng.standard_normal(self.ambient_dim)
        return self.project_tangent(x, z)

    def tangent_basis(self, x: np.ndarray) -> np.ndarray:
        """Columns form an orthonormal basis of T_x M (ambient coordinates)."""
        if self.kind is ManifoldKind.FLAT:
            return np.eye(self.ambient_dim)
        x = self.check_point(x)
        # Pick the coordinate axis least aligned with x to seed Gram-Schmidt.
        k = int(np.argmin(np.abs(x)))
        e = np.zeros(3)
        e[k] = 1.0
        b1 = e - x * (x @ e)
        b1 /= np.linalg.norm(b1)
        b2 = np.cross(x, b1)
        return np.column_stack([b1, b2])


@dataclass(frozen=True)
class TangentPoint:
    """A point (x, v) of the tangent bundle, in ambient coordinates."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))

    def validate(self, manifold: Manifold) -> "TangentPoint":
        manifold.check_point(self.x)
        if self.v.shape != self.x.shape:
            raise OffManifoldError(
                f"fiber vector shape {self.v.shape} != base shape {self.x.shape}"
            )
        if manifold.kind is ManifoldKind.SPHERE2:
            err = abs(self.x @ self.v)
            if err > POINT_TOL:
                raise OffManifoldError(f"|x . v| = {err:.3e} exceeds tangency tolerance")
        return self

    def to_json(self) -> dict:
        return {"x": self.x.tolist(), "v": self.v.tolist()}

    @staticmethod
    def from_json(data: dict) -> "TangentPoint":
        return TangentPoint(np.asarray(data["x"], float), np.asarray(data["v"], float))
