"""Convex Euclidean domains with exact boundary queries.

Every domain offers single-point queries (``contains``, ``outward_normal``,
``ray_exit``, ``diameter``) and batched kernels used by the simulators:
``exit_times`` for straight rays started inside or on the boundary,
``bounce`` for specular reflection at a boundary point (faces active at a
corner are reflected one after another) and ``snap`` for pulling a hit point
exactly onto the boundary after floating-point drift.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

BOUNDARY_TOL = 1e-8      # relative residual for "on the boundary"
CORNER_TOL = 1e-10       # relative residual for "this face is active"
CONTAINS_TOL = 1e-12     # relative slack for closed-set membership
UNIT_TOL = 1e-12


@dataclass(frozen=True)
class BoundaryHit:
    time_to_hit: float
    point: np.ndarray
    normal: np.ndarray
    corner: bool = False


def reflect(v, n) -> np.ndarray:
    """Specular reflection ``v - 2 <n, v> n`` for a unit vector ``n``."""
    v = np.asarray(v, dtype=float)
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > UNIT_TOL:
        raise ValueError("reflection normal must have unit length")
    return v - 2.0 * np.dot(n, v) * n


class ConvexDomain(ABC):
    dimension: int

    # ------------------------------------------------------------ public API
    def _point(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.dimension,):
            raise ValueError(f"expected a point of dimension {self.dimension}, got shape {x.shape}")
        return x

    def contains(self, x) -> bool:
        x = self._point(x)
        return bool(self.violation(x[None, :])[0] <= CONTAINS_TOL * self.diameter())

    def contains_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.dimension)
        return self.violation(X) <= CONTAINS_TOL * self.diameter()

    def on_boundary(self, x) -> bool:
        x = self._point(x)
        return bool(abs(self.violation(x[None, :])[0]) <= BOUNDARY_TOL * self.diameter())

    def outward_normal(self, x) -> np.ndarray:
        x = self._point(x)
        if not self.on_boundary(x):
            raise ValueError("point is not on the boundary")
        normals = self.active_normals(x, BOUNDARY_TOL)
        if len(normals) != 1:
            raise ValueError("point is a corner; the outward normal is ambiguous")
        return normals[0]

    def ray_exit(self, x, v) -> BoundaryHit:
        x = self._point(x)
        v = self._point(v)
        if not np.any(v != 0.0):
            raise ValueError("direction must be nonzero")
        if self.violation(x[None, :])[0] >= -BOUNDARY_TOL * self.diameter():
            raise ValueError("start point must be strictly interior")
        t = float(self.exit_times(x[None, :], v[None, :])[0])
        p = self.snap((x + t * v)[None, :])[0]
        normals = self.active_normals(p, CORNER_TOL)
        n = normals[0] if normals else self._nearest_normal(p)
        return BoundaryHit(t, p, n, corner=len(normals) > 1)

    # ------------------------------------------------------- batched kernels
    @abstractmethod
    def violation(self, X) -> np.ndarray:
        """Signed constraint value scaled to length units: <= 0 inside, 0 on the boundary."""

    @abstractmethod
    def exit_times(self, X, V) -> np.ndarray:
        """Time until ``X + t V`` leaves the domain (``inf`` if ``V = 0``)."""

    @abstractmethod
    def bounce(self, P, V) -> np.ndarray:
        """Reflect ``V`` at boundary points ``P`` so that it points inward."""

    @abstractmethod
    def snap(self, P) -> np.ndarray:
        """Move points that drifted slightly outside back onto the boundary."""

    @abstractmethod
    def active_normals(self, x, tol) -> list:
        """Outward unit normals of the constraints active at ``x`` within ``tol``."""

    @abstractmethod
    def diameter(self) -> float: ...

    @abstractmethod
    def bounding_box(self): ...

    def _nearest_normal(self, x):
        return self.active_normals(x, np.inf)[0]

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform points by rejection from the bounding box."""
        lo, hi = self.bounding_box()
        out = np.empty((0, self.dimension))
        while out.shape[0] < n:
            X = rng.uniform(lo, hi, size=(max(2 * n, 64), self.dimension))
            out = np.vstack([out, X[self.contains_batch(X)]])
        return out[:n]


# ---------------------------------------------------------------------------
# boxes


class Box(ConvexDomain):
    def __init__(self, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape or lower.ndim != 1:
            raise ValueError("lower and upper must be vectors of equal length")
        if not np.all(lower < upper):
            raise ValueError("box requires lower < upper in every coordinate")
        self.lower, self.upper = lower, upper
        self.dimension = lower.size

    @property
    def lengths(self):
        return self.upper - self.lower

    def __repr__(self):
        return f"Box({self.lower.tolist()}, {self.upper.tolist()})"

    def violation(self, X):
        X = np.asarray(X, dtype=float)
        return np.max(np.maximum(self.lower - X, X - self.upper), axis=-1)

    def exit_times(self, X, V):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(V > 0, (self.upper - X) / V, np.where(V < 0, (self.lower - X) / V, np.inf))
        return np.maximum(np.min(t, axis=-1), 0.0)

    def bounce(self, P, V):
        tol = CORNER_TOL * self.diameter()
        hit = ((P >= self.upper - tol) & (V > 0)) | ((P <= self.lower + tol) & (V < 0))
        return np.where(hit, -V, V)

    def snap(self, P):
        return np.clip(P, self.lower, self.upper)

    def active_normals(self, x, tol):
        scale = self.diameter()
        out = []
        if np.isinf(tol):
            gaps = np.concatenate([x - self.lower, self.upper - x])
            i = int(np.argmin(gaps))
            n = np.zeros(self.dimension)
            n[i % self.dimension] = -1.0 if i < self.dimension else 1.0
            return [n]
        for i in range(self.dimension):
            if abs(x[i] - self.lower[i]) <= tol * scale:
                n = np.zeros(self.dimension); n[i] = -1.0; out.append(n)
            if abs(x[i] - self.upper[i]) <= tol * scale:
                n = np.zeros(self.dimension); n[i] = 1.0; out.append(n)
        return out

    def diameter(self):
        return float(np.linalg.norm(self.lengths))

    def bounding_box(self):
        return self.lower.copy(), self.upper.copy()

    def sample_uniform(self, n, rng):
        return rng.uniform(self.lower, self.upper, size=(n, self.dimension))


class Interval(Box):
    def __init__(self, a: float, b: float):
        super().__init__([a], [b])
        self.a, self.b = float(a), float(b)

    def __repr__(self):
        return f"Interval({self.a}, {self.b})"

    @property
    def length(self):
        return self.b - self.a


# ---------------------------------------------------------------------------
# ellipsoids


class Ellipsoid(ConvexDomain):
    def __init__(self, center, semi_axes):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        semi_axes = np.atleast_1d(np.asarray(semi_axes, dtype=float))
        if semi_axes.size == 1 and center.size > 1:
            semi_axes = np.full(center.size, semi_axes[0])
        if center.shape != semi_axes.shape or center.ndim != 1:
            raise ValueError("center and semi-axes must be vectors of equal length")
        if not np.all(semi_axes > 0):
            raise ValueError("semi-axes must be positive")
        self.center, self.semi_axes = center, semi_axes
        self.dimension = center.size

    def __repr__(self):
        return f"Ellipsoid({self.center.tolist()}, {self.semi_axes.tolist()})"

    def _radius(self, X):
        return np.linalg.norm((np.asarray(X, dtype=float) - self.center) / self.semi_axes, axis=-1)

    def violation(self, X):
        # scaled so that the residual is a length near the boundary
        return (self._radius(X) - 1.0) * float(np.min(self.semi_axes))

    def exit_times(self, X, V):
        Y = (X - self.center) / self.semi_axes
        W = V / self.semi_axes
        a = np.sum(W * W, axis=-1)
        b = 2.0 * np.sum(Y * W, axis=-1)
        c = np.minimum(np.sum(Y * Y, axis=-1) - 1.0, 0.0)
        disc = np.sqrt(np.maximum(b * b - 4.0 * a * c, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            q = -0.5 * (b + np.where(b >= 0, disc, -disc))
            # larger root of a t^2 + b t + c with c <= 0
            t = np.where(b >= 0, np.where(q != 0, c / q, 0.0), q / a)
        t = np.where(a > 0, t, np.inf)
        return np.maximum(t, 0.0)

    def _normals(self, P):
        G = (P - self.center) / self.semi_axes ** 2
        return G / np.linalg.norm(G, axis=-1, keepdims=True)

    def bounce(self, P, V):
        N = self._normals(P)
        dot = np.sum(N * V, axis=-1, keepdims=True)
        return np.where(dot > 0, V - 2.0 * dot * N, V)

    def snap(self, P):
        r = self._radius(P)[:, None]
        return np.where(r > 1.0, self.center + (P - self.center) / r, P)

    def active_normals(self, x, tol):
        if not np.isinf(tol) and abs(self.violation(x[None, :])[0]) > tol * self.diameter():
            return []
        return [self._normals(x[None, :])[0]]

    def diameter(self):
        return 2.0 * float(np.max(self.semi_axes))

    def bounding_box(self):
        return self.center - self.semi_axes, self.center + self.semi_axes

    def sample_uniform(self, n, rng):
        g = rng.standard_normal((n, self.dimension))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = rng.uniform(size=(n, 1)) ** (1.0 / self.dimension)
        return self.center + self.semi_axes * g * r


class Ball(Ellipsoid):
    def __init__(self, center, radius: float):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if not radius > 0:
            raise ValueError("radius must be positive")
        super().__init__(center, np.full(center.size, float(radius)))
        self.radius = float(radius)

    def __repr__(self):
        return f"Ball({self.center.tolist()}, {self.radius})"

    def _normals(self, P):
        D = P - self.center
        return D / np.linalg.norm(D, axis=-1, keepdims=True)

    def snap(self, P):
        D = P - self.center
        r = np.linalg.norm(D, axis=-1, keepdims=True)
        return np.where(r > self.radius, self.center + D * (self.radius / r), P)


# ---------------------------------------------------------------------------
# polytopes


class HalfspaceIntersection(ConvexDomain):
    """``{x : <n_j, x> <= b_j for all j}``; rows are normalised to unit length."""

    def __init__(self, normals, offsets):
        from scipy.optimize import linprog

        A = np.atleast_2d(np.asarray(normals, dtype=float))
        b = np.atleast_1d(np.asarray(offsets, dtype=float))
        if A.shape[0] != b.size:
            raise ValueError("one offset per normal is required")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms == 0):
            raise ValueError("normals must be nonzero")
        self.normals = A / norms[:, None]
        self.offsets = b / norms
        self.dimension = A.shape[1]
        d = self.dimension
        # Chebyshev centre: maximise s subject to <n_j, x> + s <= b_j
        res = linprog(np.r_[np.zeros(d), -1.0], A_ub=np.c_[self.normals, np.ones(len(b))],
                      b_ub=self.offsets, bounds=[(None, None)] * d + [(None, None)],
                      method="highs")
        if res.status == 3:
            raise ValueError("halfspace intersection is unbounded")
        if res.status != 0 or res.x[-1] <= 0:
            raise ValueError("halfspace intersection has empty interior")
        self.interior_point = res.x[:d]
        self.inradius = float(res.x[-1])
        lo, hi = np.empty(d), np.empty(d)
        for i in range(d):
            for sign in (1.0, -1.0):
                c = np.zeros(d)
                c[i] = -sign
                r = linprog(c, A_ub=self.normals, b_ub=self.offsets,
                            bounds=[(None, None)] * d, method="highs")
                if r.status != 0:
                    raise ValueError("halfspace intersection is unbounded")
                if sign > 0:
                    hi[i] = r.x[i]
                else:
                    lo[i] = r.x[i]
        self._lo, self._hi = lo, hi
        self._diameter = self._vertex_diameter()

    def __repr__(self):
        return f"HalfspaceIntersection({self.normals.tolist()}, {self.offsets.tolist()})"

    def _vertex_diameter(self):
        if self.dimension == 1:
            return float(self._hi[0] - self._lo[0])
        from scipy.spatial import HalfspaceIntersection as _HS
        from scipy.spatial.distance import pdist

        hs = _HS(np.c_[self.normals, -self.offsets], self.interior_point)
        return float(np.max(pdist(hs.intersections)))

    def violation(self, X):
        return np.max(np.asarray(X, dtype=float) @ self.normals.T - self.offsets, axis=-1)

    def exit_times(self, X, V):
        rate = V @ self.normals.T
        slack = self.offsets - X @ self.normals.T
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(rate > 0, np.maximum(slack, 0.0) / rate, np.inf)
        return np.min(t, axis=-1)

    def bounce(self, P, V):
        tol = CORNER_TOL * self.diameter()
        active = (P @ self.normals.T - self.offsets) >= -tol
        V = V.copy()
        for _ in range(4 * len(self.offsets)):
            dots = V @ self.normals.T
            out = active & (dots > 0)
            if not np.any(out):
                break
            # reflect every row off its first outward active face
            j = np.argmax(out, axis=1)
            rows = np.flatnonzero(out.any(axis=1))
            n = self.normals[j[rows]]
            V[rows] -= 2.0 * dots[rows, j[rows]][:, None] * n
        return V

    def snap(self, P):
        P = P.copy()
        for _ in range(3):
            over = P @ self.normals.T - self.offsets
            if not np.any(over > 0):
                break
            P -= np.maximum(over, 0.0) @ self.normals
        return P

    def active_normals(self, x, tol):
        res = self.normals @ x - self.offsets
        if np.isinf(tol):
            return [self.normals[int(np.argmax(res))]]
        return [self.normals[j] for j in np.flatnonzero(np.abs(res) <= tol * self.diameter())]

    def diameter(self):
        return self._diameter

    def bounding_box(self):
        return self._lo.copy(), self._hi.copy()


# ---------------------------------------------------------------------------
# functional aliases


def contains(domain: ConvexDomain, x) -> bool:
    return domain.contains(x)


def outward_normal(domain: ConvexDomain, x) -> np.ndarray:
    return domain.outward_normal(x)


def ray_exit(domain: ConvexDomain, x, v) -> BoundaryHit:
    return domain.ray_exit(x, v)


def diameter(domain: ConvexDomain) -> float:
    return domain.diameter()
