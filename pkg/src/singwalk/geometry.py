"""Domains and boundary decompositions.

Two concrete domains are used throughout:

* :class:`BallDomain` -- the smooth bounded domain on which the singular
  problem is solved and on whose boundary the zero set of the minorant
  (a spherical cap, :class:`CapSet`) lives.
* :class:`BoxDomain` -- a flat-bottomed box used for the path
  experiments near a boundary portion; its bottom face plays the role
  of the zero set, so the distance to the boundary is exactly the
  height coordinate in the region of interest.

:class:`DyadicStrips` fixes the dyadic decomposition of the box into
horizontal strips of height ``2**-k`` together with the level planes
between them.  Positive indices ``k = 1, 2, ...`` denote shrinking
strips; larger ``k`` means closer to the bottom.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BallDomain",
    "BoxDomain",
    "CapSet",
    "DyadicStrips",
    "as_point",
]


def as_point(x, dim: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a 1-d float coordinate array, optionally checking length."""
    p = np.asarray(x, dtype=float)
    if p.ndim != 1:
        raise ValueError(f"point must be one-dimensional, got shape {p.shape}")
    if dim is not None and p.shape[0] != dim:
        raise ValueError(f"expected a {dim}-dimensional point, got {p.shape[0]}")
    return p


@dataclass(frozen=True)
class BallDomain:
    """Open ball ``{ |x - center| < radius }`` in dimension 2 or 3."""

    radius: float = 1.0
    center: tuple[float, ...] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if len(self.center) not in (2, 3):
            raise ValueError("only dimensions 2 and 3 are supported")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def center_array(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    def contains(self, x) -> bool | np.ndarray:
        """Strict interior membership.  Accepts a point or an (n, d) array."""
        p = np.asarray(x, dtype=float)
        r = np.linalg.norm(p - self.center_array, axis=-1)
        return r < self.radius

    def dist_to_boundary(self, x) -> float | np.ndarray:
        """Signed distance ``radius - |x - center|`` (negative outside)."""
        p = np.asarray(x, dtype=float)
        r = np.linalg.norm(p - self.center_array, axis=-1)
        return self.radius - r

    def boundary_projection(self, x) -> np.ndarray:
        """Radial projection of ``x`` onto the sphere (undefined at the center)."""
        p = np.asarray(x, dtype=float)
        v = p - self.center_array
        r = np.linalg.norm(v, axis=-1, keepdims=True)
        if np.any(r < 1e-14):
            raise ValueError("boundary projection is undefined at the center")
        return self.center_array + self.radius * v / r

    def boundary_point(self, direction) -> np.ndarray:
        """Boundary point in the given direction from the center."""
        d = as_point(direction, self.dim)
        n = np.linalg.norm(d)
        if n == 0:
            raise ValueError("direction must be nonzero")
        return self.center_array + self.radius * d / n


@dataclass(frozen=True)
class BoxDomain:
    """Open box ``{ max_i |x_i| < half_width } x (0, height)``.

    The bottom face ``{x_d = 0}`` is flat, so for points with lateral
    (Euclidean) distance below ``half_width - height`` the distance to
    the boundary is exactly the height coordinate.  The bottom-face
    center (the origin) is the anchor for the strip decomposition.
    """

    half_width: float = 2.0
    height: float = 1.0
    dim: int = 3

    def __post_init__(self):
        if self.half_width <= 0 or self.height <= 0:
            raise ValueError("half_width and height must be positive")
        if self.dim not in (2, 3):
            raise ValueError("only dimensions 2 and 3 are supported")

    @property
    def anchor(self) -> np.ndarray:
        """Center of the bottom face."""
        return np.zeros(self.dim)

    def contains(self, x) -> bool | np.ndarray:
        p = np.asarray(x, dtype=float)
        lateral = np.max(np.abs(p[..., :-1]), axis=-1)
        z = p[..., -1]
        return (lateral < self.half_width) & (z > 0.0) & (z < self.height)

    def dist_to_boundary(self, x) -> float | np.ndarray:
        p = np.asarray(x, dtype=float)
        lateral = self.half_width - np.max(np.abs(p[..., :-1]), axis=-1)
        z = p[..., -1]
        return np.minimum(lateral, np.minimum(z, self.height - z))

    def vertical_distance(self, x) -> float | np.ndarray:
        """Height above the bottom face (equals boundary distance near it)."""
        return np.asarray(x, dtype=float)[..., -1]

    def lateral_distance(self, x) -> float | np.ndarray:
        """Euclidean distance of the lateral coordinates from the anchor."""
        p = np.asarray(x, dtype=float)
        return np.linalg.norm(p[..., :-1], axis=-1)


@dataclass(frozen=True)
class DyadicStrips:
    """Dyadic strips over the bottom face of a :class:`BoxDomain`.

    Strip ``k`` (for ``k = 1 .. k_max``) is

        ``Q_k = { x in box : 0 < x_d < 2**-k, |x~| < lateral_radius }``

    where ``x~`` are the lateral coordinates relative to the anchor.
    ``U_k`` is the level plane at height ``2**-k`` (same lateral
    extent), and the lateral boundary at ``|x~| = lateral_radius``
    censors the bookkeeping.
    """

    box: BoxDomain = field(default_factory=BoxDomain)
    k_max: int = 8
    lateral_radius: float = 1.0

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")
        if not 0 < self.lateral_radius < self.box.half_width:
            raise ValueError(
                "lateral_radius must lie strictly between 0 and the box half_width"
            )
        if 0.5 >= self.box.height:
            raise ValueError("box height must exceed 1/2 so every strip is interior")

    def level_height(self, k: int) -> float:
        if not 1 <= k <= self.k_max:
            raise ValueError(f"level index must be in 1..{self.k_max}, got {k}")
        return 2.0 ** (-k)

    @property
    def level_heights(self) -> np.ndarray:
        return 2.0 ** (-np.arange(1, self.k_max + 1, dtype=float))

    def in_strip(self, x, k: int) -> bool | np.ndarray:
        p = np.asarray(x, dtype=float)
        z = p[..., -1]
        lat = self.box.lateral_distance(p)
        return (z > 0.0) & (z < self.level_height(k)) & (lat < self.lateral_radius)

    def strip_index(self, x) -> int | np.ndarray:
        """Index of the finest strip containing ``x`` (0 if none).

        A point at vertical distance ``v`` lies in every strip ``k``
        with ``2**-k > v``; the returned index is the largest such
        ``k`` (clipped to ``k_max``), i.e. ``v in [2**-(k+1), 2**-k)``
        away from the clip.  Points at or above height 1/2, outside
        the lateral window, or outside the box get index 0.
        """
        p = np.asarray(x, dtype=float)
        z = p[..., -1]
        lat = self.box.lateral_distance(p)
        valid = (z > 0.0) & (z < 0.5) & (lat < self.lateral_radius)
        with np.errstate(divide="ignore"):
            k = np.where(valid, -np.log2(np.maximum(z, 1e-300)), 0.0)
        # strict membership: height exactly 2**-k belongs to strip k-1
        idx = np.where(
            valid, np.minimum(np.ceil(k) - 1, self.k_max).astype(int), 0
        )
        if idx.ndim == 0:
            return int(idx)
        return idx


@dataclass(frozen=True)
class CapSet:
    """Closed spherical cap on the boundary of a :class:`BallDomain`.

    The cap is centered on the south pole (the ``-e_d`` direction from
    the ball center) and consists of boundary points whose polar angle
    from that pole is at most ``angle``.
    """

    ball: BallDomain = field(default_factory=BallDomain)
    angle: float = np.pi / 3

    def __post_init__(self):
        if not 0 < self.angle < np.pi:
            raise ValueError(f"cap angle must be in (0, pi), got {self.angle}")
        if self.ball.dim != 3:
            raise ValueError("CapSet requires a 3-dimensional ball")

    @property
    def pole(self) -> np.ndarray:
        """The cap center: the lowest point of the sphere."""
        c = self.ball.center_array.copy()
        c[-1] -= self.ball.radius
        return c

    def polar_angle(self, x) -> float | np.ndarray:
        """Angle at the ball center between ``x`` and the south direction."""
        p = np.asarray(x, dtype=float)
        v = p - self.ball.center_array
        r = np.linalg.norm(v, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            cosang = np.where(r > 0, -v[..., -1] / np.where(r > 0, r, 1.0), 1.0)
        return np.arccos(np.clip(cosang, -1.0, 1.0))

    def contains_boundary_point(self, xi, tol: float = 1e-9) -> bool | np.ndarray:
        p = np.asarray(xi, dtype=float)
        on_sphere = np.abs(self.ball.dist_to_boundary(p)) <= tol
        return on_sphere & (self.polar_angle(p) <= self.angle + tol)

    def geodesic_dist(self, xi) -> float | np.ndarray:
        """Great-circle distance from a boundary point to the cap (0 on it)."""
        theta = self.polar_angle(xi)
        return self.ball.radius * np.maximum(0.0, theta - self.angle)

    def dist_to_cap(self, x) -> float | np.ndarray:
        """Euclidean distance from an arbitrary point to the cap set.

        For points whose polar angle is within the cap angle the
        nearest cap point is the radial projection; otherwise it is on
        the cap rim, at angle ``angle`` in the plane spanned by the
        axis and the point.
        """
        p = np.asarray(x, dtype=float)
        v = p - self.ball.center_array
        r = np.linalg.norm(v, axis=-1)
        theta = self.polar_angle(p)
        over = np.maximum(0.0, theta - self.angle)
        R = self.ball.radius
        # law of cosines against the nearest cap point (angle `over` away)
        d2 = r**2 + R**2 - 2.0 * r * R * np.cos(over)
        return np.sqrt(np.maximum(d2, 0.0))
