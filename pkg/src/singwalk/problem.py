"""Problem data: nonlinearity, harmonic minorant, majorant, boundary data.

The minorant ``h0`` is the harmonic extension of a boundary profile
that vanishes exactly on a spherical cap and grows like the geodesic
distance away from it, normalized so that ``h0(x0) = 1/2`` at a fixed
interior anchor point.  Because the cap is axisymmetric the extension
is zonal, so it is evaluated through a Legendre series in
(radius, polar angle) -- this is just a fast, arbitrarily accurate way
of computing the same Poisson integral, and the test-suite cross-checks
it against direct Poisson quadrature.

``K = max(h0**-alpha, a**-alpha)`` majorizes the nonlinearity
``f(z) = z**-alpha`` over ``{u >= h0}`` and is the weight appearing in
all occupation-time estimates.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .geometry import BallDomain, CapSet, as_point

__all__ = [
    "DomainBreachError",
    "Nonlinearity",
    "MinorantH0",
    "SingularMajorant",
    "BoundaryData",
    "linear_growth_check",
]

#: default interior anchor: on the axis, away from the cap, chosen so the
#: normalized minorant stays within [0, 1] for the default cap angle
DEFAULT_ANCHOR = (0.0, 0.0, 0.55)


class DomainBreachError(ValueError):
    """The iterate left the admissible set ``{u > 0}``."""


@dataclass(frozen=True)
class Nonlinearity:
    """``f(z) = z**-alpha`` with ``alpha`` in (0, 1).

    Positive, nonincreasing, locally Lipschitz on ``(0, inf)``, blowing
    up at 0 slower than ``1/z``.  Evaluation at a nonpositive argument
    raises :class:`DomainBreachError`.
    """

    alpha: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")

    def f_eval(self, z) -> float | np.ndarray:
        v = np.asarray(z, dtype=float)
        if np.any(v <= 0.0):
            bad = v[v <= 0.0]
            raise DomainBreachError(
                f"nonlinearity evaluated at nonpositive value(s): "
                f"min={bad.min():.3e} at {bad.size} point(s)"
            )
        out = v ** (-self.alpha)
        if np.isscalar(z) or np.asarray(z).ndim == 0:
            return float(out)
        return out

    __call__ = f_eval


def _legendre_coeffs(cap: CapSet, n_modes: int, clip_angle: float | None):
    """Legendre coefficients of the boundary profile about the cap axis.

    Profile as a function of the polar angle ``t`` from the cap center:
    ``g(t) = R * min(max(t - angle, 0), clip)``.  The integral
    ``a_l = (2l+1)/2 * int_0^pi g(t) P_l(cos t) sin t dt`` is computed
    with Gauss-Legendre panels split at the kink(s), where the profile
    is smooth.
    """
    R = cap.ball.radius
    theta_a = cap.angle
    breakpoints = [0.0, theta_a, np.pi]
    if clip_angle is not None:
        t_clip = theta_a + clip_angle
        if not theta_a < t_clip < np.pi:
            raise ValueError("clip_angle must keep the clip inside (0, pi)")
        breakpoints = [0.0, theta_a, t_clip, np.pi]

    n_nodes = max(128, int(0.9 * n_modes))
    xg, wg = np.polynomial.legendre.leggauss(n_nodes)
    ts, ws = [], []
    for lo, hi in zip(breakpoints[:-1], breakpoints[1:]):
        ts.append(0.5 * (hi + lo) + 0.5 * (hi - lo) * xg)
        ws.append(0.5 * (hi - lo) * wg)
    t = np.concatenate(ts)
    w = np.concatenate(ws)

    prof = np.maximum(t - theta_a, 0.0)
    if clip_angle is not None:
        prof = np.minimum(prof, clip_angle)
    gvals = R * prof

    mu = np.cos(t)
    weight = gvals * np.sin(t) * w
    coeffs = np.empty(n_modes + 1)
    p_prev = np.ones_like(mu)
    p_cur = mu.copy()
    coeffs[0] = 0.5 * np.dot(p_prev, weight)
    if n_modes >= 1:
        coeffs[1] = 1.5 * np.dot(p_cur, weight)
    for ell in range(1, n_modes):
        p_next = ((2 * ell + 1) * mu * p_cur - ell * p_prev) / (ell + 1)
        coeffs[ell + 1] = (2 * ell + 3) / 2.0 * np.dot(p_next, weight)
        p_prev, p_cur = p_cur, p_next
    return coeffs


class MinorantH0:
    """Positive harmonic minorant vanishing exactly on the cap.

    Parameters
    ----------
    cap : CapSet
        Boundary cap (the zero set).
    anchor : point
        Interior normalization point ``x0`` with ``h0(x0) = 1/2``.
    n_modes : int
        Legendre series truncation; 1024 resolves evaluation points up
        to dyadic boundary distance ``2**-8`` comfortably.
    clip_angle : float or None
        Optional cap on the boundary profile (radians beyond the cap
        angle), used to pull the supremum of ``h0`` below 1 when the
        anchor alone cannot.
    """

    def __init__(
        self,
        cap: CapSet,
        anchor=DEFAULT_ANCHOR,
        n_modes: int = 1024,
        clip_angle: float | None = None,
    ):
        self.cap = cap
        self.ball = cap.ball
        self.anchor = as_point(anchor, self.ball.dim)
        if not self.ball.contains(self.anchor):
            raise ValueError("anchor must be an interior point")
        self.n_modes = int(n_modes)
        self.clip_angle = clip_angle
        self._coeffs = _legendre_coeffs(cap, self.n_modes, clip_angle)
        raw_at_anchor = float(self._raw_eval(self.anchor[None, :])[0])
        if raw_at_anchor <= 0:
            raise ValueError("profile extension vanishes at the anchor")
        self.scale = 0.5 / raw_at_anchor
        max_profile = self.cap.ball.radius * (np.pi - self.cap.angle)
        if clip_angle is not None:
            max_profile = self.cap.ball.radius * clip_angle
        self.sup_bound = self.scale * max_profile
        if self.sup_bound > 1.0 + 1e-9:
            warnings.warn(
                f"sup h0 = {self.sup_bound:.3f} exceeds 1; move the anchor "
                "toward the far pole or pass clip_angle to flatten the profile",
                stacklevel=2,
            )

    def profile(self, xi) -> np.ndarray:
        """Boundary profile before harmonic extension and normalization."""
        g = self.cap.geodesic_dist(xi)
        if self.clip_angle is not None:
            g = np.minimum(g, self.ball.radius * self.clip_angle)
        return g

    def boundary_value(self, xi) -> np.ndarray:
        """Exact value of ``h0`` on the sphere: the normalized profile."""
        return self.scale * self.profile(xi)

    def _raw_eval(self, pts: np.ndarray) -> np.ndarray:
        """Series evaluation of the unnormalized extension at interior points."""
        R = self.ball.radius
        rel = pts - self.ball.center_array
        r = np.linalg.norm(rel, axis=-1)
        t = np.minimum(r / R, 1.0)
        with np.errstate(invalid="ignore"):
            mu = np.where(r > 0, -rel[:, -1] / np.where(r > 0, r, 1.0), 1.0)
        mu = np.clip(mu, -1.0, 1.0)

        out = np.empty(len(pts))
        # points needing many modes are those near the sphere; bucket by
        # radius so interior points stop the recurrence early
        order = np.argsort(t)
        edges = np.searchsorted(t[order], [0.5, 0.75, 0.9, 0.97, 1.1])
        start = 0
        for stop in edges:
            if stop <= start:
                start = stop
                continue
            idx = order[start:stop]
            tmax = float(t[idx].max())
            n_eff = self._modes_needed(tmax)
            out[idx] = self._series(t[idx], mu[idx], n_eff)
            start = stop
        return out

    def _modes_needed(self, tmax: float) -> int:
        if tmax >= 1.0 - 1e-12:
            return self.n_modes
        if tmax <= 1e-3:
            return 16
        need = int(np.ceil((28.0 + np.log(1.0 / (1.0 - tmax))) / -np.log(tmax)))
        return min(self.n_modes, max(need, 16))

    def _series(self, t, mu, n_eff):
        a = self._coeffs
        acc = np.full(t.shape, a[0])
        p_prev = np.ones_like(mu)
        p_cur = mu.copy()
        tpow = t.copy()
        acc += a[1] * tpow * p_cur
        for ell in range(1, n_eff):
            p_next = ((2 * ell + 1) * mu * p_cur - ell * p_prev) / (ell + 1)
            tpow = tpow * t
            acc += a[ell + 1] * tpow * p_next
            p_prev, p_cur = p_cur, p_next
        return acc

    def eval_many(self, pts) -> np.ndarray:
        """``h0`` at an (n, d) array of points of the closed ball.

        Interior points use the series; points within ``1e-12`` of the
        sphere use the exact boundary profile.  Outside points raise.
        """
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        depth = self.ball.dist_to_boundary(p)
        if np.any(depth < -1e-9 * self.ball.radius):
            raise ValueError("h0 evaluation outside the closed ball")
        on_bd = depth <= 1e-12 * self.ball.radius
        out = np.empty(len(p))
        if np.any(~on_bd):
            out[~on_bd] = self.scale * self._raw_eval(p[~on_bd])
        if np.any(on_bd):
            out[on_bd] = self.boundary_value(p[on_bd])
        return np.maximum(out, 0.0)

    def h0_eval(self, x) -> float:
        return float(self.eval_many(np.asarray(x, dtype=float)[None, :])[0])

    __call__ = eval_many

    def far_region_floor(self, margin_angle: float = 0.45, n_samples: int = 4096,
                         seed: int = 7) -> float:
        """Minimum of ``h0`` over sampled points whose polar angle from the
        cap center exceeds ``angle + margin_angle`` (interior and boundary).

        The construction does not force this minimum above 1/2; callers
        that rely on a "large away from the cap" floor should check the
        returned value.  A warning is emitted when it is below 1/2.
        """
        rng = np.random.default_rng(seed)
        v = rng.normal(size=(n_samples, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        r = self.ball.radius * rng.random(n_samples) ** (1 / 3)
        pts = self.ball.center_array + v * r[:, None]
        ang = self.cap.polar_angle(pts)
        keep = ang > self.cap.angle + margin_angle
        if not np.any(keep):
            raise ValueError("margin_angle leaves no sample points")
        floor = float(self.eval_many(pts[keep]).min())
        if floor < 0.5:
            warnings.warn(
                f"h0 floor {floor:.3f} < 1/2 over the far region "
                f"(margin {margin_angle:.2f} rad); the floor hypothesis "
                "must be treated as unverified for this geometry",
                stacklevel=2,
            )
        return floor


@dataclass(frozen=True)
class SingularMajorant:
    """``K(x) = max(h0(x)**-alpha, threshold**-alpha)``.

    Dominates ``f(u)`` for every ``u >= h0`` (monotonicity of ``f``),
    and inherits the blow-up ``dist(x, cap)**-alpha`` near the cap.
    """

    minorant: MinorantH0
    alpha: float = 0.5
    threshold: float = 1.0
    h_floor: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.h_floor <= 0:
            raise ValueError("h_floor must be positive")

    @property
    def floor_value(self) -> float:
        """The constant part ``threshold**-alpha``."""
        return self.threshold**-self.alpha

    def k_eval(self, pts) -> np.ndarray:
        # The truncated minorant series saturates (and is clamped at
        # zero) within ~1e-5 of the cap; flooring its value there keeps
        # K bounded on that unresolvable layer instead of inverting
        # rounding noise.  Green-weighted integrals of K see the layer
        # with weight O(dist), so the effect on them is O(h_floor).
        h = np.maximum(self.minorant.eval_many(pts), self.h_floor)
        return np.maximum(h**-self.alpha, self.floor_value)

    __call__ = k_eval

    def singular_fit(self, n_samples: int = 2000, seed: int = 11) -> float:
        """Fitted constant ``c`` in ``K <= c * dist(., cap)**-alpha``.

        Sampled over interior points accumulating toward the cap; the
        constant is reported, not asserted against any reference.
        """
        rng = np.random.default_rng(seed)
        ball, cap = self.minorant.ball, self.minorant.cap
        v = rng.normal(size=(n_samples, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        # bias radii toward the boundary to stress the blow-up region
        r = ball.radius * (1.0 - 2.0 ** (-10.0 * rng.random(n_samples)))
        pts = ball.center_array + v * r[:, None]
        k = self.k_eval(pts)
        rho = np.maximum(np.asarray(cap.dist_to_cap(pts)), 1e-12)
        return float(np.max(k * rho**self.alpha))


@dataclass(frozen=True)
class BoundaryData:
    """Admissible boundary data ``phi = (1 + c1) h0|_bd + margin * psi``.

    ``psi`` is either the constant 1 or the normalized cap-distance
    profile.  ``margin >= 0`` keeps ``phi`` at or above the floor
    ``(1 + c1) h0``; a negative margin deliberately violates it (used
    as a negative control) and is flagged by :attr:`satisfies_floor`.
    """

    minorant: MinorantH0
    c1_hat: float
    margin: float = 0.05
    psi: str = "constant"

    def __post_init__(self):
        if self.c1_hat < 0:
            raise ValueError("c1_hat must be nonnegative")
        if self.psi not in ("constant", "cap-distance"):
            raise ValueError(f"unknown psi profile {self.psi!r}")

    @property
    def satisfies_floor(self) -> bool:
        return self.margin >= 0.0

    def psi_values(self, xi) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(xi, dtype=float))
        if self.psi == "constant":
            return np.ones(len(pts))
        cap = self.minorant.cap
        gmax = cap.ball.radius * (np.pi - cap.angle)
        return np.asarray(cap.geodesic_dist(pts)) / gmax

    def __call__(self, xi) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(xi, dtype=float))
        pts = self.minorant.ball.boundary_projection(pts)
        base = (1.0 + self.c1_hat) * self.minorant.boundary_value(pts)
        return base + self.margin * self.psi_values(pts)


def linear_growth_check(
    minorant: MinorantH0, depths=None
) -> tuple[float, float, np.ndarray]:
    """Log-log slope of ``h0`` along the inward normal at the cap center.

    Returns ``(slope, r_squared, table)`` where ``table`` has rows
    ``(depth, h0)``.  A boundary point in the relative interior of the
    zero set has a positive inward normal derivative, so the slope
    should sit near 1.
    """
    ball = minorant.ball
    if depths is None:
        depths = 2.0 ** -np.arange(3, 9, dtype=float)
    depths = np.asarray(depths, dtype=float)
    pole = minorant.cap.pole
    inward = (ball.center_array - pole) / np.linalg.norm(ball.center_array - pole)
    pts = pole[None, :] + depths[:, None] * inward[None, :]
    vals = minorant.eval_many(pts)
    if np.any(vals <= 0):
        raise ValueError("h0 vanished along the interior normal probe")
    lx, ly = np.log(depths), np.log(vals)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    r2 = 1.0 - np.sum(resid**2) / max(np.sum((ly - ly.mean()) ** 2), 1e-300)
    return float(slope), float(r2), np.column_stack([depths, vals])
