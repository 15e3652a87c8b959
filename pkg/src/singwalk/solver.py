"""Grid fixed-point construction of the singular Dirichlet problem.

The integral step ``u -> (harmonic extension of phi) - (Green potential
of f(u))`` is realised on a uniform lattice as the linear solve
``(1/2) L v = f(u), v = phi on the sphere`` with distance-weighted
(Shortley-Weller) stencils at the curved boundary, which preserve the
discrete maximum principle the monotonicity arguments lean on.  Damped
Picard iteration with a minorant clamp drives the fixed point; a
walk-on-spheres evaluator of the same step serves as an independent
oracle at probe points.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import pyamg
from scipy import sparse
from scipy.sparse.linalg import bicgstab

from .geometry import BallDomain
from .problem import BoundaryData, DomainBreachError, MinorantH0, Nonlinearity
from . import stochastic as st

_THETA_MIN = 1e-6  # floor on boundary-arm fractions, keeps the matrix finite


class Grid:
    """Uniform lattice over the bounding cube of a ball.

    ``n`` nodes per axis span ``[c - R, c + R]``; interior nodes are the
    strictly-inside ones.  The assembled matrix ``A`` discretises
    ``-Laplacian`` with Shortley-Weller corrections: for an interior
    node whose axis neighbour falls outside, the stencil arm is
    shortened to the sphere crossing and the crossing point's Dirichlet
    value moves to the right-hand side (rows ``bc_rows``, coefficients
    ``bc_coefs``, points ``bc_points``).
    """

    def __init__(self, ball: BallDomain, n: int):
        if n < 5:
            raise ValueError("grid needs at least 5 nodes per axis")
        if ball.dim != 3:
            raise NotImplementedError("grids are implemented for d = 3")
        self.ball = ball
        self.n = int(n)
        self.h = 2.0 * ball.radius / (n - 1)
        c = ball.center_array
        self.axes = [np.linspace(c[d] - ball.radius, c[d] + ball.radius, n)
                     for d in range(3)]
        X, Y, Z = np.meshgrid(*self.axes, indexing="ij")
        pos = np.stack([X, Y, Z], axis=-1)
        rel = pos - c
        r2 = np.einsum("...i,...i->...", rel, rel)
        self.interior3 = r2 < ball.radius**2
        self.n_interior = int(self.interior3.sum())
        self.index3 = np.full((n, n, n), -1, dtype=np.int64)
        self.index3[self.interior3] = np.arange(self.n_interior)
        self.nodes = pos[self.interior3]
        self._assemble(rel[self.interior3], r2[self.interior3])
        self._ml = None
        self._bc_cache: dict[int, np.ndarray] = {}

    def _assemble(self, rel, r2):
        R2 = self.ball.radius**2
        h = self.h
        n = self.n
        m = self.n_interior
        ii, jj, kk = np.nonzero(self.interior3)
        rows_list, cols_list, vals_list = [], [], []
        bc_rows_list, bc_coefs_list, bc_pts_list = [], [], []
        diag = np.zeros(m)
        under = np.sqrt(np.maximum(R2 - r2, 0.0))
        for d in range(3):
            b = rel[:, d]
            # positive crossing fractions along +/- axis d
            root = np.sqrt(b * b + R2 - r2)
            t_plus = (-b + root) / h
            t_minus = (b + root) / h
            idx = (ii, jj, kk)
            theta = np.empty((2, m))
            nb_row = np.empty((2, m), dtype=np.int64)
            for s, t_arm in enumerate((t_plus, t_minus)):
                shift = 1 if s == 0 else -1
                coord = idx[d] + shift
                ok = (coord >= 0) & (coord < n)
                nb = np.full(m, -1, dtype=np.int64)
                take = [idx[0].copy(), idx[1].copy(), idx[2].copy()]
                take[d] = np.where(ok, coord, 0)
                nb_ok = self.index3[take[0], take[1], take[2]]
                nb[ok] = nb_ok[ok]
                inside = nb >= 0
                theta[s] = np.where(inside, 1.0, np.clip(t_arm, _THETA_MIN, 1.0))
                nb_row[s] = nb
            tp, tm = theta[0], theta[1]
            diag += (2.0 / h**2) / (tp * tm)
            for s in range(2):
                coef = -(2.0 / h**2) / (theta[s] * (tp + tm))
                inside = nb_row[s] >= 0
                rows_list.append(np.nonzero(inside)[0])
                cols_list.append(nb_row[s][inside])
                vals_list.append(coef[inside])
                out = ~inside
                if np.any(out):
                    sign = 1.0 if s == 0 else -1.0
                    pts = self.nodes[out].copy()
                    pts[:, d] += sign * theta[s][out] * h
                    bc_rows_list.append(np.nonzero(out)[0])
                    bc_coefs_list.append(-coef[out])
                    bc_pts_list.append(pts)
        rows = np.concatenate(rows_list)
        cols = np.concatenate(cols_list)
        vals = np.concatenate(vals_list)
        rows = np.concatenate([rows, np.arange(m)])
        cols = np.concatenate([cols, np.arange(m)])
        vals = np.concatenate([vals, diag])
        self.A = sparse.coo_matrix((vals, (rows, cols)), shape=(m, m)).tocsr()
        self.bc_rows = np.concatenate(bc_rows_list)
        self.bc_coefs = np.concatenate(bc_coefs_list)
        self.bc_points = np.concatenate(bc_pts_list)
        # project crossing points exactly onto the sphere (guards rounding)
        c = self.ball.center_array
        rp = self.bc_points - c
        rp *= (self.ball.radius / np.linalg.norm(rp, axis=1))[:, None]
        self.bc_points = c + rp

    def bc_vector(self, phi) -> np.ndarray:
        """Right-hand-side contribution of boundary data ``phi``."""
        key = id(phi)
        if key not in self._bc_cache:
            vals = np.asarray(phi(self.bc_points), dtype=float)
            self._bc_cache[key] = np.bincount(
                self.bc_rows, weights=self.bc_coefs * vals, minlength=self.n_interior
            )
        return self._bc_cache[key]

    def solve(self, rhs: np.ndarray, warm: np.ndarray | None = None) -> np.ndarray:
        """Solve ``A x = rhs`` to relative residual <= 1e-10."""
        if self._ml is None:
            self._ml = pyamg.ruge_stuben_solver(self.A)
            self._M = self._ml.aspreconditioner(cycle="V")
        bnorm = np.linalg.norm(rhs)
        if bnorm == 0.0:
            return np.zeros_like(rhs)
        x, info = bicgstab(self.A, rhs, x0=warm, rtol=1e-12, atol=0.0,
                           M=self._M, maxiter=500)
        relres = np.linalg.norm(rhs - self.A @ x) / bnorm
        if relres > 1e-10:
            raise RuntimeError(
                f"linear solve stalled: relative residual {relres:.2e} (info={info})"
            )
        return x

    def to_3d(self, values: np.ndarray, fill: float = 0.0) -> np.ndarray:
        out = np.full((self.n, self.n, self.n), fill)
        out[self.interior3] = values
        return out


@dataclass
class GridField:
    """Node values over a grid's interior, with boundary-aware lookup."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_interior,):
            raise ValueError("values must match the grid's interior node count")

    def copy(self) -> "GridField":
        return GridField(self.grid, self.values.copy())

    def interpolator(self, phi):
        """Trilinear interpolant valid at interior points.

        Lattice cells cut by the sphere take their exterior corners from
        ``phi`` at the radial projection, so interpolation works right
        up to the boundary (O(h) there, O(h^2) inside).
        """
        g = self.grid
        vals3 = g.to_3d(self.values)
        ring = ~g.interior3
        # only corners of cells that also contain interior nodes matter;
        # filling the whole exterior is simpler and costs one phi sweep
        X, Y, Z = np.meshgrid(*g.axes, indexing="ij")
        pts = np.stack([X[ring], Y[ring], Z[ring]], axis=-1)
        proj = g.ball.boundary_projection(pts)
        vals3[ring] = np.asarray(phi(proj), dtype=float)
        lo = np.array([a[0] for a in g.axes])
        inv_h = 1.0 / g.h

        def interp(points):
            p = np.atleast_2d(np.asarray(points, dtype=float))
            q = (p - lo) * inv_h
            i0 = np.clip(np.floor(q).astype(int), 0, g.n - 2)
            f = q - i0
            out = np.zeros(len(p))
            for dx in (0, 1):
                for dy in (0, 1):
                    for dz in (0, 1):
                        w = (
                            (f[:, 0] if dx else 1 - f[:, 0])
                            * (f[:, 1] if dy else 1 - f[:, 1])
                            * (f[:, 2] if dz else 1 - f[:, 2])
                        )
                        out += w * vals3[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
            return out

        return interp


@dataclass
class SolveReport:
    """Observability record of one fixed-point run."""

    converged: bool
    iterations: int
    residual_history: list[float]
    rel_residual_history: list[float]
    delta_history: list[float]
    clamp_history: list[int]
    min_u_minus_h0: float
    final_damping: float
    wall_time: float
    h_grid: float
    tol: float

    @property
    def clamp_count_tail(self) -> int:
        """Clamp activations over the final 10 iterations."""
        return int(sum(self.clamp_history[-10:]))

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_residual": self.residual_history[-1] if self.residual_history else None,
            "final_rel_residual": self.rel_residual_history[-1] if self.rel_residual_history else None,
            "min_u_minus_h0": self.min_u_minus_h0,
            "clamp_count_tail": self.clamp_count_tail,
            "clamp_total": int(sum(self.clamp_history)),
            "final_damping": self.final_damping,
            "wall_time_s": self.wall_time,
            "h_grid": self.h_grid,
            "tol": self.tol,
        }


class PicardOperator:
    """The integral-step operator and its damped fixed-point driver.

    Bundles the grid, the nonlinearity and the minorant; boundary data
    is passed per call so several data sets can share one assembled
    system (the expensive pieces — matrix, AMG hierarchy, minorant node
    values — are built once).
    """

    def __init__(self, grid: Grid, nl: Nonlinearity, minorant: MinorantH0):
        self.grid = grid
        self.nl = nl
        self.minorant = minorant
        self.h0_values = minorant.eval_many(grid.nodes)
        self._h_phi_cache: dict[int, GridField] = {}

    def h_phi(self, phi) -> GridField:
        """Grid harmonic extension of ``phi`` (the f == 0 solve)."""
        key = id(phi)
        if key not in self._h_phi_cache:
            v = self.grid.solve(self.grid.bc_vector(phi))
            self._h_phi_cache[key] = GridField(self.grid, v)
        return self._h_phi_cache[key]

    def h0_field(self) -> GridField:
        return GridField(self.grid, self.h0_values.copy())

    def _check_cone(self, values: np.ndarray):
        bad = values < self.h0_values - 1e-12
        if np.any(bad):
            i = int(np.argmax(self.h0_values[bad] - values[bad]))
            node = self.grid.nodes[bad][i]
            raise DomainBreachError(
                f"iterate left the admissible cone (u < h0) at node "
                f"({node[0]:.4f}, {node[1]:.4f}, {node[2]:.4f}): "
                f"u={values[bad][i]:.3e} < h0={self.h0_values[bad][i]:.3e} "
                f"({int(bad.sum())} nodes total)"
            )

    def apply_T(self, u: GridField, phi: BoundaryData | callable,
                warm: np.ndarray | None = None) -> GridField:
        """One integral step: solve the linear problem with source f(u)."""
        self._check_cone(u.values)
        zpos = np.maximum(u.values, self.h0_values)  # tolerance band -> cone
        rhs = -2.0 * self.nl.f_eval(zpos) + self.grid.bc_vector(phi)
        v = self.grid.solve(rhs, warm=warm)
        return GridField(self.grid, v)

    def residual(self, u: GridField, phi) -> float:
        return float(np.max(np.abs(u.values - self.apply_T(u, phi).values)))

    def picard_solve(
        self,
        phi: BoundaryData | callable,
        tol: float = 1e-5,
        max_iter: int = 200,
        damping: float = 1.0,
    ) -> tuple[GridField, SolveReport]:
        """Damped iteration of the integral step from the harmonic envelope.

        ``tol`` is relative: the run stops at the first iterate with
        ``max|u - Tu| <= tol * max|u|``.  Iterates are clamped to the
        minorant (activations recorded; none expected at a healthy fixed
        point).  The residual not decreasing over a 20-iteration window
        halves the damping.  On exhaustion the lowest-residual iterate
        is returned with ``converged=False``.
        """
        if not 0.0 < damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")
        t0 = time.perf_counter()
        theta = damping
        u = np.maximum(self.h_phi(phi).values, self.h0_values)
        res_hist: list[float] = []
        rel_hist: list[float] = []
        delta_hist: list[float] = []
        clamp_hist: list[int] = []
        best = (np.inf, u.copy())
        converged = False
        it = 0
        last_halving = 0
        for it in range(1, max_iter + 1):
            Tu = self.apply_T(GridField(self.grid, u), phi, warm=u).values
            res = float(np.max(np.abs(u - Tu)))
            scale = float(np.max(np.abs(u)))
            res_hist.append(res)
            rel_hist.append(res / max(scale, 1e-300))
            if res < best[0]:
                best = (res, u.copy())
            if res <= tol * scale:
                converged = True
                break
            clamped = Tu < self.h0_values
            clamp_hist.append(int(clamped.sum()))
            u_next = (1 - theta) * u + theta * np.maximum(Tu, self.h0_values)
            delta_hist.append(float(np.max(np.abs(u_next - u))))
            if (
                len(res_hist) >= 20
                and it - last_halving >= 20
                and res_hist[-1] >= res_hist[-20]
            ):
                theta = max(theta / 2.0, 1.0 / 64.0)
                last_halving = it
            u = u_next
        if not converged:
            u = best[1]
        report = SolveReport(
            converged=converged,
            iterations=it,
            residual_history=res_hist,
            rel_residual_history=rel_hist,
            delta_history=delta_hist,
            clamp_history=clamp_hist,
            min_u_minus_h0=float(np.min(u - self.h0_values)),
            final_damping=theta,
            wall_time=time.perf_counter() - t0,
            h_grid=self.grid.h,
            tol=tol,
        )
        return GridField(self.grid, u), report

    def mc_T_at_point(
        self,
        u: GridField,
        x,
        phi,
        n_paths: int,
        rng: st.RngStream,
        config: st.PathConfig | None = None,
    ) -> tuple[float, float]:
        """Walk-on-spheres evaluation of the integral step at one point.

        Independent of the grid solve: the harmonic part is estimated
        from boundary exits, the source part from Green-weighted
        occupation samples of ``f(u)`` with ``u`` interpolated.
        Returns (estimate, standard error).
        """
        interp = u.interpolator(phi)

        def g(pts):
            return self.nl.f_eval(interp(pts))

        har = st.wos_harmonic(x, phi, self.grid.ball, n_paths,
                              rng.child("harmonic"), config)
        g_bound = float(self.nl.f_eval(max(np.min(u.values), 1e-300)))
        occ = st.wos_occupation(x, g, self.grid.ball, n_paths,
                                rng.child("occupation"), config, g_bound=g_bound)
        est = har.value - occ.value
        err = float(np.hypot(har.stderr, occ.stderr))
        return est, err


def common_interior_values(coarse: GridField, fine: GridField):
    """Value pairs at nodes shared by a grid and its halved refinement."""
    gc, gf = coarse.grid, fine.grid
    if gf.n != 2 * gc.n - 1:
        raise ValueError("fine grid must halve the coarse spacing (n_f = 2 n_c - 1)")
    vc3 = gc.to_3d(coarse.values, fill=np.nan)
    vf3 = gf.to_3d(fine.values, fill=np.nan)
    sub = vf3[::2, ::2, ::2]
    both = gc.interior3 & gf.interior3[::2, ::2, ::2]
    return vc3[both], sub[both]


def discretization_error(coarse: GridField, fine: GridField) -> float:
    """Richardson estimate of the fine field's sup-norm error.

    For a second-order scheme, ``|u_h - u| ~ (1/3) |u_{2h} - u_h|``;
    the returned value is that bound over the shared interior nodes.
    """
    vc, vf = common_interior_values(coarse, fine)
    return float(np.max(np.abs(vc - vf)) / 3.0)
