import numpy as np, time
from singwalk.geometry import BallDomain
from singwalk import solver as sv
from singwalk.problem import Nonlinearity, MinorantH0, BoundaryData
from singwalk.geometry import CapSet
from singwalk.kernels import harmonic_extension

ball = BallDomain()
t0 = time.perf_counter()
g33 = sv.Grid(ball, 33)
print("assemble n=33:", f"{time.perf_counter()-t0:.2f}s", "m =", g33.n_interior)

nl = Nonlinearity(alpha=0.5)
h0 = MinorantH0(CapSet(ball))
op33 = sv.PicardOperator(g33, nl, h0)

# 1) f == 0: harmonic extension of a smooth phi vs Poisson quadrature
phi_s = lambda xi: np.atleast_2d(xi)[:, 2] ** 2 + 0.3 * np.atleast_2d(xi)[:, 0]
hph = op33.h_phi(phi_s)
probes = [(0.0, 0.0, 0.0), (0.3, -0.2, 0.4), (0.0, 0.0, 0.8)]
errs = []
for p in probes:
    exact = harmonic_extension(lambda xi: phi_s(xi), np.array(p), ball)
    # nearest node value
    i = np.argmin(np.linalg.norm(g33.nodes - np.array(p), axis=1))
    errs.append(abs(hph.values[i] - exact))
print("harmonic errs at near-nodes:", [f"{e:.2e}" for e in errs])

# 2) constant u == c: T u = h_phi + c^{-alpha} (|x|^2 - R^2)/3
c = 2.0
u_const = sv.GridField(g33, np.full(g33.n_interior, c))
Tu = op33.apply_T(u_const, phi_s)
r2 = np.sum(g33.nodes**2, axis=1)
pred = hph.values + c**-0.5 * (r2 - 1.0) / 3.0
print("constant-source err:", f"{np.max(np.abs(Tu.values - pred)):.2e}")

# 3) monotonicity: u1 <= u2 (both >= h0) => T u1 <= T u2
h0v = op33.h0_values
u1 = sv.GridField(g33, np.maximum(h0v, 0.5))
u2 = sv.GridField(g33, np.maximum(h0v, 0.5) + 0.3)
d = op33.apply_T(u2, phi_s).values - op33.apply_T(u1, phi_s).values
print("monotone: min(Tu2-Tu1) =", f"{d.min():.2e}", "(should be >= ~-1e-10)")

# 4) small picard run, alpha=0.5
phi = BoundaryData(minorant=h0, c1_hat=1.2, margin=0.05)
t0 = time.perf_counter()
u, rep = op33.picard_solve(phi, tol=1e-5, max_iter=200)
print("picard n=33:", rep.summary())
res_seq = np.array(rep.residual_history)
print("residual monotone decreasing:", bool(np.all(np.diff(res_seq) <= 1e-14)))
print("min(u - h0):", f"{rep.min_u_minus_h0:.3e}", "clamp tail:", rep.clamp_count_tail)

# 5) refinement + eps_disc
t0 = time.perf_counter()
g65 = sv.Grid(ball, 65)
op65 = sv.PicardOperator(g65, nl, h0)
u65, rep65 = op65.picard_solve(phi, tol=1e-5, max_iter=200)
print("picard n=65:", rep65.iterations, "iters,", f"{rep65.wall_time:.1f}s,",
      "converged:", rep65.converged)
eps = sv.discretization_error(u, u65)
print("eps_disc(h=1/32):", f"{eps:.3e}")
print("min(u65 - h0):", f"{rep65.min_u_minus_h0:.3e}")
