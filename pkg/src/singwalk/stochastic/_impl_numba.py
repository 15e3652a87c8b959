"""Jitted path kernels (numba backend).

Mirrors ``_impl_numpy`` function-for-function; the public wrappers in
``singwalk.stochastic`` pick one module via ``SINGWALK_BACKEND``.

Kernels draw from numba's internal Mersenne generator, seeded inside
the kernel, so a given (seed, arguments) pair is bit-reproducible.
They know nothing about boundary data or integrands: they return exit
points and weighted interior sample points, and the wrappers apply the
user functions vectorised outside the jit boundary.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _sphere_dir():
    u = 2.0 * np.random.random() - 1.0
    phi = 2.0 * np.pi * np.random.random()
    s = np.sqrt(max(0.0, 1.0 - u * u))
    return s * np.cos(phi), s * np.sin(phi), u


@njit(cache=True)
def wos_exit(seed, x0, radius, center, eps, max_steps, n_paths):
    """Walk-on-spheres exit points in a ball.

    Returns (exit_points, steps, truncated): exit points are radial
    projections onto the sphere from the first iterate within
    ``eps`` of the boundary.
    """
    np.random.seed(seed)
    exits = np.empty((n_paths, 3))
    steps = np.zeros(n_paths, np.int64)
    trunc = np.zeros(n_paths, np.bool_)
    for i in range(n_paths):
        x = x0[0]
        y = x0[1]
        z = x0[2]
        n = 0
        while True:
            dx = x - center[0]
            dy = y - center[1]
            dz = z - center[2]
            rr = np.sqrt(dx * dx + dy * dy + dz * dz)
            d = radius - rr
            if d < eps or n >= max_steps:
                if n >= max_steps and d >= eps:
                    trunc[i] = True
                f = radius / max(rr, 1e-300)
                exits[i, 0] = center[0] + dx * f
                exits[i, 1] = center[1] + dy * f
                exits[i, 2] = center[2] + dz * f
                break
            ox, oy, oz = _sphere_dir()
            x += d * ox
            y += d * oy
            z += d * oz
            n += 1
        steps[i] = n
    return exits, steps, trunc


@njit(cache=True)
def wos_occupation_samples(seed, x0, radius, center, eps, max_steps, n_paths):
    """Walk-on-spheres with one Green-weighted interior sample per step.

    Per step at distance ``d`` from the boundary, a point is drawn in
    the step ball ``B(x, d)`` from the density proportional to the ball
    Green function (radius via the exact smoothstep inverse CDF,
    uniform angle) and recorded with weight ``d^2/3``, the total Green
    mass of the step ball for the generator ``(1/2)Delta``.  Summing
    ``weight * g(sample)`` per path estimates ``int_D G(x, y) g(y) dy``
    up to the final ``eps``-shell layer.

    Returns (samples, weights, owner, exit_points, steps, truncated).
    """
    np.random.seed(seed)
    cap = n_paths * 48 + 64
    samples = np.empty((cap, 3))
    weights = np.empty(cap)
    owner = np.empty(cap, np.int64)
    m = 0
    exits = np.empty((n_paths, 3))
    steps = np.zeros(n_paths, np.int64)
    trunc = np.zeros(n_paths, np.bool_)
    for i in range(n_paths):
        x = x0[0]
        y = x0[1]
        z = x0[2]
        n = 0
        while True:
            dx = x - center[0]
            dy = y - center[1]
            dz = z - center[2]
            rr = np.sqrt(dx * dx + dy * dy + dz * dz)
            d = radius - rr
            if d < eps or n >= max_steps:
                if n >= max_steps and d >= eps:
                    trunc[i] = True
                f = radius / max(rr, 1e-300)
                exits[i, 0] = center[0] + dx * f
                exits[i, 1] = center[1] + dy * f
                exits[i, 2] = center[2] + dz * f
                break
            if m >= cap:
                new_cap = cap * 2
                ns = np.empty((new_cap, 3))
                nw = np.empty(new_cap)
                no = np.empty(new_cap, np.int64)
                ns[:m] = samples[:m]
                nw[:m] = weights[:m]
                no[:m] = owner[:m]
                samples, weights, owner, cap = ns, nw, no, new_cap
            u = np.random.random()
            t = 0.5 + np.sin(np.arcsin(2.0 * u - 1.0) / 3.0)
            sx, sy, sz = _sphere_dir()
            samples[m, 0] = x + d * t * sx
            samples[m, 1] = y + d * t * sy
            samples[m, 2] = z + d * t * sz
            weights[m] = d * d / 3.0
            owner[m] = i
            m += 1
            ox, oy, oz = _sphere_dir()
            x += d * ox
            y += d * oy
            z += d * oz
            n += 1
        steps[i] = n
    return samples[:m], weights[:m], owner[:m], exits, steps, trunc


@njit(cache=True)
def em_ball_exit(seed, x0, radius, center, dt, max_steps, n_paths, bridge):
    """Euler scheme in a ball: exit detected at the first exterior sample,
    with the exit time/point linearly interpolated to the sphere crossing.

    With ``bridge`` set, a half-space Brownian-bridge test additionally
    fires mid-step crossings with probability ``exp(-2 d0 d1 / dt)``.
    """
    np.random.seed(seed)
    sq = np.sqrt(dt)
    times = np.empty(n_paths)
    exits = np.empty((n_paths, 3))
    trunc = np.zeros(n_paths, np.bool_)
    for i in range(n_paths):
        x = x0[0] - center[0]
        y = x0[1] - center[1]
        z = x0[2] - center[2]
        t = 0.0
        done = False
        for _ in range(max_steps):
            nx = x + sq * np.random.standard_normal()
            ny = y + sq * np.random.standard_normal()
            nz = z + sq * np.random.standard_normal()
            rn2 = nx * nx + ny * ny + nz * nz
            if rn2 >= radius * radius:
                # solve |p + s (q - p)| = radius for the crossing fraction
                px, py, pz = x, y, z
                ex, ey, ez = nx - x, ny - y, nz - z
                a = ex * ex + ey * ey + ez * ez
                b = px * ex + py * ey + pz * ez
                c0 = px * px + py * py + pz * pz - radius * radius
                disc = b * b - a * c0
                s = (-b + np.sqrt(max(disc, 0.0))) / max(a, 1e-300)
                if s < 0.0:
                    s = 0.0
                if s > 1.0:
                    s = 1.0
                cx = px + s * ex
                cy = py + s * ey
                cz = pz + s * ez
                f = radius / max(np.sqrt(cx * cx + cy * cy + cz * cz), 1e-300)
                exits[i, 0] = center[0] + cx * f
                exits[i, 1] = center[1] + cy * f
                exits[i, 2] = center[2] + cz * f
                times[i] = t + s * dt
                done = True
                break
            if bridge:
                r0 = np.sqrt(x * x + y * y + z * z)
                r1 = np.sqrt(rn2)
                d0 = radius - r0
                d1 = radius - r1
                p_cross = np.exp(-2.0 * d0 * d1 / dt)
                if np.random.random() < p_cross:
                    mx = 0.5 * (x + nx)
                    my = 0.5 * (y + ny)
                    mz = 0.5 * (z + nz)
                    f = radius / max(np.sqrt(mx * mx + my * my + mz * mz), 1e-300)
                    exits[i, 0] = center[0] + mx * f
                    exits[i, 1] = center[1] + my * f
                    exits[i, 2] = center[2] + mz * f
                    times[i] = t + 0.5 * dt
                    done = True
                    break
            x, y, z = nx, ny, nz
            t += dt
        if not done:
            trunc[i] = True
            f = radius / max(np.sqrt(x * x + y * y + z * z), 1e-300)
            exits[i, 0] = center[0] + x * f
            exits[i, 1] = center[1] + y * f
            exits[i, 2] = center[2] + z * f
            times[i] = t
    return times, exits, trunc


@njit(cache=True, inline="always")
def _k_weight(zmid, alpha, k_cap):
    if alpha <= 0.0:
        return min(1.0, k_cap)
    return min(zmid ** (-alpha), k_cap)


@njit(cache=True)
def _attempt(
    x0, y0, z0, lat_radius, top, dt, max_steps, planes, alpha, k_cap,
    tb_t, tb_lv, tb_x, tb_y,
):
    """One Euler path in the cell {z in (0, top), |lateral| < lat_radius}.

    Status 0: absorbed through the bottom face (accepted);
    status 1: left through the top or the lateral surface (rejected);
    status 2: step budget exhausted (rejected, counted separately).

    Level-plane crossings are collapsed on the fly into the sequence of
    successive *distinct*-level hits; each recorded event carries the
    interpolated crossing time and lateral position.  Returns
    (status, absorption_time, occupation, n_events, overflow).
    """
    sq = np.sqrt(dt)
    lat2 = lat_radius * lat_radius
    kmax = planes.shape[0]
    ev_cap = tb_t.shape[0]
    x, y, z = x0, y0, z0
    t = 0.0
    n_ev = 0
    overflow = False
    occ = 0.0
    w = 0  # last distinct level hit (0 = none yet)
    for _ in range(max_steps):
        nx = x + sq * np.random.standard_normal()
        ny = y + sq * np.random.standard_normal()
        nz = z + sq * np.random.standard_normal()
        if nz <= 0.0:
            frac = z / (z - nz)
            cx = x + frac * (nx - x)
            cy = y + frac * (ny - y)
            if cx * cx + cy * cy >= lat2:
                return 1, 0.0, 0.0, n_ev, overflow
            # level crossings on the way down to the bottom
            for k in range(1, kmax + 1):
                p = planes[k - 1]
                if p < z and k != w:
                    fp = (z - p) / (z - nz)
                    if n_ev < ev_cap:
                        tb_t[n_ev] = t + fp * dt
                        tb_lv[n_ev] = k
                        tb_x[n_ev] = x + fp * (nx - x)
                        tb_y[n_ev] = y + fp * (ny - y)
                        n_ev += 1
                    else:
                        overflow = True
                    w = k
            occ += _k_weight(0.5 * z, alpha, k_cap) * frac * dt
            return 0, t + frac * dt, occ, n_ev, overflow
        if nx * nx + ny * ny >= lat2 or nz >= top:
            return 1, 0.0, 0.0, n_ev, overflow
        if nz < z:
            for k in range(1, kmax + 1):
                p = planes[k - 1]
                if nz < p < z and k != w:
                    fp = (z - p) / (z - nz)
                    if n_ev < ev_cap:
                        tb_t[n_ev] = t + fp * dt
                        tb_lv[n_ev] = k
                        tb_x[n_ev] = x + fp * (nx - x)
                        tb_y[n_ev] = y + fp * (ny - y)
                        n_ev += 1
                    else:
                        overflow = True
                    w = k
        elif nz > z:
            for k in range(kmax, 0, -1):
                p = planes[k - 1]
                if z < p < nz and k != w:
                    fp = (p - z) / (nz - z)
                    if n_ev < ev_cap:
                        tb_t[n_ev] = t + fp * dt
                        tb_lv[n_ev] = k
                        tb_x[n_ev] = x + fp * (nx - x)
                        tb_y[n_ev] = y + fp * (ny - y)
                        n_ev += 1
                    else:
                        overflow = True
                    w = k
        occ += _k_weight(0.5 * (z + nz), alpha, k_cap) * dt
        x, y, z = nx, ny, nz
        t += dt
    return 2, 0.0, 0.0, n_ev, overflow


@njit(cache=True)
def box_conditioned(
    seed, start, lat_radius, top, dt, max_steps, planes, alpha, k_cap,
    n_accept, max_tries, ev_cap,
):
    """Rejection sampling of bottom-exit paths from a single start point.

    Simulates Euler paths from ``start`` and keeps the first
    ``n_accept`` that leave the cell through the bottom face.  Returns
    per-accepted-path absorption times, occupation integrals
    ``sum min(z**-alpha, k_cap) dt``, packed distinct-level event
    buffers, and the (tried, truncated) attempt counters.
    """
    np.random.seed(seed)
    abs_t = np.empty(n_accept)
    occ = np.empty(n_accept)
    ev_t = np.zeros((n_accept, ev_cap))
    ev_lv = np.zeros((n_accept, ev_cap), np.int8)
    ev_x = np.zeros((n_accept, ev_cap))
    ev_y = np.zeros((n_accept, ev_cap))
    ev_n = np.zeros(n_accept, np.int64)
    ev_of = np.zeros(n_accept, np.bool_)
    tb_t = np.empty(ev_cap)
    tb_lv = np.empty(ev_cap, np.int8)
    tb_x = np.empty(ev_cap)
    tb_y = np.empty(ev_cap)
    accepted = 0
    tried = 0
    truncated = 0
    while accepted < n_accept and tried < max_tries:
        tried += 1
        status, at, oc, n_ev, of = _attempt(
            start[0], start[1], start[2], lat_radius, top, dt, max_steps,
            planes, alpha, k_cap, tb_t, tb_lv, tb_x, tb_y,
        )
        if status == 2:
            truncated += 1
        if status != 0:
            continue
        abs_t[accepted] = at
        occ[accepted] = oc
        ev_t[accepted, :n_ev] = tb_t[:n_ev]
        ev_lv[accepted, :n_ev] = tb_lv[:n_ev]
        ev_x[accepted, :n_ev] = tb_x[:n_ev]
        ev_y[accepted, :n_ev] = tb_y[:n_ev]
        ev_n[accepted] = n_ev
        ev_of[accepted] = of
        accepted += 1
    return (
        abs_t[:accepted], occ[:accepted], ev_t[:accepted], ev_lv[:accepted],
        ev_x[:accepted], ev_y[:accepted], ev_n[:accepted], ev_of[:accepted],
        tried, truncated,
    )


@njit(cache=True)
def box_conditioned_each(
    seed, starts, lat_radius, top, dt, max_steps, planes, alpha, k_cap,
    max_tries_each, ev_cap,
):
    """One accepted bottom-exit path per start row (for restart checks).

    Rows whose attempt budget runs out are flagged in the returned
    ``ok`` array.  Other outputs match :func:`box_conditioned` row for
    row with the start points.
    """
    np.random.seed(seed)
    m = starts.shape[0]
    abs_t = np.zeros(m)
    occ = np.zeros(m)
    ev_t = np.zeros((m, ev_cap))
    ev_lv = np.zeros((m, ev_cap), np.int8)
    ev_x = np.zeros((m, ev_cap))
    ev_y = np.zeros((m, ev_cap))
    ev_n = np.zeros(m, np.int64)
    ev_of = np.zeros(m, np.bool_)
    ok = np.zeros(m, np.bool_)
    tb_t = np.empty(ev_cap)
    tb_lv = np.empty(ev_cap, np.int8)
    tb_x = np.empty(ev_cap)
    tb_y = np.empty(ev_cap)
    tried = 0
    for i in range(m):
        for _ in range(max_tries_each):
            tried += 1
            status, at, oc, n_ev, of = _attempt(
                starts[i, 0], starts[i, 1], starts[i, 2], lat_radius, top,
                dt, max_steps, planes, alpha, k_cap, tb_t, tb_lv, tb_x, tb_y,
            )
            if status == 0:
                abs_t[i] = at
                occ[i] = oc
                ev_t[i, :n_ev] = tb_t[:n_ev]
                ev_lv[i, :n_ev] = tb_lv[:n_ev]
                ev_x[i, :n_ev] = tb_x[:n_ev]
                ev_y[i, :n_ev] = tb_y[:n_ev]
                ev_n[i] = n_ev
                ev_of[i] = of
                ok[i] = True
                break
    return abs_t, occ, ev_t, ev_lv, ev_x, ev_y, ev_n, ev_of, ok, tried
