"""Vectorised pure-numpy path kernels (fallback backend).

Function-for-function mirror of ``_impl_numba`` with identical
signatures and return shapes.  Paths are advanced synchronously with
alive-masking, so random numbers are consumed in a different order
than the jitted backend: results agree statistically, not bitwise.
Each backend is individually bit-reproducible for a fixed seed.
"""

import numpy as np


def _rng(seed):
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def _sphere_dirs(rng, n):
    u = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    s = np.sqrt(np.maximum(0.0, 1.0 - u * u))
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), u])


def wos_exit(seed, x0, radius, center, eps, max_steps, n_paths):
    rng = _rng(seed)
    center = np.asarray(center, dtype=float)
    pos = np.tile(np.asarray(x0, dtype=float), (n_paths, 1))
    exits = np.empty((n_paths, 3))
    steps = np.zeros(n_paths, np.int64)
    trunc = np.zeros(n_paths, np.bool_)
    alive = np.arange(n_paths)
    n = 0
    while alive.size:
        rel = pos[alive] - center
        rr = np.linalg.norm(rel, axis=1)
        d = radius - rr
        done = d < eps
        if n >= max_steps:
            trunc[alive[~done]] = True
            done = np.ones_like(done)
        if np.any(done):
            idx = alive[done]
            f = radius / np.maximum(rr[done], 1e-300)
            exits[idx] = center + rel[done] * f[:, None]
            steps[idx] = n
            alive = alive[~done]
            d = d[~done]
        if alive.size == 0:
            break
        pos[alive] += d[:, None] * _sphere_dirs(rng, alive.size)
        n += 1
    return exits, steps, trunc


def wos_occupation_samples(seed, x0, radius, center, eps, max_steps, n_paths):
    rng = _rng(seed)
    center = np.asarray(center, dtype=float)
    pos = np.tile(np.asarray(x0, dtype=float), (n_paths, 1))
    exits = np.empty((n_paths, 3))
    steps = np.zeros(n_paths, np.int64)
    trunc = np.zeros(n_paths, np.bool_)
    samples_parts, weights_parts, owner_parts = [], [], []
    alive = np.arange(n_paths)
    n = 0
    while alive.size:
        rel = pos[alive] - center
        rr = np.linalg.norm(rel, axis=1)
        d = radius - rr
        done = d < eps
        if n >= max_steps:
            trunc[alive[~done]] = True
            done = np.ones_like(done)
        if np.any(done):
            idx = alive[done]
            f = radius / np.maximum(rr[done], 1e-300)
            exits[idx] = center + rel[done] * f[:, None]
            steps[idx] = n
            alive = alive[~done]
            d = d[~done]
        if alive.size == 0:
            break
        u = rng.random(alive.size)
        t = 0.5 + np.sin(np.arcsin(2.0 * u - 1.0) / 3.0)
        samples_parts.append(
            pos[alive] + (d * t)[:, None] * _sphere_dirs(rng, alive.size)
        )
        weights_parts.append(d * d / 3.0)
        owner_parts.append(alive.copy())
        pos[alive] += d[:, None] * _sphere_dirs(rng, alive.size)
        n += 1
    if samples_parts:
        samples = np.concatenate(samples_parts)
        weights = np.concatenate(weights_parts)
        owner = np.concatenate(owner_parts)
    else:
        samples = np.empty((0, 3))
        weights = np.empty(0)
        owner = np.empty(0, np.int64)
    return samples, weights, owner, exits, steps, trunc


def em_ball_exit(seed, x0, radius, center, dt, max_steps, n_paths, bridge):
    rng = _rng(seed)
    center = np.asarray(center, dtype=float)
    pos = np.tile(np.asarray(x0, dtype=float) - center, (n_paths, 1))
    times = np.empty(n_paths)
    exits = np.empty((n_paths, 3))
    trunc = np.zeros(n_paths, np.bool_)
    alive = np.arange(n_paths)
    sq = np.sqrt(dt)
    R2 = radius * radius
    t = 0.0
    for _ in range(max_steps):
        if alive.size == 0:
            break
        old = pos[alive]
        new = old + sq * rng.standard_normal((alive.size, 3))
        rn2 = np.einsum("ij,ij->i", new, new)
        out = rn2 >= R2
        crossed = out.copy()
        s_hit = np.ones(alive.size)
        if np.any(out):
            p, e = old[out], new[out] - old[out]
            a = np.einsum("ij,ij->i", e, e)
            b = np.einsum("ij,ij->i", p, e)
            c0 = np.einsum("ij,ij->i", p, p) - R2
            disc = np.maximum(b * b - a * c0, 0.0)
            s_hit[out] = np.clip((-b + np.sqrt(disc)) / np.maximum(a, 1e-300), 0.0, 1.0)
        if bridge:
            r0 = np.linalg.norm(old, axis=1)
            r1 = np.sqrt(np.maximum(rn2, 0.0))
            p_cross = np.exp(-2.0 * (radius - r0) * (radius - r1) / dt)
            fired = ~out & (rng.random(alive.size) < p_cross)
            crossed |= fired
            s_hit[fired] = 0.5
        if np.any(crossed):
            idx = alive[crossed]
            cpt = old[crossed] + s_hit[crossed, None] * (new[crossed] - old[crossed])
            f = radius / np.maximum(np.linalg.norm(cpt, axis=1), 1e-300)
            exits[idx] = center + cpt * f[:, None]
            times[idx] = t + s_hit[crossed] * dt
        pos[alive] = new
        alive = alive[~crossed]
        t += dt
    if alive.size:
        trunc[alive] = True
        rel = pos[alive]
        f = radius / np.maximum(np.linalg.norm(rel, axis=1), 1e-300)
        exits[alive] = center + rel * f[:, None]
        times[alive] = t
    return times, exits, trunc


def _k_weights(zmid, alpha, k_cap):
    if alpha <= 0.0:
        return np.full_like(zmid, min(1.0, k_cap))
    return np.minimum(np.maximum(zmid, 1e-300) ** (-alpha), k_cap)


class _BatchState:
    """Per-attempt state for one synchronous batch of cell paths."""

    def __init__(self, starts, ev_cap):
        m = len(starts)
        self.pos = starts.copy()
        self.status = np.full(m, -1, np.int8)  # -1 running, 0 accept, 1/2 reject
        self.abs_t = np.zeros(m)
        self.occ = np.zeros(m)
        self.w = np.zeros(m, np.int8)
        self.events = [[] for _ in range(m)]
        self.ev_cap = ev_cap
        self.overflow = np.zeros(m, np.bool_)


def _run_batch(rng, state, lat_radius, top, dt, max_steps, planes, alpha, k_cap):
    lat2 = lat_radius * lat_radius
    kmax = len(planes)
    sq = np.sqrt(dt)
    for n in range(max_steps):
        run = np.nonzero(state.status == -1)[0]
        if run.size == 0:
            return
        old = state.pos[run]
        new = old + sq * rng.standard_normal((run.size, 3))
        z0, nz = old[:, 2], new[:, 2]
        absm = nz <= 0.0
        frac = np.where(absm, z0 / np.maximum(z0 - nz, 1e-300), 1.0)
        cross_xy = old[:, :2] + frac[:, None] * (new[:, :2] - old[:, :2])
        lat_cross2 = np.einsum("ij,ij->i", cross_xy, cross_xy)
        accept = absm & (lat_cross2 < lat2)
        latn2 = np.einsum("ij,ij->i", new[:, :2], new[:, :2])
        reject = (absm & ~accept) | (~absm & ((latn2 >= lat2) | (nz >= top)))
        live = ~reject
        # distinct-level crossings, down-movers in ascending k (time order)
        down = live & (nz < z0)
        up = live & ~absm & (nz > z0)
        t_now = n * dt
        for k in range(1, kmax + 1):
            p = planes[k - 1]
            hit = down & (p < z0) & (p > nz) & (state.w[run] != k)
            if np.any(hit):
                fp = (z0[hit] - p) / (z0[hit] - nz[hit])
                hx = old[hit, 0] + fp * (new[hit, 0] - old[hit, 0])
                hy = old[hit, 1] + fp * (new[hit, 1] - old[hit, 1])
                ht = t_now + fp * dt
                for row, tt, xx, yy in zip(run[hit], ht, hx, hy):
                    if len(state.events[row]) < state.ev_cap:
                        state.events[row].append((tt, k, xx, yy))
                    else:
                        state.overflow[row] = True
                state.w[run[hit]] = k
        for k in range(kmax, 0, -1):
            p = planes[k - 1]
            hit = up & (p > z0) & (p < nz) & (state.w[run] != k)
            if np.any(hit):
                fp = (p - z0[hit]) / (nz[hit] - z0[hit])
                hx = old[hit, 0] + fp * (new[hit, 0] - old[hit, 0])
                hy = old[hit, 1] + fp * (new[hit, 1] - old[hit, 1])
                ht = t_now + fp * dt
                for row, tt, xx, yy in zip(run[hit], ht, hx, hy):
                    if len(state.events[row]) < state.ev_cap:
                        state.events[row].append((tt, k, xx, yy))
                    else:
                        state.overflow[row] = True
                state.w[run[hit]] = k
        # occupation: full steps at the midpoint, absorbed steps at z0/2
        cont = live & ~absm
        occ_add = np.zeros(run.size)
        occ_add[cont] = _k_weights(0.5 * (z0[cont] + nz[cont]), alpha, k_cap) * dt
        occ_add[accept] = (
            _k_weights(0.5 * z0[accept], alpha, k_cap) * frac[accept] * dt
        )
        state.occ[run] += occ_add
        state.abs_t[run[accept]] = t_now + frac[accept] * dt
        state.status[run[accept]] = 0
        state.status[run[reject]] = 1
        state.pos[run[cont]] = new[cont]
    state.status[state.status == -1] = 2


def _pack_events(events_lists, overflow, ev_cap):
    m = len(events_lists)
    ev_t = np.zeros((m, ev_cap))
    ev_lv = np.zeros((m, ev_cap), np.int8)
    ev_x = np.zeros((m, ev_cap))
    ev_y = np.zeros((m, ev_cap))
    ev_n = np.zeros(m, np.int64)
    for i, ev in enumerate(events_lists):
        ev_n[i] = len(ev)
        for j, (tt, k, xx, yy) in enumerate(ev):
            ev_t[i, j] = tt
            ev_lv[i, j] = k
            ev_x[i, j] = xx
            ev_y[i, j] = yy
    return ev_t, ev_lv, ev_x, ev_y, ev_n, overflow.copy()


def box_conditioned(
    seed, start, lat_radius, top, dt, max_steps, planes, alpha, k_cap,
    n_accept, max_tries, ev_cap,
):
    rng = _rng(seed)
    start = np.asarray(start, dtype=float)
    planes = np.asarray(planes, dtype=float)
    rows = {"abs_t": [], "occ": [], "ev": [], "of": []}
    tried = 0
    truncated = 0
    accepted = 0
    while accepted < n_accept and tried < max_tries:
        # batch size from the running acceptance estimate
        rate = max(accepted / tried, 0.05) if tried else 0.3
        batch = int(min(max(np.ceil((n_accept - accepted) / rate), 64), 20000))
        batch = min(batch, max_tries - tried)
        state = _BatchState(np.tile(start, (batch, 1)), ev_cap)
        _run_batch(rng, state, lat_radius, top, dt, max_steps, planes, alpha, k_cap)
        acc = np.nonzero(state.status == 0)[0]
        need = n_accept - accepted
        if len(acc) >= need:
            # stop counting at the attempt that completed the quota, so
            # (n_accept, tried) matches the sequential backend's stopping rule
            cut = int(acc[need - 1]) + 1
            acc = acc[:need]
        else:
            cut = batch
        tried += cut
        truncated += int(np.sum(state.status[:cut] == 2))
        for i in acc:
            rows["abs_t"].append(state.abs_t[i])
            rows["occ"].append(state.occ[i])
            rows["ev"].append(state.events[i])
            rows["of"].append(state.overflow[i])
        accepted = len(rows["abs_t"])
    ev_t, ev_lv, ev_x, ev_y, ev_n, ev_of = _pack_events(
        rows["ev"], np.asarray(rows["of"], dtype=bool), ev_cap
    )
    return (
        np.asarray(rows["abs_t"]), np.asarray(rows["occ"]),
        ev_t, ev_lv, ev_x, ev_y, ev_n, ev_of, tried, truncated,
    )


def box_conditioned_each(
    seed, starts, lat_radius, top, dt, max_steps, planes, alpha, k_cap,
    max_tries_each, ev_cap,
):
    rng = _rng(seed)
    starts = np.asarray(starts, dtype=float)
    planes = np.asarray(planes, dtype=float)
    m = starts.shape[0]
    abs_t = np.zeros(m)
    occ = np.zeros(m)
    events = [[] for _ in range(m)]
    overflow = np.zeros(m, np.bool_)
    ok = np.zeros(m, np.bool_)
    tried = 0
    pending = np.arange(m)
    for _ in range(max_tries_each):
        if pending.size == 0:
            break
        state = _BatchState(starts[pending], ev_cap)
        _run_batch(rng, state, lat_radius, top, dt, max_steps, planes, alpha, k_cap)
        tried += pending.size
        good = state.status == 0
        for local, row in enumerate(pending):
            if good[local]:
                abs_t[row] = state.abs_t[local]
                occ[row] = state.occ[local]
                events[row] = state.events[local]
                overflow[row] = state.overflow[local]
                ok[row] = True
        pending = pending[~good]
    ev_t, ev_lv, ev_x, ev_y, ev_n, ev_of = _pack_events(events, overflow, ev_cap)
    return abs_t, occ, ev_t, ev_lv, ev_x, ev_y, ev_n, ev_of, ok, tried
