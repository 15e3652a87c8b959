"""Path sampling: walk-on-spheres, Euler schemes, conditioned cell paths.

Two interchangeable kernel backends live in ``_impl_numba`` (jitted)
and ``_impl_numpy`` (vectorised); ``SINGWALK_BACKEND`` picks one at
call time.  Kernels consume plain arrays and return exit points,
weighted interior samples and packed level-crossing event buffers; all
boundary data and integrands are applied here, outside the kernels.

Seeds are organised as a tree (:class:`RngStream`): every consumer
derives a labelled child stream, so adding a new consumer never shifts
the draws of an existing one.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .._backend import use_numba
from ..geometry import BallDomain, DyadicStrips


def _impl():
    if use_numba():
        from . import _impl_numba

        return _impl_numba
    from . import _impl_numpy

    return _impl_numpy


class RngStream:
    """Label-addressed deterministic seed tree.

    ``child(label)`` derives an independent stream; ``kernel_seed()``
    yields a 31-bit integer for the jitted kernels and ``generator()``
    a PCG64 ``Generator`` for python-side sampling.  Identical
    (master_seed, label path) pairs always reproduce the same draws.
    """

    def __init__(self, master_seed: int, _path=()):
        self.master_seed = int(master_seed)
        self._path = tuple(_path)

    def child(self, label: str) -> "RngStream":
        return RngStream(self.master_seed, self._path + (str(label),))

    def _seed_sequence(self) -> np.random.SeedSequence:
        digest = hashlib.blake2s("/".join(self._path).encode()).digest()
        derived = int.from_bytes(digest[:8], "little")
        return np.random.SeedSequence([self.master_seed, derived])

    def kernel_seed(self) -> int:
        return int(self._seed_sequence().generate_state(1)[0]) & 0x7FFFFFFF

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(self._seed_sequence())

    def __repr__(self):
        return f"RngStream({self.master_seed}, path={'/'.join(self._path) or '<root>'})"


@dataclass(frozen=True)
class PathConfig:
    """Discretisation knobs shared by the samplers.

    ``eps_shell`` is the walk-on-spheres stopping distance, ``dt`` the
    Euler step, ``bridge`` enables the half-space Brownian-bridge
    crossing test, ``event_capacity`` bounds the per-path level-event
    buffer (overflowing paths are flagged, never silently clipped).
    """

    dt: float = 1e-4
    eps_shell: float = 1e-4
    max_steps: int = 200_000
    bridge: bool = False
    event_capacity: int = 256

    def __post_init__(self):
        if self.dt <= 0 or self.eps_shell <= 0:
            raise ValueError("dt and eps_shell must be positive")
        if self.max_steps < 1 or self.event_capacity < 1:
            raise ValueError("max_steps and event_capacity must be >= 1")


@dataclass(frozen=True)
class WosResult:
    value: float
    stderr: float
    n_paths: int
    n_truncated: int
    mean_steps: float
    bias_bound: float | None = None


@dataclass(frozen=True)
class OccupationResult:
    value: float
    stderr: float
    n_paths: int
    n_truncated: int
    mean_steps: float
    n_samples: int
    bias_bound: float | None = None


@dataclass(frozen=True)
class ExcursionRecord:
    """One stretch between successive distinct-level hits.

    ``side`` is ``"up"`` when the next hit is a shallower plane (smaller
    level index), ``"down"`` when deeper, ``"absorbed"`` when the path
    reaches the bottom without another hit, ``"censored"`` when the
    event buffer overflowed and the true end is unknown.
    """

    level: int
    visit_index: int
    t_start: float
    t_end: float
    side: str
    x_start: float
    y_start: float

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


@dataclass
class ConditionedEnsemble:
    """Accepted bottom-exit paths from the rejection sampler.

    Event buffers are packed ``(n_paths, event_capacity)`` arrays;
    ``event_counts[i]`` gives the used prefix of row ``i``.
    """

    start: np.ndarray
    alpha: float
    k_cap: float
    dt: float
    absorption_times: np.ndarray
    occupations: np.ndarray
    event_times: np.ndarray
    event_levels: np.ndarray
    event_x: np.ndarray
    event_y: np.ndarray
    event_counts: np.ndarray
    overflowed: np.ndarray
    n_tried: int
    n_truncated: int
    level_heights: np.ndarray = field(default=None)

    @property
    def n_paths(self) -> int:
        return len(self.absorption_times)

    @property
    def acceptance_rate(self) -> float:
        return self.n_paths / max(self.n_tried, 1)

    def events(self, i: int):
        """(times, levels, x, y) view of path i's recorded events."""
        n = self.event_counts[i]
        return (
            self.event_times[i, :n],
            self.event_levels[i, :n],
            self.event_x[i, :n],
            self.event_y[i, :n],
        )

    def excursions(self, i: int) -> list[ExcursionRecord]:
        t, lv, x, y = self.events(i)
        return excursion_decompose(
            lv, t, self.absorption_times[i], x, y, overflow=bool(self.overflowed[i])
        )


class TruncationWarning(UserWarning):
    """More paths hit the step budget than the configured tolerance."""


def _as_arr3(x):
    a = np.asarray(x, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise ValueError("expected a 3-vector")
    return a


def _require_inside(ball: BallDomain, x):
    if not ball.contains(x):
        raise ValueError("start point must lie strictly inside the ball")


def _warn_truncation(n_trunc: int, n_paths: int):
    if n_trunc > 1e-6 * n_paths:
        import warnings

        warnings.warn(
            f"{n_trunc}/{n_paths} paths hit max_steps; estimates carry a "
            "truncation bias — raise max_steps",
            TruncationWarning,
            stacklevel=3,
        )


def wos_harmonic(
    x0,
    phi,
    ball: BallDomain,
    n_paths: int,
    rng: RngStream,
    config: PathConfig | None = None,
    phi_lipschitz: float | None = None,
) -> WosResult:
    """Estimate u(x0) for the harmonic extension of ``phi`` in a ball.

    ``phi`` must accept an (n, 3) array of boundary points and return
    (n,) values.  The walk stops within ``eps_shell`` of the sphere and
    projects; with a Lipschitz constant for ``phi`` the projection bias
    is bounded by ``phi_lipschitz * eps_shell`` and reported.
    """
    config = config or PathConfig()
    _require_inside(ball, _as_arr3(x0))
    exits, steps, trunc = _impl().wos_exit(
        rng.kernel_seed(),
        _as_arr3(x0),
        float(ball.radius),
        np.asarray(ball.center, dtype=float),
        config.eps_shell,
        config.max_steps,
        int(n_paths),
    )
    vals = np.asarray(phi(exits), dtype=float)
    if vals.shape != (n_paths,):
        raise ValueError("phi must map (n, 3) points to (n,) values")
    bias = None if phi_lipschitz is None else float(phi_lipschitz) * config.eps_shell
    _warn_truncation(int(trunc.sum()), n_paths)
    return WosResult(
        value=float(vals.mean()),
        stderr=float(vals.std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0,
        n_paths=n_paths,
        n_truncated=int(trunc.sum()),
        mean_steps=float(steps.mean()),
        bias_bound=bias,
    )


def wos_occupation(
    x0,
    g,
    ball: BallDomain,
    n_paths: int,
    rng: RngStream,
    config: PathConfig | None = None,
    g_bound: float | None = None,
    singular_profile: tuple[float, float] | None = None,
) -> OccupationResult:
    """Estimate the Green potential ``int G(x0, y) g(y) dy`` in a ball.

    One Green-density point per walk step, weighted by the step-ball
    Green mass d^2/3.  The stopped eps-shell tail is not sampled; its
    size is reported as ``bias_bound`` when either a bound on ``|g|``
    or a boundary profile ``(c, alpha)`` with |g| <= c d^-alpha is
    supplied (near/far split envelope for the latter).
    """
    config = config or PathConfig()
    _require_inside(ball, _as_arr3(x0))
    samples, weights, owner, exits, steps, trunc = _impl().wos_occupation_samples(
        rng.kernel_seed(),
        _as_arr3(x0),
        float(ball.radius),
        np.asarray(ball.center, dtype=float),
        config.eps_shell,
        config.max_steps,
        int(n_paths),
    )
    _warn_truncation(int(trunc.sum()), n_paths)
    gv = np.asarray(g(samples), dtype=float) if len(samples) else np.empty(0)
    per_path = np.bincount(owner, weights=weights * gv, minlength=n_paths)
    eps, R = config.eps_shell, ball.radius
    bias = None
    if g_bound is not None:
        bias = float(g_bound) * (R * R - (R - eps) ** 2) / 3.0
    elif singular_profile is not None:
        c, al = map(float, singular_profile)
        bias = c * (2 * eps) ** (-al) * (R * R - (R - eps) ** 2) / 3.0
        bias += 8.0 * c * eps ** (2.0 - al)
    return OccupationResult(
        value=float(per_path.mean()),
        stderr=float(per_path.std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else 0.0,
        n_paths=n_paths,
        n_truncated=int(trunc.sum()),
        mean_steps=float(steps.mean()),
        n_samples=len(samples),
        bias_bound=bias,
    )


def em_exit(
    x0,
    ball: BallDomain,
    n_paths: int,
    rng: RngStream,
    config: PathConfig | None = None,
):
    """Euler exit times/points from a ball: (times, exit_points, truncated)."""
    config = config or PathConfig()
    _require_inside(ball, _as_arr3(x0))
    return _impl().em_ball_exit(
        rng.kernel_seed(),
        _as_arr3(x0),
        float(ball.radius),
        np.asarray(ball.center, dtype=float),
        config.dt,
        config.max_steps,
        int(n_paths),
        bool(config.bridge),
    )


def em_path(x0, domain, rng: RngStream, config: PathConfig | None = None):
    """Single Euler trajectory recorded until it leaves ``domain``.

    Returns (times, positions) with the final row the first sample
    outside.  Plain python loop; meant for inspection and tests, not
    for production sampling.
    """
    config = config or PathConfig()
    gen = rng.generator()
    x = _as_arr3(x0)
    if not domain.contains(x):
        raise ValueError("start point must lie inside the domain")
    sq = np.sqrt(config.dt)
    pts = [x.copy()]
    for _ in range(config.max_steps):
        x = x + sq * gen.standard_normal(3)
        pts.append(x.copy())
        if not domain.contains(x):
            break
    pts = np.asarray(pts)
    return config.dt * np.arange(len(pts)), pts


def conditioned_paths_rejection(
    start,
    strips: DyadicStrips,
    n_accept: int,
    rng: RngStream,
    config: PathConfig | None = None,
    alpha: float = 0.5,
    k_cap: float | None = None,
    max_tries: int | None = None,
    min_acceptance: float = 1e-3,
    top: float | None = None,
) -> ConditionedEnsemble:
    """Sample cell paths conditioned to exit through the bottom face.

    Euler paths start at ``start`` inside the cell
    ``{|lateral| < strips.lateral_radius, 0 < z < top}`` and are kept
    iff they are absorbed through the bottom, which realises the
    Doob-conditioned ensemble (h = harmonic measure of the bottom face
    of the cell) by rejection.  Each accepted path carries its
    absorption time, the occupation integral of
    ``min(z^-alpha, k_cap)``, and the sequence of successive
    distinct-level hits of the dyadic planes (time-interpolated).

    ``top`` defaults to the unit cell ``min(1, box.height)``; scaling
    experiments pass a dyadic height to both shrink the conditioning
    cell and stop the occupation window at its exit.  ``k_cap``
    defaults to the weight at half an Euler step width,
    ``(sqrt(dt)/2)^-alpha`` — heights below the step resolution carry
    no extra information.  Raises RuntimeError when the acceptance rate
    is too low to reach ``n_accept`` within the attempt budget.
    """
    config = config or PathConfig()
    start = _as_arr3(start)
    box = strips.box
    if top is None:
        top = min(1.0, box.height)
    if not 0 < top <= box.height:
        raise ValueError("cell top must lie in (0, box.height]")
    if not box.contains(start) or not start[2] < top:
        raise ValueError("start point must lie inside the conditioning cell")
    if box.lateral_distance(start) >= strips.lateral_radius:
        raise ValueError("start point must lie inside the conditioning cell")
    if k_cap is None:
        k_cap = float((0.5 * np.sqrt(config.dt)) ** (-alpha)) if alpha > 0 else 1.0
    if max_tries is None:
        max_tries = int(max(50 * n_accept, n_accept / min_acceptance))
    planes = strips.level_heights
    out = _impl().box_conditioned(
        rng.kernel_seed(),
        start,
        float(strips.lateral_radius),
        float(top),
        config.dt,
        config.max_steps,
        planes,
        float(alpha),
        float(k_cap),
        int(n_accept),
        int(max_tries),
        int(config.event_capacity),
    )
    abs_t, occ, ev_t, ev_lv, ev_x, ev_y, ev_n, ev_of, tried, truncated = out
    if len(abs_t) < n_accept:
        rate = len(abs_t) / max(tried, 1)
        raise RuntimeError(
            f"accepted {len(abs_t)}/{n_accept} paths after {tried} attempts "
            f"(rate {rate:.2e}, {truncated} hit the step budget); move the "
            "start away from the top/lateral boundary, raise max_tries, or "
            "increase max_steps"
        )
    return ConditionedEnsemble(
        start=start,
        alpha=alpha,
        k_cap=k_cap,
        dt=config.dt,
        absorption_times=abs_t,
        occupations=occ,
        event_times=ev_t,
        event_levels=ev_lv,
        event_x=ev_x,
        event_y=ev_y,
        event_counts=ev_n,
        overflowed=ev_of,
        n_tried=int(tried),
        n_truncated=int(truncated),
        level_heights=planes,
    )


def conditioned_paths_each(
    starts,
    strips: DyadicStrips,
    rng: RngStream,
    config: PathConfig | None = None,
    alpha: float = 0.5,
    k_cap: float | None = None,
    max_tries_each: int = 200,
    top: float | None = None,
):
    """One accepted bottom-exit path per start row.

    Restart helper for Markov-property checks: feed it the recorded
    first-hit points of a plane and compare the continuations against
    fresh paths.  Returns (ensemble, ok) where rows with ``~ok`` ran
    out of attempts and hold zeros.
    """
    config = config or PathConfig()
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    if top is None:
        top = min(1.0, strips.box.height)
    if k_cap is None:
        k_cap = float((0.5 * np.sqrt(config.dt)) ** (-alpha)) if alpha > 0 else 1.0
    planes = strips.level_heights
    out = _impl().box_conditioned_each(
        rng.kernel_seed(),
        starts,
        float(strips.lateral_radius),
        float(top),
        config.dt,
        config.max_steps,
        planes,
        float(alpha),
        float(k_cap),
        int(max_tries_each),
        int(config.event_capacity),
    )
    abs_t, occ, ev_t, ev_lv, ev_x, ev_y, ev_n, ev_of, ok, tried = out
    ens = ConditionedEnsemble(
        start=starts,
        alpha=alpha,
        k_cap=k_cap,
        dt=config.dt,
        absorption_times=abs_t,
        occupations=occ,
        event_times=ev_t,
        event_levels=ev_lv,
        event_x=ev_x,
        event_y=ev_y,
        event_counts=ev_n,
        overflowed=ev_of,
        n_tried=int(tried),
        n_truncated=0,
        level_heights=planes,
    )
    return ens, ok


def excursion_decompose(
    levels, times, absorption_time, x=None, y=None, overflow=False
) -> list[ExcursionRecord]:
    """Split a distinct-level hit sequence into excursion records.

    Each hit opens an excursion that closes at the next hit; the side
    is read off the successor's level (shallower = up, deeper = down;
    non-adjacent successors, possible only through dropped events, are
    classified by sign as well).  The final excursion closes at the
    absorption time, or is censored when the buffer overflowed.
    """
    levels = np.asarray(levels)
    times = np.asarray(times, dtype=float)
    n = len(levels)
    if x is None:
        x = np.zeros(n)
    if y is None:
        y = np.zeros(n)
    visits: dict[int, int] = {}
    records = []
    for i in range(n):
        j = int(levels[i])
        visits[j] = visits.get(j, 0) + 1
        if i + 1 < n:
            side = "up" if int(levels[i + 1]) < j else "down"
            t_end = float(times[i + 1])
        elif overflow:
            side = "censored"
            t_end = float("nan")
        else:
            side = "absorbed"
            t_end = float(absorption_time)
        records.append(
            ExcursionRecord(
                level=j,
                visit_index=visits[j],
                t_start=float(times[i]),
                t_end=t_end,
                side=side,
                x_start=float(x[i]),
                y_start=float(y[i]),
            )
        )
    return records


def path_to_csv(fname, times, positions):
    """Write a trajectory as t,x,y,z rows with round-trip-exact floats."""
    positions = np.asarray(positions, dtype=float)
    times = np.asarray(times, dtype=float)
    with open(fname, "w") as fh:
        fh.write("t,x,y,z\n")
        for t, p in zip(times, positions):
            fh.write("%.17g,%.17g,%.17g,%.17g\n" % (t, p[0], p[1], p[2]))
