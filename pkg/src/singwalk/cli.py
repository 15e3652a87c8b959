"""Batch front-end: ``singwalk solve`` and ``singwalk verify``.

Thin orchestration over the library: parse one TOML config, build the
domain/problem objects, run the requested experiment, and emit CSV plus
a JSON verdict.  Exit codes classify failures: 0 success, 2 invalid
configuration, 3 convergence failure, 4 hypothesis violation (the run
completed but the admissibility assumptions did not hold).

Outputs are deterministic for a fixed config and seed: CSV bytes are
identical across sequential reruns (JSON reports carry wall times and
are exempt).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis as an
from . import solver as sv
from . import stochastic as st
from .config import ConfigError, RunConfig, load_config
from .geometry import BallDomain, CapSet
from .problem import (
    BoundaryData,
    DomainBreachError,
    MinorantH0,
    Nonlinearity,
    SingularMajorant,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_HYPOTHESIS = 4

_SCHEMA = "v1"


class HypothesisViolation(RuntimeError):
    """Raised when a run completes but the admissibility hypothesis fails."""


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_csv(path: Path, name: str, columns: list[str], rows) -> None:
    """Versioned-schema CSV with deterministic bytes."""
    lines = [f"# singwalk {name} schema {_SCHEMA}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", newline="\n")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                    newline="\n")


# ---------------------------------------------------------------------------
# problem assembly


def build_problem(cfg: RunConfig):
    """Domain and problem objects shared by the subcommands."""
    if cfg.domain.d != 3:
        raise ConfigError("only d = 3 runs are supported")
    if cfg.domain.kind != "ball":
        raise ConfigError("solve/verify operate on the ball domain; "
                          "the box geometry is internal to path experiments")
    ball = BallDomain(radius=cfg.domain.R)
    cap = CapSet(ball, angle=cfg.problem.cap_angle)
    minorant = MinorantH0(cap, anchor=cfg.problem.x0)
    nl = Nonlinearity(alpha=cfg.problem.alpha)
    majorant = SingularMajorant(minorant, alpha=cfg.problem.alpha,
                                threshold=cfg.problem.a)
    return ball, cap, minorant, nl, majorant


def resolve_c1(cfg: RunConfig, majorant: SingularMajorant):
    """Supplied constant, or the quadrature estimate."""
    if cfg.problem.c1_hat is not None:
        return float(cfg.problem.c1_hat), "supplied", None
    est = an.estimate_C1(majorant)
    return est.value, "estimated", est


def _solve_pair(cfg: RunConfig, minorant: MinorantH0, nl: Nonlinearity,
                phi, ball: BallDomain):
    """Fine-grid fixed point plus the halved-grid run for the error bound."""
    n_fine = cfg.solver.nodes_per_axis(ball.radius)
    n_coarse = (n_fine - 1) // 2 + 1
    grids = {}
    for n in (n_coarse, n_fine):
        grid = sv.Grid(ball, n)
        op = sv.PicardOperator(grid, nl, minorant)
        u, rep = op.picard_solve(phi, tol=cfg.solver.tol,
                                 max_iter=cfg.solver.max_iter,
                                 damping=cfg.solver.damping)
        grids[n] = (grid, op, u, rep)
    _, _, u_c, _ = grids[n_coarse]
    _, op_f, u_f, rep_f = grids[n_fine]
    eps_disc = sv.discretization_error(u_c, u_f)
    return op_f, u_f, rep_f, eps_disc, grids[n_coarse]


# ---------------------------------------------------------------------------
# solve


def cmd_solve(cfg: RunConfig, out_dir: Path) -> int:
    t0 = time.perf_counter()
    ball, cap, minorant, nl, majorant = build_problem(cfg)
    c1, c1_source, _ = resolve_c1(cfg, majorant)
    phi = BoundaryData(minorant=minorant, c1_hat=c1,
                       margin=cfg.problem.margin, psi=cfg.problem.psi)
    if not phi.satisfies_floor:
        raise HypothesisViolation(
            f"boundary data sits below the admissible floor "
            f"(margin = {cfg.problem.margin}): the run would violate the "
            f"existence hypothesis phi >= (1 + C1) h0"
        )
    op, u, rep, eps_disc, _ = _solve_pair(cfg, minorant, nl, phi, ball)
    h0v = op.h0_values
    h_phi = op.h_phi(phi)

    rows = np.column_stack([
        op.grid.nodes, u.values, h0v, h_phi.values, u.values - h0v,
    ])
    write_csv(out_dir / "solution.csv", "solution",
              ["x1", "x2", "x3", "u", "h0", "h_phi", "u_minus_h0"], rows)
    report = {
        "schema": _SCHEMA,
        "config_hash": cfg.config_hash,
        "seed": cfg.mc.seed,
        "alpha": cfg.problem.alpha,
        "c1_hat": c1,
        "c1_source": c1_source,
        "margin": cfg.problem.margin,
        "grid_nodes": op.grid.n,
        "h_grid": op.grid.h,
        "eps_disc": eps_disc,
        "wall_time_s": time.perf_counter() - t0,
        **rep.summary(),
    }
    write_json(out_dir / "report.json", report)

    if not rep.converged:
        if rep.clamp_count_tail > 0:
            raise HypothesisViolation(
                f"iteration stalled with persistent minorant clamping "
                f"({rep.clamp_count_tail} activations over the final 10 "
                f"iterations): boundary data is undersized for this alpha"
            )
        print(f"solve: no convergence in {rep.iterations} iterations "
              f"(final residual {rep.residual_history[-1]:.3e})",
              file=sys.stderr)
        return EXIT_CONVERGENCE
    if rep.min_u_minus_h0 < -eps_disc:
        raise HypothesisViolation(
            f"converged iterate dips below the minorant by "
            f"{-rep.min_u_minus_h0:.3e} (> eps_disc {eps_disc:.3e})"
        )
    print(f"solve: converged in {rep.iterations} iterations, "
          f"min(u - h0) = {rep.min_u_minus_h0:.4f}, eps_disc = {eps_disc:.2e}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify experiments — each returns (pass, fitted, tolerance, columns, rows)


def _verify_c1(cfg, rng):
    _, _, minorant, _, majorant = build_problem(cfg)
    est = an.estimate_C1(majorant)
    ok = (np.isfinite(est.value)
          and est.refinement_delta <= cfg.analysis.ratio_tol
          and est.cap_distance_of_argmax <= 0.1)
    rows = [list(p) + [float(minorant.eval_many(p[None, :])[0]), r]
            for p, r in zip(est.points, est.ratios)]
    return ok, est.summary(), {"ratio_tol": cfg.analysis.ratio_tol,
                               "argmax_cap_distance_max": 0.1}, \
        ["x1", "x2", "x3", "h0", "ratio"], rows


def _verify_ui(cfg, rng):
    _, _, _, _, majorant = build_problem(cfg)
    rep = an.ui_diagnostic(majorant)
    ok = (rep.shells.monotone
          and rep.final_over_initial <= 0.05
          and abs(rep.interior_ball.slope - 2.0) <= cfg.analysis.slope_tol)
    rows = (
        [["shell", d, v] for d, v in zip(rep.shells.x, rep.shells.y)]
        + [["ball", r, v] for r, v in zip(rep.interior_ball.x,
                                          rep.interior_ball.y)]
    )
    return ok, rep.summary(), {"final_over_initial_max": 0.05,
                               "ball_slope_tol": cfg.analysis.slope_tol}, \
        ["family", "scale", "value"], rows


def _verify_bhp(cfg, rng):
    ball, _, minorant, nl, majorant = build_problem(cfg)
    c1, _, _ = resolve_c1(cfg, majorant)
    phi = BoundaryData(minorant=minorant, c1_hat=c1,
                       margin=cfg.problem.margin, psi=cfg.problem.psi)
    phi2 = lambda xi: 2.0 * phi(xi)
    n_fine = cfg.solver.nodes_per_axis(ball.radius)
    n_coarse = (n_fine - 1) // 2 + 1
    reports = {}
    per_grid = {}
    for n in (n_coarse, n_fine):
        grid = sv.Grid(ball, n)
        op = sv.PicardOperator(grid, nl, minorant)
        u1, r1 = op.picard_solve(phi, tol=cfg.solver.tol,
                                 max_iter=cfg.solver.max_iter,
                                 damping=cfg.solver.damping)
        u2, r2 = op.picard_solve(phi2, tol=cfg.solver.tol,
                                 max_iter=cfg.solver.max_iter,
                                 damping=cfg.solver.damping)
        if not (r1.converged and r2.converged):
            raise RuntimeError(f"fixed-point runs did not converge at n={n}")
        region = an.near_cap_mask(grid.nodes, minorant)
        per_grid[n] = (grid, op, u1, u2, region)
    # error bound from the two phi-solves, applied as ratio slack
    eps = sv.discretization_error(per_grid[n_coarse][2], per_grid[n_fine][2])
    for n in (n_coarse, n_fine):
        grid, op, u1, u2, region = per_grid[n]
        reports[n] = an.bhp_check(u1, u2, op.h_phi(phi), op.h_phi(phi2),
                                  op.h0_values, region, eps=eps)
    rep_f = reports[n_fine]
    c_change = abs(reports[n_fine].c_hat - reports[n_coarse].c_hat) \
        / reports[n_fine].c_hat
    ok = (rep_f.bounds_hold and reports[n_coarse].bounds_hold
          and c_change <= cfg.analysis.ratio_tol)
    grid, op, u1, u2, region = per_grid[n_fine]
    idx = np.nonzero(region)[0]
    rows = [
        list(grid.nodes[i]) + [u1.values[i], u2.values[i],
                               u1.values[i] / u2.values[i]]
        for i in idx
    ]
    fitted = {
        "c_hat": rep_f.c_hat,
        "c_hat_coarse": reports[n_coarse].c_hat,
        "c_hat_rel_change": c_change,
        "ratio_min": rep_f.ratio_min,
        "ratio_max": rep_f.ratio_max,
        "eps_disc": eps,
        "n_region_nodes": rep_f.n_nodes,
    }
    return ok, fitted, {"ratio_tol": cfg.analysis.ratio_tol}, \
        ["x1", "x2", "x3", "u1", "u2", "ratio"], rows


def _verify_eq27(cfg, rng):
    ball, _, _, _, majorant = build_problem(cfg)
    pairs = an.random_interior_pairs(ball, cfg.analysis.n_pairs,
                                     rng.child("pairs").generator())
    rep = an.lemma43_check(majorant, ball, pairs)
    unit = an.lemma43_check(None, ball, pairs[:5], refine_worst=False)
    unit_sw = an.lemma43_check(None, ball, pairs[:5, ::-1, :],
                               refine_worst=False)
    sym = float(np.max(np.abs(unit.integrals - unit_sw.integrals)
                       / np.abs(unit.integrals)))
    ok = (bool(np.all(np.isfinite(rep.ratios)))
          and rep.refinement_delta <= 0.05
          and sym <= cfg.analysis.sym_tol)
    rows = [
        list(p[0]) + list(p[1]) + [i, g, r]
        for p, i, g, r in zip(rep.pairs, rep.integrals, rep.green_direct,
                              rep.ratios)
    ]
    fitted = {**rep.summary(), "unit_density_symmetry": sym}
    return ok, fitted, {"refinement_tol": 0.05,
                        "symmetry_tol": cfg.analysis.sym_tol}, \
        ["ax1", "ax2", "ax3", "bx1", "bx2", "bx3",
         "integral", "green", "ratio"], rows


def _verify_excursions(cfg, rng):
    ex = an.excursion_stats(rng.child("excursions"),
                            alpha=cfg.problem.alpha,
                            levels=list(cfg.analysis.levels),
                            n_accept=cfg.analysis.n_accept)
    rho_ok = all(
        np.isfinite(ex.rho[j]) and 0.0 < ex.rho[j] < 1.0
        and ex.rho_r_squared[j] >= 0.9
        for j in ex.levels
    )
    surv_ok = all(
        bool(np.all(np.diff(ex.survival[j]) <= 1e-12)) for j in ex.levels
    )
    dur_ok = abs(ex.duration_fit.slope - 2.0) <= cfg.analysis.slope_tol
    ok = rho_ok and surv_ok and dur_ok
    rows = []
    for j in ex.levels:
        for i, p in enumerate(ex.survival[j], start=1):
            rows.append([j, i, p, ex.n_paths[j]])
    fitted = ex.summary()
    fitted["duration_slope_vs_level"] = -ex.duration_fit.slope
    return ok, fitted, {"rho_r_squared_min": 0.9,
                        "duration_slope_tol": cfg.analysis.slope_tol}, \
        ["level", "crossings", "survival", "n_paths"], rows


def _verify_occupation(cfg, rng):
    depths = 2.0 ** -np.asarray(cfg.analysis.depths, dtype=float)
    rep = an.occupation_scaling(rng.child("occupation"),
                                alpha=cfg.problem.alpha, depths=depths,
                                n_accept=cfg.analysis.n_accept)
    target = 2.0 - cfg.problem.alpha
    amp = float(np.max(rep.y / rep.x ** target))
    ok = (abs(rep.slope - target) <= cfg.analysis.slope_tol and rep.monotone)
    rows = [[x, y, e] for x, y, e in zip(rep.x, rep.y, rep.stderr)]
    fitted = {**rep.summary(), "target_slope": target, "amplitude_cap": amp}
    return ok, fitted, {"slope_tol": cfg.analysis.slope_tol}, \
        ["depth", "mean_occupation", "stderr"], rows


def _verify_oracle(cfg, rng):
    ball, _, minorant, nl, majorant = build_problem(cfg)
    c1, _, _ = resolve_c1(cfg, majorant)
    phi = BoundaryData(minorant=minorant, c1_hat=c1,
                       margin=cfg.problem.margin, psi=cfg.problem.psi)
    if not phi.satisfies_floor:
        raise HypothesisViolation("boundary data below the admissible floor")
    op, u, rep, eps_disc, _ = _solve_pair(cfg, minorant, nl, phi, ball)
    if not rep.converged:
        raise RuntimeError("fixed-point run did not converge")
    chk = an.oracle_check(op, u, phi, rng.child("oracle"),
                          n_probes=cfg.analysis.n_probes,
                          n_paths=cfg.mc.n_paths, eps_disc=eps_disc,
                          config=st.PathConfig(dt=cfg.mc.dt,
                                               eps_shell=cfg.mc.eps_shell))
    rows = [
        list(p) + [g, m, s]
        for p, g, m, s in zip(chk.points, chk.grid_values, chk.mc_values,
                              chk.mc_stderr)
    ]
    return chk.all_within, chk.summary(), \
        {"bound": "3 stderr + eps_disc"}, \
        ["x1", "x2", "x3", "u_grid", "u_mc", "stderr"], rows


_EXPERIMENTS = {
    "c1": _verify_c1,
    "ui": _verify_ui,
    "bhp": _verify_bhp,
    "eq27": _verify_eq27,
    "excursions": _verify_excursions,
    "occupation": _verify_occupation,
    "oracle": _verify_oracle,
}


def cmd_verify(cfg: RunConfig, which: str, out_dir: Path) -> int:
    rng = st.RngStream(cfg.mc.seed).child(which)
    ok, fitted, tolerance, columns, rows = _EXPERIMENTS[which](cfg, rng)
    write_csv(out_dir / f"{which}.csv", which, columns, rows)
    verdict = {
        "experiment": which,
        "pass": bool(ok),
        "fitted": fitted,
        "tolerance": tolerance,
        "seed": cfg.mc.seed,
        "config_hash": cfg.config_hash,
    }
    write_json(out_dir / "verdict.json", verdict)
    print(f"verify {which}: {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CONVERGENCE


# ---------------------------------------------------------------------------
# entry point


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="singwalk",
        description="Singular Dirichlet fixed points and their "
                    "stochastic verification experiments.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("solve", "run the grid fixed point, write "
                                  "solution.csv and report.json"),
                        ("verify", "run one verification experiment")):
        sp = sub.add_parser(name, help=help_)
        if name == "verify":
            sp.add_argument("which", choices=sorted(_EXPERIMENTS))
        sp.add_argument("--config", type=str, default=None,
                        help="TOML run configuration (defaults apply if omitted)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override mc.seed")
        sp.add_argument("--out", type=str, default=".",
                        help="output directory (created if missing)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg = cfg.with_seed(args.seed)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "solve":
            return cmd_solve(cfg, out_dir)
        return cmd_verify(cfg, args.which, out_dir)
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisViolation as e:
        print(f"hypothesis violation: {e}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (DomainBreachError, RuntimeError) as e:
        print(f"run failed: {e}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
