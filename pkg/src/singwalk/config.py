"""Run configuration: strict TOML loading with full validation.

Every experiment is driven by one human-editable file with five blocks
(domain, problem, solver, mc, analysis).  Loading is strict: unknown
keys anywhere are an error, as are out-of-range values — a config that
loads is a config that runs.
"""

from __future__ import annotations

import hashlib
import math
import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "DomainBlock",
    "ProblemBlock",
    "SolverBlock",
    "McBlock",
    "AnalysisBlock",
    "RunConfig",
    "load_config",
]


class ConfigError(ValueError):
    """Invalid configuration file or values (CLI exit code 2)."""


def _check_keys(block: str, data: dict, allowed: set):
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(
            f"unknown key(s) in [{block}]: {', '.join(sorted(unknown))} "
            f"(allowed: {', '.join(sorted(allowed))})"
        )


def _num(block, key, value, lo=None, hi=None, *, open_lo=False, open_hi=False,
         integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"[{block}] {key} must be a number, got {value!r}")
    v = float(value)
    if not math.isfinite(v):
        raise ConfigError(f"[{block}] {key} must be finite")
    if integer and v != int(v):
        raise ConfigError(f"[{block}] {key} must be an integer, got {value}")
    if lo is not None and (v <= lo if open_lo else v < lo):
        raise ConfigError(f"[{block}] {key} = {value} is below the allowed range")
    if hi is not None and (v >= hi if open_hi else v > hi):
        raise ConfigError(f"[{block}] {key} = {value} is above the allowed range")
    return int(v) if integer else v


@dataclass(frozen=True)
class DomainBlock:
    kind: str = "ball"
    R: float = 1.0
    w: float = 2.0
    H: float = 1.0
    d: int = 3

    @classmethod
    def from_dict(cls, data: dict) -> "DomainBlock":
        _check_keys("domain", data, {"kind", "R", "w", "H", "d"})
        kind = data.get("kind", "ball")
        if kind not in ("ball", "box"):
            raise ConfigError(f"[domain] kind must be 'ball' or 'box', got {kind!r}")
        return cls(
            kind=kind,
            R=_num("domain", "R", data.get("R", 1.0), lo=0, open_lo=True),
            w=_num("domain", "w", data.get("w", 2.0), lo=0, open_lo=True),
            H=_num("domain", "H", data.get("H", 1.0), lo=0, open_lo=True),
            d=_num("domain", "d", data.get("d", 3), lo=2, hi=3, integer=True),
        )


@dataclass(frozen=True)
class ProblemBlock:
    alpha: float = 0.5
    a: float = 1.0
    cap_angle: float = math.pi / 3.0
    x0: tuple = (0.0, 0.0, 0.55)
    margin: float = 0.05
    psi: str = "constant"
    c1_hat: float | None = None  # supplied constant; None -> estimate at run time

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemBlock":
        _check_keys("problem", data,
                    {"alpha", "a", "cap_angle", "x0", "margin", "psi", "c1_hat"})
        x0 = data.get("x0", [0.0, 0.0, 0.55])
        if (not isinstance(x0, (list, tuple)) or len(x0) != 3
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                           for v in x0)):
            raise ConfigError("[problem] x0 must be a list of 3 numbers")
        psi = data.get("psi", "constant")
        if psi not in ("constant", "cap-distance"):
            raise ConfigError(
                f"[problem] psi must be 'constant' or 'cap-distance', got {psi!r}")
        c1 = data.get("c1_hat")
        if c1 is not None:
            c1 = _num("problem", "c1_hat", c1, lo=0)
        # margin may be negative: that is the deliberate hypothesis-violating
        # configuration and is caught at solve time (exit code 4), not here.
        return cls(
            alpha=_num("problem", "alpha", data.get("alpha", 0.5),
                       lo=0, hi=1, open_lo=True, open_hi=True),
            a=_num("problem", "a", data.get("a", 1.0), lo=0, open_lo=True),
            cap_angle=_num("problem", "cap_angle", data.get("cap_angle", math.pi / 3),
                           lo=0, hi=math.pi, open_lo=True, open_hi=True),
            x0=tuple(float(v) for v in x0),
            margin=_num("problem", "margin", data.get("margin", 0.05)),
            psi=psi,
            c1_hat=c1,
        )


@dataclass(frozen=True)
class SolverBlock:
    h_grid: float = 1.0 / 32.0
    tol: float = 1e-5
    max_iter: int = 200
    damping: float = 1.0

    @classmethod
    def from_dict(cls, data: dict) -> "SolverBlock":
        _check_keys("solver", data, {"h_grid", "tol", "max_iter", "damping"})
        return cls(
            h_grid=_num("solver", "h_grid", data.get("h_grid", 1.0 / 32.0),
                        lo=0, hi=0.5, open_lo=True),
            tol=_num("solver", "tol", data.get("tol", 1e-5), lo=0, open_lo=True),
            max_iter=_num("solver", "max_iter", data.get("max_iter", 200),
                          lo=1, integer=True),
            damping=_num("solver", "damping", data.get("damping", 1.0),
                         lo=0, hi=1.0, open_lo=True),
        )

    def nodes_per_axis(self, radius: float) -> int:
        """Lattice size for a ball of the given radius (spacing h_grid * R)."""
        n_cells = 2.0 / self.h_grid
        if abs(n_cells - round(n_cells)) > 1e-9:
            raise ConfigError(
                f"[solver] h_grid = {self.h_grid} must divide the domain "
                f"diameter evenly (2/h_grid integral)")
        return int(round(n_cells)) + 1


@dataclass(frozen=True)
class McBlock:
    n_paths: int = 100_000
    dt: float = 1e-4
    eps_shell: float = 1e-4
    seed: int = 42

    @classmethod
    def from_dict(cls, data: dict) -> "McBlock":
        _check_keys("mc", data, {"n_paths", "dt", "eps_shell", "seed"})
        return cls(
            n_paths=_num("mc", "n_paths", data.get("n_paths", 100_000),
                         lo=1, integer=True),
            dt=_num("mc", "dt", data.get("dt", 1e-4), lo=0, open_lo=True),
            eps_shell=_num("mc", "eps_shell", data.get("eps_shell", 1e-4),
                           lo=0, open_lo=True),
            seed=_num("mc", "seed", data.get("seed", 42), lo=0, integer=True),
        )


@dataclass(frozen=True)
class AnalysisBlock:
    levels: tuple = (2, 3, 4, 5, 6)        # dyadic levels for excursion stats
    depths: tuple = (2, 3, 4, 5, 6)        # depth exponents k (eps = 2^-k)
    n_probes: int = 10                      # oracle probe points
    n_pairs: int = 20                       # two-pole check pairs
    n_accept: int = 2000                    # accepted paths per ensemble
    slope_tol: float = 0.4                  # log2-slope tolerance
    ratio_tol: float = 0.10                 # refinement / grid-halving stability
    sym_tol: float = 1e-3                   # two-pole symmetry tolerance

    @classmethod
    def from_dict(cls, data: dict) -> "AnalysisBlock":
        _check_keys("analysis", data,
                    {"levels", "depths", "n_probes", "n_pairs", "n_accept",
                     "slope_tol", "ratio_tol", "sym_tol"})
        def int_list(key, default):
            raw = data.get(key, default)
            if (not isinstance(raw, (list, tuple)) or not raw
                    or not all(isinstance(v, int) and not isinstance(v, bool)
                               and v > 0 for v in raw)):
                raise ConfigError(f"[analysis] {key} must be a nonempty list of "
                                  f"positive integers")
            return tuple(raw)
        return cls(
            levels=int_list("levels", [2, 3, 4, 5, 6]),
            depths=int_list("depths", [2, 3, 4, 5, 6]),
            n_probes=_num("analysis", "n_probes", data.get("n_probes", 10),
                          lo=1, integer=True),
            n_pairs=_num("analysis", "n_pairs", data.get("n_pairs", 20),
                         lo=1, integer=True),
            n_accept=_num("analysis", "n_accept", data.get("n_accept", 2000),
                          lo=1, integer=True),
            slope_tol=_num("analysis", "slope_tol", data.get("slope_tol", 0.4),
                           lo=0, open_lo=True),
            ratio_tol=_num("analysis", "ratio_tol", data.get("ratio_tol", 0.10),
                           lo=0, open_lo=True),
            sym_tol=_num("analysis", "sym_tol", data.get("sym_tol", 1e-3),
                         lo=0, open_lo=True),
        )


@dataclass(frozen=True)
class RunConfig:
    domain: DomainBlock = field(default_factory=DomainBlock)
    problem: ProblemBlock = field(default_factory=ProblemBlock)
    solver: SolverBlock = field(default_factory=SolverBlock)
    mc: McBlock = field(default_factory=McBlock)
    analysis: AnalysisBlock = field(default_factory=AnalysisBlock)
    config_hash: str = "default"

    @classmethod
    def from_dict(cls, data: dict, config_hash: str = "inline") -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("top-level configuration must be a table")
        _check_keys("top level", data,
                    {"domain", "problem", "solver", "mc", "analysis"})
        for name in data:
            if not isinstance(data[name], dict):
                raise ConfigError(f"[{name}] must be a table")
        return cls(
            domain=DomainBlock.from_dict(data.get("domain", {})),
            problem=ProblemBlock.from_dict(data.get("problem", {})),
            solver=SolverBlock.from_dict(data.get("solver", {})),
            mc=McBlock.from_dict(data.get("mc", {})),
            analysis=AnalysisBlock.from_dict(data.get("analysis", {})),
            config_hash=config_hash,
        )

    def with_seed(self, seed: int) -> "RunConfig":
        mc = McBlock(n_paths=self.mc.n_paths, dt=self.mc.dt,
                     eps_shell=self.mc.eps_shell, seed=int(seed))
        return RunConfig(self.domain, self.problem, self.solver, mc,
                         self.analysis, self.config_hash)


def load_config(path: str) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"malformed TOML in {path}: {e}") from e
    digest = hashlib.sha256(raw).hexdigest()[:16]
    return RunConfig.from_dict(data, config_hash=digest)
