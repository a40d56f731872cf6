"""Run configuration, CSV output and error computation."""
from __future__ import annotations

import csv
import dataclasses
import os
import time
from dataclasses import dataclass, fields

import numpy as np

from .basis import parse_basis
from .discretization import Discretization, RunRecord
from .optimizer import OptimizerConfig
from .problems import PROBLEMS, get_problem
from .scheme_standard import StandardScheme
from .scheme_transformed import TransformedConfig, TransformedScheme

SIG = 17


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """All settings of one run. ``tf=None`` uses the problem's default."""

    scheme: str = "transformed"
    basis: str = "m10"
    problem: str = "planesource"
    nx: int = 240
    tf: float | None = None
    dt: float | None = None
    dt_cfl: bool = False
    tol: float = 1e-3
    relaxed: bool = False
    hessian_reg: float = 0.0
    hf_clip: bool = False
    masslumping: bool = False
    fixed_dt: float | None = None
    warmup: float = 0.0
    warmup_tol: float = 1e-8
    tau: float = 1e-9
    max_newton_iter: int = 200
    rho_vac: float = 1e-6
    no_cache: bool = False
    out_dir: str | None = None
    threads: int = 1
    seed: int = 0

    def validate(self):
        if self.scheme not in ("standard", "transformed"):
            raise ConfigError(f"scheme must be 'standard' or 'transformed', got {self.scheme!r}")
        key = self.problem.lower().replace("-", "").replace("_", "")
        if key not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; choose from {', '.join(sorted(PROBLEMS))}")
        try:
            basis = parse_basis(self.basis)
        except ValueError as exc:
            raise ConfigError(f"{exc}; use e.g. m10, hfm10 or pmm10") from None
        if self.nx < 1:
            raise ConfigError("nx must be a positive integer")
        if key == "planesource" and self.nx % 2:
            raise ConfigError("planesource needs an even nx so the initial pulse sits on two cells")
        if self.masslumping and basis.kind != "hat":
            raise ConfigError("--masslumping applies to hat function bases (hfmN) only")
        if self.scheme == "standard":
            if (self.dt is None) == (not self.dt_cfl):
                raise ConfigError("the standard scheme needs exactly one of --dt <value> or --dt-cfl")
            if self.dt is not None and not self.dt > 0:
                raise ConfigError("--dt must be positive")
            for name in ("relaxed", "hf_clip"):
                if getattr(self, name):
                    raise ConfigError(f"--{name.replace('_', '-')} only applies to the transformed scheme")
            if self.hessian_reg:
                raise ConfigError("--hessian-reg only applies to the transformed scheme")
            if self.fixed_dt is not None or self.warmup:
                raise ConfigError("--fixed-dt and --warmup only apply to the transformed scheme")
        else:
            if self.dt is not None or self.dt_cfl:
                raise ConfigError("the transformed scheme is adaptive; use --tol, or --fixed-dt for constant steps")
            if not self.tol > 0:
                raise ConfigError("--tol must be positive")
            if self.hf_clip and basis.kind != "hat":
                raise ConfigError("--hf-clip needs a hat function basis (hfmN)")
            if self.hessian_reg < 0:
                raise ConfigError("--hessian-reg must be >= 0")
            if self.warmup < 0:
                raise ConfigError("--warmup must be >= 0")
            if self.warmup and self.fixed_dt is None:
                raise ConfigError("--warmup is only meaningful together with --fixed-dt")
        if self.threads < 1:
            raise ConfigError("--threads must be >= 1")
        return self

    def as_dict(self):
        return dataclasses.asdict(self)


def _coerce(name: str, value: str):
    """Convert a text value to the type of RunConfig field ``name``."""
    ftypes = {f.name: f.type for f in fields(RunConfig)}
    if name not in ftypes:
        raise ConfigError(f"unknown config key {name!r}")
    t = str(ftypes[name])
    v = value.strip()
    if v.lower() in ("none", "") and "None" in t:
        return None
    if t.startswith("bool"):
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {value!r}")
    try:
        if t.startswith("int"):
            return int(v)
        if t.startswith("float"):
            return float(v)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {value!r}") from None
    return v


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment. Dashes in keys are allowed."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            k = k.strip().replace("-", "_")
            out[k] = _coerce(k, v)
    return out


def make_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """File values first, then overrides (ignoring overrides that are None)."""
    values = dict(file_values or {})
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    return RunConfig(**values).validate()


def build(config: RunConfig):
    """Instantiate the discretization and scheme for ``config``."""
    basis = parse_basis(config.basis, masslumping=config.masslumping)
    problem = get_problem(config.problem, config.tf)
    disc = Discretization(basis, problem, config.nx)
    opt = OptimizerConfig(tau=config.tau, max_iterations=config.max_newton_iter, rho_vac=config.rho_vac)
    if config.scheme == "standard":
        scheme = StandardScheme(disc, opt, use_cache=not config.no_cache, threads=config.threads)
    else:
        tc = TransformedConfig(tau_step=config.tol, hessian_reg=config.hessian_reg, hf_clip=config.hf_clip,
                               relaxed=config.relaxed, fixed_dt=config.fixed_dt)
        scheme = TransformedScheme(disc, tc, opt)
    return disc, scheme


def warmup_state(config: RunConfig):
    """Adaptive transformed solution at ``config.warmup`` used as the start of a fixed-dt run."""
    cfg = dataclasses.replace(config, fixed_dt=None, warmup=0.0, tol=config.warmup_tol, relaxed=False,
                              hf_clip=False, tf=None, out_dir=None)
    _, scheme = build(cfg)
    return scheme.run(config.warmup).alpha


def run(config: RunConfig) -> RunRecord:
    """Execute one run and write its CSV files when ``config.out_dir`` is set."""
    config.validate()
    disc, scheme = build(config)
    tf = disc.problem.tf
    if config.scheme == "standard":
        dt = config.dt if config.dt is not None else disc.cfl_dt(scheme.config.eps_gamma)
        rec = scheme.run(tf, dt)
    elif config.warmup:
        rec = scheme.run(tf, alpha0=warmup_state(config), t0=config.warmup)
    else:
        rec = scheme.run(tf)
    rec.config = config.as_dict()
    if config.out_dir:
        write_run(config.out_dir, rec, disc)
    return rec


def _fmt(v) -> str:
    return np.format_float_positional(float(v), precision=SIG, unique=False, fractional=False, trim="-") \
        if np.isfinite(v) else repr(float(v))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_solution(path, x, u):
    u = np.asarray(u)
    _write_rows(path, ["x"] + [f"u{k}" for k in range(u.shape[1])], np.column_stack([x, u]))


def write_run(out_dir, rec: RunRecord, disc: Discretization | None = None):
    os.makedirs(out_dir, exist_ok=True)
    write_solution(os.path.join(out_dir, "solution.csv"), rec.x, rec.u)
    if rec.alpha is not None:
        a = np.asarray(rec.alpha)
        _write_rows(os.path.join(out_dir, "multipliers.csv"), ["x"] + [f"alpha{k}" for k in range(a.shape[1])],
                    np.column_stack([rec.x, a]))
    _write_rows(os.path.join(out_dir, "timesteps.csv"), ["t", "dt", "wall_s", "err", "retries"],
                zip(rec.t, rec.dt, rec.wall, rec.err, rec.retries))
    if rec.scheme == "transformed":
        _write_rows(os.path.join(out_dir, "entropy.csv"), ["t", "H", "H_est", "gamma"],
                    zip(rec.t, rec.entropy, rec.entropy_est, rec.gamma))
    with open(os.path.join(out_dir, "meta.txt"), "w") as fh:
        for k, v in rec.config.items():
            fh.write(f"{k} = {v}\n")
        if disc is not None:
            fh.write(f"dx = {_fmt(disc.dx)}\n")
        fh.write(f"n_steps = {rec.n_steps}\n")
        fh.write(f"wall_total = {_fmt(rec.wall_total)}\n")
        for k, v in rec.stats.items():
            fh.write(f"stat.{k} = {v}\n")
        fh.write(f"written = {time.strftime('%Y-%m-%dT%H:%M:%S')}\n")


def read_solution(path):
    """Return (x, u) from a solution.csv."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]


def compare_arrays(ua, ub, dx: float):
    """(L1, Linf) with the component-summed / component-maxed convention."""
    ua, ub = np.asarray(ua, dtype=float), np.asarray(ub, dtype=float)
    if ua.shape != ub.shape:
        raise ValueError(f"shape mismatch: {ua.shape} vs {ub.shape}")
    d = np.abs(ua - ub)
    if d.size == 0:
        return 0.0, 0.0
    return float(dx * d.sum()), float(d.max())


def compare(solution_a, solution_b):
    """Errors between two solution.csv files (or (x, u) pairs) on the same grid."""
    xa, ua = read_solution(solution_a) if isinstance(solution_a, (str, os.PathLike)) else solution_a
    xb, ub = read_solution(solution_b) if isinstance(solution_b, (str, os.PathLike)) else solution_b
    xa, xb = np.asarray(xa, dtype=float), np.asarray(xb, dtype=float)
    if xa.shape != xb.shape or not np.allclose(xa, xb, rtol=0, atol=1e-12 * max(1.0, np.abs(xa).max(initial=0))):
        raise ValueError("solutions are on different grids")
    dx = float(xa[1] - xa[0]) if len(xa) > 1 else 1.0
    return compare_arrays(ua, ub, dx)
