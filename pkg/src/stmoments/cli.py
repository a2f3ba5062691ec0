"""Command line entry point: stmoments <subcommand> [--config FILE] [--set key=value ...]."""
from __future__ import annotations

import argparse
import sys
from dataclasses import asdict, dataclass, field, fields
from typing import List

import numpy as np

from . import closed_form as cf
from .csvio import write_csv
from .experiments import ode_convergence, rates, spde_convergence
from .mesh import random_mesh, refine_to_ratio, uniform_mesh
from .montecarlo import McConfig, diagonal_summary, simulate_scalar
from .solver import CgNotConverged, DiscreteIllPosed, diagonal_error, make_problem, postprocess, solve_cg, solve_dense, solve_recursion
from .spde import NoiseModel, SpdeProblem, SpectralSpace, solve_spde
from .stability import SCHEMES, infsup_scan, scheme_constants, scheme_spec
from .trace import PointMass, TraceDelta


class ConfigError(ValueError):
    def __init__(self, key, msg):
        super().__init__(f"invalid config key '{key}': {msg}")
        self.key = key


# ---------------------------------------------------------------------------
# configs


@dataclass
class ExactConfig:
    model: str = "multiplicative"
    lam: float = 3.0
    rho2: float = 1.5
    mu: float = 0.0
    T: float = 2.0
    EX0: float = 1.0
    EX0sq: float = 1.0
    n_points: int = 65


@dataclass
class OdeConfig:
    scheme: str = "CN"
    lam: float = 3.0
    rho2: float = 1.5
    T: float = 2.0
    N: int = 64
    rhs: str = "point"
    route: str = "cg"
    tol: float = 1e-10
    postprocess: bool = False


@dataclass
class SpdeConfig:
    scheme: str = "CN"
    P: int = 5
    kappa: int = 8
    T: float = 1.0
    N: int = 32
    tol: float = 1e-10


@dataclass
class InfsupConfig:
    schemes: List[str] = field(default_factory=lambda: ["CN", "iE"])
    lams: List[float] = field(default_factory=lambda: [10.0**e for e in range(-2, 7)])
    T: float = 1.0
    n_inner: int = 127
    seed: int = 0
    sigma: float = 3.0


@dataclass
class StabilityConfig:
    schemes: List[str] = field(default_factory=lambda: ["CN", "iE", "iE/Q", "iE/box"])
    lam: float = 3.0
    rho2: float = 1.5
    T: float = 2.0
    N: List[int] = field(default_factory=lambda: [16, 64, 256, 1024])


@dataclass
class ConvergenceConfig:
    problem: str = "ode"
    schemes: List[str] = field(default_factory=lambda: ["CN", "CN(2)", "iE", "iE(2)", "iE/Q", "iE/box"])
    lam: float = 3.0
    rho2: float = 1.5
    T: float = 2.0
    j_min: int = 4
    j_max: int = 9
    P: int = 5
    kappa: int = 8


@dataclass
class McCliConfig:
    model: str = "multiplicative"
    lam: float = 3.0
    rho2: float = 1.5
    mu: float = 0.0
    T: float = 1.0
    EX0: float = 1.0
    R: int = 1000
    k_mc: float = 2.0**-8
    record_every: int = 8


CONFIGS = {
    "exact": ExactConfig, "solve-ode": OdeConfig, "solve-spde": SpdeConfig,
    "infsup": InfsupConfig, "stability": StabilityConfig,
    "convergence": ConvergenceConfig, "mc": McCliConfig,
}


def parse_kv(text: str) -> dict:
    out = {}
    for i, ln in enumerate(text.splitlines(), 1):
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise ConfigError(ln, f"line {i} is not key=value")
        k, v = ln.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _convert(key, raw: str, default):
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if not items:
                raise ConfigError(key, "empty list")
            elem = type(default[0]) if default else str
            return [elem(x) if elem is not float else float(x) for x in items]
        return raw
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(key, f"cannot parse {raw!r} ({e})") from None


def build_config(cmd: str, kv: dict):
    cls = CONFIGS[cmd]
    cfg = cls()
    names = {f.name for f in fields(cls)}
    for k, v in kv.items():
        if k not in names:
            raise ConfigError(k, f"unknown key for '{cmd}'")
        setattr(cfg, k, _convert(k, v, getattr(cfg, k)))
    _validate(cmd, cfg)
    return cfg


def _validate(cmd, cfg):
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, list) and not v:
            raise ConfigError(f.name, "empty list")
    for key in ("lam", "T", "k_mc", "tol", "sigma"):
        if hasattr(cfg, key) and not getattr(cfg, key) > 0:
            raise ConfigError(key, "must be positive")
    if hasattr(cfg, "lams") and any(x <= 0 for x in cfg.lams):
        raise ConfigError("lams", "entries must be positive")
    for key in ("N", "P", "kappa", "R", "n_points", "n_inner"):
        if hasattr(cfg, key):
            v = getattr(cfg, key)
            vals = v if isinstance(v, list) else [v]
            if any(x < 1 for x in vals):
                raise ConfigError(key, "must be >= 1")
    for key in ("scheme",):
        if hasattr(cfg, key) and cfg.scheme not in SCHEMES:
            raise ConfigError(key, f"unknown scheme {cfg.scheme!r}")
    if hasattr(cfg, "schemes"):
        bad = [s for s in cfg.schemes if s not in SCHEMES]
        if bad:
            raise ConfigError("schemes", f"unknown schemes {bad}")
    if hasattr(cfg, "rho2") and cfg.rho2 < 0:
        raise ConfigError("rho2", "must be >= 0")
    if getattr(cfg, "model", "multiplicative") not in ("additive", "multiplicative"):
        raise ConfigError("model", "must be additive or multiplicative")
    if cmd == "solve-ode":
        if cfg.rhs not in ("point", "delta"):
            raise ConfigError("rhs", "must be point or delta")
        if cfg.route not in ("cg", "dense", "recursion"):
            raise ConfigError("route", "must be cg, dense or recursion")
    if cmd == "convergence":
        if cfg.problem not in ("ode", "spde"):
            raise ConfigError("problem", "must be ode or spde")
        if cfg.j_max - cfg.j_min < 1:
            raise ConfigError("j_max", "need at least two levels")


# ---------------------------------------------------------------------------
# commands


def cmd_exact(cfg: ExactConfig, args):
    p = cf.ScalarParams(cfg.lam, cfg.mu, np.sqrt(cfg.rho2), cfg.T, cfg.EX0, cfg.EX0sq)
    t = np.linspace(0, cfg.T, cfg.n_points)
    m1 = cf.first_moment(p, t)
    m2 = cf.second_moment(cfg.model, p, t, t)
    dn = cf.delta_dual_norms(cfg.lam, cfg.T)
    prov = dict(command="exact", **asdict(cfg),
                expected_L2_norm_sq=cf.expected_L2_norm_sq(cfg.model, p),
                delta_minus2=dn.delta_minus2, delta_minus_eps=dn.delta_minus_eps,
                point_minus_eps=dn.point_minus_eps,
                C_continuous=cf.continuous_stability_constant(cfg.lam, cfg.rho2, cfg.T))
    return write_csv(args.out, ["t", "first_moment", "second_moment_diag"], zip(t, m1, m2), prov)


def cmd_solve_ode(cfg: OdeConfig, args):
    fam, p, tr = scheme_spec(cfg.scheme)
    ell = PointMass(1.0) if cfg.rhs == "point" else TraceDelta(1.0)
    prob = make_problem(uniform_mesh(cfg.T, cfg.N), cfg.lam, cfg.rho2, ell, fam, p, tr)
    solver = {"cg": lambda pr: solve_cg(pr, tol=cfg.tol), "dense": solve_dense, "recursion": solve_recursion}
    U, rep = solver[cfg.route](prob)
    if cfg.postprocess:
        U = postprocess(U)
    g = cf.point_mass_diagonal(cfg.lam) if cfg.rhs == "point" else cf.trace_delta_diagonal(cfg.lam)
    err = diagonal_error(U, cf.diagonal_oracle(cfg.lam, cfg.rho2, g))
    prov = dict(command="solve-ode", **asdict(cfg), family=fam.value, degree=p, trace=tr.value,
                iterations=rep.iterations, final_residual=rep.final_residual, diagonal_error=err)
    n = U.values.shape[0]
    rows = ((m, k, U.values[m, k]) for m in range(n) for k in range(n))
    return write_csv(args.out, ["m", "n", "U_mn"], rows, prov)


def cmd_solve_spde(cfg: SpdeConfig, args):
    prob = SpdeProblem(SpectralSpace(cfg.P), NoiseModel(kappa=cfg.kappa), uniform_mesh(cfg.T, cfg.N), cfg.scheme)
    U, rep = solve_spde(prob, tol=cfg.tol)
    mesh = prob.mesh
    t = 0.5 * (mesh.nodes[:-1] + mesh.nodes[1:])
    rows = []
    for p in range(cfg.P):
        for tt, v in zip(t, U.diagonal(p, t)):
            rows.append((p + 1, tt, v))
    prov = dict(command="solve-spde", **asdict(cfg), iterations=rep.iterations,
                final_residual=rep.final_residual, pi_norm=U.pi_norm())
    return write_csv(args.out, ["p", "t", "U_pp_diag"], rows, prov)


def cmd_infsup(cfg: InfsupConfig, args):
    seed = args.seed if args.seed is not None else cfg.seed
    mesh = refine_to_ratio(random_mesh(cfg.T, cfg.n_inner, seed), cfg.sigma)
    rows = [(r.scheme, r.lam, r.gamma_k, r.gamma_sigma) for r in infsup_scan(cfg.schemes, cfg.lams, mesh)]
    prov = dict(command="infsup", **asdict(cfg), seed_used=seed, nodes=mesh.N + 1,
                sigma_mesh=mesh.backward_ratio())
    return write_csv(args.out, ["scheme", "lam", "gamma_k", "gamma_sigma"], rows, prov)


def cmd_stability(cfg: StabilityConfig, args):
    rows = []
    for sc in cfg.schemes:
        for N in cfg.N:
            r = scheme_constants(sc, cfg.lam, cfg.rho2, cfg.T / N, N)
            rows.append((sc, r.z, r.q, r.D, r.alpha, r.beta, r.theta, r.gamma_k, r.C_k, r.C_continuous))
    prov = dict(command="stability", **asdict(cfg))
    cols = ["scheme", "z", "q", "D", "alpha", "beta", "theta", "gamma_k", "C_k", "C"]
    return write_csv(args.out, cols, rows, prov)


def cmd_convergence(cfg: ConvergenceConfig, args):
    levels = range(cfg.j_min, cfg.j_max + 1)
    if cfg.problem == "ode":
        rows = ode_convergence(cfg.schemes, cfg.lam, cfg.rho2, cfg.T, levels, route="cg")
        rr, rp = rates(rows, "error_raw"), rates(rows, "error_post")
        out = [(r.scheme, r.k, r.error_raw, r.error_post, r.iterations, rr[r.scheme], rp[r.scheme])
               for r in rows]
        cols = ["scheme", "k", "error_raw", "error_post", "cg_iterations", "rate_raw", "rate_post"]
    else:
        res = spde_convergence(levels, cfg.P, cfg.kappa, cfg.T)
        sp, s = res.slopes(4)
        out = []
        for i, k in enumerate(res.ks):
            out.append(("E", k, res.E[i], s, res.iterations[i]))
            for p in range(cfg.P):
                out.append((f"E_{p + 1}", k, res.Ep[i, p], sp[p], res.iterations[i]))
        cols = ["measure", "k", "error", "rate", "cg_iterations"]
    prov = dict(command="convergence", **asdict(cfg), rate_rule="least-squares slope over finest 4 points")
    return write_csv(args.out, cols, out, prov)


def cmd_mc(cfg: McCliConfig, args):
    seed = args.seed if args.seed is not None else 0
    p = cf.ScalarParams(cfg.lam, cfg.mu, np.sqrt(cfg.rho2), cfg.T, cfg.EX0, cfg.EX0**2)
    mc = McConfig(R=cfg.R, k_mc=cfg.k_mc, seed=seed, threads=args.threads or 1)
    ens = simulate_scalar(p, cfg.model, mc, record_every=cfg.record_every)
    prov = dict(command="mc", **asdict(cfg), seed=seed)
    return write_csv(args.out, ["t", "mean", "second_moment_diag", "stderr"], zip(*diagonal_summary(ens)), prov)


COMMANDS = {
    "exact": cmd_exact, "solve-ode": cmd_solve_ode, "solve-spde": cmd_solve_spde,
    "infsup": cmd_infsup, "stability": cmd_stability, "convergence": cmd_convergence, "mc": cmd_mc,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="stmoments", description="Space-time second-moment solvers")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key=value file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
        sp.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        kv = {}
        if args.config:
            with open(args.config) as f:
                kv.update(parse_kv(f.read()))
        for item in args.set:
            kv.update(parse_kv(item))
        cfg = build_config(args.command, kv)
        COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (DiscreteIllPosed, CgNotConverged) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
