"""Convergence studies shared by the CLI, scripts and tests."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .closed_form import diagonal_oracle, point_mass_diagonal
from .mesh import uniform_mesh
from .solver import diagonal_error, make_problem, postprocess, solve_cg, solve_recursion
from .spde import NoiseModel, SpdeProblem, SpectralSpace, solve_spde, solve_spde_diagonal, spde_errors
from .stability import scheme_spec
from .trace import PointMass


def loglog_slope(k, err, last: int = 4) -> float:
    """Least-squares slope of log(err) against log(k) over the `last` finest points."""
    k = np.asarray(k, dtype=float)
    err = np.asarray(err, dtype=float)
    order = np.argsort(k)
    k, err = k[order][:last], err[order][:last]
    return float(np.polyfit(np.log(k), np.log(err), 1)[0])


@dataclass
class ConvergenceRow:
    scheme: str
    k: float
    error_raw: float
    error_post: float
    iterations: int


def ode_convergence(schemes: Sequence[str], lam: float = 3.0, rho2: float = 1.5, T: float = 2.0,
                    levels: Sequence[int] = range(4, 10), route: str = "auto", tol: float = 1e-10):
    """Diagonal L1 errors for ell(v) = v(0) against the exact second moment e^{(rho^2-2lam)t}."""
    g = point_mass_diagonal(lam)
    exact = diagonal_oracle(lam, rho2, g)
    rows = []
    for sc in schemes:
        fam, p, tr = scheme_spec(sc)
        for j in levels:
            prob = make_problem(uniform_mesh(T, 2**j), lam, rho2, PointMass(1.0), fam, p, tr)
            use_rec = route == "recursion" or (route == "auto" and p == 1)
            U, rep = solve_recursion(prob) if use_rec else solve_cg(prob, tol=tol)
            rows.append(ConvergenceRow(sc, T / 2**j, diagonal_error(U, exact),
                                       diagonal_error(postprocess(U), exact),
                                       rep.iterations if rep.route == "cg" else 0))
    return rows


def rates(rows, attr: str):
    out = {}
    for sc in dict.fromkeys(r.scheme for r in rows):
        rs = [r for r in rows if r.scheme == sc]
        out[sc] = loglog_slope([r.k for r in rs], [getattr(r, attr) for r in rs])
    return out


@dataclass
class SpdeConvergence:
    ks: np.ndarray
    Ep: np.ndarray          # (levels, P)
    E: np.ndarray
    iterations: list = field(default_factory=list)

    def slopes(self, last: int = None):
        last = last or len(self.ks)
        sp = [loglog_slope(self.ks, self.Ep[:, p], last) for p in range(self.Ep.shape[1])]
        return np.array(sp), loglog_slope(self.ks, self.E, last)


def spde_convergence(levels: Sequence[int] = range(3, 8), P: int = 5, kappa: int = 8,
                     T: float = 1.0, scheme: str = "CN", ref_factor: int = 8, tol: float = 1e-10):
    """E_p and E against a deterministic fine solve with k_ref = k_min / ref_factor."""
    space = SpectralSpace(P)
    noise = NoiseModel(kappa=kappa)
    n_ref = 2 ** max(levels) * ref_factor
    ref_mesh = uniform_mesh(T, n_ref)
    ref = solve_spde_diagonal(SpdeProblem(space, noise, ref_mesh, scheme))
    ks, Eps, Es, its = [], [], [], []
    for j in levels:
        mesh = uniform_mesh(T, 2**j)
        U, rep = solve_spde(SpdeProblem(space, noise, mesh, scheme), tol=tol)
        Ep, E = spde_errors(ref, ref_mesh, U.time_diagonal_blocks(), mesh, space.eigenvalues)
        ks.append(T / 2**j)
        Eps.append(Ep)
        Es.append(E)
        its.append(rep.iterations)
    return SpdeConvergence(np.array(ks), np.array(Eps), np.array(Es), its)
