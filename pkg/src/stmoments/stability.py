"""Scalar discretization constants (D, alpha, beta, theta, gamma_k, C_k) and inf-sup scans."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from .basis import NodeFamily, PGBasis, gamma_sigma, infsup_gamma
from .closed_form import continuous_stability_constant
from .mesh import TemporalMesh, uniform_mesh
from .trace import TraceOperator, TraceScheme

# name -> (family, degree, trace product)
SCHEMES = {
    "CN": (NodeFamily.GL, 1, TraceScheme.EXACT),
    "CN(2)": (NodeFamily.GL, 2, TraceScheme.EXACT),
    "iE": (NodeFamily.GR, 1, TraceScheme.EXACT),
    "iE(2)": (NodeFamily.GR, 2, TraceScheme.EXACT),
    "iE/Q": (NodeFamily.GR, 1, TraceScheme.Q),
    "iE/box": (NodeFamily.GR, 1, TraceScheme.BOX),
}
P1_SCHEMES = ("CN", "iE", "iE/Q", "iE/box")


def scheme_spec(name: str):
    try:
        return SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}; choose from {sorted(SCHEMES)}") from None


@dataclass
class StabilityReport:
    scheme: str
    z: float
    q: float
    D: float
    alpha: float
    beta: float
    theta: float
    gamma_k: float = float("nan")
    C_k: float = float("nan")
    C_continuous: float = float("nan")
    trivial_range_ok: Optional[bool] = None
    growth: float = float("nan")   # beta (1 + ...) without the gamma_k^-2 factor

    def as_dict(self):
        return asdict(self)


def _local_constants(scheme: str, lam: float, rho2: float, k: float):
    """Assembled (D, alpha, beta, theta, Delta) on an interior element of a uniform mesh."""
    fam, p, tr = scheme_spec(scheme)
    if p != 1:
        raise ValueError("scalar constants are defined for p = 1 schemes")
    basis = PGBasis(uniform_mesh(3 * k, 3), lam, fam, 1, "E")
    Dn = TraceOperator(basis, tr).element_matrices()[1]
    b = basis.b_mat.toarray()
    d = b[1, 1]          # b(e_n, v_{n-1})
    s = b[1, 0]          # b(e_{n-1}, v_{n-1})
    D = lam * k * (d**2 - rho2 * Dn[0, 0])
    beta = 1.0 / (1.0 - rho2 * Dn[0, 0] / d**2)
    theta = s / d
    alpha = beta * (theta**2 + rho2 / d**2 * (Dn[1, 1] - 2 * theta * Dn[0, 1]))
    return D, alpha, beta, theta, Dn


def table_constants(scheme: str, z: float, q: float):
    """Closed forms in z = lam k and q = rho^2/(2 lam) for E-normalized bases.

    Returns (lam Delta^n, D, alpha - 1, beta, theta); beta and alpha are inf/nan at D = 0.
    """
    z, q = np.float64(z), np.float64(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        return _table(scheme, z, q)


def _table(scheme, z, q):
    if scheme == "CN":
        lD = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6
        D = (1 + z / 2) ** 2 - 2.0 / 3.0 * q * z
        beta = (1 + z / 2) ** 2 / D
        theta = (z / 2 - 1) / (z / 2 + 1)
        am1 = (-2 * z + 2.0 / 3.0 * q * z * (2 - theta)) / D
        return lD, D, am1, beta, theta
    theta = -1.0 / (1 + z)
    if scheme == "iE":
        lD = np.array([[38.0, 7.0], [7.0, 8.0]]) / 60
        D = 0.25 * (1 + z) ** 2 - 19.0 / 15.0 * q * z
        am1 = (4.0 / 15.0 * (23 - 7 * theta) * q * z - z * (2 + z)) / (4 * D)
    elif scheme == "iE/Q":
        lD = np.array([[2.0, 1.0], [1.0, 2.0]]) / 24
        D = 0.25 * (1 + z) ** 2 - q * z / 6
        am1 = (2.0 / 3.0 * (2 - theta) * q * z - z * (2 + z)) / (4 * D)
    elif scheme == "iE/box":
        lD = np.array([[1.0, 0.0], [0.0, 0.0]]) / 4
        D = 0.25 * (1 + z) ** 2 - 0.5 * q * z
        am1 = (1 - 4 * D) / (4 * D)
    else:
        raise ValueError(f"no closed form for scheme {scheme!r}")
    beta = (1 + z) ** 2 / (4 * D)
    return lD, D, am1, beta, theta


def growth_factor(alpha: float, beta: float, theta: float, N: int) -> float:
    """beta (1 + (alpha - theta^2)(alpha^{N-1} - 1)/(alpha - 1)), alpha = 1 branch included."""
    if abs(alpha - 1) < 1e-12:
        return beta * (theta**2 + N * (1 - theta**2))
    geo = np.expm1((N - 1) * np.log(alpha)) / (alpha - 1) if alpha > 0 else (alpha ** (N - 1) - 1) / (alpha - 1)
    return beta * (1 + (alpha - theta**2) * geo)


def discrete_stability_constant(alpha: float, beta: float, theta: float, gamma_k: float, N: int) -> float:
    return gamma_k**-2 * growth_factor(alpha, beta, theta, N)


def scheme_constants(scheme: str, lam: float, rho2: float, k: float,
                     N: Optional[int] = None) -> StabilityReport:
    """Constants for one scheme at step k; with N given also gamma_k, C_k and C for T = N k."""
    D, alpha, beta, theta, _ = _local_constants(scheme, lam, rho2, k)
    rep = StabilityReport(scheme, lam * k, rho2 / (2 * lam), D, alpha, beta, theta)
    if N is not None:
        fam, p, _ = scheme_spec(scheme)
        g = infsup_gamma(PGBasis(uniform_mesh(N * k, N), lam, fam, p))
        rep.gamma_k = g
        rep.growth = growth_factor(alpha, beta, theta, N)
        rep.C_k = g**-2 * rep.growth
        rep.C_continuous = continuous_stability_constant(lam, rho2, N * k)
        rep.trivial_range_ok = bool(0 <= rho2 < 2 * lam * g**2)
    return rep


def d_threshold(scheme: str, lam: float, rho2: float) -> float:
    """Smallest k > 0 with D(k) = 0 (inf if D stays positive).

    D is a quadratic polynomial in k, so three samples determine it.
    """
    ks = np.array([0.5, 1.0, 2.0]) / lam
    Ds = [_local_constants(scheme, lam, rho2, k)[0] for k in ks]
    c = np.polyfit(ks, Ds, 2)
    r = np.roots(c)
    r = [x.real for x in r if abs(x.imag) < 1e-12 * max(1.0, abs(x)) and x.real > 0]
    return float(min(r)) if r else float("inf")


@dataclass
class InfsupRow:
    scheme: str
    lam: float
    gamma_k: float
    gamma_sigma: float


def infsup_scan(schemes: Iterable[str], lambdas: Iterable[float], mesh: TemporalMesh):
    gs = gamma_sigma(mesh.backward_ratio())
    rows = []
    for sc in schemes:
        fam, p, _ = scheme_spec(sc)
        for lam in lambdas:
            rows.append(InfsupRow(sc, float(lam), infsup_gamma(PGBasis(mesh, lam, fam, p)), gs))
    return rows
