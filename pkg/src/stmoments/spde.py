"""Second moment of a parabolic SPDE with multiplicative (Nemytskii) noise, spectral in space.

H = L2(0,1), A = -d^2/dx^2 with eigenpairs lam_nu = (nu pi)^2,
phi_nu = sqrt(2) sin(nu pi x).  The noise W^Q = sum_nu sqrt(mu_nu) W_nu psi_nu
with psi_nu = lam_nu^{-1/2} phi_nu drives dX = -A X dt + X dW^Q.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
from scipy import integrate

from .basis import PGBasis, infsup_gamma
from .closed_form import continuous_stability_constant
from .mesh import TemporalMesh
from .solver import SolveReport, pcg
from .stability import growth_factor, scheme_spec
from .trace import TraceOperator


@dataclass(frozen=True)
class SpectralSpace:
    P: int = 5

    @property
    def modes(self) -> np.ndarray:
        return np.arange(1, self.P + 1)

    @property
    def eigenvalues(self) -> np.ndarray:
        return (self.modes * np.pi) ** 2

    def phi(self, p: int, x):
        return np.sqrt(2.0) * np.sin(p * np.pi * np.asarray(x))

    def project(self, f: Callable) -> np.ndarray:
        """<f, phi_p> for p = 1..P."""
        return np.array([integrate.quad(lambda x: f(x) * self.phi(p, x), 0, 1,
                                        epsabs=1e-14, epsrel=1e-13, limit=200)[0]
                         for p in self.modes])


def default_initial(x):
    return np.sqrt(30.0) * (x - x**2)


@dataclass(frozen=True)
class NoiseModel:
    """Eigenvalues mu_nu of Q truncated at kappa.

    sqrt_mu=True: W^Q = sum sqrt(mu_nu) W_nu psi_nu (Cov = Q).  With False the
    amplitudes are mu_nu themselves, i.e. the covariance eigenvalues become mu_nu^2.
    """
    kappa: int = 8
    mu: Callable = field(default=lambda nu: 32.0 * np.asarray(nu, dtype=float) ** -5)
    sqrt_mu: bool = True

    @property
    def nus(self) -> np.ndarray:
        return np.arange(1, self.kappa + 1)

    def amplitudes(self) -> np.ndarray:
        m = np.asarray(self.mu(self.nus), dtype=float)
        return np.sqrt(m) if self.sqrt_mu else m

    def covariance_eigenvalues(self) -> np.ndarray:
        return self.amplitudes() ** 2


def nemytskii_sigma(nu: int, p: int, r: int) -> float:
    """sigma^nu_{p,r} = int_0^1 phi_p phi_r psi_nu dx in closed form."""
    p, r = min(p, r), max(p, r)   # bit-exact symmetry in (p, r)
    if (nu + p + r) % 2 == 0:
        return 0.0
    den = np.pi * (nu + p + r) * (nu - p + r) * (nu + p - r) * (nu - p - r)
    return float((nu * np.pi) ** -1 * (-8 * np.sqrt(2) * nu * p * r) / den)


def nemytskii_sigma_quadrature(nu: int, p: int, r: int) -> float:
    sp = SpectralSpace(max(p, r, nu))
    f = lambda x: sp.phi(p, x) * sp.phi(r, x) * sp.phi(nu, x) / (nu * np.pi)
    return integrate.quad(f, 0, 1, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def sigma_tensor(space: SpectralSpace, noise: NoiseModel) -> np.ndarray:
    """S[nu, p, r] for nu <= kappa, p, r <= P."""
    S = np.zeros((noise.kappa, space.P, space.P))
    for i, nu in enumerate(noise.nus):
        for a, p in enumerate(space.modes):
            for b, r in enumerate(space.modes):
                S[i, a, b] = nemytskii_sigma(int(nu), int(p), int(r))
    return S


def rho_coefficients(space: SpectralSpace, noise: NoiseModel) -> np.ndarray:
    """rho[p, q, r, s] = sum_nu mu_nu sigma^nu_{p,r} sigma^nu_{q,s}."""
    S = sigma_tensor(space, noise)
    c = noise.covariance_eigenvalues()
    return np.einsum("v,vpr,vqs->pqrs", c, S, S)


@dataclass
class SpdeCoefficientTensor:
    """U[p, q, m, n]: coefficient of e_m (x) e_n in the (phi_p, phi_q) block."""
    values: np.ndarray
    space: SpectralSpace
    bases: list = field(repr=False)
    post: bool = False

    def diagonal(self, p: int, t) -> np.ndarray:
        """U_pp(t, t) for 0-based mode index p."""
        return self.bases[p].eval_diagonal(self.values[p, p], t, post=self.post)

    def time_diagonal_blocks(self) -> np.ndarray:
        """(N, P, P) array of U_{nn, pq}."""
        return np.einsum("pqnn->npq", self.values)

    def pi_norm(self) -> float:
        """sum_p lam_p delta(U_pp)."""
        b0 = self.bases[0]
        l2 = b0.trial_mass_L2
        return float(sum(lam * np.sum(np.diag(self.values[i, i]) * l2)
                         for i, lam in enumerate(self.space.eigenvalues)))


@dataclass
class SpdeProblem:
    space: SpectralSpace
    noise: NoiseModel
    mesh: TemporalMesh
    scheme: str = "CN"
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        fam, p, tr = scheme_spec(self.scheme)
        if p != 1:
            raise ValueError("SPDE solver supports p = 1 schemes")
        if self.x0 is None:
            self.x0 = self.space.project(default_initial)
        self.bases = [PGBasis(self.mesh, lam, fam, 1, "L2") for lam in self.space.eigenvalues]
        # L2-normalized trial functions do not depend on lam, so one trace operator serves all modes
        self.trace = TraceOperator(self.bases[0], tr)
        self.rho = rho_coefficients(self.space, self.noise)

    @property
    def rhs(self):
        """ell_pq(v_i (x) v_j) = <X0,phi_p><X0,phi_q> v_i(0) v_j(0)."""
        n = self.mesh.N
        P = self.space.P
        L = np.zeros((P, P, n, n))
        L[:, :, 0, 0] = np.outer(self.x0, self.x0)
        return L

    def contract(self, X):
        """(G X)_pq = sum_rs rho[p,q,r,s] X_rs on the leading two axes."""
        return np.einsum("pqrs,rs...->pq...", self.rho, X)

    def apply(self, U):
        P = self.space.P
        D = np.array([[self.trace.apply(U[r, s]) for s in range(P)] for r in range(P)])
        Y = -self.contract(D)
        for p in range(P):
            bp = self.bases[p].b_mat
            for q in range(P):
                bq = self.bases[q].b_mat
                Y[p, q] += (bq @ (bp @ U[p, q]).T).T
        return Y

    def rapply(self, Y):
        P = self.space.P
        D = np.array([[self.trace.rapply(Y[r, s]) for s in range(P)] for r in range(P)])
        # adjoint of the rho contraction swaps (pq) and (rs)
        X = -np.einsum("pqrs,pq...->rs...", self.rho, D)
        for p in range(P):
            bp = self.bases[p].b_mat
            for q in range(P):
                bq = self.bases[q].b_mat
                A = bp.T @ Y[p, q]
                X[p, q] += (bq.T @ A.T).T
        return X

    def gram_solve(self, Y):
        P = self.space.P
        X = np.empty_like(Y)
        for p in range(P):
            for q in range(P):
                Z = self.bases[p].gram_F_solve(Y[p, q])
                X[p, q] = self.bases[q].gram_F_solve(Z.T).T
        return X


def solve_spde(problem: SpdeProblem, tol: float = 1e-10, maxiter: Optional[int] = None):
    """Block CG on the symmetrized coupled system, unknowns ordered (p, q, m, n)."""
    t0 = time.perf_counter()
    m = np.array([b.mass_E_diag for b in problem.bases])          # (P, n)
    Minv = 1.0 / (m[:, None, :, None] * m[None, :, None, :])

    def A(X):
        return problem.rapply(problem.gram_solve(problem.apply(X)))

    rhs = problem.rapply(problem.gram_solve(problem.rhs))
    n = problem.mesh.N * problem.space.P
    X, it, rel = pcg(A, rhs, Minv, tol, maxiter or 20 * n)
    X = 0.5 * (X + X.transpose(1, 0, 3, 2))
    rep = SolveReport(it, rel, "cg", time.perf_counter() - t0)
    return SpdeCoefficientTensor(X, problem.space, problem.bases), rep


def solve_spde_diagonal(problem: SpdeProblem) -> np.ndarray:
    """Time-diagonal blocks U[n, p, q] by a forward recursion in n (point-mass data only).

    Each step solves a P^2 x P^2 system; cost O(N P^4 (P^2 + kappa)).
    """
    P = problem.space.P
    N = problem.mesh.N
    d = np.array([b.b_mat.diagonal(0) for b in problem.bases])                       # (P, N)
    s = np.array([np.append(b.b_mat.diagonal(-1), 0.0) for b in problem.bases])     # (P, N)
    Dn = problem.trace.element_matrices()
    R = problem.rho.reshape(P * P, P * P)
    # g_p = b_p^{-1} e_0 by the two-term recursion
    g = np.empty((P, N))
    g[:, 0] = 1.0 / d[:, 0]
    for n in range(1, N):
        g[:, n] = -s[:, n - 1] * g[:, n - 1] / d[:, n]
    xx = np.outer(problem.x0, problem.x0)
    U = np.empty((N, P, P))
    H = np.zeros((P, P))
    for n in range(N):
        dd = np.outer(d[:, n], d[:, n])
        Gn = xx * np.outer(g[:, n], g[:, n])
        rhs = dd * Gn
        if n > 0:
            Dp = Dn[n - 1]
            Up = U[n - 1]
            cp = s[:, n - 1] / d[:, n - 1]
            ss = np.outer(s[:, n - 1], s[:, n - 1])
            GU = (R @ Up.ravel()).reshape(P, P)
            rhs = rhs + (Dp[1, 1] * GU - Dp[1, 0] * GU * cp[None, :]
                         - Dp[0, 1] * cp[:, None] * GU + ss * H)
        A = np.diag(dd.ravel()) - Dn[n][0, 0] * R
        U[n] = np.linalg.solve(A, rhs.ravel()).reshape(P, P)
        H = U[n] - Gn
    return U


def cg_bound(space: SpectralSpace, noise: NoiseModel, T: float = 1.0) -> dict:
    """Truncated tr(Q), the bound C_G <= 8 tr(Q)/lam_1 and the continuous constant built from it."""
    trQ = float(np.sum(noise.covariance_eigenvalues()))
    lam1 = float(space.eigenvalues[0])
    CG = 8.0 * trQ / lam1
    return {"trQ": trQ, "C_G_bound": CG, "C": continuous_stability_constant(lam1, CG, T)}


def noise_operator_norm_sq(space: SpectralSpace, noise: NoiseModel) -> float:
    """||P_h G_1[.] Q^{1/2}||^2 in L(V^h; L2(U; V^h)) via K x = c Lam x."""
    S = sigma_tensor(space, noise)
    c = noise.covariance_eigenvalues()
    Lam = np.diag(space.eigenvalues)
    K = np.einsum("v,vpr,pq,vqs->rs", c, S, Lam, S)
    return float(sla.eigh(K, Lam, eigvals_only=True).max())


@dataclass
class VectorStabilityReport:
    beta_tilde: float
    beta: float
    theta_plus: float
    theta_minus: float
    alpha: float
    gammas: np.ndarray
    C_kh: float


def vector_stability(problem: SpdeProblem) -> VectorStabilityReport:
    k = problem.mesh.steps
    if np.ptp(k) > 1e-12 * k.max():
        raise ValueError("vector stability constants assume a uniform mesh")
    D = problem.trace.element_matrices()[0]
    nrm = noise_operator_norm_sq(problem.space, problem.noise)
    b0 = np.array([b.b_mat[0, 0] for b in problem.bases])
    b1 = np.array([b.b_mat[1, 0] for b in problem.bases])
    theta = b1 / b0
    bt = nrm * D[0, 0] * np.max(b0**-2.0)
    beta = 1.0 / (1.0 - bt)
    tp, tm = np.max(np.abs(theta)), np.min(np.abs(theta))
    alpha = beta * np.max(tp**2 + b0**-2.0 * np.abs(D[1, 1] - 2 * D[0, 1] * theta) * nrm)
    N = problem.mesh.N
    gam = np.array([infsup_gamma(b) for b in problem.bases])
    fac = growth_factor(alpha, beta, tm, N)
    return VectorStabilityReport(bt, beta, tp, tm, alpha, gam, float(np.max(gam**-2) * fac))


def spde_errors(reference: np.ndarray, ref_mesh: TemporalMesh, numerical: np.ndarray,
                num_mesh: TemporalMesh, eigenvalues: np.ndarray) -> tuple:
    """E_p = delta(|U_pp^ref - U_pp^num|) per mode and E = sum lam_p E_p.

    Both inputs are time-diagonal blocks (N, P, P) of p = 1 solutions with
    L2-normalized trial functions, so U_pp(t,t) = U[n, p, p] / k_n on element n.
    The piecewise constant difference is integrated exactly on the merged mesh.
    """
    t = np.union1d(ref_mesh.nodes, num_mesh.nodes)
    mid = 0.5 * (t[:-1] + t[1:])
    w = np.diff(t)
    nr = ref_mesh.element_of(mid)
    nn = num_mesh.element_of(mid)
    dr = np.einsum("npp->np", reference)[nr] / ref_mesh.steps[nr, None]
    dn = np.einsum("npp->np", numerical)[nn] / num_mesh.steps[nn, None]
    Ep = np.sum(w[:, None] * np.abs(dr - dn), axis=0)
    return Ep, float(np.sum(np.asarray(eigenvalues) * Ep))
