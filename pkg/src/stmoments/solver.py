"""Discrete second-moment equation (B - rho^2 Delta^k) U = ell on E^k (x) E^k.

U is stored as an n_trial x n_trial coefficient matrix, so that
B(U)_{ij} = (b U b^T)_{ij} with b_{in} = b(e_n, v_i).
"""
from __future__ import annotations

import io
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .basis import NodeFamily, PGBasis, gauss_unit
from .mesh import TemporalMesh
from .trace import (RhsFunctional, TraceOperator, TraceScheme, assemble_rhs)


class DiscreteIllPosed(ValueError):
    """Raised when a recursion coefficient beta_n is not positive."""


class CgNotConverged(RuntimeError):
    def __init__(self, iterations, residual):
        super().__init__(f"CG stopped after {iterations} iterations with relative residual {residual:.3e}")
        self.iterations = iterations
        self.residual = residual


def _is_symmetric(L):
    return np.allclose(L, np.swapaxes(L, -1, -2), rtol=0, atol=1e-14 * max(np.abs(L).max(), 1e-300))


@dataclass
class TensorProblem:
    basis: PGBasis
    rho2: float
    trace: TraceOperator
    rhs: np.ndarray
    op_count: int = 0

    @property
    def n_trial(self):
        return self.basis.n_trial

    def apply(self, U):
        """(B - rho^2 Delta^k) U as a test x test matrix."""
        b = self.basis.b_mat
        A = b @ U
        Y = (b @ A.T).T
        self.op_count += 2 * b.nnz * (U.shape[0] + A.shape[0])
        if self.rho2 != 0.0:
            Y = Y - self.rho2 * self.trace.apply(U)
            self.op_count += self.trace.T.size * 2
        return Y

    def rapply(self, Y):
        b = self.basis.b_mat
        A = (b.T @ Y)
        X = (b.T @ A.T).T
        self.op_count += 2 * b.nnz * (Y.shape[0] + A.shape[0])
        if self.rho2 != 0.0:
            X = X - self.rho2 * self.trace.rapply(Y)
            self.op_count += self.trace.T.size * 2
        return X

    def gram_solve(self, Y):
        """G_F^{-1} Y G_F^{-1}."""
        X = self.basis.gram_F_solve(Y)
        X = self.basis.gram_F_solve(X.T).T
        self.op_count += 4 * (self.basis.p + 1) * 2 * Y.size
        return X


def make_problem(mesh: TemporalMesh, lam: float, rho2: float, ell: RhsFunctional,
                 family: NodeFamily = NodeFamily.GL, p: int = 1,
                 scheme: TraceScheme = TraceScheme.EXACT,
                 normalization: str = "E") -> TensorProblem:
    basis = PGBasis(mesh, lam, family, p, normalization)
    trace = TraceOperator(basis, scheme)
    return TensorProblem(basis, float(rho2), trace, assemble_rhs(ell, basis))


@dataclass
class CoefficientMatrix:
    values: np.ndarray
    basis: PGBasis = field(repr=False)
    post: bool = False

    def diagonal(self, t):
        return self.basis.eval_diagonal(self.values, t, post=self.post)

    def evaluate(self, s, t):
        """w(s, t) on arrays of equal shape."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        t = np.atleast_1d(np.asarray(t, dtype=float))
        ns, vs = self.basis.trial_values_at(s, self.post)
        nt, vt = self.basis.trial_values_at(t, self.post)
        p = self.basis.p
        out = np.zeros(s.size)
        for a in range(p):
            for b in range(p):
                out += self.values[ns * p + a, nt * p + b] * vs[a] * vt[b]
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("m,n,U_mn\n")
        n = self.values.shape[0]
        for m in range(n):
            for k in range(n):
                buf.write(f"{m},{k},{self.values[m, k]:.17g}\n")
        return buf.getvalue()

    def diagonal_csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,U_nn\n")
        for m, v in enumerate(np.diag(self.values)):
            buf.write(f"{m},{v:.17g}\n")
        return buf.getvalue()


@dataclass
class SolveReport:
    iterations: int
    final_residual: float
    route: str
    wall_time: float
    op_count: int = 0


# ---------------------------------------------------------------------------
# p = 1 recursion coefficients


@dataclass
class RecursionCoefficients:
    d: np.ndarray        # b(e_n, v_{n-1})
    s: np.ndarray        # b(e_n, v_n), last entry unused
    beta: np.ndarray
    theta: np.ndarray    # theta[0] unused
    alpha: np.ndarray    # alpha[0] unused
    Dn: list


def recursion_coefficients(problem: TensorProblem) -> RecursionCoefficients:
    basis = problem.basis
    if basis.p != 1:
        raise ValueError("recursion requires p = 1")
    N = basis.N
    b = basis.b_mat
    d = np.array(b.diagonal(0))
    s = np.append(np.array(b.diagonal(-1)), 0.0)
    Dn = problem.trace.element_matrices()
    rho2 = problem.rho2
    d11 = np.array([D[0, 0] for D in Dn])
    denom = 1.0 - rho2 * d11 / d**2
    if np.any(denom <= 0):
        n = int(np.argmax(denom <= 0)) + 1
        raise DiscreteIllPosed(f"beta_{n} <= 0: rho^2 Delta^n_11 >= b_(n-1,n)^2")
    beta = 1.0 / denom
    theta = np.zeros(N)
    alpha = np.zeros(N)
    for n in range(1, N):
        theta[n] = s[n - 1] / d[n]
        Dp = Dn[n - 1]
        alpha[n] = beta[n] * (theta[n] ** 2 + rho2 / d[n] ** 2 *
                              (Dp[1, 1] - 2 * s[n - 1] / d[n - 1] * Dp[0, 1]))
    return RecursionCoefficients(d, s, beta, theta, alpha, Dn)


def _bidiag_solve(d, s, F):
    """Solve b W = F for the lower bidiagonal b (diag d, subdiag s) by the two-term recursion."""
    W = np.empty_like(F)
    W[0] = F[0] / d[0]
    for n in range(1, F.shape[0]):
        W[n] = (F[n] - s[n - 1] * W[n - 1]) / d[n]
    return W


def solve_recursion(problem: TensorProblem):
    """O(N^2) solve for p = 1 via the diagonal recursion and the off-diagonal formula."""
    t0 = time.perf_counter()
    c = recursion_coefficients(problem)
    L = problem.rhs
    G = _bidiag_solve(c.d, c.s, L)
    G = _bidiag_solve(c.d, c.s, G.T).T
    N = problem.basis.N
    g = np.diag(G)
    u = np.empty(N)
    u[0] = c.beta[0] * g[0]
    for n in range(1, N):
        u[n] = c.beta[n] * g[n] - c.beta[n] * c.theta[n] ** 2 * g[n - 1] + c.alpha[n] * u[n - 1]
    if problem.rho2 != 0.0:
        Z = problem.trace.apply(np.diag(u))
        H = _bidiag_solve(c.d, c.s, Z)
        H = _bidiag_solve(c.d, c.s, H.T).T
        U = G + problem.rho2 * H
    else:
        U = G
    if _is_symmetric(L):
        U = 0.5 * (U + U.T)
    res = _residual(problem, U)
    rep = SolveReport(N, res, "recursion", time.perf_counter() - t0, problem.op_count)
    return CoefficientMatrix(U, problem.basis), rep


def _residual(problem, U):
    r = problem.apply(U) - problem.rhs
    nb = np.linalg.norm(problem.rhs)
    return float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))


def solve_dense(problem: TensorProblem):
    """Materialize the Kronecker system and solve by LU (n_trial <= 64)."""
    t0 = time.perf_counter()
    n = problem.n_trial
    if n > 64:
        raise ValueError("dense route is limited to 64 trial functions")
    if problem.basis.p == 1:
        recursion_coefficients(problem)
    b = problem.basis.b_mat.toarray()
    K = np.kron(b, b)
    if problem.rho2 != 0.0:
        K = K - problem.rho2 * problem.trace.dense()
    x = sla.lu_solve(sla.lu_factor(K), problem.rhs.ravel())
    U = x.reshape(n, n)
    res = _residual(problem, U)
    return CoefficientMatrix(U, problem.basis), SolveReport(1, res, "dense", time.perf_counter() - t0)


def pcg(A, rhs: np.ndarray, Minv: np.ndarray, tol: float = 1e-10, maxiter: int = 1000,
        residual: str = "plain", x0: Optional[np.ndarray] = None, strict: bool = True):
    """Preconditioned CG for array-valued unknowns; Minv is a diagonal preconditioner.

    Returns (x, iterations, relative residual).  'plain' stops on ||r||/||rhs||
    (MATLAB pcg convention), 'preconditioned' on sqrt(r.Minv r) relative to rhs.
    strict=False returns the last iterate instead of raising CgNotConverged.
    """
    X = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=float)
    R = rhs - A(X) if x0 is not None else rhs.copy()
    Z = Minv * R
    P = Z.copy()
    rz = np.vdot(R, Z)

    def measure(R, Z):
        return np.sqrt(abs(np.vdot(R, Z))) if residual == "preconditioned" else np.linalg.norm(R)

    ref = measure(rhs, Minv * rhs)
    if ref == 0:
        return X, 0, 0.0
    it = 0
    rel = measure(R, Z) / ref
    while rel > tol and it < maxiter:
        AP = A(P)
        a = rz / np.vdot(P, AP)
        X += a * P
        R -= a * AP
        Z = Minv * R
        rz_new = np.vdot(R, Z)
        P = Z + (rz_new / rz) * P
        rz = rz_new
        it += 1
        rel = measure(R, Z) / ref
    if rel > tol and strict:
        raise CgNotConverged(it, float(rel))
    return X, it, float(rel)


def solve_cg(problem: TensorProblem, tol: float = 1e-10, maxiter: Optional[int] = None,
             residual: str = "plain", x0: Optional[np.ndarray] = None, refine: int = 0):
    """Preconditioned CG on the symmetrized system B^T N^{-1} B x = B^T N^{-1} ell.

    N = G_F (x) G_F is the F Gram matrix, the preconditioner is M = M_E (x) M_E.
    refine > 0 adds iterative refinement sweeps: the residual of the original
    (unsymmetrized) system is solved for a correction.  This recovers accuracy
    lost to the squared condition number of the normal equations.  A sweep that
    stalls at rounding level is kept: CG never increases the error in the A-norm.
    """
    t0 = time.perf_counter()
    if problem.basis.p == 1:
        recursion_coefficients(problem)
    n = problem.n_trial
    m = problem.basis.mass_E_diag
    Minv = 1.0 / np.outer(m, m)

    def A(X):
        return problem.rapply(problem.gram_solve(problem.apply(X)))

    def normal_rhs(L):
        return problem.rapply(problem.gram_solve(L))

    X, it, rel = pcg(A, normal_rhs(problem.rhs), Minv, tol, maxiter or 20 * n, residual, x0)
    total = it
    for _ in range(refine):
        R = problem.rhs - problem.apply(X)
        if not np.any(R):
            break
        dX, it, _ = pcg(A, normal_rhs(R), Minv, tol, maxiter or 20 * n, residual, strict=False)
        X = X + dX
        total += it
    if _is_symmetric(problem.rhs):
        X = 0.5 * (X + X.T)
    rep = SolveReport(total, rel, "cg", time.perf_counter() - t0, problem.op_count)
    return CoefficientMatrix(X, problem.basis), rep


def postprocess(U: CoefficientMatrix) -> CoefficientMatrix:
    """(q_k (x) q_k) U in the basis of d/dt F^k."""
    if U.post:
        return U
    Q = U.basis.qk_mat
    V = (Q @ (Q @ U.values).T).T
    return CoefficientMatrix(np.asarray(V), U.basis, post=True)


def diagonal_error(U: CoefficientMatrix, reference: Callable, n_sub: int = 4,
                   n_points: Optional[int] = None) -> float:
    """int_0^T |reference(t) - U(t, t)| dt by composite Gauss quadrature."""
    n_points = n_points or max(2 * U.basis.p + 4, 8)
    s, w = gauss_unit(n_points)
    mesh = U.basis.mesh
    # interior sub-breaks: the integrand has kinks where the error changes sign
    sub = np.linspace(0, 1, n_sub + 1)
    loc = (sub[:-1, None] + np.diff(sub)[:, None] * s[None, :]).ravel()
    wl = (np.diff(sub)[:, None] * w[None, :]).ravel()
    t = (mesh.nodes[:-1, None] + mesh.steps[:, None] * loc[None, :]).ravel()
    weights = (mesh.steps[:, None] * wl[None, :]).ravel()
    diff = np.abs(np.asarray(reference(t)) - U.diagonal(t))
    return float(np.sum(weights * diff))
