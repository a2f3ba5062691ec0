"""Petrov-Galerkin trial/test pairs in time.

Trial space E^k: discontinuous, degree p shapes per element built from
orthonormal Legendre polynomials on (0,1).  GL_p uses P_0..P_{p-1}; GR_p
replaces the last one by P_{p-1} - c_p P_p with c_p = P_p(1)/P_{p-1}(1).
Test space F^k: continuous piecewise degree p with v(T) = 0, nodal basis on
Gauss-Lobatto points of each element.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from numpy.polynomial import legendre as npleg

from .mesh import TemporalMesh


class NodeFamily(str, Enum):
    GL = "GL"
    GR = "GR"


def legendre_on_unit(d: int, s, deriv: int = 0):
    """Orthonormal Legendre polynomial of degree d on (0,1) (or its derivative)."""
    c = np.zeros(d + 1)
    c[d] = np.sqrt(2 * d + 1)
    if deriv:
        c = npleg.legder(c, deriv) * 2.0**deriv
    return npleg.legval(2 * np.asarray(s, dtype=float) - 1, c)


def gauss_unit(n: int):
    x, w = npleg.leggauss(n)
    return 0.5 * (x + 1), 0.5 * w


def lobatto_nodes_unit(p: int) -> np.ndarray:
    if p == 1:
        return np.array([0.0, 1.0])
    inner = npleg.Legendre.basis(p).deriv().roots()
    return np.concatenate([[0.0], 0.5 * (np.sort(inner.real) + 1), [1.0]])


class _Lagrange:
    def __init__(self, nodes):
        self.nodes = np.asarray(nodes, dtype=float)
        n = self.nodes.size
        V = np.vander(self.nodes, n, increasing=True)
        # columns of C: monomial coefficients of each cardinal function
        self.C = np.linalg.solve(V, np.eye(n))

    def values(self, s):
        s = np.asarray(s, dtype=float)
        V = np.vander(s, self.nodes.size, increasing=True)
        return (V @ self.C).T

    def derivs(self, s):
        s = np.asarray(s, dtype=float)
        n = self.nodes.size
        V = np.zeros((s.size, n))
        for j in range(1, n):
            V[:, j] = j * s ** (j - 1)
        return (V @ self.C).T


def trial_shapes(family: NodeFamily, p: int, s) -> np.ndarray:
    """(p, len(s)) values of the unscaled trial shapes on the reference element."""
    family = NodeFamily(family)
    out = np.array([legendre_on_unit(d, s) for d in range(p)])
    if family is NodeFamily.GR:
        c = np.sqrt((2 * p + 1) / (2 * p - 1))
        out[p - 1] = out[p - 1] - c * legendre_on_unit(p, s)
    return out


def trial_shape_norms_sq(family: NodeFamily, p: int) -> np.ndarray:
    n = np.ones(p)
    if NodeFamily(family) is NodeFamily.GR:
        n[p - 1] = 1 + (2 * p + 1) / (2 * p - 1)
    return n


def post_shapes(p: int, s) -> np.ndarray:
    """Shapes of d/dt F^k (discontinuous degree p-1): P_0..P_{p-1}."""
    return np.array([legendre_on_unit(d, s) for d in range(p)])


@dataclass
class PGBasis:
    mesh: TemporalMesh
    lam: float
    family: NodeFamily = NodeFamily.GR
    p: int = 1
    normalization: str = "E"

    def __post_init__(self):
        self.family = NodeFamily(self.family)
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.normalization not in ("E", "L2"):
            raise ValueError("normalization must be 'E' or 'L2'")
        self.nq = 2 * self.p + 2
        self._assemble()

    # -- sizes and index maps
    @property
    def N(self) -> int:
        return self.mesh.N

    @property
    def n_trial(self) -> int:
        return self.N * self.p

    @property
    def n_test(self) -> int:
        return self.N * self.p

    def trial_index(self, n: int) -> np.ndarray:
        return n * self.p + np.arange(self.p)

    def test_index(self, n: int) -> np.ndarray:
        """Global test dofs of element n; -1 marks the removed dof at t = T."""
        idx = n * self.p + np.arange(self.p + 1)
        idx[idx == self.N * self.p] = -1
        return idx

    @property
    def name(self) -> str:
        return f"{self.family.value}{self.p}"

    def _scale(self, h, normsq):
        w = self.lam * h if self.normalization == "E" else h
        return 1.0 / np.sqrt(w * normsq)

    # -- assembly
    def _assemble(self):
        p, lam = self.p, self.lam
        h = self.mesh.steps
        sq, wq = gauss_unit(self.nq)
        self.quad = (sq, wq)
        self.lagr = _Lagrange(lobatto_nodes_unit(p))
        V = self.lagr.values(sq)              # (p+1, nq)
        dV = self.lagr.derivs(sq)
        S = trial_shapes(self.family, p, sq)  # (p, nq)
        Pq = post_shapes(p, sq)
        nrm = trial_shape_norms_sq(self.family, p)
        # per-element scale of each trial and post function
        self.trial_scale = np.array([self._scale(hn, nrm) for hn in h])       # (N, p)
        self.post_scale = np.array([self._scale(hn, np.ones(p)) for hn in h])  # (N, p)

        # reference integrals
        Ib_stiff = -(S * wq) @ dV.T          # int psi_a (-phi_j')  [d/ds]
        Ib_mass = (S * wq) @ V.T             # int psi_a phi_j
        Mv = (V * wq) @ V.T
        Kv = (dV * wq) @ dV.T
        Iq = (Pq * wq) @ S.T                 # int P_b psi_a

        rows, cols, vals = [], [], []
        grows, gcols, gvals = [], [], []
        mrows, mcols, mvals = [], [], []
        for n in range(self.N):
            hn = h[n]
            ti = self.test_index(n)
            tr = self.trial_index(n)
            bl = (Ib_stiff + lam * hn * Ib_mass) * self.trial_scale[n][:, None]  # (p, p+1)
            gl = Kv / (lam * hn) + lam * hn * Mv
            ml = hn * Mv
            for j in range(p + 1):
                if ti[j] < 0:
                    continue
                for a in range(p):
                    rows.append(ti[j]); cols.append(tr[a]); vals.append(bl[a, j])
                for i in range(p + 1):
                    if ti[i] < 0:
                        continue
                    grows.append(ti[j]); gcols.append(ti[i]); gvals.append(gl[j, i])
                    mrows.append(ti[j]); mcols.append(ti[i]); mvals.append(ml[j, i])
        grows.append(0); gcols.append(0); gvals.append(1.0)
        shape = (self.n_test, self.n_trial)
        self.b_mat = sp.csr_matrix((vals, (rows, cols)), shape=shape)
        self.gram_F = sp.csr_matrix((gvals, (grows, gcols)), shape=(self.n_test,) * 2)
        self.test_mass = sp.csr_matrix((mvals, (mrows, mcols)), shape=(self.n_test,) * 2)

        # trial shapes are L2-orthogonal, so the E mass matrix is diagonal
        l2 = (h[:, None] * nrm[None, :] * self.trial_scale**2).ravel()
        self.trial_mass_L2 = l2
        self.mass_E_diag = lam * l2
        self.trial_norms = np.sqrt(self.mass_E_diag)
        post_l2 = (h[:, None] * self.post_scale**2).ravel()
        self.post_mass_E_diag = lam * post_l2

        # q_k: L2 projection onto d/dt F^k, coefficients in the post basis
        qr, qc, qv = [], [], []
        for n in range(self.N):
            tr = self.trial_index(n)
            # coefficient of post function b in q e_a: int ebar_b e_a / int ebar_b^2
            loc = Iq * self.trial_scale[n][None, :] / self.post_scale[n][:, None]
            for b_ in range(p):
                for a in range(p):
                    if abs(loc[b_, a]) > 1e-15:
                        qr.append(tr[b_]); qc.append(tr[a]); qv.append(loc[b_, a])
        self.qk_mat = sp.csr_matrix((qv, (qr, qc)), shape=(self.n_trial, self.n_trial))

    @property
    def mass_E(self) -> sp.dia_matrix:
        return sp.diags(self.mass_E_diag)

    @cached_property
    def gram_F_banded(self):
        """Lower banded Cholesky factor of the F Gram matrix (bandwidth p)."""
        ab = _to_lower_banded(self.gram_F, self.p)
        return sla.cholesky_banded(ab, lower=True)

    def gram_F_solve(self, X):
        return sla.cho_solve_banded((self.gram_F_banded, True), X, check_finite=False)

    # -- function evaluation
    def local_coordinates(self, t):
        t = np.asarray(t, dtype=float)
        n = self.mesh.element_of(t)
        s = (t - self.mesh.nodes[n]) / self.mesh.steps[n]
        return n, s

    def trial_values_at(self, t, post: bool = False):
        """Element index and (p, len(t)) values of the local trial (or post) functions."""
        n, s = self.local_coordinates(t)
        if post:
            vals = post_shapes(self.p, s) * self.post_scale[n].T
        else:
            vals = trial_shapes(self.family, self.p, s) * self.trial_scale[n].T
        return n, vals

    def eval_trial(self, coef, t, post: bool = False):
        coef = np.asarray(coef, dtype=float)
        n, vals = self.trial_values_at(t, post)
        idx = n[None, :] * self.p + np.arange(self.p)[:, None]
        return np.sum(coef[idx] * vals, axis=0)

    def eval_test(self, coef, t, deriv: bool = False):
        coef = np.append(np.asarray(coef, dtype=float), 0.0)  # v(T) = 0
        n, s = self.local_coordinates(t)
        vals = self.lagr.derivs(s) / self.mesh.steps[n] if deriv else self.lagr.values(s)
        idx = n[None, :] * self.p + np.arange(self.p + 1)[:, None]
        return np.sum(coef[idx] * vals, axis=0)

    def eval_diagonal(self, U, t, post: bool = False):
        """w(t,t) for w = sum U_ab e_a (x) e_b (element-diagonal blocks only contribute)."""
        U = np.asarray(U)
        n, vals = self.trial_values_at(t, post)
        out = np.zeros(np.size(t))
        for a in range(self.p):
            for b in range(self.p):
                out += U[n * self.p + a, n * self.p + b] * vals[a] * vals[b]
        return out

    # -- norms
    def F_norm(self, v) -> float:
        v = np.asarray(v)
        return float(np.sqrt(v @ (self.gram_F @ v)))

    def E_norm(self, w) -> float:
        w = np.asarray(w)
        return float(np.sqrt(np.sum(self.mass_E_diag * w * w)))

    def to_coo(self, which: str = "b"):
        M = {"b": self.b_mat, "gram_F": self.gram_F, "test_mass": self.test_mass,
             "qk": self.qk_mat, "mass_E": self.mass_E}[which].tocoo()
        return list(zip(M.row.tolist(), M.col.tolist(), M.data.tolist()))


def _to_lower_banded(A: sp.spmatrix, bw: int) -> np.ndarray:
    A = A.tocsr()
    n = A.shape[0]
    ab = np.zeros((bw + 1, n))
    for d in range(bw + 1):
        ab[d, : n - d] = A.diagonal(-d)
    return ab


def _whitened_b(basis: PGBasis) -> np.ndarray:
    """L_F^{-1} b M_E^{-1/2} as a dense array; its singular values give (inf-)sup constants."""
    B = basis.b_mat.toarray() / np.sqrt(basis.mass_E_diag)[None, :]
    L = sla.cholesky(basis.gram_F.toarray(), lower=True)
    return sla.solve_triangular(L, B, lower=True)


def infsup_gamma(basis: PGBasis, dense_limit: int = 1500) -> float:
    """Discrete inf-sup constant of b on E^k x F^k.

    gamma^2 is the smallest root of b^T G_F^{-1} b w = gamma^2 M_E w.  Small
    problems use the singular values of the whitened matrix; large ones run
    Lanczos on the inverse M^{1/2} b^{-1} G_F b^{-T} M^{1/2}, whose largest
    eigenvalue is gamma^{-2}.
    """
    if basis.n_trial <= dense_limit:
        s = sla.svdvals(_whitened_b(basis))
        return float(s.min())
    from scipy.sparse.linalg import LinearOperator, eigsh, splu

    lu = splu(basis.b_mat.tocsc())
    r = np.sqrt(basis.mass_E_diag)
    G = basis.gram_F.tocsr()

    def mv(x):
        y = lu.solve(r * x, trans="T")
        return r * lu.solve(G @ y)

    n = basis.n_trial
    op = LinearOperator((n, n), matvec=mv, dtype=float)
    ev = eigsh(op, k=1, which="LA", tol=1e-12, return_eigenvectors=False, ncv=min(n, 40))
    return float(1.0 / np.sqrt(ev[0]))


def b_operator_norm(basis: PGBasis) -> float:
    return float(sla.svdvals(_whitened_b(basis)).max())


def gamma_sigma(sigma: float) -> float:
    """Mesh-dependent lower bound 1/sqrt(2(1 + max(1, sigma)))."""
    return 1.0 / np.sqrt(2.0 * (1.0 + max(1.0, sigma)))


def qk_apply(basis: PGBasis, w):
    """Coefficients of q_k w in the post basis (discontinuous degree p-1)."""
    return basis.qk_mat @ np.asarray(w)


def qk_inverse_norm_sq(family: NodeFamily, p: int) -> float:
    """||q_k^{-1}||^2 on E^k -> d/dt F^k: 1 for GL, 1 + (2p+1)/(2p-1) for GR."""
    return float(trial_shape_norms_sq(family, p)[-1])


def best_approx_error(basis: PGBasis, target, n_quad: int = 24):
    """E-norm distance of target to E^k and the distance relative to ||target||_E."""
    s, w = gauss_unit(n_quad)
    err2 = 0.0
    nrm2 = 0.0
    shapes = trial_shapes(basis.family, basis.p, s)
    nrm = trial_shape_norms_sq(basis.family, basis.p)
    for n in range(basis.N):
        h = basis.mesh.steps[n]
        t = basis.mesh.nodes[n] + h * s
        u = np.asarray(target(t), dtype=float) * np.ones_like(t)
        c = (shapes * w) @ u / nrm
        r = u - c @ shapes
        err2 += basis.lam * h * np.sum(w * r * r)
        nrm2 += basis.lam * h * np.sum(w * u * u)
    err = np.sqrt(err2)
    return float(err), float(err / np.sqrt(nrm2)) if nrm2 > 0 else float("nan")


def adjoint_euler_test_function(basis: PGBasis, w) -> np.ndarray:
    """For GR1: v in F^k with -(v_n - v_{n-1})/k_n + lam v_{n-1} = lam w(t_{n-1}^+), v_N = 0."""
    if basis.family is not NodeFamily.GR or basis.p != 1:
        raise ValueError("defined for GR1 only")
    lam = basis.lam
    k = basis.mesh.steps
    wl = basis.eval_trial(w, basis.mesh.nodes[:-1])  # right limits at t_{n-1}
    N = basis.N
    v = np.zeros(N + 1)
    for n in range(N, 0, -1):
        v[n - 1] = (lam * wl[n - 1] + v[n] / k[n - 1]) / (1.0 / k[n - 1] + lam)
    return v[:-1]


def mesh_F_norm(basis: PGBasis, v) -> float:
    """Mesh-dependent norm of v in F^k for GR1.

    |v|^2 = lam^-1 ||v'||^2 + ||i_k v||_E^2 + v(0)^2 + sum_n |v_n - v_{n-1}|^2,
    with i_k v the piecewise constant equal to v(t_{n-1}) on J_n.
    """
    if basis.family is not NodeFamily.GR or basis.p != 1:
        raise ValueError("defined for GR1 only")
    k = basis.mesh.steps
    vn = np.append(np.asarray(v, dtype=float), 0.0)
    dv = np.diff(vn)
    deriv = np.sum(dv**2 / k) / basis.lam
    ik = basis.lam * np.sum(k * vn[:-1] ** 2)
    return float(np.sqrt(deriv + ik + vn[0] ** 2 + np.sum(dv**2)))
