"""Trace products delta(w v) = int w(t,t) v(t,t) dt on E^k (x) E^k times F^k (x) F^k."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence, Union

import numpy as np
import scipy.linalg as sla

from .basis import PGBasis, gauss_unit, post_shapes, trial_shapes


class TraceScheme(str, Enum):
    EXACT = "exact"
    Q = "q"        # Delta(Q_k w, v)
    BOX = "box"    # sum_n k_n^{-1} int_{J_n x J_n} w v


class TraceOperator:
    """Element-local 4-index tensors T_n[a, b, i, j] = Delta^k(e_a (x) e_b, v_i (x) v_j).

    Only element-diagonal trial blocks and element-local test pairs interact, so
    apply() and rapply() cost O(N p^4) while returning dense test/trial matrices.
    """

    def __init__(self, basis: PGBasis, scheme: TraceScheme = TraceScheme.EXACT):
        scheme = TraceScheme(scheme)
        if basis.p > 1 and scheme is not TraceScheme.EXACT:
            raise ValueError("Q-preprocessed and box trace products are implemented for p = 1 only")
        self.basis = basis
        self.scheme = scheme
        p, N = basis.p, basis.N
        nq = 2 * p + 3
        s, w = gauss_unit(nq)
        V = basis.lagr.values(s)                       # (p+1, nq)
        S = trial_shapes(basis.family, p, s)           # (p, nq)
        h = basis.mesh.steps
        T = np.empty((N, p, p, p + 1, p + 1))
        if scheme is TraceScheme.EXACT:
            ref = np.einsum("aq,bq,iq,jq,q->abij", S, S, V, V, w)
            T[:] = h[:, None, None, None, None] * ref
            T *= (basis.trial_scale[:, :, None, None, None] * basis.trial_scale[:, None, :, None, None])
        elif scheme is TraceScheme.Q:
            # q_k e_a in terms of post shapes (element-local, mesh independent up to scale)
            P = post_shapes(p, s)
            for n in range(N):
                qloc = basis.qk_mat[n * p:(n + 1) * p, n * p:(n + 1) * p].toarray()
                Sq = (qloc.T @ (P * basis.post_scale[n][:, None]))   # (p, nq) values of q e_a
                T[n] = h[n] * np.einsum("aq,bq,iq,jq,q->abij", Sq, Sq, V, V, w)
        else:
            for n in range(N):
                Ie = h[n] * (S * basis.trial_scale[n][:, None] * w) @ V.T   # int e_a v_i
                T[n] = np.einsum("ai,bj->abij", Ie, Ie) / h[n]
        self.T = T
        self.trial_idx = np.arange(N)[:, None] * p + np.arange(p)[None, :]
        ti = np.arange(N)[:, None] * p + np.arange(p + 1)[None, :]
        ti[ti == N * p] = N * p   # removed dof maps onto a padding row
        self.test_idx = ti

    @property
    def n_test(self):
        return self.basis.n_test

    def element_matrices(self):
        """Delta^n (p = 1): 2x2 over (v_{n-1}, v_n), 1x1 on the last element."""
        if self.basis.p != 1:
            raise ValueError("element matrices are defined for p = 1")
        out = [self.T[n, 0, 0].copy() for n in range(self.basis.N)]
        out[-1] = out[-1][:1, :1]
        return out

    def _blocks(self, U):
        ti = self.trial_idx
        return U[ti[:, :, None], ti[:, None, :]]          # (N, p, p)

    def apply(self, U: np.ndarray) -> np.ndarray:
        """[Delta U]_{ij} = sum_{ab} U_ab Delta(e_a (x) e_b, v_i (x) v_j)."""
        X = self._blocks(U)
        loc = np.einsum("nab,nabij->nij", X, self.T)
        n = self.n_test
        out = np.zeros((n + 1, n + 1))
        ti = self.test_idx
        np.add.at(out, (ti[:, :, None], ti[:, None, :]), loc)
        return out[:n, :n]

    def rapply(self, Y: np.ndarray) -> np.ndarray:
        """Adjoint: trial matrix with entries sum_{ij} Y_ij Delta(e_a (x) e_b, v_i (x) v_j)."""
        n = self.n_test
        Yp = np.zeros((n + 1, n + 1))
        Yp[:n, :n] = Y
        ti = self.test_idx
        Yl = Yp[ti[:, :, None], ti[:, None, :]]          # (N, p+1, p+1)
        loc = np.einsum("nij,nabij->nab", Yl, self.T)
        out = np.zeros((self.basis.n_trial,) * 2)
        tr = self.trial_idx
        out[tr[:, :, None], tr[:, None, :]] = loc
        return out

    def dense(self) -> np.ndarray:
        """(n_test^2, n_trial^2) matrix in row-major vectorization."""
        nt, nr = self.n_test, self.basis.n_trial
        D = np.zeros((nt + 1, nt + 1, nr, nr))
        ti, tr = self.test_idx, self.trial_idx
        for n in range(self.basis.N):
            for a in range(self.basis.p):
                for b in range(self.basis.p):
                    D[ti[n][:, None], ti[n][None, :], tr[n, a], tr[n, b]] += self.T[n, a, b]
        return D[:nt, :nt].reshape(nt * nt, nr * nr)


def trace_element_matrices(basis: PGBasis, scheme: TraceScheme = TraceScheme.EXACT):
    return TraceOperator(basis, scheme).element_matrices()


def trace_bilinear(basis: PGBasis, scheme: TraceScheme = TraceScheme.EXACT) -> TraceOperator:
    return TraceOperator(basis, scheme)


def delta_rhs(basis: PGBasis) -> np.ndarray:
    """delta(v_i (x) v_j) = int v_i v_j, the L2 mass of the test basis."""
    return basis.test_mass.toarray()


# ---------------------------------------------------------------------------
# right-hand side functionals on F (x) F


@dataclass(frozen=True)
class PointMass:
    """ell(v) = weight v(0, 0), e.g. weight = E[X0^2]."""
    weight: float = 1.0


@dataclass(frozen=True)
class TraceDelta:
    """ell(v) = weight delta(v), e.g. weight = mu^2 for additive noise."""
    weight: float = 1.0


@dataclass(frozen=True)
class DiagonalKernel:
    """ell(v) = weight int m(t)^2 v(t, t) dt with m a callable of t."""
    m: Callable
    weight: float = 1.0


@dataclass(frozen=True)
class LinearCombination:
    terms: Sequence = field(default_factory=tuple)   # (coefficient, functional) pairs


RhsFunctional = Union[PointMass, TraceDelta, DiagonalKernel, LinearCombination]


def assemble_rhs(ell: RhsFunctional, basis: PGBasis) -> np.ndarray:
    n = basis.n_test
    if isinstance(ell, PointMass):
        L = np.zeros((n, n))
        L[0, 0] = ell.weight   # only v_0 is nonzero at t = 0
        return L
    if isinstance(ell, TraceDelta):
        return ell.weight * delta_rhs(basis)
    if isinstance(ell, DiagonalKernel):
        p = basis.p
        s, w = gauss_unit(2 * p + 8)
        V = basis.lagr.values(s)
        L = np.zeros((n + 1, n + 1))
        for e in range(basis.N):
            h = basis.mesh.steps[e]
            t = basis.mesh.nodes[e] + h * s
            m2 = np.asarray(ell.m(t), dtype=float) ** 2
            loc = h * (V * (w * m2)) @ V.T
            idx = e * p + np.arange(p + 1)
            L[np.ix_(idx, idx)] += loc
        return ell.weight * L[:n, :n]
    if isinstance(ell, LinearCombination):
        L = np.zeros((n, n))
        for c, f in ell.terms:
            L += c * assemble_rhs(f, basis)
        return L
    raise TypeError(f"unsupported functional {type(ell).__name__}")


# ---------------------------------------------------------------------------
# tensor norms in coefficient space


def pi_norm_spsd(basis: PGBasis, U: np.ndarray) -> float:
    """||w||_pi = lam delta(w) for symmetric positive semidefinite w."""
    return float(np.sum(np.diag(U) * basis.mass_E_diag))


def pi_norm(basis: PGBasis, U: np.ndarray) -> float:
    """Projective norm on E (x) E: nuclear norm of M^{1/2} U M^{1/2}."""
    r = np.sqrt(basis.mass_E_diag)
    return float(np.sum(sla.svdvals(r[:, None] * U * r[None, :])))


def hilbert_norm(basis: PGBasis, U: np.ndarray) -> float:
    """||w||_{E (x) E} = lam ||w||_{L2(Q)}."""
    r = np.sqrt(basis.mass_E_diag)
    return float(np.linalg.norm(r[:, None] * U * r[None, :]))


def _chol_F(basis: PGBasis):
    return sla.cholesky(basis.gram_F.toarray(), lower=True)


def eps_norm(basis: PGBasis, V: np.ndarray) -> float:
    """Injective norm on F^k (x) F^k: largest singular value of L^T V L, G_F = L L^T."""
    L = _chol_F(basis)
    return float(sla.svdvals(L.T @ V @ L).max())


def dual_eps_norm(basis: PGBasis, Lmat: np.ndarray) -> float:
    """Norm of ell restricted to F^k (x) F^k with the injective norm: nuclear norm of L^-1 ell L^-T."""
    L = _chol_F(basis)
    X = sla.solve_triangular(L, Lmat, lower=True)
    X = sla.solve_triangular(L, X.T, lower=True).T
    return float(np.sum(sla.svdvals(X)))


def dual_hilbert_norm(basis: PGBasis, Lmat: np.ndarray) -> float:
    """Norm of ell on F^k (x) F^k with the Hilbert tensor norm: Frobenius norm of L^-1 ell L^-T."""
    L = _chol_F(basis)
    X = sla.solve_triangular(L, Lmat, lower=True)
    X = sla.solve_triangular(L, X.T, lower=True).T
    return float(np.linalg.norm(X))
