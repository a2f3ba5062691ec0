"""Temporal meshes 0 = t_0 < ... < t_N = T."""
from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TemporalMesh:
    nodes: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.nodes, dtype=float).copy()
        if t.ndim != 1 or t.size < 2:
            raise ValueError("mesh needs at least two nodes")
        if t[0] != 0.0:
            raise ValueError("mesh must start at 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "nodes", t)

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def kmax(self) -> float:
        return float(self.steps.max())

    def backward_ratio(self) -> float:
        """max_n k_n / k_{n+1}; 1 for a single element."""
        k = self.steps
        if k.size < 2:
            return 1.0
        return float(np.max(k[:-1] / k[1:]))

    def element_of(self, t) -> np.ndarray:
        """0-based index of the element containing t (right-closed at T)."""
        idx = np.searchsorted(self.nodes, np.asarray(t, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.N - 1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t\n")
        for v in self.nodes:
            buf.write(f"{v:.17g}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TemporalMesh":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if lines[0] != "t":
            raise ValueError("expected header 't'")
        return cls(np.array([float(v) for v in lines[1:]]))


def uniform_mesh(T: float, N: int) -> TemporalMesh:
    if N < 1 or T <= 0:
        raise ValueError("need T > 0 and N >= 1")
    return TemporalMesh(np.linspace(0.0, T, N + 1))


def random_mesh(T: float, n_inner: int, seed: int) -> TemporalMesh:
    """Uniformly distributed inner nodes (numpy PCG64 stream, so reproducible across platforms)."""
    rng = np.random.default_rng(seed)
    inner = np.sort(rng.uniform(0.0, T, size=n_inner))
    t = np.concatenate([[0.0], inner, [T]])
    keep = np.concatenate([[True], np.diff(t) > T * 1e-12])
    t = t[keep]
    if t[-1] != T:
        t[-1] = T
    return TemporalMesh(t)


def refine_to_ratio(mesh: TemporalMesh, sigma_max: float) -> TemporalMesh:
    """Bisect any element that is more than sigma_max times longer than its successor."""
    if sigma_max < 1:
        raise ValueError("sigma_max must be >= 1")
    t = list(mesh.nodes)
    while True:
        k = np.diff(t)
        bad = np.nonzero(k[:-1] > sigma_max * k[1:])[0]
        if bad.size == 0:
            return TemporalMesh(np.array(t))
        # bisect from the right so earlier indices stay valid
        for n in bad[::-1]:
            t.insert(n + 1, 0.5 * (t[n] + t[n + 1]))
