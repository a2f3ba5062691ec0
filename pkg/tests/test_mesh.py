import numpy as np
import pytest
from hypothesis import given, strategies as st

from stmoments.mesh import TemporalMesh, random_mesh, refine_to_ratio, uniform_mesh


def test_uniform_examples():
    assert np.array_equal(uniform_mesh(1, 2).nodes, [0, 0.5, 1])
    assert np.allclose(uniform_mesh(2, 4).steps, 0.5)
    m = uniform_mesh(1, 1)
    assert np.array_equal(m.nodes, [0, 1]) and m.backward_ratio() == 1


@pytest.mark.parametrize("T,N", [(0, 3), (-1, 3), (1, 0)])
def test_uniform_rejects(T, N):
    with pytest.raises(ValueError):
        uniform_mesh(T, N)


def test_mesh_validation():
    for bad in ([0.0], [0.1, 1.0], [0.0, 0.5, 0.5, 1.0], [0.0, 0.6, 0.4]):
        with pytest.raises(ValueError):
            TemporalMesh(np.array(bad))


def test_random_mesh():
    assert np.array_equal(random_mesh(1, 0, 7).nodes, [0, 1])
    m = random_mesh(1, 127, 42)
    assert m.nodes.size == 129
    assert m.nodes[0] == 0 and m.nodes[-1] == 1
    assert np.array_equal(m.nodes, random_mesh(1, 127, 42).nodes)
    assert not np.array_equal(m.nodes, random_mesh(1, 127, 43).nodes)


def test_backward_ratio_examples():
    assert TemporalMesh(np.array([0, 0.5, 0.75, 1.0])).backward_ratio() == pytest.approx(2)
    assert TemporalMesh(np.array([0, 0.1, 0.6, 1.0])).backward_ratio() == pytest.approx(1.25)
    assert uniform_mesh(3, 17).backward_ratio() == pytest.approx(1)


def test_refine_examples():
    u = uniform_mesh(1, 8)
    assert np.array_equal(refine_to_ratio(u, 3).nodes, u.nodes)
    m = TemporalMesh(np.array([0, 0.8, 0.9, 1.0]))
    assert m.backward_ratio() == pytest.approx(8)
    r = refine_to_ratio(m, 3)
    assert r.backward_ratio() <= 3
    assert np.all(np.isin(m.nodes, r.nodes))
    with pytest.raises(ValueError):
        refine_to_ratio(m, 0.5)


@pytest.mark.parametrize("seed", range(5))
def test_refined_random_mesh_size(seed):
    r = refine_to_ratio(random_mesh(1, 127, seed), 3)
    assert r.backward_ratio() <= 3
    assert 0.85 * 210 <= r.nodes.size <= 1.15 * 210


mesh_nodes = st.lists(st.floats(0.001, 0.999), min_size=0, max_size=30).map(
    lambda xs: TemporalMesh(np.unique(np.concatenate([[0.0], np.round(xs, 3), [1.0]]))))


@given(mesh_nodes, st.floats(1.5, 5.0))
def test_refine_bound_and_idempotent(m, s):
    r = refine_to_ratio(m, s)
    assert r.backward_ratio() <= s
    assert np.all(np.isin(m.nodes, r.nodes))
    assert np.array_equal(refine_to_ratio(r, s).nodes, r.nodes)


@given(st.floats(0.1, 10), st.integers(1, 500))
def test_uniform_bit_identical(T, N):
    assert uniform_mesh(T, N).nodes.tobytes() == uniform_mesh(T, N).nodes.tobytes()


@given(mesh_nodes)
def test_csv_roundtrip(m):
    assert np.array_equal(TemporalMesh.from_csv(m.to_csv()).nodes, m.nodes)


def test_refine_sigma_one():
    m = TemporalMesh(np.array([0, 0.5, 0.8, 1.0]))
    r = refine_to_ratio(m, 1.0)
    assert r.backward_ratio() <= 1.0
    assert np.all(np.isin(m.nodes, r.nodes))


def test_element_of():
    m = uniform_mesh(1, 4)
    assert list(m.element_of([0, 0.1, 0.25, 0.99, 1.0])) == [0, 0, 1, 3, 3]
