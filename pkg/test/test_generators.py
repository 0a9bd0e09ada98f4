import pytest

import networkx as nx
import numpy as np

from fesparsify.errors import ModelError
from fesparsify.generators import graph_spec, laplacian_assembly, bar_layout, poisson_box, \
        generate, cst_stiffness, rigid_body_basis, tetrahedron_stiffness, plane_stress_matrix, \
        RANDOM_WEIGHT_RANGE
from fesparsify.leverage import leverage_table, within_bounds
from fesparsify.model import assemble
from fesparsify.types import MeshSpec


def centroids(a):
    k = a.dofs_per_node
    return np.array([a.coordinates[elem.nodes[::k] // k].mean(axis=0) for elem in a.elements])


def test_triangle_laplacian():
    a = laplacian_assembly(graph_spec('cycle', n=3))
    assert(a.n == 3 and a.m == 3 and a.r == 1 and a.d == 1)
    np.testing.assert_array_equal(assemble(a).toarray(), 3 * np.eye(3) - np.ones((3, 3)))


def test_bridges_have_unit_leverage():
    for family in ('path', 'star'):
        a = laplacian_assembly(graph_spec(family, n=7))
        assert(a.m == 6)
        table = leverage_table(a, 'exact-qr')
        np.testing.assert_allclose(table.taus, np.ones(6), atol=1e-12)
        assert(abs(table.total - 6.0) < 1e-10)


def test_graph_families():
    assert(len(graph_spec('complete', n=5).edges) == 10)
    g = graph_spec('grid', rows=3, cols=4)
    assert(g.n == 12)
    assert(len(g.edges) == 3 * 3 + 2 * 4)
    assert(g.coordinates.shape == (12, 2))

    with pytest.raises(ValueError):
        graph_spec('lattice', n=5)
    with pytest.raises(ValueError):
        graph_spec('path', n=1)
    with pytest.raises(ValueError):
        graph_spec('cycle', n=2)
    with pytest.raises(ValueError):
        graph_spec('grid', rows=3)


def test_random_graph():
    g = graph_spec('random', n=30, seed=9)
    G = nx.Graph()
    G.add_nodes_from(range(g.n))
    G.add_edges_from((u, v) for u, v, _ in g.edges)
    assert(nx.is_connected(G))
    weights = np.array([w for _, _, w in g.edges])
    assert(np.all(weights >= RANDOM_WEIGHT_RANGE[0]) and np.all(weights <= RANDOM_WEIGHT_RANGE[1]))

    again = graph_spec('random', n=30, seed=9)
    assert(again.edges == g.edges)
    assert(graph_spec('random', n=30, seed=10).edges != g.edges)


def test_laplacian_errors_and_pin():
    from fesparsify.types import GraphSpec
    with pytest.raises(ModelError):
        laplacian_assembly(GraphSpec(2, [(0, 0, 1.0)]))
    with pytest.raises(ModelError):
        laplacian_assembly(GraphSpec(2, [(0, 1, 0.0)]))
    with pytest.raises(ModelError):
        laplacian_assembly(GraphSpec(2, [(0, 2, 1.0)]))

    a = laplacian_assembly(graph_spec('path', n=4), pin=True)
    assert(a.n == 3 and a.d == 0)
    assert(np.linalg.matrix_rank(assemble(a).toarray()) == 3)


def test_cst_single_triangle():
    points = np.array([[0.0, 0.0], [1.0, 0.2], [0.3, 0.9]])
    K = cst_stiffness(points, 2.0, 0.25)
    np.testing.assert_allclose(K, K.T, atol=1e-14)
    values = np.linalg.eigvalsh(K)
    assert(np.sum(values > 1e-10 * values[-1]) == 3)
    np.testing.assert_allclose(K @ rigid_body_basis(points), np.zeros((6, 3)), atol=1e-12)

    with pytest.raises(ModelError):
        cst_stiffness([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]], 1.0)
    with pytest.raises(ValueError):
        plane_stress_matrix(1.0, 0.5)
    with pytest.raises(ValueError):
        plane_stress_matrix(0.0, 0.3)


def test_elasticity_bars():
    a = generate(bar_layout(bars=2, ratio=1000.0))
    assert(a.r == 3 and a.d == 3)
    assert(a.dofs_per_node == 2)
    assert(a.n == 2 * len(a.coordinates))
    # 4 x 2 units at 4 cells per unit, two triangles per cell.
    assert(a.m == 2 * 16 * 8)
    assert(a.n == 2 * 17 * 9)
    K = assemble(a)
    assert(np.linalg.norm(K @ a.null_basis) < 1e-8 * np.abs(K).max())
    assert(any('materials' in comment for comment in a.comments))


def test_elasticity_homogeneous_interior():
    a = generate(bar_layout(bars=1, cells=4))
    taus = leverage_table(a, 'exact-qr').taus
    assert(within_bounds(a, float(np.sum(taus))))

    coords = a.coordinates
    xmax = coords[:, 0].max()
    ymax = coords[:, 1].max()
    interior = []
    for elem in a.elements:
        pts = coords[elem.nodes[::2] // 2]
        if np.all((pts[:, 0] > 0) & (pts[:, 0] < xmax) & (pts[:, 1] > 0) & (pts[:, 1] < ymax)):
            interior.append(taus[elem.id])
    assert(len(interior) > 0)
    assert(max(interior) <= 3 * min(interior))


def test_elasticity_interface_leverages():
    a = generate(bar_layout(bars=3, ratio=1000.0, cells=4))
    taus = leverage_table(a, 'exact-qr').taus
    # cell rows 4..7 form the stiff middle bar
    rows = np.floor(centroids(a)[:, 1] * 4).astype(int)
    interface = taus[(rows == 4) | (rows == 7)]
    interior = taus[(rows == 5) | (rows == 6)]
    assert(np.median(interface) > 1.5 * np.median(interior))


def test_elasticity_pinned():
    a = generate(bar_layout(bars=1, cells=2, pin=True))
    assert(a.d == 0)
    assert(a.n == 2 * 9 * 3 - 3)
    assert(np.linalg.matrix_rank(assemble(a).toarray()) == a.n)


def test_elasticity_errors():
    with pytest.raises(ValueError):
        bar_layout(bars=0)
    with pytest.raises(ValueError):
        bar_layout(ratio=-1.0)
    with pytest.raises(ValueError):
        generate(MeshSpec('elasticity-bars-2d', {'rectangles': [(0.0, 0.0, 1.0, 1.0)]}, {}))
    with pytest.raises(ValueError):
        generate(MeshSpec('membrane', {}, {}))


def test_tetrahedron():
    regular = np.array([[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]])
    K = tetrahedron_stiffness(regular)
    np.testing.assert_allclose(K.sum(axis=1), np.zeros(4), atol=1e-14)
    values = np.linalg.eigvalsh(K)
    assert(np.sum(values > 1e-10 * values[-1]) == 3)
    np.testing.assert_allclose(tetrahedron_stiffness(regular, 5.0), 5.0 * K)

    with pytest.raises(ModelError):
        tetrahedron_stiffness([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]])

    shifted = 0.5 * regular + np.array([2.0, 0.0, 1.0])
    batch = tetrahedron_stiffness(np.stack([regular, shifted]), [1.0, 3.0])
    assert(batch.shape == (2, 4, 4))
    np.testing.assert_allclose(batch[0], K)
    np.testing.assert_allclose(batch[1], tetrahedron_stiffness(shifted, 3.0))

    flat = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]]
    with pytest.raises(ModelError):
        tetrahedron_stiffness(np.stack([regular, flat]))
    with pytest.raises(ValueError):
        tetrahedron_stiffness(np.ones((3, 3)))


def test_poisson_box():
    a = generate(poisson_box(box=4))
    assert(a.n == 5 ** 3)
    assert(a.m == 6 * 4 ** 3)
    assert(a.r == 3 and a.d == 1)
    K = assemble(a)
    np.testing.assert_allclose(K @ np.ones(a.n), np.zeros(a.n), atol=1e-9)
    diag = K.diagonal()
    assert(diag.max() > 100 * diag.min())


def test_poisson_uniform_bounds():
    a = generate(poisson_box(box=4, ball_radius=0.0))
    total = leverage_table(a, 'exact-qr').total
    assert(total <= a.n - 1 + 1e-8)
    assert(total >= (a.n - 1) / 3.0 - 1e-8)


def test_poisson_ball_surface_leverages():
    a = generate(poisson_box(box=8))
    taus = leverage_table(a, 'exact-qr').taus
    r = np.linalg.norm(centroids(a) - 0.5, axis=1)
    shell = taus[(r >= 0.25) & (r < 0.3)]
    core = taus[r < 0.15]
    assert(len(shell) > 0 and len(core) > 0)
    assert(np.median(shell) > 2 * np.median(core))


def test_poisson_errors():
    with pytest.raises(ValueError):
        generate(poisson_box(box=3))
    with pytest.raises(ValueError):
        generate(poisson_box(ball_radius=0.5))
    with pytest.raises(ValueError):
        generate(poisson_box(ball_conductivity=0.0))

    a = generate(poisson_box(box=4, pin=True))
    assert(a.n == 5 ** 3 - 1 and a.d == 0)
