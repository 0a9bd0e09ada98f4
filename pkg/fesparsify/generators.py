'''
Canned assemblies: weighted graph Laplacians, plane-stress triangle meshes of unions of
axis-aligned bars and a tetrahedral Poisson model of a ball inside a box.
'''
import itertools
import logging

import networkx as nx
import numpy as np

from fesparsify.errors import ModelError
from fesparsify.model import restrict_dofs
from fesparsify.types import Assembly, ElementMatrix, GraphSpec, MeshSpec


logger = logging.getLogger(__name__)


GRAPH_FAMILIES = ('path', 'cycle', 'star', 'complete', 'grid', 'random')

ELASTICITY_FAMILY = 'elasticity-bars-2d'
POISSON_FAMILY = 'poisson-ball-in-box-3d'

DEFAULT_NU = 0.3
DEFAULT_THICKNESS = 1.0
DEFAULT_RATIO = 1e3
DEFAULT_BALL_CONDUCTIVITY = 1e3

RANDOM_WEIGHT_RANGE = (0.1, 10.0)

# Smallest accepted |area| or |volume| relative to the cell size.
DEGENERATE_REL_TOL = 1e-12


def graph_spec(family, n=None, rows=None, cols=None, seed=0, extra_edges=None):
    '''
    Named graph families. All but 'random' have unit weights; 'random' is a connected
    graph (random recursive tree plus extra edges) with weights uniform in [0.1, 10].
    '''
    coords = None
    if family == 'grid':
        if not rows or not cols or rows < 1 or cols < 1:
            raise ValueError('Grid graphs need positive rows and cols.')
        G = nx.grid_2d_graph(rows, cols)
        mapping = {(i, j): i * cols + j for i, j in G.nodes}
        G = nx.relabel_nodes(G, mapping)
        n = rows * cols
        coords = np.array([(j, i) for i in range(rows) for j in range(cols)], dtype=float)
    else:
        if n is None or n < 2:
            raise ValueError('Graph family "{}" needs n >= 2, got {}.'.format(family, n))
        if family == 'path':
            G = nx.path_graph(n)
        elif family == 'cycle':
            if n < 3:
                raise ValueError('A cycle needs n >= 3, got {}.'.format(n))
            G = nx.cycle_graph(n)
        elif family == 'star':
            G = nx.star_graph(n - 1)
        elif family == 'complete':
            G = nx.complete_graph(n)
        elif family == 'random':
            return _random_graph_spec(n, seed, extra_edges)
        else:
            raise ValueError('Unknown graph family "{}". Choose from {}.'.format(
                                family, ', '.join(GRAPH_FAMILIES)))

    edges = sorted((min(u, v), max(u, v)) for u, v in G.edges)
    return GraphSpec(n, [(u, v, 1.0) for u, v in edges], coords)


def _random_graph_spec(n, seed, extra_edges):
    rng = np.random.default_rng(seed)
    G = nx.Graph()
    G.add_nodes_from(range(n))
    for i in range(1, n):
        G.add_edge(int(rng.integers(0, i)), i)
    if extra_edges is None:
        extra_edges = n
    for _ in range(extra_edges):
        u, v = rng.choice(n, size=2, replace=False)
        G.add_edge(int(u), int(v))
    edges = sorted((min(u, v), max(u, v)) for u, v in G.edges)
    weights = rng.uniform(*RANDOM_WEIGHT_RANGE, size=len(edges))
    return GraphSpec(n, [(u, v, w) for (u, v), w in zip(edges, weights)])


def laplacian_assembly(g, pin=False):
    '''
    One element w (e_u - e_v)(e_u - e_v)^T per edge, factor sqrt(w) (e_u - e_v)^T,
    null basis the all-ones vector. With pin, node 0 is grounded.
    '''
    elements = []
    for idx, (u, v, w) in enumerate(g.edges):
        if u == v:
            raise ModelError('Edge {} is a self-loop on node {}.'.format(idx, u))
        if not w > 0:
            raise ModelError('Edge {} has non-positive weight {}.'.format(idx, w))
        if not (0 <= u < g.n and 0 <= v < g.n):
            raise ModelError('Edge {} references a node outside [0, {}).'.format(idx, g.n))
        u, v = min(u, v), max(u, v)
        k = w * np.array([[1.0, -1.0], [-1.0, 1.0]])
        factor = np.sqrt(w) * np.array([[1.0, -1.0]])
        elements.append(ElementMatrix(idx, [u, v], k, factor))

    a = Assembly(g.n, elements, np.ones((g.n, 1)), 1, dofs_per_node=1,
                 coordinates=g.coordinates,
                 comments=['graph Laplacian, {} nodes, {} edges'.format(g.n, len(elements))])
    logger.info('generated %r', a)
    if pin:
        return restrict_dofs(a, [0])
    return a


def bar_layout(bars=2, ratio=DEFAULT_RATIO, length=4.0, height=1.0, cells=4, nu=DEFAULT_NU,
               pin=False):
    '''
    Horizontal bars of size length x height stacked vertically, with Young's modulus
    alternating between 1 and ratio. cells is the number of grid cells per unit length.
    '''
    if bars < 1:
        raise ValueError('Need at least one bar, got {}.'.format(bars))
    if not ratio > 0:
        raise ValueError('Modulus ratio must be positive, got {}.'.format(ratio))
    rectangles = [(0.0, k * height, length, (k + 1) * height) for k in range(bars)]
    materials = {k: (1.0 if k % 2 == 0 else float(ratio), nu) for k in range(bars)}
    return MeshSpec(ELASTICITY_FAMILY, {'cells': cells, 'rectangles': rectangles}, materials, pin)


def poisson_box(box=8, ball_radius=0.3, ball_conductivity=DEFAULT_BALL_CONDUCTIVITY,
                box_conductivity=1.0, ball_center=(0.5, 0.5, 0.5), pin=False):
    resolution = {'box': box, 'ball_radius': ball_radius, 'ball_center': tuple(ball_center)}
    materials = {'ball': float(ball_conductivity), 'box': float(box_conductivity)}
    return MeshSpec(POISSON_FAMILY, resolution, materials, pin)


def generate(spec):
    if spec.family == ELASTICITY_FAMILY:
        return elasticity2d_assembly(spec)
    if spec.family == POISSON_FAMILY:
        return poisson3d_assembly(spec)
    raise ValueError('Unknown mesh family "{}".'.format(spec.family))


def plane_stress_matrix(E, nu):
    if not E > 0:
        raise ValueError("Young's modulus must be positive, got {}.".format(E))
    if not -1 < nu < 0.5:
        raise ValueError('Poisson ratio must lie in (-1, 0.5), got {}.'.format(nu))
    return E / (1.0 - nu ** 2) * np.array([
        [1.0, nu, 0.0],
        [nu, 1.0, 0.0],
        [0.0, 0.0, (1.0 - nu) / 2.0],
    ])


def cst_stiffness(points, E, nu=DEFAULT_NU, thickness=DEFAULT_THICKNESS):
    '''
    6 x 6 constant strain triangle stiffness t A B^T D B, DOFs ordered (u1, v1, u2, v2,
    u3, v3).
    '''
    p = np.asarray(points, dtype=float)
    x = p[:, 0]
    y = p[:, 1]
    area = 0.5 * ((x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0]))
    scale = max(np.ptp(x), np.ptp(y)) ** 2
    if abs(area) <= DEGENERATE_REL_TOL * max(scale, 1e-300):
        raise ModelError('Degenerate triangle with area {}.'.format(area))
    b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]])
    c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]])
    B = np.zeros((3, 6))
    B[0, 0::2] = b
    B[1, 1::2] = c
    B[2, 0::2] = c
    B[2, 1::2] = b
    B /= 2.0 * area
    return thickness * abs(area) * B.T @ plane_stress_matrix(E, nu) @ B


def rigid_body_basis(coords):
    '''
    2 n x 3 basis of planar rigid motions: rows (1, 0, -y_i) and (0, 1, x_i).
    '''
    coords = np.asarray(coords, dtype=float)
    N = np.zeros((2 * len(coords), 3))
    N[0::2, 0] = 1.0
    N[1::2, 1] = 1.0
    N[0::2, 2] = -coords[:, 1]
    N[1::2, 2] = coords[:, 0]
    return N


def elasticity2d_assembly(spec):
    '''
    Plane-stress CST mesh of a union of axis-aligned rectangles. Every grid cell whose
    center lies in a rectangle is split into two triangles along its rising diagonal
    and takes the material of the first rectangle containing it.
    '''
    cells = spec.resolution.get('cells', 4)
    rectangles = spec.resolution['rectangles']
    if cells < 1:
        raise ValueError('Need at least one cell per unit length, got {}.'.format(cells))
    for region in range(len(rectangles)):
        if region not in spec.materials:
            raise ValueError('No material given for bar {}.'.format(region))
    h = 1.0 / cells

    rects = np.array(rectangles, dtype=float)
    if np.any(rects[:, 2] <= rects[:, 0]) or np.any(rects[:, 3] <= rects[:, 1]):
        raise ValueError('Bars must have positive width and height.')
    ix0 = int(round(rects[:, 0].min() * cells))
    iy0 = int(round(rects[:, 1].min() * cells))
    nx_ = int(round(rects[:, 2].max() * cells)) - ix0
    ny_ = int(round(rects[:, 3].max() * cells)) - iy0

    # Cell (i, j) belongs to the first rectangle containing its center.
    cell_region = -np.ones((nx_, ny_), dtype=np.int64)
    cx = (ix0 + np.arange(nx_) + 0.5) * h
    cy = (iy0 + np.arange(ny_) + 0.5) * h
    for region, (x0, y0, x1, y1) in enumerate(rects):
        inside = (cx[:, None] > x0) & (cx[:, None] < x1) & (cy[None, :] > y0) & (cy[None, :] < y1)
        cell_region[inside & (cell_region < 0)] = region

    # Grid corners used by some cell, numbered row by row.
    used = np.zeros((nx_ + 1, ny_ + 1), dtype=bool)
    ci, cj = np.nonzero(cell_region >= 0)
    for di, dj in itertools.product((0, 1), repeat=2):
        used[ci + di, cj + dj] = True
    node_id = -np.ones((nx_ + 1, ny_ + 1), dtype=np.int64)
    order = [(i, j) for j in range(ny_ + 1) for i in range(nx_ + 1) if used[i, j]]
    coords = np.empty((len(order), 2))
    for k, (i, j) in enumerate(order):
        node_id[i, j] = k
        coords[k] = ((ix0 + i) * h, (iy0 + j) * h)

    elements = []
    for j in range(ny_):
        for i in range(nx_):
            region = cell_region[i, j]
            if region < 0:
                continue
            E, nu = spec.materials[region]
            corners = [node_id[i, j], node_id[i + 1, j], node_id[i + 1, j + 1], node_id[i, j + 1]]
            for tri in ((corners[0], corners[1], corners[2]), (corners[0], corners[2], corners[3])):
                elements.append(_triangle_element(len(elements), tri, coords, E, nu))

    n = 2 * len(coords)
    thickness = DEFAULT_THICKNESS
    comments = [
        '2D linear elasticity, plane stress, CST triangles, thickness {}'.format(thickness),
        'materials (E, nu) per bar: {}'.format(
            ', '.join('{}: {}'.format(k, spec.materials[k]) for k in range(len(rectangles)))),
    ]
    a = Assembly(n, elements, rigid_body_basis(coords), 3, dofs_per_node=2, coordinates=coords,
                 comments=comments)
    logger.info('generated %r', a)
    if spec.pin:
        return restrict_dofs(a, _elasticity_pins(coords))
    return a


def _triangle_element(idx, tri, coords, E, nu):
    tri = sorted(int(t) for t in tri)
    K = cst_stiffness(coords[tri], E, nu)
    dofs = [2 * t + c for t in tri for c in (0, 1)]
    return ElementMatrix(idx, dofs, K)


def _elasticity_pins(coords):
    # Both DOFs of the lowest-leftmost node and the vertical DOF of the lowest-rightmost
    # node: three constraints, no element touches both.
    bottom = np.flatnonzero(coords[:, 1] == coords[:, 1].min())
    p0 = bottom[np.argmin(coords[bottom, 0])]
    p1 = bottom[np.argmax(coords[bottom, 0])]
    if p0 == p1:
        raise ModelError('Cannot pin a mesh whose bottom row has a single node.')
    return [2 * p0, 2 * p0 + 1, 2 * p1 + 1]


def tetrahedron_stiffness(points, conductivity=1.0):
    '''
    Linear tetrahedron matrices k V G G^T with G the gradients of the barycentric
    coordinates. points is a single 4 x 3 array or a stack of shape (t, 4, 3), with one
    conductivity per tetrahedron or a shared one.
    '''
    P = np.asarray(points, dtype=float)
    single = P.ndim == 2
    if single:
        P = P[None]
    if P.shape[1:] != (4, 3):
        raise ValueError('Expected tetrahedra of shape (4, 3), got {}.'.format(P.shape[1:]))
    X = np.concatenate([np.ones(P.shape[:2] + (1,)), P], axis=2)
    dets = np.linalg.det(X)
    scale = np.maximum(np.ptp(P, axis=1).max(axis=1), 1e-100) ** 3
    bad = np.flatnonzero(np.abs(dets) <= DEGENERATE_REL_TOL * scale)
    if len(bad):
        raise ModelError('Degenerate tetrahedron {} with volume {}.'.format(
                            int(bad[0]), dets[bad[0]] / 6.0))
    G = np.transpose(np.linalg.inv(X)[:, 1:, :], (0, 2, 1))
    k = np.broadcast_to(np.asarray(conductivity, dtype=float), dets.shape)
    Ks = (k * np.abs(dets) / 6.0)[:, None, None] * (G @ np.transpose(G, (0, 2, 1)))
    return Ks[0] if single else Ks


# Kuhn split of the unit cube: one tetrahedron per axis permutation, all sharing the
# main diagonal, so neighboring cubes match on their faces.
def _kuhn_paths():
    paths = []
    for perm in itertools.permutations(range(3)):
        corner = np.zeros(3, dtype=np.int64)
        path = [corner.copy()]
        for axis in perm:
            corner[axis] = 1
            path.append(corner.copy())
        paths.append(np.array(path))
    return paths


KUHN_PATHS = _kuhn_paths()


def poisson3d_assembly(spec):
    '''
    Linear tetrahedra on the unit cube split into box^3 cubes, 6 tetrahedra each. The
    conductivity of a tetrahedron is the ball's when its centroid lies inside the ball.
    '''
    s = spec.resolution.get('box', 8)
    radius = spec.resolution.get('ball_radius', 0.0)
    center = np.asarray(spec.resolution.get('ball_center', (0.5, 0.5, 0.5)), dtype=float)
    k_ball = spec.materials.get('ball', DEFAULT_BALL_CONDUCTIVITY)
    k_box = spec.materials.get('box', 1.0)
    if s < 4:
        raise ValueError('Box resolution must be at least 4 per axis, got {}.'.format(s))
    if not k_ball > 0 or not k_box > 0:
        raise ValueError('Conductivities must be positive.')
    if radius < 0 or (radius > 0 and (np.any(center - radius <= 0) or np.any(center + radius >= 1))):
        raise ValueError('The ball (center {}, radius {}) must lie strictly inside the box.'.format(
                            center.tolist(), radius))

    h = 1.0 / s
    side = s + 1
    grid = np.array([(i, j, k) for k in range(side) for j in range(side) for i in range(side)])
    coords = grid * h

    cubes = np.array([(i, j, k) for k in range(s) for j in range(s) for i in range(s)])
    tets = []
    for path in KUHN_PATHS:
        verts = cubes[:, None, :] + path[None, :, :]
        tets.append(verts[:, :, 0] + side * (verts[:, :, 1] + side * verts[:, :, 2]))
    tets = np.sort(np.stack(tets, axis=1).reshape(-1, 4), axis=1)

    P = coords[tets]
    centroids = P.mean(axis=1)
    in_ball = np.linalg.norm(centroids - center, axis=1) < radius
    Ks = tetrahedron_stiffness(P, np.where(in_ball, k_ball, k_box))

    elements = [ElementMatrix(idx, tet, K) for idx, (tet, K) in enumerate(zip(tets, Ks))]
    n = len(coords)
    comments = [
        '3D Poisson, linear tetrahedra, box {0}x{0}x{0} cubes of 6 tetrahedra'.format(s),
        'ball center {} radius {} conductivity {}, box conductivity {}'.format(
            center.tolist(), radius, k_ball, k_box),
    ]
    a = Assembly(n, elements, np.ones((n, 1)), 3, dofs_per_node=1, coordinates=coords,
                 comments=comments)
    logger.info('generated %r (%d tetrahedra in the ball)', a, int(np.count_nonzero(in_ball)))
    if spec.pin:
        return restrict_dofs(a, [0])
    return a
