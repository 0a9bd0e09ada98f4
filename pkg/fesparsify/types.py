import math

import numpy as np
import scipy.sparse as sp

from fesparsify.errors import ModelError
import fesparsify.utils as utils


# TODO: Pinned models keep element null spaces larger than the global one; give them
#       a separate Assembly subclass once leverages on them are needed.


LEVERAGE_METHODS = ('exact-schur', 'exact-qr', 'local', 'removal')
EXACT_METHODS = ('exact-schur', 'exact-qr', 'removal')
SAMPLING_MODES = ('exact', 'approx', 'upper', 'uniform')

# null space dimension -> DOFs per mesh node
RIGID_BODY_BLOCKS = {3: 2, 6: 3}


class EigDecomposition:
    '''
    Values in descending order. The boolean mask `kept` marks the values above the
    rank tolerance; range and null bases select their columns through it.
    '''

    def __init__(self, values, vectors, rank, tolerance_used, kept=None):
        self.values = values
        self.vectors = vectors
        self.rank = rank
        self.tolerance_used = tolerance_used
        if kept is None:
            kept = np.arange(len(values)) < rank
        self.kept = np.asarray(kept, dtype=bool)

    @property
    def order(self):
        return len(self.values)

    def range_values(self):
        return self.values[self.kept]

    def range_basis(self):
        return self.vectors[:, self.kept]

    def null_basis(self):
        return self.vectors[:, ~self.kept]


class PencilSpectrum:
    '''
    Finite generalized eigenvalues of a semidefinite pencil (A, B) with a common null
    space of dimension common_null_dim.
    '''

    def __init__(self, finite_eigenvalues, common_null_dim):
        self.finite_eigenvalues = np.sort(np.asarray(finite_eigenvalues, dtype=float))
        self.common_null_dim = common_null_dim

    @property
    def order(self):
        return len(self.finite_eigenvalues) + self.common_null_dim

    @property
    def lambda_max(self):
        return float(self.finite_eigenvalues[-1])

    @property
    def lambda_min(self):
        return float(self.finite_eigenvalues[0])

    @property
    def condition(self):
        return self.lambda_max / self.lambda_min

    @property
    def trace(self):
        return float(np.sum(self.finite_eigenvalues))


class ElementMatrix:

    def __init__(self, id, nodes, k_tilde, factor=None):
        self.id = int(id)
        self.nodes = np.asarray(nodes, dtype=np.int64)
        self.k_tilde = utils.as_symmetric_dense(k_tilde)
        self.factor = None if factor is None else np.asarray(factor, dtype=float)

        if self.nodes.ndim != 1 or len(self.nodes) != self.k_tilde.shape[0]:
            raise ModelError('Element {} lists {} nodes for a matrix of order {}.'.format(
                                self.id, self.nodes.size, self.k_tilde.shape[0]))
        steps = np.diff(self.nodes)
        if np.any(steps == 0):
            raise ModelError('Element {} has duplicate node indices.'.format(self.id))
        if np.any(steps < 0):
            raise ModelError('Element {} node indices are not ascending.'.format(self.id))

    @property
    def n_e(self):
        return len(self.nodes)

    def with_factor(self, factor):
        return ElementMatrix(self.id, self.nodes, self.k_tilde, factor)

    def scaled(self, c):
        factor = None if self.factor is None else math.sqrt(c) * self.factor
        return ElementMatrix(self.id, self.nodes, c * self.k_tilde, factor)

    def __repr__(self):
        return 'ElementMatrix(id={}, nodes={})'.format(self.id, self.nodes.tolist())


class Assembly:
    '''
    A finite element model: n global degrees of freedom, a list of element matrices
    sharing rank r, and a declared null space basis N (n x d).

    dofs_per_node groups consecutive indices into mesh nodes (2 for 2D elasticity);
    when not given it is inferred from the element node sets.
    '''

    def __init__(self, n, elements, null_basis, r, d=None, dofs_per_node=None,
                 coordinates=None, comments=None, validate=True):
        self.n = int(n)
        self.elements = list(elements)
        null_basis = np.asarray(null_basis, dtype=float)
        if null_basis.ndim == 1:
            null_basis = null_basis.reshape(-1, 1)
        if null_basis.size == 0:
            null_basis = np.zeros((self.n, 0))
        self.null_basis = null_basis
        self.r = int(r)
        self.d = int(null_basis.shape[1] if d is None else d)
        self.dofs_per_node = dofs_per_node or infer_dofs_per_node(self.n, self.elements, self.d)
        self.coordinates = coordinates
        self.comments = list(comments or [])
        self._stiffness = None

        if validate:
            self.validate()

    @property
    def m(self):
        return len(self.elements)

    def element(self, e):
        return self.elements[e]

    def validate(self):
        if self.n < 1:
            raise ModelError('Assembly dimension must be positive, got {}.'.format(self.n))
        if self.null_basis.shape != (self.n, self.d):
            raise ModelError('Null basis has shape {}, expected ({}, {}).'.format(
                                self.null_basis.shape, self.n, self.d))
        if self.d > 0 and np.linalg.matrix_rank(self.null_basis) != self.d:
            raise ModelError('Null basis does not have full column rank {}.'.format(self.d))

        for idx, elem in enumerate(self.elements):
            if elem.id != idx:
                raise ModelError('Element at position {} has id {}.'.format(idx, elem.id))
            if elem.n_e and (elem.nodes[0] < 0 or elem.nodes[-1] >= self.n):
                raise ModelError('Element {} references a node outside [0, {}).'.format(elem.id, self.n))

        bad = []
        for ids, values in element_spectra(self.elements):
            lam_max = np.maximum(np.max(np.abs(values), axis=1), utils.FLOOR_EPS)
            not_psd = values[:, 0] < -utils.PSD_REL_TOL * lam_max
            ranks = np.sum(values > utils.RANK_REL_TOL * lam_max[:, None], axis=1)
            for e, neg, rank in zip(ids, not_psd, ranks):
                if neg:
                    bad.append('element {} is not positive semidefinite'.format(e))
                elif rank != self.r:
                    bad.append('element {} has rank {}, expected {}'.format(e, rank, self.r))
        if bad:
            raise ModelError('; '.join(bad))

    def __repr__(self):
        return 'Assembly(n={}, m={}, r={}, d={})'.format(self.n, self.m, self.r, self.d)


def element_spectra(elements):
    '''
    Yields (element ids, ascending eigenvalues) per group of equally sized elements,
    one batched eigensolve per group.
    '''
    groups = dict()
    for elem in elements:
        groups.setdefault(elem.n_e, []).append(elem)
    for n_e in sorted(groups):
        group = groups[n_e]
        stack = np.stack([elem.k_tilde for elem in group])
        yield [elem.id for elem in group], np.linalg.eigvalsh(stack)


def infer_dofs_per_node(n, elements, d):
    '''
    Rigid-body null spaces (d = 3 in 2D, d = 6 in 3D) suggest vector problems with 2 or
    3 consecutive DOFs per mesh node; the guess is kept only if every element covers
    whole aligned blocks.
    '''
    b = RIGID_BODY_BLOCKS.get(d, 1)
    if b == 1 or n % b or not elements:
        return 1
    for elem in elements:
        nodes = elem.nodes
        if len(nodes) % b or np.any(nodes[::b] % b) or \
                np.any(nodes.reshape(-1, b) - nodes[::b, None] != np.arange(b)):
            return 1
    return b


class WellFormedReport:

    def __init__(self, nullspace_ok, compatibility_ok, minimal_rank_ok, diagnostics):
        self.nullspace_ok = nullspace_ok
        self.compatibility_ok = compatibility_ok
        self.minimal_rank_ok = minimal_rank_ok
        self.diagnostics = diagnostics

    @property
    def ok(self):
        return self.nullspace_ok and self.compatibility_ok and self.minimal_rank_ok

    def to_text(self):
        lines = [
            'nullspace_ok: {}'.format(self.nullspace_ok),
            'compatibility_ok: {}'.format(self.compatibility_ok),
            'minimal_rank_ok: {}'.format(self.minimal_rank_ok),
        ]
        for finding in self.diagnostics:
            lines.append('- {}'.format(finding))
        lines.append('well-formed: {}'.format('yes' if self.ok else 'no'))
        return '\n'.join(lines)


class RigidityGraph:

    def __init__(self, m, adjacency, min_shared, matrix=None):
        self.m = m
        self.adjacency = adjacency
        self.min_shared = min_shared
        self.matrix = matrix

    def neighbors(self, e):
        return self.adjacency[e]


class EffectiveStiffness:

    def __init__(self, element_id, matrix):
        self.element_id = element_id
        self.matrix = matrix


class LeverageRecord:

    def __init__(self, element_id, tau, method, radius=None, submodel_nodes=None):
        self.element_id = element_id
        self.tau = tau
        self.method = method
        self.radius = radius
        self.submodel_nodes = submodel_nodes


class LeverageTable:

    def __init__(self, records):
        self.records = list(records)

    @property
    def taus(self):
        return np.array([rec.tau for rec in self.records], dtype=float)

    @property
    def total(self):
        return float(math.fsum(rec.tau for rec in self.records))

    @property
    def method(self):
        methods = {rec.method for rec in self.records}
        if len(methods) == 1:
            return methods.pop()
        return 'mixed'

    @property
    def radius(self):
        radii = {rec.radius for rec in self.records}
        if len(radii) == 1:
            return radii.pop()
        return None

    @property
    def is_exact(self):
        return self.method in EXACT_METHODS

    def __len__(self):
        return len(self.records)

    def summary(self):
        res = {
            'method': self.method,
            'radius': self.radius,
            'elements': len(self.records),
            'total': self.total,
        }
        sizes = [rec.submodel_nodes for rec in self.records if rec.submodel_nodes is not None]
        if sizes:
            res['submodel_nodes_mean'] = float(np.mean(sizes))
            res['submodel_nodes_max'] = int(np.max(sizes))
        return res


class SamplingPlan:

    def __init__(self, probabilities, kappa_max, delta, M, seed, mode, beta=None, total=None):
        self.probabilities = probabilities
        self.kappa_max = kappa_max
        self.delta = delta
        self.M = M
        self.seed = seed
        self.mode = mode
        self.beta = beta
        self.total = total

    @property
    def m(self):
        return len(self.probabilities)


class SampledPreconditioner:

    def __init__(self, counts, element_coeffs, matrix, rank_ok, factor=None, M=None, m=None,
                 plan=None):
        self.counts = counts
        self.element_coeffs = element_coeffs
        self.matrix = matrix
        self.rank_ok = rank_ok
        self.factor = factor
        self.M = M
        self.m = m
        self.plan = plan

    @property
    def distinct_count(self):
        return len(self.element_coeffs)

    @property
    def distinct_fraction(self):
        if not self.m:
            return 0.0
        return self.distinct_count / self.m


class CholeskyFactor:
    '''
    Band Cholesky factor of a permuted symmetric matrix. Rows and columns listed in
    `order` were factored (L is in that order); `grounded` holds the indices removed
    up front; `skipped` marks positions of `order` whose pivot fell below threshold.
    null_basis, when known, holds an orthonormal basis of the expected null space.
    '''

    def __init__(self, n, order, L, skipped, grounded, null_dim_expected, max_diag,
                 null_basis=None):
        self.n = n
        self.order = order
        self.L = L
        self.skipped = skipped
        self.grounded = grounded
        self.null_dim_expected = null_dim_expected
        self.max_diag = max_diag
        self.null_basis = null_basis
        self._solve_L = None

    @property
    def detected_rank(self):
        return int(len(self.order) - np.count_nonzero(self.skipped))

    @property
    def rank_deficit(self):
        return self.n - self.detected_rank

    @property
    def usable(self):
        return self.rank_deficit == self.null_dim_expected

    def skipped_indices(self):
        return self.order[self.skipped]

    def reconstruct(self):
        '''
        L L^T scattered back to the original indexing; grounded and skipped rows are zero.
        '''
        LLt = (self.L @ self.L.T).tocoo()
        rows = self.order[LLt.row]
        cols = self.order[LLt.col]
        return sp.csr_matrix((LLt.data, (rows, cols)), shape=(self.n, self.n))


class SolveReport:

    def __init__(self, iterations, residual_history, converged, tol, kappa_estimate=None,
                 solution=None):
        self.iterations = iterations
        self.residual_history = residual_history
        self.converged = converged
        self.tol = tol
        self.kappa_estimate = kappa_estimate
        self.solution = solution

    def bound_iterations(self, kappa):
        return bound_iterations(kappa, self.tol)


def bound_iterations(kappa, tol):
    return int(math.ceil(math.sqrt(kappa) * math.log(2.0 / tol))) + 5


class GraphSpec:

    def __init__(self, n, edges, coordinates=None):
        self.n = n
        self.edges = [(int(u), int(v), float(w)) for u, v, w in edges]
        self.coordinates = coordinates


class MeshSpec:
    '''
    family: 'elasticity-bars-2d' or 'poisson-ball-in-box-3d'.
    resolution: dict of family specific resolution parameters.
    materials: dict region -> coefficient (a (E, nu) tuple for elasticity, a
    conductivity for Poisson).
    '''

    def __init__(self, family, resolution, materials, pin=False):
        self.family = family
        self.resolution = dict(resolution)
        self.materials = dict(materials)
        self.pin = pin
