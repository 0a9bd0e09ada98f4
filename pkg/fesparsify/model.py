'''
Assembly of element matrices, factored forms, well-formedness checks, the rigidity
graph between elements and extraction of submodels.
'''
import math
import logging

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra
from scipy.sparse.linalg import norm as sparse_norm

import fesparsify.utils as utils
from fesparsify.errors import ModelError, NotWellFormedError, NumericalError
from fesparsify.linalg import sym_eig, band_cholesky
from fesparsify.solver import factor
from fesparsify.types import Assembly, ElementMatrix, WellFormedReport, RigidityGraph


logger = logging.getLogger(__name__)


def assemble(a, coeffs=None):
    '''
    Sparse global matrix sum_e c_e K_e. coeffs maps element ids to coefficients (all 1
    when omitted); elements missing from the map are left out.
    '''
    if coeffs is None:
        if a._stiffness is not None:
            return a._stiffness
        items = [(elem, 1.0) for elem in a.elements]
    else:
        items = [(a.elements[e], float(c)) for e, c in sorted(coeffs.items())]

    rows = []
    cols = []
    vals = []
    for elem, c in items:
        nodes = elem.nodes
        if elem.n_e and (nodes[0] < 0 or nodes[-1] >= a.n):
            raise ModelError('Element {} references a node outside [0, {}).'.format(elem.id, a.n))
        rows.append(np.repeat(nodes, elem.n_e))
        cols.append(np.tile(nodes, elem.n_e))
        vals.append((c * elem.k_tilde).ravel())

    if items:
        K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(a.n, a.n)).tocsr()
    else:
        K = sp.csr_matrix((a.n, a.n))
    K.sum_duplicates()
    K.sort_indices()
    if coeffs is None:
        a._stiffness = K
    return K


def factor_element(elem, r=None, rel_tol=utils.RANK_REL_TOL):
    '''
    Fills F_e = Sigma^(1/2) V^T from the eigendecomposition of k_tilde, so that
    F_e^T F_e = k_tilde with one row per nonzero eigenvalue.
    '''
    eig = sym_eig(elem.k_tilde, rel_tol)
    if np.min(eig.values) < -utils.PSD_REL_TOL * max(np.max(np.abs(eig.values)), utils.FLOOR_EPS):
        raise ModelError('Element {} is not positive semidefinite.'.format(elem.id))
    if eig.rank == 0 or (r is not None and eig.rank != r):
        raise ModelError('Element {} has rank {}, expected {}.'.format(
                            elem.id, eig.rank, r if r is not None else 'a positive rank'))
    values = eig.range_values()
    F = np.sqrt(values)[:, None] * eig.range_basis().T
    return elem.with_factor(F)


def factor_assembly(a):
    if all(elem.factor is not None for elem in a.elements):
        return a
    elements = [elem if elem.factor is not None else factor_element(elem, a.r)
                for elem in a.elements]
    return _derived(a, a.n, elements, a.null_basis)


def build_global_factor(a):
    '''
    Stacked factor F (m r x n) with block e equal to F_e scattered into the columns of
    element e, so that F^T F = assemble(a).
    '''
    rows = []
    cols = []
    vals = []
    offset = 0
    for elem in a.elements:
        if elem.factor is None:
            raise ModelError('Element {} has no factor.'.format(elem.id))
        F = elem.factor
        r_e = F.shape[0]
        rows.append(np.repeat(np.arange(offset, offset + r_e), elem.n_e))
        cols.append(np.tile(elem.nodes, r_e))
        vals.append(F.ravel())
        offset += r_e
    if not rows:
        return sp.csr_matrix((0, a.n))
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(offset, a.n)).tocsr()


def check_well_formed(a, trials=utils.DEFAULT_TRIALS, seed=None):
    '''
    Checks rigidity (null(K) = range(N)), N-compatibility of every element and, by
    random sampling, minimal rank deficiency. Findings are collected, never raised.
    '''
    if seed is None:
        seed = utils.default_seed()
    diagnostics = []
    K = assemble(a)
    N = a.null_basis

    nullspace_ok = _check_nullspace(a, K, N, diagnostics)
    compatibility_ok = _check_compatibility(a, N, diagnostics)
    minimal_rank_ok = _check_minimal_rank(a, K, N, trials, seed, diagnostics)

    report = WellFormedReport(nullspace_ok, compatibility_ok, minimal_rank_ok, diagnostics)
    logger.info('well-formedness of %r: %s', a, 'ok' if report.ok else 'failed')
    return report


def _check_nullspace(a, K, N, diagnostics):
    ok = True
    try:
        f = factor(K, a.d, N)
    except NumericalError as exc:
        diagnostics.append('nullspace: factorization failed: {}'.format(exc))
        return False
    if f.rank_deficit != a.d:
        ok = False
        diagnostics.append('nullspace: rank deficit {} but d = {} (rank(K) = {}, n = {})'.format(
                              f.rank_deficit, a.d, f.detected_rank, a.n))
    if a.d:
        scale = max(sparse_norm(K) * np.linalg.norm(N), utils.FLOOR_EPS)
        residual = np.linalg.norm(K @ N) / scale
        if residual > utils.NULL_REL_TOL:
            ok = False
            diagnostics.append('nullspace: ||K N|| / (||K|| ||N||) = {:.3e} exceeds {}'.format(
                                  residual, utils.NULL_REL_TOL))
    return ok


def _check_compatibility(a, N, diagnostics):
    bad = []
    groups = dict()
    for elem in a.elements:
        groups.setdefault(elem.n_e, []).append(elem)

    for n_e, group in sorted(groups.items()):
        Ke = np.stack([elem.k_tilde for elem in group])
        Ne = np.stack([N[elem.nodes] for elem in group])
        values = np.linalg.eigvalsh(Ke)
        lam_max = np.maximum(np.max(np.abs(values), axis=1), utils.FLOOR_EPS)
        null_dims = np.sum(values <= utils.RANK_REL_TOL * lam_max[:, None], axis=1)
        if a.d:
            ranks = np.linalg.matrix_rank(Ne)
            residual = np.linalg.norm(Ke @ Ne, axis=(1, 2))
            scale = np.maximum(lam_max * np.linalg.norm(Ne, axis=(1, 2)), utils.FLOOR_EPS)
            residual = residual / scale
        else:
            ranks = np.zeros(len(group), dtype=int)
            residual = np.zeros(len(group))
        for elem, dim, rank, res in zip(group, null_dims, ranks, residual):
            if res > utils.NULL_REL_TOL:
                bad.append('element {}: K_e N_e residual {:.3e}'.format(elem.id, res))
            elif dim != rank:
                bad.append('element {}: element null space has dimension {}, restricted '
                           'null basis has rank {}'.format(elem.id, dim, rank))

    if bad:
        diagnostics.append('compatibility: {} element(s) not N-compatible'.format(len(bad)))
        diagnostics.extend('compatibility: ' + finding for finding in bad[:10])
        return False
    return True


def _check_minimal_rank(a, K, N, trials, seed, diagnostics):
    b = a.dofs_per_node if a.n % a.dofs_per_node == 0 else 1
    num_nodes = a.n // b
    g = int(math.ceil(a.d / b)) if a.d else 0
    if trials <= 0 or g >= num_nodes:
        return True

    rng = np.random.default_rng(seed)
    max_diag = max(np.max(np.abs(K.diagonal())), utils.FLOOR_EPS)
    failures = 0
    for trial in range(trials):
        C = np.sort(rng.choice(num_nodes, size=max(g, 1), replace=False))
        dofs = (C[:, None] * b + np.arange(b)).ravel()
        if a.d:
            Nc = N[dofs]
            if np.linalg.matrix_rank(Nc, tol=_rank_tol(Nc)) != a.d:
                failures += 1
                diagnostics.append('minimal rank: null basis rows {} have rank below d = {}'.format(
                                      dofs.tolist(), a.d))
                continue
        else:
            dofs = np.zeros(0, dtype=np.int64)
        rest = np.setdiff1d(np.arange(a.n), dofs, assume_unique=True)
        try:
            band_cholesky(K[rest][:, rest], skip=False, max_diag=max_diag)
        except NotWellFormedError as exc:
            failures += 1
            diagnostics.append('minimal rank: removing DOFs {} leaves a singular block at index {}'.format(
                                  dofs.tolist(), rest[exc.index]))
        except NumericalError as exc:
            failures += 1
            diagnostics.append('minimal rank: {}'.format(exc))
        if failures >= 5:
            break
        if not a.d:
            break
    return failures == 0


def _rank_tol(M):
    if M.size == 0:
        return 0.0
    return utils.RANK_REL_TOL * 1e2 * max(np.linalg.norm(M, 2), utils.FLOOR_EPS)


def rigidity_graph(a, min_shared=None):
    '''
    Element adjacency: e and f are neighbors when they share at least min_shared
    degrees of freedom. The default is one shared mesh node.
    '''
    if min_shared is None:
        min_shared = a.dofs_per_node
    if min_shared < 1:
        raise ValueError('min_shared must be at least 1, got {}.'.format(min_shared))

    m = a.m
    lengths = [elem.n_e for elem in a.elements]
    rows = np.repeat(np.arange(m), lengths)
    cols = np.concatenate([elem.nodes for elem in a.elements]) if m else np.zeros(0, dtype=np.int64)
    E = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(m, a.n))
    shared = (E @ E.T).tocoo()
    keep = (shared.data >= min_shared) & (shared.row != shared.col)
    adj = sp.csr_matrix((np.ones(np.count_nonzero(keep)), (shared.row[keep], shared.col[keep])),
                        shape=(m, m))
    adj.sort_indices()
    adjacency = [adj.indices[adj.indptr[e]:adj.indptr[e + 1]].tolist() for e in range(m)]
    return RigidityGraph(m, adjacency, min_shared, matrix=adj)


def ball(g, e, radius):
    '''
    Sorted element ids within `radius` steps of e in the rigidity graph, e included.
    '''
    if not 0 <= e < g.m:
        raise ModelError('Unknown element id {} (m = {}).'.format(e, g.m))
    if radius < 0:
        raise ValueError('radius must be non-negative, got {}.'.format(radius))
    if radius == 0:
        return np.array([e], dtype=np.int64)
    dist = dijkstra(g.matrix, directed=False, indices=e, unweighted=True, limit=radius + 0.5)
    return np.flatnonzero(np.isfinite(dist)).astype(np.int64)


def submodel(a, subset):
    '''
    Assembly of the elements in subset on the union of their nodes, compacted. Returns
    the submodel and the map from local to global node indices. Element ids become
    positions in the sorted subset.
    '''
    subset = np.unique(np.asarray(subset, dtype=np.int64))
    if subset.size == 0:
        raise ValueError('Empty element subset.')
    nodes = np.unique(np.concatenate([a.elements[e].nodes for e in subset]))
    elements = []
    for idx, e in enumerate(subset):
        elem = a.elements[e]
        local = np.searchsorted(nodes, elem.nodes)
        elements.append(ElementMatrix(idx, local, elem.k_tilde, elem.factor))
    sub = Assembly(len(nodes), elements, a.null_basis[nodes], a.r, d=a.d,
                   dofs_per_node=a.dofs_per_node, validate=False)
    return sub, nodes


def restrict_dofs(a, pinned):
    '''
    Dirichlet variant: removes the pinned DOFs, compacts the indices and keeps the part
    of range(N) that vanishes on the pinned DOFs as the new null basis.
    '''
    pinned = np.unique(np.asarray(pinned, dtype=np.int64))
    if pinned.size and (pinned[0] < 0 or pinned[-1] >= a.n):
        raise ModelError('Pinned DOF outside [0, {}).'.format(a.n))
    keep = np.setdiff1d(np.arange(a.n), pinned, assume_unique=True)
    new_index = -np.ones(a.n, dtype=np.int64)
    new_index[keep] = np.arange(len(keep))

    elements = []
    for elem in a.elements:
        mask = new_index[elem.nodes] >= 0
        if not np.any(mask):
            continue
        k = elem.k_tilde[np.ix_(mask, mask)]
        elements.append(ElementMatrix(len(elements), new_index[elem.nodes[mask]], k))

    if a.d:
        coeffs = scipy.linalg.null_space(a.null_basis[pinned]) if pinned.size else np.eye(a.d)
        null_basis = a.null_basis[keep] @ coeffs
    else:
        null_basis = np.zeros((len(keep), 0))
    comments = a.comments + ['pinned DOFs: {}'.format(' '.join(map(str, pinned.tolist())))]
    return Assembly(len(keep), elements, null_basis, a.r, dofs_per_node=1,
                    coordinates=a.coordinates, comments=comments)


def weakened_model(a, subset, alpha):
    '''
    K_hat = sum_{e in subset} K_e + alpha sum_{e not in subset} K_e, for alpha in (0, 1].
    '''
    if not 0 < alpha <= 1:
        raise ValueError('alpha must lie in (0, 1], got {}.'.format(alpha))
    inside = np.zeros(a.m, dtype=bool)
    inside[np.asarray(subset, dtype=np.int64)] = True
    elements = [elem if inside[elem.id] else elem.scaled(alpha) for elem in a.elements]
    return _derived(a, a.n, elements, a.null_basis)


def _derived(a, n, elements, null_basis):
    return Assembly(n, elements, null_basis, a.r, d=a.d, dofs_per_node=a.dofs_per_node,
                    coordinates=a.coordinates, comments=a.comments, validate=False)
