'''
Dense symmetric kernels (eigendecomposition, pseudoinverse, generalized eigenvalues
of semidefinite pencils) and the sparse band Cholesky used for Schur complements and
preconditioner factorizations.
'''
import logging

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.sparse.linalg import spsolve_triangular

import fesparsify.utils as utils
from fesparsify.errors import NumericalError, PencilDomainError, ConditioningError, \
        NotWellFormedError
from fesparsify.types import EigDecomposition, PencilSpectrum


logger = logging.getLogger(__name__)


# Negative pivots below -INDEFINITE_REL_TOL * max diagonal are treated as indefiniteness
# rather than as a rank deficiency.
INDEFINITE_REL_TOL = 1e-8


def sym_eig(A, rel_tol=utils.RANK_REL_TOL):
    '''
    Eigendecomposition of a symmetric matrix with values sorted in descending order.
    The rank counts values with |lambda| > rel_tol * max(|lambda_1|, floor).
    '''
    if not 0 < rel_tol < 1:
        raise ValueError('rel_tol must lie in (0, 1), got {}.'.format(rel_tol))
    A = _symmetric_input(A)
    order = A.shape[0]
    try:
        values, vectors = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError('Eigensolver did not converge on a matrix of order {}: {}'.format(
                                order, exc))
    values = values[::-1]
    vectors = vectors[:, ::-1]
    tol = rel_tol * max(np.max(np.abs(values)), utils.FLOOR_EPS)
    kept = np.abs(values) > tol
    return EigDecomposition(values, vectors, int(np.count_nonzero(kept)), tol, kept)


def pinv(A, rel_tol=utils.RANK_REL_TOL):
    eig = sym_eig(A, rel_tol)
    V = eig.range_basis()
    res = (V / eig.range_values()) @ V.T
    return (res + res.T) / 2


def pencil_eigs(A, B, rel_tol=utils.RANK_REL_TOL):
    '''
    Finite generalized eigenvalues of the semidefinite pencil (A, B), computed by
    deflating onto range(B). A and B must share their null space.
    '''
    A = _symmetric_input(A)
    B = _symmetric_input(B)
    if A.shape != B.shape:
        raise ValueError('Pencil matrices differ in shape: {} and {}.'.format(A.shape, B.shape))
    order = A.shape[0]

    eig_b = sym_eig(B, rel_tol)
    eig_a = sym_eig(A, rel_tol)
    if eig_a.rank != eig_b.rank:
        raise PencilDomainError('Pencil null spaces differ: rank(A) = {}, rank(B) = {}.'.format(
                                    eig_a.rank, eig_b.rank))
    if eig_b.rank == 0:
        return PencilSpectrum([], order)

    Q = eig_b.range_basis()
    A_red = Q.T @ A @ Q
    scale_a = max(np.linalg.norm(A), utils.FLOOR_EPS)
    if np.linalg.norm(Q @ A_red @ Q.T - A) > utils.NULL_REL_TOL * scale_a:
        raise PencilDomainError('range(A) is not contained in range(B) (order {}).'.format(order))

    B_red = Q.T @ B @ Q
    B_red = (B_red + B_red.T) / 2
    A_red = (A_red + A_red.T) / 2
    try:
        values = scipy.linalg.eigh(A_red, B_red, eigvals_only=True)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError('Range-reduced B is not positive definite: {}'.format(exc))
    return PencilSpectrum(values, order - eig_b.rank)


def pencil_eigs_factored(FA, FB, rel_tol=utils.RANK_REL_TOL):
    '''
    Finite generalized eigenvalues of (FA^T FA, FB^T FB) from the factors: the squares
    of the nonzero singular values of pinv(FB^T) FA^T. Factors with different row counts
    are padded with zero rows, which leaves both products unchanged.
    '''
    FA = np.atleast_2d(np.asarray(FA, dtype=float))
    FB = np.atleast_2d(np.asarray(FB, dtype=float))
    if FA.shape[1] != FB.shape[1]:
        raise ValueError('Factors act on different dimensions: {} and {}.'.format(
                            FA.shape[1], FB.shape[1]))
    rows = max(FA.shape[0], FB.shape[0])
    FA = np.vstack([FA, np.zeros((rows - FA.shape[0], FA.shape[1]))])
    FB = np.vstack([FB, np.zeros((rows - FB.shape[0], FB.shape[1]))])
    order = FA.shape[1]

    U = FA.T
    V = FB.T
    rank_u = np.linalg.matrix_rank(U, tol=_sv_tol(U, rel_tol))
    rank_v = np.linalg.matrix_rank(V, tol=_sv_tol(V, rel_tol))
    if rank_u != rank_v:
        raise PencilDomainError('Pencil null spaces differ: rank(A) = {}, rank(B) = {}.'.format(
                                    rank_u, rank_v))
    s = np.linalg.svd(np.linalg.pinv(V, rcond=rel_tol) @ U, compute_uv=False)
    s = s[:rank_u]
    return PencilSpectrum(s ** 2, order - rank_u)


def schur_complement(K, pivot_block, pivot_tol=utils.PIVOT_REL_TOL):
    '''
    Returns K_22 - K_12^T K_11^{-1} K_12 where block 2 holds the rows and columns listed
    in pivot_block (kept in ascending order) and block 1 holds all the others. K_11 is
    factored once by the band Cholesky; one triangular solve per pivot index follows.
    '''
    K = utils.as_sparse(K)
    n = K.shape[0]
    pivot_block = np.unique(np.asarray(pivot_block, dtype=np.int64))
    if pivot_block.size == 0:
        raise ValueError('Empty pivot block.')
    if pivot_block[0] < 0 or pivot_block[-1] >= n:
        raise ValueError('Pivot block index outside [0, {}).'.format(n))

    rest = np.setdiff1d(np.arange(n), pivot_block, assume_unique=True)
    K22 = K[pivot_block][:, pivot_block].toarray()
    if rest.size == 0:
        return utils.as_symmetric_dense(K22)

    K11 = K[rest][:, rest]
    K12 = K[rest][:, pivot_block]
    max_diag = max(np.max(np.abs(K.diagonal())), utils.FLOOR_EPS)
    try:
        order, L, _ = band_cholesky(K11, pivot_tol=pivot_tol, skip=False, max_diag=max_diag)
    except NotWellFormedError as exc:
        raise NotWellFormedError('Elimination block is singular at index {}: {}'.format(
                                    rest[exc.index], exc), index=int(rest[exc.index]))

    rhs = K12[order].toarray()
    Y = spsolve_triangular(L, rhs, lower=True)
    Y = np.asarray(Y).reshape(len(order), -1)
    S = K22 - Y.T @ Y
    return (S + S.T) / 2


def thin_qr(F, block_rows, expected_rank=None, rel_tol=utils.RANK_REL_TOL):
    '''
    Column-pivoted thin QR of the stacked factor F (F[:, perm] = Q R). Returns the
    per-element row blocks of Q restricted to its first rank(F) columns, the matching
    rows of R, and the column permutation. block_rows is the row count of each element
    block (an int for uniform blocks).
    '''
    utils.require_dense_order(F.shape[1], 'thin_qr')
    F = F.toarray() if sp.issparse(F) else np.asarray(F, dtype=float)
    try:
        Q, R, perm = scipy.linalg.qr(F, mode='economic', pivoting=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError('QR factorization failed: {}'.format(exc))

    diag = np.abs(np.diag(R))
    tol = rel_tol * max(diag[0] if diag.size else 0.0, utils.FLOOR_EPS)
    rank = int(np.count_nonzero(diag > tol))
    if expected_rank is not None and rank != expected_rank:
        raise NotWellFormedError('Factor has rank {}, expected n - d = {}.'.format(rank, expected_rank))
    Q = Q[:, :rank]
    R = R[:rank]

    if isinstance(block_rows, (int, np.integer)):
        block_rows = [int(block_rows)] * (F.shape[0] // int(block_rows))
    offsets = np.concatenate([[0], np.cumsum(block_rows)])
    Q_blocks = [Q[offsets[e]:offsets[e + 1]] for e in range(len(block_rows))]
    return Q_blocks, R, perm


def band_cholesky(K, order=None, pivot_tol=utils.PIVOT_REL_TOL, skip=True, max_diag=None):
    '''
    Cholesky factorization of a sparse symmetric positive semidefinite matrix in band
    storage after a reverse Cuthill-McKee ordering (or the given order).

    Pivots at or below pivot_tol * max_diag are skipped (their column of L is zero) when
    skip is set, and raise NotWellFormedError carrying the row index of K otherwise. Returns
    (order, L, skipped) with L a CSR lower triangular factor of K[order][:, order].
    '''
    K = utils.as_sparse(K)
    n = K.shape[0]
    if order is None:
        order = reverse_cuthill_mckee(K, symmetric_mode=True).astype(np.int64)
    order = np.asarray(order, dtype=np.int64)
    if n == 0:
        return order, sp.csr_matrix((0, 0)), np.zeros(0, dtype=bool)

    Kp = sp.tril(K[order][:, order]).tocoo()
    bandwidth = int(np.max(Kp.row - Kp.col)) if Kp.nnz else 0
    if max_diag is None:
        max_diag = max(np.max(np.abs(K.diagonal())), utils.FLOOR_EPS)
    threshold = pivot_tol * max_diag

    ab = np.zeros((bandwidth + 1, n + bandwidth + 1))
    np.add.at(ab, (Kp.row - Kp.col, Kp.col), Kp.data)
    skipped = np.zeros(n, dtype=bool)

    # LAPACK handles the common positive definite case; the elimination loop below is
    # only needed to skip deficient pivots.
    cb = _lapack_band_cholesky(ab[:, :n])
    if cb is not None:
        small = np.flatnonzero(cb[0] ** 2 <= threshold)
        if small.size == 0:
            ab[:, :n] = cb
            return order, _band_to_csr(ab, n, bandwidth), skipped
        if not skip:
            k = int(small[0])
            raise NotWellFormedError('Pivot {} below threshold {} at index {}.'.format(
                                        cb[0, k] ** 2, threshold, order[k]), index=int(order[k]))

    I, J = np.tril_indices(bandwidth)
    T = I - J

    for k in range(n):
        pivot = ab[0, k]
        if pivot <= threshold:
            if pivot < -INDEFINITE_REL_TOL * max_diag:
                raise NumericalError('Matrix is indefinite: pivot {} at index {}.'.format(
                                        pivot, order[k]))
            if not skip:
                raise NotWellFormedError('Pivot {} below threshold {} at index {}.'.format(
                                            pivot, threshold, order[k]), index=int(order[k]))
            skipped[k] = True
            ab[:, k] = 0.0
            continue

        lkk = np.sqrt(pivot)
        col = ab[1:, k] / lkk
        ab[0, k] = lkk
        ab[1:, k] = col
        if bandwidth and np.any(col):
            ab[T, k + 1 + J] -= col[I] * col[J]

    logger.debug('band Cholesky: order %d, bandwidth %d, skipped %d', n, bandwidth, int(skipped.sum()))
    return order, _band_to_csr(ab, n, bandwidth), skipped


def _lapack_band_cholesky(ab):
    try:
        return scipy.linalg.cholesky_banded(ab, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        return None


def _band_to_csr(ab, n, bandwidth):
    rows = []
    cols = []
    vals = []
    for t in range(bandwidth + 1):
        j = np.arange(n - t)
        v = ab[t, :n - t]
        nz = v != 0.0
        rows.append(j[nz] + t)
        cols.append(j[nz])
        vals.append(v[nz])
    L = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n))
    L.sort_indices()
    return L


def _sv_tol(M, rel_tol):
    if M.size == 0:
        return 0.0
    return rel_tol * max(np.linalg.norm(M, 2), utils.FLOOR_EPS)


def _symmetric_input(A):
    A = A.toarray() if sp.issparse(A) else np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError('Expected a non-empty square matrix, got shape {}.'.format(A.shape))
    scale = max(np.max(np.abs(A)), utils.FLOOR_EPS)
    if np.max(np.abs(A - A.T)) > 1e-12 * scale:
        raise ValueError('Matrix of order {} is not symmetric.'.format(A.shape[0]))
    return (A + A.T) / 2
