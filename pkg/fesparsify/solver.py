import logging

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import spsolve_triangular

import fesparsify.utils as utils
from fesparsify.errors import NumericalError, ConsistencyError, PencilDomainError, \
        NullSpaceMismatchError
from fesparsify.linalg import band_cholesky, pencil_eigs
from fesparsify.types import CholeskyFactor, SolveReport


logger = logging.getLogger(__name__)


DEFAULT_TOL = 1e-8
DEFAULT_MAXIT = 1000


def factor(P, d, null_basis=None, pivot_tol=utils.PIVOT_REL_TOL):
    '''
    Rank-revealing sparse Cholesky of a symmetric positive semidefinite matrix that is
    expected to have a null space of dimension d.

    With a null basis N, the d rows picked by column-pivoted QR of N^T are grounded
    (left out of the factorization); N restricted to them is nonsingular, so the rest
    of P is positive definite exactly when null(P) = range(N). Any further deficiency
    shows up as skipped pivots and makes the factor unusable.
    '''
    P = utils.as_sparse(P)
    n = P.shape[0]
    if P.shape[1] != n:
        raise ValueError('Expected a square matrix, got shape {}.'.format(P.shape))
    if d < 0 or d > n:
        raise ValueError('Null space dimension {} outside [0, {}].'.format(d, n))

    Q = None
    grounded = np.zeros(0, dtype=np.int64)
    if null_basis is not None:
        N = np.asarray(null_basis, dtype=float).reshape(n, -1)
        Q = utils.orthonormal_basis(N)
        if N.shape[1] and d:
            _, piv = scipy.linalg.qr(N.T, mode='r', pivoting=True)
            grounded = np.sort(piv[:d]).astype(np.int64)

    keep = np.setdiff1d(np.arange(n), grounded, assume_unique=True)
    max_diag = max(np.max(np.abs(P.diagonal()), initial=0.0), utils.FLOOR_EPS)
    local_order, L, skipped = band_cholesky(P[keep][:, keep], pivot_tol=pivot_tol, skip=True,
                                            max_diag=max_diag)
    res = CholeskyFactor(n, keep[local_order], L, skipped, grounded, d, max_diag, null_basis=Q)
    logger.debug('factor: order %d, grounded %d, skipped %d, usable %s',
                 n, grounded.size, int(np.count_nonzero(skipped)), res.usable)
    return res


def _solve_matrix(f):
    # Skipped pivots get a unit row so the triangular solves leave their components at 0.
    if f._solve_L is None:
        L = f.L.tolil(copy=True)
        for k in np.flatnonzero(f.skipped):
            L.rows[k] = [k]
            L.data[k] = [1.0]
        L = L.tocsr()
        L.sort_indices()
        U = L.T.tocsr()
        U.sort_indices()
        f._solve_L = (L, U)
    return f._solve_L


def apply_pinv(f, b, check=True):
    '''
    Solves P x = b on range(P) with a usable factor. Components at grounded and skipped
    positions are set to zero and the result is projected orthogonal to the null basis.
    '''
    if not f.usable:
        raise NumericalError('Factor is unusable: rank deficit {} where {} was expected.'.format(
                                f.rank_deficit, f.null_dim_expected))
    b = np.asarray(b, dtype=float)
    if b.shape != (f.n,):
        raise ValueError('Right-hand side has shape {}, expected ({},).'.format(b.shape, f.n))

    Q = f.null_basis
    if check and Q is not None and Q.shape[1]:
        bnorm = np.linalg.norm(b)
        residual = np.linalg.norm(Q.T @ b) / max(bnorm, utils.FLOOR_EPS)
        if bnorm and residual > utils.NULL_REL_TOL:
            raise ConsistencyError('Right-hand side is not in the range of P: relative '
                                   'null-space component {:.3e}.'.format(residual), residual)

    x = np.zeros(f.n)
    if len(f.order) == 0:
        return x
    L, U = _solve_matrix(f)
    rhs = b[f.order]
    rhs[f.skipped] = 0.0
    y = spsolve_triangular(L, rhs, lower=True)
    z = spsolve_triangular(U, y, lower=False)
    x[f.order] = z
    return utils.project_out(x, Q)


def pcg(K, b, f, tol=DEFAULT_TOL, maxit=DEFAULT_MAXIT, null_basis=None, x0=None):
    '''
    Preconditioned conjugate gradients on K x = b with the factored preconditioner f.
    The iterate is kept orthogonal to range(null_basis); the history records the true
    relative residual ||K x - b|| / ||b|| after every iteration, starting from 1.
    '''
    K = utils.as_sparse(K)
    n = K.shape[0]
    b = np.asarray(b, dtype=float)
    if b.shape != (n,):
        raise ValueError('Right-hand side has shape {}, expected ({},).'.format(b.shape, n))
    if not 0 < tol < 1:
        raise ValueError('tol must lie in (0, 1), got {}.'.format(tol))
    if maxit < 0:
        raise ValueError('maxit must be non-negative, got {}.'.format(maxit))

    Q = utils.orthonormal_basis(null_basis) if null_basis is not None else f.null_basis
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return SolveReport(0, [0.0], True, tol, solution=np.zeros(n))
    if Q is not None and Q.shape[1]:
        residual = np.linalg.norm(Q.T @ b) / bnorm
        if residual > utils.NULL_REL_TOL:
            raise ConsistencyError('Right-hand side is not orthogonal to the null space: '
                                   'relative component {:.3e}.'.format(residual), residual)
        b = utils.project_out(b, Q)

    x = np.zeros(n) if x0 is None else utils.project_out(np.array(x0, dtype=float), Q)
    r = b - K @ x
    history = [np.linalg.norm(r) / bnorm]
    if history[0] <= tol:
        return SolveReport(0, history, True, tol, solution=x)

    z = apply_pinv(f, r, check=False)
    p = z.copy()
    rz = r @ z
    alphas = []
    betas = []
    converged = False
    it = 0
    while it < maxit:
        q = K @ p
        pq = p @ q
        if not pq > 0.0:
            raise NumericalError('PCG breakdown at iteration {}: p^T K p = {}.'.format(it + 1, pq))
        alpha = rz / pq
        x = utils.project_out(x + alpha * p, Q)
        r = utils.project_out(r - alpha * q, Q)
        it += 1
        alphas.append(alpha)

        relres = np.linalg.norm(b - K @ x) / bnorm
        history.append(relres)
        logger.debug('pcg iteration %d: relres %.3e', it, relres)
        if relres <= tol:
            converged = True
            break

        z = apply_pinv(f, r, check=False)
        rz_new = r @ z
        if not rz_new > 0.0:
            if np.linalg.norm(r) == 0.0:
                break
            raise NumericalError('PCG breakdown at iteration {}: r^T z = {}.'.format(it, rz_new))
        beta = rz_new / rz
        betas.append(beta)
        rz = rz_new
        p = z + beta * p

    kappa = lanczos_condition(alphas, betas)
    if converged:
        logger.info('pcg converged in %d iterations (relres %.3e)', it, history[-1])
    else:
        logger.warning('pcg did not converge in %d iterations (relres %.3e)', it, history[-1])
    return SolveReport(it, history, converged, tol, kappa_estimate=kappa, solution=x)


def lanczos_condition(alphas, betas):
    '''
    Condition number estimate of the preconditioned operator from the CG coefficients
    through the Lanczos tridiagonal matrix.
    '''
    k = len(alphas)
    if k == 0:
        return None
    alphas = np.asarray(alphas)
    betas = np.asarray(betas[:k - 1])
    diag = 1.0 / alphas
    diag[1:] += betas / alphas[:-1]
    off = np.sqrt(betas) / alphas[:-1]
    try:
        values = scipy.linalg.eigvalsh_tridiagonal(diag, off)
    except (np.linalg.LinAlgError, ValueError):
        return None
    if values[0] <= 0.0:
        return None
    return float(values[-1] / values[0])


def exact_generalized_condition(K, P, null_basis):
    '''
    kappa(K, P) by a dense generalized eigensolve on the orthogonal complement of the
    null basis. Raises NullSpaceMismatchError when null(P) is not range(null_basis).
    '''
    K = utils.as_sparse(K)
    P = utils.as_sparse(P)
    n = K.shape[0]
    utils.require_dense_order(n, 'exact_generalized_condition')

    Q = utils.orthonormal_basis(null_basis)
    Kd = utils.as_symmetric_dense(K)
    Pd = utils.as_symmetric_dense(P)
    if Q.shape[1]:
        for name, M in (('K', Kd), ('P', Pd)):
            scale = max(np.linalg.norm(M), utils.FLOOR_EPS)
            if np.linalg.norm(M @ Q) > utils.NULL_REL_TOL * scale:
                raise NullSpaceMismatchError('null({}) does not contain the declared null space.'.format(name))
        W = scipy.linalg.null_space(Q.T)
    else:
        W = np.eye(n)
    if W.shape[1] == 0:
        return 1.0

    try:
        spectrum = pencil_eigs(W.T @ Kd @ W, W.T @ Pd @ W)
    except PencilDomainError as exc:
        raise NullSpaceMismatchError('null(P) differs from the declared null space: {}'.format(exc))
    if spectrum.common_null_dim:
        raise NullSpaceMismatchError('K and P share {} null directions beyond the declared '
                                     'null space.'.format(spectrum.common_null_dim))
    return spectrum.condition


def random_rhs(n, seed=None, null_basis=None):
    '''
    Seeded standard normal right-hand side, projected orthogonal to range(null_basis)
    and normalized.
    '''
    if seed is None:
        seed = utils.default_seed()
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(n)
    if null_basis is not None:
        b = utils.project_out(b, utils.orthonormal_basis(null_basis))
    return b / np.linalg.norm(b)

