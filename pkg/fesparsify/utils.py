import os
import tempfile
import contextlib
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from fesparsify.errors import NumericalError


RANK_REL_TOL = 1e-10
PIVOT_REL_TOL = 1e-12
PSD_REL_TOL = 1e-10
NULL_REL_TOL = 1e-8
LEVERAGE_FLOOR = 1e-14
FLOOR_EPS = 1e-300

DENSE_ORDER_LIMIT = 2000

DEFAULT_SEED = 20130813
DEFAULT_TRIALS = 100
DEFAULT_RETRIES = 3

ENV_SEED = 'FESPARSIFY_SEED'
ENV_THREADS = 'FESPARSIFY_THREADS'


def default_seed():
    '''
    Seed used when none is passed explicitly. Never time based; can be overridden with
    the FESPARSIFY_SEED environment variable.
    '''
    val = os.environ.get(ENV_SEED)
    if val:
        return int(val, 0)
    return DEFAULT_SEED


def default_threads():
    val = os.environ.get(ENV_THREADS)
    if val:
        return max(1, int(val))
    return 1


def format_float(val):
    # 17 significant digits round-trip every double.
    return '{:.17g}'.format(float(val))


def format_sci(val):
    return '{:.16e}'.format(float(val))


def is_symmetric(A, rel_tol=0.0):
    if sp.issparse(A):
        diff = abs(A - A.T)
        scale = abs(A).max() if A.nnz else 0.0
        return diff.nnz == 0 or diff.max() <= rel_tol * scale
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        return False
    if rel_tol == 0.0:
        return np.array_equal(A, A.T)
    return np.max(np.abs(A - A.T), initial=0.0) <= rel_tol * np.max(np.abs(A), initial=0.0)


def as_symmetric_dense(A):
    '''
    Returns a dense float copy of A with one triangle mirrored onto the other, so
    symmetry holds exactly. Raises ValueError for non-square input.
    '''
    if sp.issparse(A):
        A = A.toarray()
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError('Expected a non-empty square matrix, got shape {}.'.format(A.shape))
    lower = np.tril(A)
    return lower + np.tril(A, -1).T


def as_sparse(A):
    if sp.issparse(A):
        return sp.csr_matrix(A, dtype=float)
    return sp.csr_matrix(np.asarray(A, dtype=float))


def require_dense_order(order, what, limit=DENSE_ORDER_LIMIT):
    if order > limit:
        raise NumericalError('{} densifies a matrix of order {}, above the limit of {}.'.format(
                                what, order, limit))


def orthonormal_basis(N):
    '''
    Returns a matrix with orthonormal columns spanning range(N). N may have zero columns.
    '''
    N = np.asarray(N, dtype=float)
    if N.ndim == 1:
        N = N.reshape(-1, 1)
    if N.shape[1] == 0:
        return np.zeros((N.shape[0], 0))
    Q, _ = np.linalg.qr(N)
    return Q


def project_out(x, Q):
    '''
    Projects x orthogonally to range(Q), Q with orthonormal columns.
    '''
    if Q is None or Q.shape[1] == 0:
        return x
    return x - Q @ (Q.T @ x)


@contextlib.contextmanager
def atomic_write(path, mode='w', newline=None):
    '''
    Opens a temporary file next to path and moves it over path when the block
    exits without an exception.
    '''
    path = Path(path)
    if path.parent and not path.parent.is_dir():
        path.parent.mkdir(parents=True)
    fd, tmp_name = tempfile.mkstemp(prefix='.{}.'.format(path.name), dir=str(path.parent))
    kwargs = {'encoding': 'utf-8', 'newline': newline} if 'b' not in mode else {}
    try:
        with os.fdopen(fd, mode, **kwargs) as f:
            yield f
        os.replace(tmp_name, str(path))
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp_name)
        raise
