'''
Effective stiffness and element leverages: exact by Schur complements or by one QR of
the global factor, the removal identity used as a cross-check, and upper bounds from
radius-limited submodels of the rigidity graph.
'''
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

import fesparsify.utils as utils
from fesparsify.errors import NotWellFormedError, PencilDomainError, ConditioningError, \
        NumericalError, LeverageError
from fesparsify.linalg import sym_eig, pencil_eigs, schur_complement, thin_qr
from fesparsify.model import assemble, factor_assembly, build_global_factor, rigidity_graph, \
        ball, submodel, weakened_model
from fesparsify.types import EffectiveStiffness, LeverageRecord, LeverageTable, \
        LEVERAGE_METHODS


logger = logging.getLogger(__name__)


# Failures of a local submodel that fall back to the trivial bound 1.
LOCAL_FALLBACK_ERRORS = (NotWellFormedError, PencilDomainError, ConditioningError, NumericalError)


def clamp_leverage(tau):
    return min(max(float(tau), utils.LEVERAGE_FLOOR), 1.0)


def effective_stiffness(a, e):
    elem = a.element(e)
    S = schur_complement(assemble(a), elem.nodes)
    return EffectiveStiffness(elem.id, S)


def leverage_exact_schur(a, e):
    elem = a.element(e)
    S = effective_stiffness(a, e).matrix
    return clamp_leverage(pencil_eigs(elem.k_tilde, S).lambda_max)


def leverage_exact_qr(a):
    '''
    All leverages from one thin QR of the stacked factor: tau_e is the squared spectral
    norm of the element's row block of Q.
    '''
    fa = factor_assembly(a)
    F = build_global_factor(fa)
    block_rows = [elem.factor.shape[0] for elem in fa.elements]
    Q_blocks, _, _ = thin_qr(F, block_rows, expected_rank=a.n - a.d)
    records = []
    for elem, Qe in zip(fa.elements, Q_blocks):
        tau = np.linalg.norm(Qe, 2) ** 2 if Qe.size else 0.0
        records.append(LeverageRecord(elem.id, clamp_leverage(tau), 'exact-qr'))
    return LeverageTable(records)


def leverage_via_removal(a, e):
    '''
    tau_e = (kappa - 1) / kappa with kappa = kappa(K, K - K_e), or 1 when removing the
    element lowers the rank. Densifies K.
    '''
    utils.require_dense_order(a.n, 'leverage_via_removal')
    K = assemble(a)
    Ke = assemble(a, {e: 1.0})
    Kd = utils.as_symmetric_dense(K)
    Rd = utils.as_symmetric_dense(K - Ke)
    if sym_eig(Rd).rank < sym_eig(Kd).rank:
        return 1.0
    kappa = pencil_eigs(Kd, Rd).condition
    return clamp_leverage((kappa - 1.0) / kappa)


def leverage_local(a, g, e, radius):
    '''
    Upper bound on tau_e from the submodel of elements within `radius` of e. Degenerate
    submodels give the trivial bound 1.
    '''
    return _leverage_local(a, g, e, radius)[0]


def _leverage_local(a, g, e, radius):
    if radius < 1:
        raise ValueError('radius must be at least 1, got {}.'.format(radius))
    subset = ball(g, e, radius)
    sub, nodes = submodel(a, subset)
    local_e = int(np.searchsorted(subset, e))
    try:
        S = effective_stiffness(sub, local_e).matrix
        tau = pencil_eigs(sub.element(local_e).k_tilde, S).lambda_max
    except LOCAL_FALLBACK_ERRORS as exc:
        logger.warning('element %d: local model of radius %d is degenerate (%s), using 1',
                       e, radius, exc)
        tau = 1.0
    return clamp_leverage(tau), len(nodes)


def leverage_weakened(a, e, subset, alpha):
    '''
    Leverage of e in the model where every element outside subset is scaled by alpha.
    e must belong to subset.
    '''
    subset = np.asarray(subset, dtype=np.int64)
    if e not in subset:
        raise ValueError('Element {} is not part of the kept subset.'.format(e))
    w = weakened_model(a, subset, alpha)
    S = effective_stiffness(w, e).matrix
    return clamp_leverage(pencil_eigs(a.element(e).k_tilde, S).lambda_max)


def leverage_table(a, method='exact-qr', radius=None, parallelism=None, elements=None,
                   graph=None):
    '''
    Leverages of the requested elements (all by default) by the chosen method. The
    per-element methods run on `parallelism` threads; records come back in element
    order whatever the thread count. Per-element failures are collected into a single
    LeverageError.
    '''
    if method not in LEVERAGE_METHODS:
        raise ValueError('Unknown leverage method "{}". Choose from {}.'.format(
                            method, ', '.join(LEVERAGE_METHODS)))
    if method == 'local' and (radius is None or radius < 1):
        raise ValueError('Local leverages need a radius of at least 1, got {}.'.format(radius))
    if elements is None:
        elements = range(a.m)
    elements = [int(e) for e in elements]
    if not elements:
        raise ValueError('No elements requested.')
    for e in elements:
        if not 0 <= e < a.m:
            raise ValueError('Unknown element id {} (m = {}).'.format(e, a.m))
    if parallelism is None:
        parallelism = utils.default_threads()

    if method == 'exact-qr' and a.n > utils.DENSE_ORDER_LIMIT:
        logger.warning('exact-qr densifies the global factor (n = %d > %d), using exact-schur',
                       a.n, utils.DENSE_ORDER_LIMIT)
        method = 'exact-schur'
    if method == 'exact-qr':
        table = leverage_exact_qr(a)
        table = LeverageTable([table.records[e] for e in elements])
        _log_table(table)
        return table

    assemble(a)
    if method == 'local':
        if graph is None:
            graph = rigidity_graph(a)
        def task(e):
            tau, size = _leverage_local(a, graph, e, radius)
            return LeverageRecord(e, tau, 'local', radius, size)
    elif method == 'exact-schur':
        def task(e):
            return LeverageRecord(e, leverage_exact_schur(a, e), method)
    else:
        def task(e):
            return LeverageRecord(e, leverage_via_removal(a, e), method)

    def guarded(e):
        try:
            return task(e), None
        except Exception as exc:
            return None, exc

    if parallelism > 1 and len(elements) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(guarded, elements))
    else:
        results = [guarded(e) for e in elements]

    failures = [(e, exc) for e, (_, exc) in zip(elements, results) if exc is not None]
    if failures:
        raise LeverageError(failures)
    table = LeverageTable([rec for rec, _ in results])
    _log_table(table)
    return table


def _log_table(table):
    logger.info('leverages (%s): %d elements, total %.6g', table.method, len(table), table.total)


def leverage_total_bounds(a):
    '''
    Bracket ((n - d) / r, n - d) that holds for the exact total leverage.
    '''
    return (a.n - a.d) / a.r, float(a.n - a.d)


def within_bounds(a, total, slack=1e-8):
    low, high = leverage_total_bounds(a)
    return low - slack <= total <= high + slack


def looseness(upper, exact):
    '''
    Ratios of upper-bound leverages to exact leverages, element by element.
    '''
    if len(upper) != len(exact):
        raise ValueError('Tables differ in length: {} and {}.'.format(len(upper), len(exact)))
    ratios = upper.taus / exact.taus
    return {
        'min': float(np.min(ratios)),
        'median': float(np.median(ratios)),
        'max': float(np.max(ratios)),
        'total_ratio': upper.total / exact.total,
    }
