'''
Readers and writers for the file formats of the pipeline: FEAS assemblies, Matrix
Market matrices and the CSV exports (leverages, residual histories, draw audits,
node coordinates). Writers go through utils.atomic_write.
'''
import csv
import math

import numpy as np
import scipy.io
import scipy.sparse as sp

import fesparsify.utils as utils
from fesparsify.errors import ParseError, ModelError
from fesparsify.types import Assembly, ElementMatrix, LeverageRecord, LeverageTable, \
        LEVERAGE_METHODS


FEAS_MAGIC = 'feas'
FEAS_VERSION = 1

LEVERAGE_HEADER = ['element_id', 'tau', 'method', 'radius']
RESIDUAL_HEADER = ['iter', 'relres']
AUDIT_HEADER = ['i', 'J_i']


def write_feas(path, a):
    fmt = utils.format_sci
    with utils.atomic_write(path) as f:
        for comment in a.comments:
            f.write('# {}\n'.format(comment))
        f.write('{} {} {} {} {} {}\n'.format(FEAS_MAGIC, FEAS_VERSION, a.n, a.m, a.r, a.d))
        for row in a.null_basis:
            f.write(' '.join(['nullrow'] + [fmt(v) for v in row]) + '\n')
        for elem in a.elements:
            f.write('elem {} {} {}\n'.format(elem.id, elem.n_e, ' '.join(str(v) for v in elem.nodes)))
            for row in elem.k_tilde:
                f.write(' '.join(fmt(v) for v in row) + '\n')


def _content_lines(f):
    for line_no, line in enumerate(f, 1):
        line = line.split('#', 1)[0].strip()
        if line:
            yield line_no, line.split()


def _floats(tokens, line_no):
    try:
        vals = [float(t) for t in tokens]
    except ValueError:
        raise ParseError('expected real numbers, got "{}"'.format(' '.join(tokens)), line_no)
    if not all(math.isfinite(v) for v in vals):
        raise ParseError('non-finite value', line_no)
    return vals


def _ints(tokens, line_no):
    try:
        return [int(t) for t in tokens]
    except ValueError:
        raise ParseError('expected integers, got "{}"'.format(' '.join(tokens)), line_no)


def read_feas(path, validate=True):
    '''
    Parses a FEAS v1 file. Syntax errors raise ParseError with the line number; a
    syntactically valid file describing an invalid model raises ModelError.
    '''
    comments = []
    with open(path, encoding='utf-8') as f:
        raw = f.read().splitlines()
    for line in raw:
        stripped = line.strip()
        if stripped.startswith('#'):
            comments.append(stripped[1:].strip())

    lines = _content_lines(raw)
    line_no = 0

    def take(what):
        try:
            return next(lines)
        except StopIteration:
            raise ParseError('unexpected end of file, expected {}'.format(what), len(raw) or None)

    line_no, tokens = take('the header')
    if len(tokens) != 6 or tokens[0] != FEAS_MAGIC:
        raise ParseError('header must read "feas 1 <n> <m> <r> <d>"', line_no)
    version, n, m, r, d = _ints(tokens[1:], line_no)
    if version != FEAS_VERSION:
        raise ParseError('unsupported FEAS version {}'.format(version), line_no)
    if n < 1 or m < 0 or r < 1 or d < 0 or d > n:
        raise ParseError('header values out of range: n={} m={} r={} d={}'.format(n, m, r, d), line_no)

    N = np.zeros((n, d))
    for i in range(n):
        line_no, tokens = take('nullrow {}'.format(i))
        if tokens[0] != 'nullrow' or len(tokens) != d + 1:
            raise ParseError('expected "nullrow" with {} values'.format(d), line_no)
        N[i] = _floats(tokens[1:], line_no)

    elements = []
    for e in range(m):
        line_no, tokens = take('element {}'.format(e))
        if tokens[0] != 'elem' or len(tokens) < 3:
            raise ParseError('expected "elem <id> <n_e> <nodes...>"', line_no)
        elem_id, n_e = _ints(tokens[1:3], line_no)
        if elem_id != e:
            raise ParseError('element id {} out of sequence, expected {}'.format(elem_id, e), line_no)
        if n_e < 1 or len(tokens) != 3 + n_e:
            raise ParseError('element {} lists {} nodes for n_e = {}'.format(e, len(tokens) - 3, n_e), line_no)
        nodes = _ints(tokens[3:], line_no)
        elem_line = line_no
        k = np.zeros((n_e, n_e))
        for i in range(n_e):
            line_no, tokens = take('row {} of element {}'.format(i, e))
            if len(tokens) != n_e:
                raise ParseError('element {} row {} has {} values, expected {}'.format(
                                    e, i, len(tokens), n_e), line_no)
            k[i] = _floats(tokens, line_no)
        if not utils.is_symmetric(k, 1e-12):
            raise ParseError('element {} matrix is not symmetric'.format(e), elem_line)
        try:
            elements.append(ElementMatrix(e, nodes, k))
        except ModelError as exc:
            raise ParseError(str(exc), elem_line)

    for line_no, tokens in lines:
        raise ParseError('unexpected content after the last element', line_no)

    return Assembly(n, elements, N, r, d=d, comments=comments, validate=validate)


def write_matrix_market(path, M, comment=None):
    '''
    Coordinate real symmetric Matrix Market file holding the lower triangle of M, one
    entry per line in column-major order, values at 17 significant digits.
    '''
    M = sp.tril(utils.as_sparse(M)).tocsc()
    M.sum_duplicates()
    M.sort_indices()
    n = M.shape[0]
    with utils.atomic_write(path) as f:
        f.write('%%MatrixMarket matrix coordinate real symmetric\n')
        if comment:
            for line in comment.splitlines():
                f.write('% {}\n'.format(line))
        f.write('{} {} {}\n'.format(n, M.shape[1], M.nnz))
        for j in range(M.shape[1]):
            for idx in range(M.indptr[j], M.indptr[j + 1]):
                f.write('{} {} {}\n'.format(M.indices[idx] + 1, j + 1, utils.format_sci(M.data[idx])))


def read_matrix_market(path):
    with open(path, encoding='utf-8') as f:
        banner = f.readline()
    if not banner.startswith('%%MatrixMarket'):
        raise ParseError('missing %%MatrixMarket banner in {}'.format(path), 1)
    try:
        M = scipy.io.mmread(str(path))
    except (ValueError, IndexError, OSError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise ParseError('cannot read Matrix Market file {}: {}'.format(path, exc))
    return sp.csr_matrix(M, dtype=float)


def write_leverage_csv(path, table):
    with utils.atomic_write(path, newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(LEVERAGE_HEADER)
        for rec in table.records:
            radius = '' if rec.radius is None else rec.radius
            writer.writerow([rec.element_id, utils.format_float(rec.tau), rec.method, radius])


def read_leverage_csv(path, m=None):
    with open(path, encoding='utf-8', newline='') as f:
        rows = list(csv.reader(f))
    if not rows or [c.strip() for c in rows[0]] != LEVERAGE_HEADER:
        raise ParseError('leverage CSV must start with "{}"'.format(','.join(LEVERAGE_HEADER)), 1)

    records = []
    for line_no, row in enumerate(rows[1:], 2):
        if not row:
            continue
        if len(row) != 4:
            raise ParseError('expected 4 columns, got {}'.format(len(row)), line_no)
        element_id = _ints(row[:1], line_no)[0]
        tau = _floats(row[1:2], line_no)[0]
        method = row[2].strip()
        if method not in LEVERAGE_METHODS:
            raise ParseError('unknown leverage method "{}"'.format(method), line_no)
        radius = _ints(row[3:], line_no)[0] if row[3].strip() else None
        if element_id != len(records):
            raise ParseError('element id {} out of sequence, expected {}'.format(
                                element_id, len(records)), line_no)
        if not 0 < tau <= 1 + 1e-10:
            raise ParseError('leverage {} outside (0, 1]'.format(tau), line_no)
        records.append(LeverageRecord(element_id, tau, method, radius))
    if m is not None and len(records) != m:
        raise ParseError('leverage CSV has {} rows for {} elements'.format(len(records), m))
    return LeverageTable(records)


def write_residual_csv(path, history):
    with utils.atomic_write(path, newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(RESIDUAL_HEADER)
        for it, relres in enumerate(history):
            writer.writerow([it, utils.format_float(relres)])


def write_audit_csv(path, sequence):
    with utils.atomic_write(path, newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(AUDIT_HEADER)
        for i, J in enumerate(sequence, 1):
            writer.writerow([i, int(J)])


def write_coordinates_csv(path, coords):
    coords = np.asarray(coords, dtype=float)
    header = ['node_id'] + ['x', 'y', 'z'][:coords.shape[1]]
    with utils.atomic_write(path, newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for i, row in enumerate(coords):
            writer.writerow([i] + [utils.format_float(v) for v in row])


def read_vector(path, n=None):
    '''
    One value per line; blank lines and '#' comments are skipped.
    '''
    with open(path, encoding='utf-8') as f:
        vals = []
        for line_no, tokens in _content_lines(f):
            if len(tokens) != 1:
                raise ParseError('expected one value per line', line_no)
            vals.extend(_floats(tokens, line_no))
    if n is not None and len(vals) != n:
        raise ParseError('vector has {} entries, expected {}'.format(len(vals), n))
    return np.array(vals)


def write_vector(path, x):
    with utils.atomic_write(path) as f:
        for v in x:
            f.write(utils.format_float(v) + '\n')
