import pytest

import numpy as np

from fesparsify.errors import ParseError, ModelError
from fesparsify.generators import graph_spec, laplacian_assembly, bar_layout, generate
from fesparsify.model import assemble
from fesparsify.serializer import write_feas, read_feas, write_matrix_market, read_matrix_market, \
        write_leverage_csv, read_leverage_csv, write_residual_csv, write_audit_csv, \
        write_coordinates_csv, read_vector, write_vector
from fesparsify.types import LeverageRecord, LeverageTable


bar = generate(bar_layout(bars=2, ratio=7.5, cells=1, length=2.0))
random_graph = laplacian_assembly(graph_spec('random', n=12, seed=3))


TRIANGLE_FEAS = '''# triangle graph
feas 1 3 3 1 1
nullrow 1
nullrow 1
nullrow 1
elem 0 2 0 1
1 -1
-1 1
elem 1 2 1 2
1 -1
-1 1
elem 2 2 0 2
1 -1
-1 1
'''


def write_text(path, text):
    path.write_text(text, encoding='utf-8')
    return path


def test_read_feas_example(tmp_path):
    a = read_feas(write_text(tmp_path / 'tri.feas', TRIANGLE_FEAS))
    assert(a.n == 3 and a.m == 3 and a.r == 1 and a.d == 1)
    assert(a.comments == ['triangle graph'])
    np.testing.assert_array_equal(assemble(a).toarray(), 3 * np.eye(3) - np.ones((3, 3)))


def test_feas_preserves_assembly(tmp_path):
    path = tmp_path / 'bar.feas'
    write_feas(path, bar)
    a = read_feas(path)
    assert((a.n, a.m, a.r, a.d) == (bar.n, bar.m, bar.r, bar.d))
    assert(a.dofs_per_node == 2)
    assert(a.comments == bar.comments)
    np.testing.assert_array_equal(a.null_basis, bar.null_basis)
    for got, ref in zip(a.elements, bar.elements):
        np.testing.assert_array_equal(got.nodes, ref.nodes)
        np.testing.assert_array_equal(got.k_tilde, ref.k_tilde)


def test_feas_output_is_deterministic(tmp_path):
    write_feas(tmp_path / 'one.feas', random_graph)
    write_feas(tmp_path / 'two.feas', random_graph)
    assert((tmp_path / 'one.feas').read_bytes() == (tmp_path / 'two.feas').read_bytes())


def test_feas_truncated(tmp_path):
    text = TRIANGLE_FEAS.splitlines()
    path = write_text(tmp_path / 'short.feas', '\n'.join(text[:-2]) + '\n')
    with pytest.raises(ParseError) as excinfo:
        read_feas(path)
    assert(excinfo.value.line_no == len(text) - 2)
    assert('unexpected end of file' in str(excinfo.value))


def test_feas_syntax_errors(tmp_path):
    bad_header = TRIANGLE_FEAS.replace('feas 1 3 3 1 1', 'feaz 1 3 3 1 1')
    with pytest.raises(ParseError) as excinfo:
        read_feas(write_text(tmp_path / 'a.feas', bad_header))
    assert(excinfo.value.line_no == 2)

    bad_version = TRIANGLE_FEAS.replace('feas 1 3 3 1 1', 'feas 2 3 3 1 1')
    with pytest.raises(ParseError):
        read_feas(write_text(tmp_path / 'b.feas', bad_version))

    bad_value = TRIANGLE_FEAS.replace('nullrow 1\nnullrow 1\nnullrow 1', 'nullrow 1\nnullrow x\nnullrow 1')
    with pytest.raises(ParseError) as excinfo:
        read_feas(write_text(tmp_path / 'c.feas', bad_value))
    assert(excinfo.value.line_no == 4)

    asymmetric = TRIANGLE_FEAS.replace('elem 0 2 0 1\n1 -1\n-1 1', 'elem 0 2 0 1\n1 -1\n-2 1')
    with pytest.raises(ParseError) as excinfo:
        read_feas(write_text(tmp_path / 'd.feas', asymmetric))
    assert(excinfo.value.line_no == 6)

    unsorted = TRIANGLE_FEAS.replace('elem 0 2 0 1', 'elem 0 2 1 0')
    with pytest.raises(ParseError):
        read_feas(write_text(tmp_path / 'e.feas', unsorted))

    trailing = TRIANGLE_FEAS + '1 2 3\n'
    with pytest.raises(ParseError) as excinfo:
        read_feas(write_text(tmp_path / 'f.feas', trailing))
    assert(excinfo.value.line_no == 15)


def test_feas_invalid_model(tmp_path):
    # Well formed syntax, but element 0 has rank 2.
    text = TRIANGLE_FEAS.replace('elem 0 2 0 1\n1 -1\n-1 1', 'elem 0 2 0 1\n1 0\n0 1')
    with pytest.raises(ModelError):
        read_feas(write_text(tmp_path / 'bad.feas', text))
    a = read_feas(tmp_path / 'bad.feas', validate=False)
    assert(a.m == 3)


def test_matrix_market(tmp_path):
    K = assemble(bar)
    path = tmp_path / 'K.mtx'
    write_matrix_market(path, K, 'stiffness\nof two bars')
    lines = path.read_text(encoding='utf-8').splitlines()
    assert(lines[0] == '%%MatrixMarket matrix coordinate real symmetric')
    assert(lines[1] == '% stiffness')
    assert(lines[2] == '% of two bars')
    assert(int(lines[3].split()[2]) == len(lines) - 4)
    for line in lines[4:]:
        i, j, _ = line.split()
        assert(int(i) >= int(j))

    back = read_matrix_market(path)
    assert(back.format == 'csr')
    np.testing.assert_array_equal(back.toarray(), K.toarray())


def test_matrix_market_errors(tmp_path):
    with pytest.raises(ParseError):
        read_matrix_market(write_text(tmp_path / 'bad.mtx', 'not a matrix\n'))
    with pytest.raises(FileNotFoundError):
        read_matrix_market(tmp_path / 'missing.mtx')


def test_leverage_csv(tmp_path):
    table = LeverageTable([LeverageRecord(0, 1.0 / 3.0, 'local', 2),
                           LeverageRecord(1, 1.0, 'local', 2)])
    path = tmp_path / 'lev.csv'
    write_leverage_csv(path, table)
    lines = path.read_text(encoding='utf-8').splitlines()
    assert(lines[0] == 'element_id,tau,method,radius')
    assert(lines[2] == '1,1,local,2')

    back = read_leverage_csv(path, m=2)
    assert(back.taus[0] == 1.0 / 3.0)
    assert(back.method == 'local')
    assert(back.radius == 2)

    exact = LeverageTable([LeverageRecord(0, 0.5, 'exact-qr')])
    write_leverage_csv(path, exact)
    assert(path.read_text(encoding='utf-8').splitlines()[1] == '0,0.5,exact-qr,')
    assert(read_leverage_csv(path).radius is None)


def test_leverage_csv_errors(tmp_path):
    header = 'element_id,tau,method,radius\n'
    cases = [
        ('id,tau\n0,0.5\n', 1),
        (header + '0,0.5,exact-qr\n', 2),
        (header + '0,0.5,guess,\n', 2),
        (header + '1,0.5,exact-qr,\n', 2),
        (header + '0,0.5,exact-qr,\n1,1.5,exact-qr,\n', 3),
        (header + '0,0,exact-qr,\n', 2),
        (header + '0,abc,exact-qr,\n', 2),
    ]
    for k, (text, line_no) in enumerate(cases):
        with pytest.raises(ParseError) as excinfo:
            read_leverage_csv(write_text(tmp_path / 'lev{}.csv'.format(k), text))
        assert(excinfo.value.line_no == line_no)

    path = write_text(tmp_path / 'ok.csv', header + '0,0.5,exact-qr,\n')
    with pytest.raises(ParseError):
        read_leverage_csv(path, m=3)


def test_residual_and_audit_csv(tmp_path):
    write_residual_csv(tmp_path / 'res.csv', [1.0, 0.25, 1e-9])
    assert((tmp_path / 'res.csv').read_text(encoding='utf-8') ==
           'iter,relres\n0,1\n1,0.25\n2,1.0000000000000001e-09\n')

    write_audit_csv(tmp_path / 'audit.csv', np.array([2, 0, 2]))
    assert((tmp_path / 'audit.csv').read_text(encoding='utf-8') == 'i,J_i\n1,2\n2,0\n3,2\n')


def test_coordinates_csv(tmp_path):
    write_coordinates_csv(tmp_path / 'xy.csv', [[0.0, 0.5], [1.0, 2.0]])
    assert((tmp_path / 'xy.csv').read_text(encoding='utf-8') == 'node_id,x,y\n0,0,0.5\n1,1,2\n')

    write_coordinates_csv(tmp_path / 'xyz.csv', [[0.0, 0.5, 0.25]])
    assert((tmp_path / 'xyz.csv').read_text(encoding='utf-8').splitlines()[0] == 'node_id,x,y,z')


def test_vectors(tmp_path):
    x = np.array([0.1, -2.5, 1e-300, 3.0])
    write_vector(tmp_path / 'x.txt', x)
    np.testing.assert_array_equal(read_vector(tmp_path / 'x.txt', 4), x)

    path = write_text(tmp_path / 'b.txt', '# rhs\n1.5\n\n-1.5  # end\n')
    np.testing.assert_array_equal(read_vector(path), [1.5, -1.5])

    with pytest.raises(ParseError):
        read_vector(path, 3)
    with pytest.raises(ParseError) as excinfo:
        read_vector(write_text(tmp_path / 'c.txt', '1 2\n'))
    assert(excinfo.value.line_no == 1)
    with pytest.raises(ParseError):
        read_vector(write_text(tmp_path / 'd.txt', 'nan\n'))
