import math

import pytest

import numpy as np

from fesparsify.errors import SamplingError
from fesparsify.generators import graph_spec, laplacian_assembly
from fesparsify.leverage import leverage_table
from fesparsify.model import assemble
from fesparsify.sampler import splitmix64, Xoshiro256StarStar, AliasTable, chernoff_constant, \
        sample_size_bound, sample_size, heuristic_sample_size, failure_probability, \
        chernoff_tail_bounds, plan_tail_bounds, make_plan, draw_sequence, draw, build_preconditioner, \
        sparsify
from fesparsify.solver import exact_generalized_condition
from fesparsify.types import Assembly, ElementMatrix, LeverageRecord, LeverageTable


EDGE = np.array([[1.0, -1.0], [-1.0, 1.0]])

triangle = laplacian_assembly(graph_spec('cycle', n=3))
triangle_table = leverage_table(triangle, 'exact-qr')
single = Assembly(2, [ElementMatrix(0, [0, 1], EDGE)], np.ones((2, 1)), 1)
single_table = LeverageTable([LeverageRecord(0, 1.0, 'exact-qr')])


def test_splitmix64_reference():
    out, state = splitmix64(0)
    assert(out == 0xE220A8397B1DCDAF)
    assert(state == 0x9E3779B97F4A7C15)


def test_xoshiro_deterministic():
    a = Xoshiro256StarStar(42)
    b = Xoshiro256StarStar(42)
    c = Xoshiro256StarStar(43)
    seq_a = [a.next() for _ in range(100)]
    seq_b = [b.next() for _ in range(100)]
    seq_c = [c.next() for _ in range(100)]
    assert(seq_a == seq_b)
    assert(seq_a != seq_c)
    assert(all(0 <= x < 2 ** 64 for x in seq_a))

    rng = Xoshiro256StarStar(1)
    for _ in range(1000):
        u = rng.next_float()
        assert(0.0 <= u < 1.0)
        assert(0 <= rng.next_index(7) < 7)


def test_alias_table_reproduces_distribution():
    p = np.array([0.1, 0.4, 0.05, 0.25, 0.2])
    table = AliasTable(p)
    m = len(p)
    mass = np.array(table.prob) / m
    for i in range(m):
        if table.alias[i] != i:
            mass[table.alias[i]] += (1.0 - table.prob[i]) / m
    np.testing.assert_allclose(mass, p, atol=1e-12)

    table = AliasTable([0.5, 0.5])
    assert(table.prob == [1.0, 1.0])
    assert(table.alias == [0, 1])


def test_alias_table_errors():
    with pytest.raises(SamplingError):
        AliasTable([])
    with pytest.raises(SamplingError):
        AliasTable([0.5, -0.1])
    with pytest.raises(SamplingError):
        AliasTable([0.0, 0.0])


def test_chernoff_constant():
    assert(abs(chernoff_constant(3) - 9.2423) < 1e-3)
    assert(abs(chernoff_constant(1e6) - 2.5887) / 2.5887 < 0.01)
    assert(chernoff_constant(1.01) > chernoff_constant(2) > chernoff_constant(100))

    with pytest.raises(SamplingError):
        chernoff_constant(1.0)
    with pytest.raises(ValueError):
        chernoff_constant(0.5)


def test_sample_size_examples():
    M = sample_size(3, 0.5, 100.0, 101, 1)
    assert(abs(M - 5538) <= 1)

    exact = sample_size_bound(3, 0.5, 100.0, 101, 1)
    upper = sample_size_bound(3, 0.5, 200.0, 101, 1, mode='upper')
    assert(abs(upper - 2 * exact) < 1e-9 * exact)

    approx = sample_size(3, 0.5, 100.0, 101, 1, mode='approx', beta=1.0)
    assert(approx == M)
    assert(sample_size(3, 0.5, 100.0, 101, 1, mode='approx', beta=2.0) > M)


def test_sample_size_errors():
    with pytest.raises(SamplingError):
        sample_size(1.0, 0.5, 10.0, 11, 1)
    with pytest.raises(SamplingError):
        sample_size(3, 1.0, 10.0, 11, 1)
    with pytest.raises(SamplingError):
        sample_size(3, 0.5, 0.0, 11, 1)
    with pytest.raises(SamplingError):
        sample_size(3, 0.5, 10.0, 1, 1)
    with pytest.raises(SamplingError):
        sample_size(3, 0.5, 10.0, 11, 1, mode='approx')
    with pytest.raises(SamplingError):
        sample_size(3, 0.5, 10.0, 11, 1, mode='approx', beta=0.5)
    with pytest.raises(SamplingError):
        sample_size(3, 0.5, 10.0, 11, 1, mode='uniform')
    with pytest.raises(SamplingError):
        sample_size(3, 0.5, 10.0, 11, 1, mode='fancy')


def test_heuristic_sample_size():
    assert(heuristic_sample_size(100.0) == math.ceil(100 * math.log(100)))
    assert(heuristic_sample_size(100.0, 2) == math.ceil(200 * math.log(100)))
    assert(heuristic_sample_size(1.0) == 1)
    with pytest.raises(SamplingError):
        heuristic_sample_size(0.0)
    with pytest.raises(SamplingError):
        heuristic_sample_size(10.0, 0.0)


def test_failure_probability_inverts_sample_size():
    bound = sample_size_bound(9, 0.1, 50.0, 51, 1)
    delta = failure_probability(bound, 9, 50.0, 51, 1)
    assert(abs(delta - 0.1) < 1e-12)
    assert(failure_probability(1, 9, 50.0, 51, 1) == 1.0)


def test_chernoff_tail_bounds():
    low, high = chernoff_tail_bounds(1.0, 1.0, 1.0, 10, 0.0)
    assert(low == 1.0 and high == 1.0)
    low, high = chernoff_tail_bounds(100.0, 100.0, 1.0, 10, 0.5)
    assert(0.0 < low < 1e-3)
    assert(0.0 < high < 1e-3)
    assert(low < high)
    with pytest.raises(ValueError):
        chernoff_tail_bounds(1.0, 1.0, 0.0, 10, 0.5)


def test_plan_tail_bounds():
    plan = make_plan(triangle_table, 9, 0.1, triangle.n, triangle.d, seed=5, samples=400)
    lower, upper = plan_tail_bounds(plan, triangle.n, triangle.d)
    delta = failure_probability(400, 9, plan.total, triangle.n, triangle.d)
    assert(delta < 1)
    assert(abs(upper - delta / 2) <= 1e-12 * delta)
    assert(0.0 < lower < upper)

    plan = make_plan(triangle_table, 9, 0.1, triangle.n, triangle.d, mode='uniform', samples=10)
    with pytest.raises(SamplingError):
        plan_tail_bounds(plan, triangle.n, triangle.d)


def test_make_plan():
    plan = make_plan(triangle_table, 9, 0.1, triangle.n, triangle.d, seed=5)
    np.testing.assert_allclose(plan.probabilities, [1.0 / 3.0] * 3)
    assert(abs(plan.total - 2.0) < 1e-12)
    assert(plan.M == sample_size(9, 0.1, plan.total, 3, 1))
    assert(plan.seed == 5)

    plan = make_plan(triangle_table, 9, 0.1, 3, 1, seed=5, samples=17)
    assert(plan.M == 17)

    floored = LeverageTable([LeverageRecord(0, 1e-14, 'exact-qr'), LeverageRecord(1, 1.0, 'exact-qr')])
    plan = make_plan(floored, 9, 0.1, 2, 1, seed=1)
    assert(np.all(plan.probabilities > 0))


def test_make_plan_modes():
    local = LeverageTable([LeverageRecord(e, 1.0, 'local', 1) for e in range(3)])
    with pytest.raises(SamplingError):
        make_plan(local, 9, 0.1, 3, 1, mode='exact')
    plan = make_plan(local, 9, 0.1, 3, 1, mode='upper')
    assert(abs(plan.total - 3.0) < 1e-12)

    with pytest.raises(SamplingError):
        make_plan(triangle_table, 9, 0.1, 3, 1, mode='uniform')
    plan = make_plan(triangle_table, 9, 0.1, 3, 1, mode='uniform', samples=3)
    np.testing.assert_allclose(plan.probabilities, [1.0 / 3.0] * 3)

    with pytest.raises(SamplingError):
        make_plan(triangle_table, 9, 0.1, 3, 1, samples=0)


def test_draw_deterministic():
    plan = make_plan(triangle_table, 9, 0.1, 3, 1, seed=11, samples=200)
    seq = draw_sequence(plan)
    assert(len(seq) == 200)
    np.testing.assert_array_equal(seq, draw_sequence(plan))
    counts = draw(plan)
    assert(counts.sum() == 200)
    np.testing.assert_array_equal(counts, np.bincount(seq, minlength=3))

    other = make_plan(triangle_table, 9, 0.1, 3, 1, seed=12, samples=200)
    assert(not np.array_equal(seq, draw_sequence(other)))


def test_draw_single_element():
    plan = make_plan(single_table, 9, 0.1, 2, 1, seed=3, samples=25)
    np.testing.assert_array_equal(draw(plan), [25])


def test_skewed_leverages_concentrate_draws():
    records = [LeverageRecord(0, 50.0, 'exact-qr')]
    records += [LeverageRecord(e, 0.01, 'exact-qr') for e in range(1, 100)]
    plan = make_plan(LeverageTable(records), 9, 0.1, 100, 1, seed=3, samples=1000)
    counts = draw(plan)
    assert(counts[0] > 950)
    assert(np.count_nonzero(counts) < 60)

    grid = laplacian_assembly(graph_spec('grid', rows=8, cols=8))
    precond, _ = sparsify(grid, leverage_table(grid, 'exact-qr'), 9, 0.1, seed=0, retries=0)
    assert(precond.distinct_count <= grid.m)
    assert(10 * precond.distinct_count < precond.M)


def test_build_preconditioner():
    plan = make_plan(single_table, 9, 0.1, 2, 1, seed=3, samples=25)
    precond = build_preconditioner(single, plan, draw(plan))
    np.testing.assert_allclose(precond.matrix.toarray(), EDGE)
    assert(precond.rank_ok)
    assert(precond.distinct_count == 1)

    plan = make_plan(triangle_table, 9, 0.1, 3, 1, mode='uniform', samples=3)
    precond = build_preconditioner(triangle, plan, np.ones(3, dtype=np.int64))
    np.testing.assert_allclose(precond.matrix.toarray(), assemble(triangle).toarray())
    assert(precond.distinct_fraction == 1.0)

    precond = build_preconditioner(triangle, plan, np.array([3, 0, 0]))
    assert(not precond.rank_ok)

    with pytest.raises(SamplingError):
        build_preconditioner(triangle, plan, np.ones(2, dtype=np.int64))


def test_sparsify_triangle():
    good = 0
    for seed in range(20):
        precond, attempts = sparsify(triangle, triangle_table, 9, 0.1, seed=seed, retries=0)
        assert(len(attempts) == 1)
        if precond.rank_ok:
            kappa = exact_generalized_condition(assemble(triangle), precond.matrix,
                                                triangle.null_basis)
            if kappa <= 9:
                good += 1
    assert(good >= 18)


def test_sparsify_retries():
    # One sample never spans the triangle.
    precond, attempts = sparsify(triangle, triangle_table, 9, 0.1, seed=1, mode='uniform',
                                 samples=1, retries=2)
    assert(not precond.rank_ok)
    assert(len(attempts) == 3)
    assert([att['seed'] for att in attempts] == [1, 2, 3])

    with pytest.raises(SamplingError):
        sparsify(triangle, triangle_table, 9, 0.1, retries=-1)
