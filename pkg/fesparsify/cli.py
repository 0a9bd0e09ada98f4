'''
Command-line front end: gen, check, leverage, sparsify and solve. Every subcommand
reads and writes files only, so the steps chain into a pipeline

    fesparsify gen laplacian --graph grid --rows 20 --cols 20 --out grid.feas
    fesparsify check grid.feas
    fesparsify leverage grid.feas --out grid.lev.csv
    fesparsify sparsify grid.feas grid.lev.csv --out grid.P.mtx
    fesparsify solve grid.feas grid.P.mtx --out grid.res.csv

Exit codes: 0 success, 1 quality failure, 2 usage or parse error.
'''
import argparse
import logging
import os
import sys

import fesparsify
import fesparsify.utils as utils
from fesparsify.errors import FESparsifyError, ParseError
from fesparsify.generators import GRAPH_FAMILIES, DEFAULT_RATIO, DEFAULT_BALL_CONDUCTIVITY, \
        graph_spec, laplacian_assembly, bar_layout, poisson_box, generate
from fesparsify.leverage import leverage_table, leverage_total_bounds, within_bounds, looseness
from fesparsify.model import assemble, check_well_formed
from fesparsify.sampler import sparsify, heuristic_sample_size, draw_sequence, \
        failure_probability, plan_tail_bounds
from fesparsify.serializer import write_feas, read_feas, write_coordinates_csv, \
        write_leverage_csv, read_leverage_csv, write_matrix_market, read_matrix_market, \
        write_residual_csv, write_audit_csv, read_vector, write_vector
from fesparsify.solver import factor, pcg, random_rhs, exact_generalized_condition, \
        DEFAULT_TOL, DEFAULT_MAXIT
from fesparsify.types import LEVERAGE_METHODS, SAMPLING_MODES


logger = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

DEFAULT_KAPPA_MAX = 9.0
DEFAULT_DELTA = 0.1
RHS_RANDOM = 'random-seeded'


def _positive_int(text):
    val = int(text)
    if val < 1:
        raise argparse.ArgumentTypeError('expected a positive integer, got {}'.format(text))
    return val


def _samples(text):
    if text in ('bound', 'heuristic'):
        return text
    try:
        return _positive_int(text)
    except ValueError:
        raise argparse.ArgumentTypeError('expected "bound", "heuristic" or a positive integer, '
                                         'got {}'.format(text))


def build_parser():
    parser = argparse.ArgumentParser(prog='fesparsify',
                description='Sparsify finite element stiffness matrices by leverage sampling.')
    parser.add_argument('--version', action='version', version=fesparsify.__version__)
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help='-v for progress, -vv for per-element detail (stderr)')
    sub = parser.add_subparsers(dest='command', metavar='COMMAND')
    sub.required = True

    gen = sub.add_parser('gen', help='generate a model as a FEAS file')
    gen_sub = gen.add_subparsers(dest='family', metavar='FAMILY')
    gen_sub.required = True

    lap = gen_sub.add_parser('laplacian', help='weighted graph Laplacian')
    lap.add_argument('--graph', choices=GRAPH_FAMILIES, required=True)
    lap.add_argument('--n', type=_positive_int)
    lap.add_argument('--rows', type=_positive_int)
    lap.add_argument('--cols', type=_positive_int)
    lap.add_argument('--extra-edges', type=int, help='extra edges of the random family (default n)')
    lap.add_argument('--seed', type=int, default=0, help='seed of the random family')

    ela = gen_sub.add_parser('elasticity2d', help='plane stress union of bars')
    ela.add_argument('--bars', type=_positive_int, default=2)
    ela.add_argument('--ratio', type=float, default=DEFAULT_RATIO,
                     help='modulus of the odd bars relative to the even ones')
    ela.add_argument('--cells', type=_positive_int, default=4, help='grid cells per unit length')

    poi = gen_sub.add_parser('poisson3d', help='ball in a box, tetrahedral mesh')
    poi.add_argument('--box', type=_positive_int, default=8, help='grid cells per box side')
    poi.add_argument('--ball-r', type=float, default=0.3)
    poi.add_argument('--ball-k', type=float, default=DEFAULT_BALL_CONDUCTIVITY)

    for p in (lap, ela, poi):
        p.add_argument('--pin', action='store_true', help='pin DOFs to remove the null space')
        p.add_argument('--out', required=True, help='FEAS file to write')
        p.add_argument('--coords', help='coordinates CSV (default: next to --out)')

    chk = sub.add_parser('check', help='check that a model is well formed')
    chk.add_argument('file')
    chk.add_argument('--trials', type=_positive_int, default=utils.DEFAULT_TRIALS)
    chk.add_argument('--seed', type=int)

    lev = sub.add_parser('leverage', help='compute element leverages')
    lev.add_argument('file')
    lev.add_argument('--method', choices=LEVERAGE_METHODS, default='exact-qr')
    lev.add_argument('--radius', type=_positive_int)
    lev.add_argument('--threads', type=_positive_int)
    lev.add_argument('--compare-exact', action='store_true',
                     help='report the looseness of local leverages against exact-qr')
    lev.add_argument('--out', required=True, help='leverage CSV to write')

    spa = sub.add_parser('sparsify', help='sample a preconditioner')
    spa.add_argument('file')
    spa.add_argument('leverages', help='leverage CSV')
    spa.add_argument('--kappa-max', type=float, default=DEFAULT_KAPPA_MAX)
    spa.add_argument('--delta', type=float, default=DEFAULT_DELTA)
    spa.add_argument('--seed', type=int)
    spa.add_argument('--mode', choices=('auto',) + SAMPLING_MODES, default='auto')
    spa.add_argument('--beta', type=float, help='leverage approximation factor of approx mode')
    spa.add_argument('--samples', type=_samples, default='bound',
                     help='"bound", "heuristic" or an explicit count')
    spa.add_argument('--heuristic-factor', type=float, default=1.0)
    spa.add_argument('--retries', type=int, default=utils.DEFAULT_RETRIES)
    spa.add_argument('--audit', help='CSV of the draw sequence')
    spa.add_argument('--out', required=True, help='Matrix Market file for P')

    sol = sub.add_parser('solve', help='preconditioned conjugate gradients')
    sol.add_argument('file')
    sol.add_argument('preconditioner', help='Matrix Market file of P')
    sol.add_argument('--rhs', default=RHS_RANDOM,
                     help='"{}" or a file with one value per line'.format(RHS_RANDOM))
    sol.add_argument('--rhs-seed', type=int)
    sol.add_argument('--tol', type=float, default=DEFAULT_TOL)
    sol.add_argument('--maxit', type=int, default=DEFAULT_MAXIT)
    sol.add_argument('--out', required=True, help='residual history CSV')
    sol.add_argument('--solution', help='file for the final iterate')

    return parser


def cmd_gen(args):
    if args.family == 'laplacian':
        g = graph_spec(args.graph, n=args.n, rows=args.rows, cols=args.cols, seed=args.seed,
                       extra_edges=args.extra_edges)
        a = laplacian_assembly(g, pin=args.pin)
    elif args.family == 'elasticity2d':
        a = generate(bar_layout(args.bars, args.ratio, cells=args.cells, pin=args.pin))
    else:
        a = generate(poisson_box(args.box, args.ball_r, args.ball_k, pin=args.pin))

    write_feas(args.out, a)
    print('wrote {}: n = {}, m = {}, r = {}, d = {}'.format(args.out, a.n, a.m, a.r, a.d))
    if a.coordinates is not None:
        coords = args.coords or os.path.splitext(args.out)[0] + '.coords.csv'
        write_coordinates_csv(coords, a.coordinates)
        print('wrote {}'.format(coords))
    return EXIT_OK


def cmd_check(args):
    a = read_feas(args.file)
    report = check_well_formed(a, trials=args.trials, seed=args.seed)
    print(report.to_text())
    return EXIT_OK if report.ok else EXIT_FAILURE


def cmd_leverage(args):
    a = read_feas(args.file)
    if args.method == 'local' and args.radius is None:
        raise ValueError('--method local needs --radius.')
    table = leverage_table(a, args.method, radius=args.radius, parallelism=args.threads)
    write_leverage_csv(args.out, table)

    low, high = leverage_total_bounds(a)
    total = table.total
    print('elements: {}'.format(len(table)))
    print('total leverage: {}'.format(utils.format_float(total)))
    summary = table.summary()
    if 'submodel_nodes_mean' in summary:
        print('local model DOFs: mean {:.1f}, max {}'.format(
                summary['submodel_nodes_mean'], summary['submodel_nodes_max']))

    status = EXIT_OK
    if table.is_exact:
        ok = within_bounds(a, total)
        marker = 'pass' if ok else 'FAIL'
        status = EXIT_OK if ok else EXIT_FAILURE
    else:
        marker = 'upper bound, lower end only'
        if total < low - 1e-8:
            marker = 'FAIL'
            status = EXIT_FAILURE
    print('bounds: {} <= total <= {}: {}'.format(utils.format_float(low), utils.format_float(high),
                                                  marker))

    if args.compare_exact:
        exact = leverage_table(a, 'exact-qr')
        stats = looseness(table, exact)
        print('exact total leverage: {}'.format(utils.format_float(exact.total)))
        print('ratio to exact: min {:.4f}, median {:.4f}, max {:.4f}, total {:.4f}'.format(
                stats['min'], stats['median'], stats['max'], stats['total_ratio']))
    return status


def cmd_sparsify(args):
    a = read_feas(args.file)
    table = read_leverage_csv(args.leverages, m=a.m)
    mode = args.mode
    if mode == 'auto':
        mode = 'exact' if table.is_exact else 'upper'
    seed = utils.default_seed() if args.seed is None else args.seed

    if args.samples == 'bound':
        samples = None
    elif args.samples == 'heuristic':
        samples = heuristic_sample_size(table.total, args.heuristic_factor)
    else:
        samples = args.samples

    precond, attempts = sparsify(a, table, args.kappa_max, args.delta, seed=seed, mode=mode,
                                 beta=args.beta, samples=samples, retries=args.retries)
    plan = precond.plan
    comment = 'fesparsify preconditioner: mode {}, M {}, seed {}'.format(mode, plan.M, plan.seed)
    write_matrix_market(args.out, precond.matrix, comment)
    if args.audit:
        write_audit_csv(args.audit, draw_sequence(plan))

    print('mode: {}'.format(mode))
    print('M: {}'.format(plan.M))
    if mode != 'uniform':
        print('guaranteed failure probability: {:.3g}'.format(
                failure_probability(plan.M, args.kappa_max, table.total, a.n, a.d, mode,
                                    args.beta)))
        lower, upper = plan_tail_bounds(plan, a.n, a.d)
        print('chernoff tails: lower {:.3g}, upper {:.3g}'.format(lower, upper))
    print('distinct_count: {} ({:.1%} of {})'.format(precond.distinct_count,
                                                     precond.distinct_fraction, a.m))
    print('rank_ok: {}'.format('true' if precond.rank_ok else 'false'))
    print('attempts: {}'.format(len(attempts)))
    if not precond.rank_ok:
        print('sampled preconditioner is rank deficient after {} attempts'.format(len(attempts)))
        return EXIT_FAILURE
    if a.n <= utils.DENSE_ORDER_LIMIT:
        kappa = exact_generalized_condition(assemble(a), precond.matrix, a.null_basis)
        print('kappa: {}'.format(utils.format_float(kappa)))
    return EXIT_OK


def cmd_solve(args):
    a = read_feas(args.file)
    P = read_matrix_market(args.preconditioner)
    if P.shape != (a.n, a.n):
        raise ParseError('preconditioner has shape {}, model has n = {}'.format(P.shape, a.n))
    if args.rhs == RHS_RANDOM:
        b = random_rhs(a.n, args.rhs_seed, a.null_basis)
    else:
        b = read_vector(args.rhs, a.n)

    f = factor(P, a.d, a.null_basis)
    report = pcg(assemble(a), b, f, tol=args.tol, maxit=args.maxit, null_basis=a.null_basis)
    write_residual_csv(args.out, report.residual_history)
    if args.solution:
        write_vector(args.solution, report.solution)

    print('iterations: {}'.format(report.iterations))
    print('relres: {}'.format(utils.format_float(report.residual_history[-1])))
    if report.kappa_estimate is not None:
        print('kappa estimate: {:.6g}'.format(report.kappa_estimate))
    print('converged: {}'.format('true' if report.converged else 'false'))
    return EXIT_OK if report.converged else EXIT_FAILURE


COMMANDS = {
    'gen': cmd_gen,
    'check': cmd_check,
    'leverage': cmd_leverage,
    'sparsify': cmd_sparsify,
    'solve': cmd_solve,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr,
                        format='%(levelname)s %(name)s: %(message)s')

    try:
        return COMMANDS[args.command](args)
    except ParseError as exc:
        print('fesparsify: parse error: {}'.format(exc), file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # Also catches SamplingError, which rejects out-of-domain flags.
        print('fesparsify: {}'.format(exc), file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print('fesparsify: {}'.format(exc), file=sys.stderr)
        return EXIT_USAGE
    except FESparsifyError as exc:
        print('fesparsify: {}: {}'.format(type(exc).__name__, exc), file=sys.stderr)
        return EXIT_FAILURE
