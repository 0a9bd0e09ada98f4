'''
Leverage-weighted element sampling with replacement.

Draws come from a xoshiro256** generator whose state is seeded with four successive
splitmix64 outputs of the 64-bit seed. Each draw consumes two outputs x, y:

    i    = floor(m * (x >> 11) / 2^53)
    coin = (y >> 11) / 2^53
    J    = i if coin < prob[i] else alias[i]

where (prob, alias) is the Vose alias table of the plan's probabilities, built with
both work lists filled in index order and used as stacks.
'''
import math
import logging

import numpy as np
from scipy.special import xlogy

import fesparsify.utils as utils
from fesparsify.errors import SamplingError
from fesparsify.model import assemble
from fesparsify.solver import factor
from fesparsify.types import SamplingPlan, SampledPreconditioner, SAMPLING_MODES


logger = logging.getLogger(__name__)


MASK64 = (1 << 64) - 1


def splitmix64(state):
    '''
    Returns (output, next state).
    '''
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31), state


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK64


class Xoshiro256StarStar:

    def __init__(self, seed):
        state = int(seed) & MASK64
        s = []
        for _ in range(4):
            out, state = splitmix64(state)
            s.append(out)
        self.s = s

    def next(self):
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def next_float(self):
        return (self.next() >> 11) * 2.0 ** -53

    def next_index(self, m):
        return (m * (self.next() >> 11)) >> 53


class AliasTable:
    '''
    Vose's alias method: O(m) construction, two uniform variates per draw.
    '''

    def __init__(self, probabilities):
        p = np.asarray(probabilities, dtype=float)
        m = len(p)
        if m == 0:
            raise SamplingError('Cannot sample from an empty distribution.')
        if np.any(p < 0) or not np.all(np.isfinite(p)) or p.sum() <= 0:
            raise SamplingError('Probabilities must be finite, non-negative and not all zero.')

        scaled = (p / p.sum() * m).tolist()
        prob = [1.0] * m
        alias = list(range(m))
        small = [i for i in range(m) if scaled[i] < 1.0]
        large = [i for i in range(m) if scaled[i] >= 1.0]
        while small and large:
            l = small.pop()
            g = large.pop()
            prob[l] = scaled[l]
            alias[l] = g
            scaled[g] = (scaled[g] + scaled[l]) - 1.0
            if scaled[g] < 1.0:
                small.append(g)
            else:
                large.append(g)
        # Leftovers are 1 up to roundoff.
        for i in small + large:
            prob[i] = 1.0
            alias[i] = i

        self.prob = prob
        self.alias = alias

    @property
    def m(self):
        return len(self.prob)

    def sample(self, rng):
        i = rng.next_index(self.m)
        coin = rng.next_float()
        if coin < self.prob[i]:
            return i
        return self.alias[i]


def chernoff_constant(kappa_max):
    '''
    C(k) = (k + 1) / (2k ln(2k / (k + 1)) - k + 1), written with log1p so it stays
    accurate as k approaches 1.
    '''
    if not kappa_max > 1:
        raise SamplingError('kappa_max must be greater than 1, got {}.'.format(kappa_max))
    k = float(kappa_max)
    if math.isinf(k):
        return 1.0 / (2.0 * math.log(2.0) - 1.0)
    denom = 2.0 * k * math.log1p((k - 1.0) / (k + 1.0)) - (k - 1.0)
    return (k + 1.0) / denom


def _check_domain(kappa_max, delta, total, n, d):
    if not kappa_max > 1:
        raise SamplingError('kappa_max must be greater than 1, got {}.'.format(kappa_max))
    if not 0 < delta < 1:
        raise SamplingError('delta must lie in (0, 1), got {}.'.format(delta))
    if not total > 0:
        raise SamplingError('Total leverage must be positive, got {}.'.format(total))
    if n - d < 1:
        raise SamplingError('Need n - d >= 1, got n = {}, d = {}.'.format(n, d))


def _beta(mode, beta):
    if mode not in SAMPLING_MODES:
        raise SamplingError('Unknown sampling mode "{}".'.format(mode))
    if mode == 'uniform':
        raise SamplingError('Uniform sampling has no theoretical sample size; pass it explicitly.')
    if mode != 'approx':
        return 1.0
    if beta is None:
        raise SamplingError('Approximate mode needs an explicit beta.')
    if not beta >= 1:
        raise SamplingError('beta must be at least 1, got {}.'.format(beta))
    return float(beta)


def sample_size_bound(kappa_max, delta, total, n, d, mode='exact', beta=None):
    '''
    C(kappa_max) * total * beta * ln(2 (n - d) / delta) before rounding up.
    '''
    _check_domain(kappa_max, delta, total, n, d)
    beta = _beta(mode, beta)
    return chernoff_constant(kappa_max) * total * beta * math.log(2.0 * (n - d) / delta)


def sample_size(kappa_max, delta, total, n, d, mode='exact', beta=None):
    return int(math.ceil(sample_size_bound(kappa_max, delta, total, n, d, mode, beta)))


def heuristic_sample_size(total, factor=1.0):
    '''
    ceil(c * total * ln(total)), at least 1.
    '''
    if not total > 0:
        raise SamplingError('Total leverage must be positive, got {}.'.format(total))
    if not factor > 0:
        raise SamplingError('Heuristic factor must be positive, got {}.'.format(factor))
    return max(1, int(math.ceil(factor * total * math.log(total))))


def failure_probability(M, kappa_max, total, n, d, mode='exact', beta=None):
    '''
    Failure probability guaranteed at sample count M: 2 (n - d) exp(-M / (C total beta)),
    capped at 1.
    '''
    _check_domain(kappa_max, 0.5, total, n, d)
    beta = _beta(mode, beta)
    exponent = -M / (chernoff_constant(kappa_max) * total * beta)
    return min(1.0, 2.0 * (n - d) * math.exp(exponent))


def chernoff_tail_bounds(mu_min, mu_max, gamma, dim, eta):
    '''
    Matrix Chernoff tails for a sum of independent PSD matrices of norm <= gamma:
    probabilities that lambda_min <= (1 - eta) mu_min and lambda_max >= (1 + eta) mu_max.
    Both are capped at 1.
    '''
    if not 0 <= eta <= 1:
        raise ValueError('eta must lie in [0, 1], got {}.'.format(eta))
    if not gamma > 0:
        raise ValueError('gamma must be positive, got {}.'.format(gamma))
    log_low = -eta - xlogy(1.0 - eta, 1.0 - eta)
    log_high = eta - xlogy(1.0 + eta, 1.0 + eta)
    lower = dim * math.exp(log_low * mu_min / gamma)
    upper = dim * math.exp(log_high * mu_max / gamma)
    return min(1.0, lower), min(1.0, upper)


def plan_tail_bounds(plan, n, d):
    '''
    Chernoff tails for the normalized sample of a plan: mean identity on the
    (n - d)-dimensional range, summands of norm at most beta * total / M, and eta with
    (1 + eta) / (1 - eta) = kappa_max. The upper tail is half of failure_probability.
    '''
    if plan.mode == 'uniform':
        raise SamplingError('Uniform plans have no leverage bound on their summands.')
    gamma = _beta(plan.mode, plan.beta) * plan.total / plan.M
    k = float(plan.kappa_max)
    eta = 1.0 if math.isinf(k) else (k - 1.0) / (k + 1.0)
    return chernoff_tail_bounds(1.0, 1.0, gamma, n - d, eta)


def make_plan(table, kappa_max, delta, n, d, seed=None, mode='exact', beta=None, samples=None):
    '''
    Sampling plan for a leverage table: p_e = tau_e / total (1 / m in uniform mode) and
    the mode's sample count, unless samples overrides it.
    '''
    if seed is None:
        seed = utils.default_seed()
    if mode not in SAMPLING_MODES:
        raise SamplingError('Unknown sampling mode "{}".'.format(mode))
    if mode == 'exact' and not table.is_exact:
        raise SamplingError('Exact mode needs exact leverages, got method "{}".'.format(table.method))
    if samples is not None and samples < 1:
        raise SamplingError('Sample count must be positive, got {}.'.format(samples))

    taus = table.taus
    total = table.total
    if not total > 0:
        raise SamplingError('Total leverage is zero.')
    if mode == 'uniform':
        probabilities = np.full(len(taus), 1.0 / len(taus))
    else:
        probabilities = taus / total

    if samples is not None:
        _check_domain(kappa_max, delta, total, n, d)
        M = int(samples)
    elif mode == 'uniform':
        raise SamplingError('Uniform sampling has no theoretical sample size; pass it explicitly.')
    else:
        M = sample_size(kappa_max, delta, total, n, d, mode, beta)

    plan = SamplingPlan(probabilities, kappa_max, delta, M, seed, mode, beta=beta, total=total)
    logger.info('sampling plan: mode %s, total leverage %.6g, M = %d, seed %d', mode, total, M, seed)
    return plan


def draw_sequence(plan):
    '''
    The M element ids J_1 ... J_M in draw order.
    '''
    rng = Xoshiro256StarStar(plan.seed)
    table = AliasTable(plan.probabilities)
    sample = table.sample
    return np.array([sample(rng) for _ in range(plan.M)], dtype=np.int64)


def draw(plan):
    '''
    Per-element draw counts (length m, summing to M).
    '''
    return np.bincount(draw_sequence(plan), minlength=plan.m)


def build_preconditioner(a, plan, counts):
    '''
    P = sum_e count_e / (M p_e) K_e over the drawn elements, with its rank-revealing
    factorization.
    '''
    counts = np.asarray(counts, dtype=np.int64)
    if counts.shape != (a.m,):
        raise SamplingError('Expected {} counts, got {}.'.format(a.m, counts.shape))
    drawn = np.flatnonzero(counts)
    coeffs = {int(e): counts[e] / (plan.M * plan.probabilities[e]) for e in drawn}
    P = assemble(a, coeffs)
    f = factor(P, a.d, a.null_basis)
    res = SampledPreconditioner(counts, coeffs, P, f.usable, factor=f, M=plan.M, m=a.m, plan=plan)
    logger.info('preconditioner: %d distinct of %d elements, rank_ok %s',
                res.distinct_count, a.m, res.rank_ok)
    return res


def sparsify(a, table, kappa_max, delta, seed=None, mode='exact', beta=None, samples=None,
             retries=utils.DEFAULT_RETRIES):
    '''
    Plans, draws and builds a preconditioner, retrying with seeds seed + 1, seed + 2, ...
    while the result is rank deficient. Returns the last preconditioner and the log of
    attempts.
    '''
    if seed is None:
        seed = utils.default_seed()
    if retries < 0:
        raise SamplingError('retries must be non-negative, got {}.'.format(retries))

    attempts = []
    for k in range(retries + 1):
        plan = make_plan(table, kappa_max, delta, a.n, a.d, seed=seed + k, mode=mode, beta=beta,
                         samples=samples)
        precond = build_preconditioner(a, plan, draw(plan))
        attempts.append({
            'seed': plan.seed,
            'M': plan.M,
            'distinct_count': precond.distinct_count,
            'rank_ok': precond.rank_ok,
        })
        if precond.rank_ok:
            break
        logger.warning('sampled preconditioner with seed %d is rank deficient (deficit %d)',
                       plan.seed, precond.factor.rank_deficit)
    return precond, attempts
