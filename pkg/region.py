"""Rate region of the BIS with noisy enrollment.

For a test channel P_{U|Y} the single-auxiliary region reads

    R_I + R_S <= I(Z;U)
    R_J >= I(Y;U) - I(Z;U) + R_I
    R_L >= I(X;U) - I(Z;U) + R_I

and the two-auxiliary form replaces R_I in the last two bounds by I(Z;V)
for a degraded V.  This module evaluates those bounds, traces a sampled
boundary for a fixed R_S slice, builds explicit V witnesses, and checks the
noiseless-enrollment and single-individual reductions.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from errors import InfeasibleError, InvalidArgumentError, NumericalFailureError
from probability import (BisSystem, ChannelMatrix, chain_joint, make_stream,
                         mutual_information)

log = logging.getLogger('bis_region.region')

BUDGET_TOL = 1e-12
DPI_TOL = 1e-9
WITNESS_TOL = 1e-6
BISECTION_LIMIT = 200
STRUCTURED_LIMIT = 4096
PENALTY = 100.0


@dataclass(frozen=True)
class RateTuple:
    r_i: float
    r_s: float
    r_j: float
    r_l: float
    clamped: bool = False

    def __post_init__(self):
        if self.r_i < 0.0 or self.r_s < 0.0:
            raise InvalidArgumentError(
                f'identification and secrecy rates must be >= 0: {self.r_i}, {self.r_s}')


@dataclass(frozen=True, eq=False)
class TestChannelRates:
    """I(Z;U), I(Y;U), I(X;U) for one test channel."""

    i_zu: float
    i_yu: float
    i_xu: float
    u_channel: ChannelMatrix

    @property
    def template_offset(self) -> float:
        return self.i_yu - self.i_zu

    @property
    def leakage_offset(self) -> float:
        return self.i_xu - self.i_zu


@dataclass(frozen=True, eq=False)
class CornerRecord:
    r_i: float
    r_s: float
    r_j: float
    r_l: float
    witness_id: str
    u_channel: ChannelMatrix
    clamped: bool = False


@dataclass(frozen=True)
class HullPoint:
    r_i: float
    r_j: float
    r_l: float


@dataclass(frozen=True)
class CardinalitySummary:
    """Best values found among witnesses with a given |U|."""

    u_size: int
    witnesses: int
    max_i_zu: float
    min_template_offset: float
    min_leakage_offset: float


@dataclass(frozen=True, eq=False)
class RegionSample:
    r_s: float
    points: tuple[CornerRecord, ...]
    hull: tuple[HullPoint, ...]
    by_cardinality: tuple[CardinalitySummary, ...] = ()

    @property
    def max_r_i(self) -> float:
        return max((p.r_i for p in self.points), default=0.0)

    def hull_at(self, r_i: float) -> Optional[HullPoint]:
        """Hull point at the grid value closest to r_i."""
        if not self.hull:
            return None
        return min(self.hull, key=lambda h: abs(h.r_i - r_i))


@dataclass(frozen=True, eq=False)
class A2Witness:
    u_channel: ChannelMatrix
    v_channel: ChannelMatrix
    lam: float
    achieved_i_zv: float
    iterations: int = 0


@dataclass(frozen=True)
class A2Bounds:
    """Constraints of the two-auxiliary region at one (U, V) witness."""

    r_i_cap: float
    r_s_cap: float
    r_j_min: float
    r_l_min: float


@dataclass(frozen=True)
class SpecialCaseReport:
    noiseless_max_deviation: float
    single_user_max_deviation: float
    secrecy_independence_deviation: float
    samples: int
    tolerance: float = BUDGET_TOL

    @property
    def passed(self) -> bool:
        return max(self.noiseless_max_deviation, self.single_user_max_deviation,
                   self.secrecy_independence_deviation) <= self.tolerance


@dataclass
class SearchParams:
    """Knobs of `sample_region`. Mirrors config.SearchConfig."""

    samples: int = 4096
    refine_steps: int = 64
    grid_points: int = 101
    u_sizes: Optional[list[int]] = None
    refine_top: int = 16
    chunks: int = 8
    n_jobs: int = 1
    structured: bool = True
    allow_large_alphabet: bool = False


def rates_for_test_channel(system: BisSystem, u_channel: ChannelMatrix,
                           allow_large_alphabet: bool = False) -> TestChannelRates:
    if u_channel.rows != system.y_size:
        raise InvalidArgumentError(
            f'U-channel has {u_channel.rows} rows, |Y| = {system.y_size}')
    if u_channel.cols > system.y_size + 2 and not allow_large_alphabet:
        raise InvalidArgumentError(
            f'|U| = {u_channel.cols} exceeds the cardinality bound |Y|+2 = {system.y_size + 2}')
    joint = chain_joint(system, u_channel)
    return TestChannelRates(
        i_zu=mutual_information(joint, 'z', 'u'),
        i_yu=mutual_information(joint, 'y', 'u'),
        i_xu=mutual_information(joint, 'x', 'u'),
        u_channel=u_channel,
    )


def corner_point(rates: TestChannelRates, r_i: float, r_s: float) -> RateTuple:
    """Smallest (R_J, R_L) this witness allows at (R_I, R_S); negatives clamp to 0."""
    if r_i < 0.0 or r_s < 0.0:
        raise InvalidArgumentError(f'rates must be >= 0: r_i={r_i}, r_s={r_s}')
    if r_i + r_s > rates.i_zu + BUDGET_TOL:
        raise InfeasibleError(
            f'r_i + r_s = {r_i + r_s:.6g} exceeds I(Z;U) = {rates.i_zu:.6g}')
    r_j = rates.template_offset + r_i
    r_l = rates.leakage_offset + r_i
    clamped = r_j < 0.0 or r_l < 0.0
    return RateTuple(r_i, r_s, max(r_j, 0.0), max(r_l, 0.0), clamped)


def random_u_channel(y_size: int, u_size: int, rng: np.random.Generator) -> ChannelMatrix:
    """Rows drawn from Dirichlet(1, ..., 1)."""
    rows = rng.dirichlet(np.ones(u_size), size=y_size)
    return ChannelMatrix(rows / rows.sum(axis=1, keepdims=True))


def structured_witnesses(y_size: int, u_size: int) -> list[tuple[str, ChannelMatrix]]:
    """Deterministic maps Y -> U plus identity-padded channels and their
    mixtures with a uniform spread over the first |Y| outputs."""
    found: list[tuple[str, ChannelMatrix]] = []
    if u_size ** y_size <= STRUCTURED_LIMIT:
        for k, image in enumerate(itertools.product(range(u_size), repeat=y_size)):
            entries = np.zeros((y_size, u_size))
            entries[np.arange(y_size), image] = 1.0
            found.append((f'det{u_size}-{k}', ChannelMatrix(entries)))
    if u_size >= y_size:
        eye = np.zeros((y_size, u_size))
        eye[:, :y_size] = np.eye(y_size)
        spread = np.zeros((y_size, u_size))
        spread[:, :y_size] = 1.0 / y_size
        for k, t in enumerate(np.linspace(0.0, 1.0, 33)):
            found.append((f'pad{u_size}-{k}', ChannelMatrix(t * eye + (1.0 - t) * spread)))
    return found


def _evaluate_chunk(system: BisSystem, u_size: int, count: int, seed: Optional[int],
                    chunk: int, allow_large: bool) -> list[tuple[str, TestChannelRates]]:
    rng = make_stream(seed, u_size, chunk)
    out = []
    for k in range(count):
        channel = random_u_channel(system.y_size, u_size, rng)
        out.append((f'dir{u_size}-{chunk}-{k}',
                    rates_for_test_channel(system, channel, allow_large)))
    return out


def pareto_mask(r_j: np.ndarray, r_l: np.ndarray) -> np.ndarray:
    """Points not dominated in (r_j, r_l); exact ties keep the earliest."""
    keep = np.zeros(r_j.shape[0], dtype=bool)
    if not r_j.size:
        return keep
    order = np.lexsort((r_l, r_j))
    running = np.minimum.accumulate(r_l[order])
    previous = np.concatenate(([np.inf], running[:-1]))
    keep[order[r_l[order] < previous]] = True
    return keep


def lower_convex_envelope(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Greatest convex minorant of the points (xs, ys), evaluated at xs.

    xs must be sorted ascending.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size <= 2:
        return ys.copy()
    lower: list[tuple[float, float]] = []
    for p in zip(xs, ys):
        while len(lower) > 1:
            (x0, y0), (x1, y1) = lower[-2], lower[-1]
            if (x1 - x0) * (p[1] - y0) - (p[0] - x0) * (y1 - y0) <= 0.0:
                lower.pop()
            else:
                break
        lower.append(p)
    hx, hy = zip(*lower)
    return np.interp(xs, hx, hy)


def _corner_cost(rates: TestChannelRates, weight: float) -> float:
    return weight * rates.template_offset + (1.0 - weight) * rates.leakage_offset


def refine_witness(system: BisSystem, u_channel: ChannelMatrix, budget: float,
                   weight: float, steps: int, allow_large: bool = False) -> ChannelMatrix:
    """Coordinate descent on the corner cost, keeping I(Z;U) >= budget.

    Each sweep tries moving `step` mass between every pair of outputs in
    every row; the step halves after a sweep without improvement.
    """
    def score(entries: np.ndarray) -> float:
        rates = rates_for_test_channel(system, ChannelMatrix(entries), allow_large)
        shortfall = max(0.0, budget - rates.i_zu)
        return _corner_cost(rates, weight) + PENALTY * shortfall

    current = u_channel.entries.copy()
    best = score(current)
    step = 0.25
    rows, cols = current.shape
    for _ in range(steps):
        improved = False
        for y in range(rows):
            for a, b in itertools.permutations(range(cols), 2):
                moved = min(step, current[y, a])
                if moved <= 0.0:
                    continue
                candidate = current.copy()
                candidate[y, a] -= moved
                candidate[y, b] += moved
                value = score(candidate)
                if value < best - 1e-15:
                    current, best, improved = candidate, value, True
        if not improved:
            step /= 2.0
            if step < 1e-7:
                break
    return ChannelMatrix(current)


def _refine_job(system, channel, budget, weight, steps, allow_large, tag):
    refined = refine_witness(system, channel, budget, weight, steps, allow_large)
    return tag, rates_for_test_channel(system, refined, allow_large)


def _grid_corners(pool: list[tuple[str, TestChannelRates]], grid: np.ndarray,
                  r_s: float) -> list[list[CornerRecord]]:
    i_zu = np.array([rates.i_zu for _, rates in pool])
    off_j = np.array([rates.template_offset for _, rates in pool])
    off_l = np.array([rates.leakage_offset for _, rates in pool])
    per_grid = []
    for r_i in grid:
        feasible = np.nonzero(i_zu + BUDGET_TOL >= r_i + r_s)[0]
        raw_j = off_j[feasible] + r_i
        raw_l = off_l[feasible] + r_i
        keep = pareto_mask(np.maximum(raw_j, 0.0), np.maximum(raw_l, 0.0))
        records = []
        for k in feasible[keep]:
            wid, rates = pool[k]
            corner = corner_point(rates, float(r_i), r_s)
            records.append(CornerRecord(corner.r_i, r_s, corner.r_j, corner.r_l,
                                        wid, rates.u_channel, corner.clamped))
        per_grid.append(records)
    return per_grid


def _summaries(pool: list[tuple[str, TestChannelRates]]) -> tuple[CardinalitySummary, ...]:
    sizes = sorted({rates.u_channel.cols for _, rates in pool})
    out = []
    for size in sizes:
        group = [rates for _, rates in pool if rates.u_channel.cols == size]
        out.append(CardinalitySummary(
            u_size=size,
            witnesses=len(group),
            max_i_zu=max(r.i_zu for r in group),
            min_template_offset=min(r.template_offset for r in group),
            min_leakage_offset=min(r.leakage_offset for r in group),
        ))
    return tuple(out)


def sample_region(system: BisSystem, r_s: float, params: Optional[SearchParams] = None,
                  seed: Optional[int] = 0) -> RegionSample:
    """Sampled boundary of the region on the slice R_S = r_s.

    Witnesses: structured channels plus Dirichlet samples split over
    `params.chunks` independent streams, then coordinate-descent refinement
    of the best witnesses at `refine_top` grid points.  The result keeps,
    per R_I grid value, the Pareto-minimal (R_J, R_L) corners, and the hull
    holds the convex lower envelopes of min R_J and min R_L over R_I.
    """
    if r_s < 0.0:
        raise InvalidArgumentError(f'r_s must be >= 0, got {r_s}')
    params = params or SearchParams()
    u_sizes = params.u_sizes or [system.y_size + 2]
    allow_large = params.allow_large_alphabet

    pool: list[tuple[str, TestChannelRates]] = []
    if params.structured:
        for size in u_sizes:
            for wid, channel in structured_witnesses(system.y_size, size):
                pool.append((wid, rates_for_test_channel(system, channel, allow_large)))

    chunks = max(1, params.chunks)
    per_chunk = [params.samples // chunks + (1 if c < params.samples % chunks else 0)
                 for c in range(chunks)]
    jobs = [delayed(_evaluate_chunk)(system, size, count, seed, c, allow_large)
            for size in u_sizes for c, count in enumerate(per_chunk) if count]
    for batch in Parallel(n_jobs=params.n_jobs)(jobs):
        pool.extend(batch)
    log.info('Evaluated %d witnesses for |U| in %s', len(pool), u_sizes)

    best_i_zu = max((rates.i_zu for _, rates in pool), default=None)
    if best_i_zu is None or best_i_zu + BUDGET_TOL < r_s:
        log.warning('Slice r_s=%.6g is empty: no witness reaches it', r_s)
        return RegionSample(r_s, (), (), _summaries(pool))
    r_i_max = max(0.0, best_i_zu - r_s)
    if r_i_max < BUDGET_TOL:
        grid = np.array([0.0])
    else:
        grid = np.linspace(0.0, r_i_max, max(2, params.grid_points))

    if params.refine_steps > 0 and params.refine_top > 0:
        per_grid = _grid_corners(pool, grid, r_s)
        picks = np.unique(np.linspace(0, grid.size - 1, params.refine_top).astype(int))
        jobs = []
        for g in picks:
            if not per_grid[g]:
                continue
            for weight, pick in ((1.0, min(per_grid[g], key=lambda c: c.r_j)),
                                 (0.0, min(per_grid[g], key=lambda c: c.r_l))):
                tag = f'ref-{g}-{"j" if weight else "l"}'
                jobs.append(delayed(_refine_job)(
                    system, pick.u_channel, float(grid[g]) + r_s, weight,
                    params.refine_steps, allow_large, tag))
        refined = Parallel(n_jobs=params.n_jobs)(jobs)
        pool.extend(refined)
        log.debug('Refined %d witnesses', len(refined))

    per_grid = _grid_corners(pool, grid, r_s)
    points = tuple(rec for records in per_grid for rec in records)
    kept = [k for k, records in enumerate(per_grid) if records]
    xs = grid[kept]
    min_j = np.array([min(c.r_j for c in per_grid[k]) for k in kept])
    min_l = np.array([min(c.r_l for c in per_grid[k]) for k in kept])
    env_j = lower_convex_envelope(xs, min_j)
    env_l = lower_convex_envelope(xs, min_l)
    hull = tuple(HullPoint(float(x), float(j), float(l))
                 for x, j, l in zip(xs, env_j, env_l))
    summaries = _summaries(pool)
    for s in summaries:
        log.info('|U|=%d: %d witnesses, max I(Z;U)=%.6f, min R_J offset=%.6f, '
                 'min R_L offset=%.6f', s.u_size, s.witnesses, s.max_i_zu,
                 s.min_template_offset, s.min_leakage_offset)
    log.info('Region slice r_s=%.6g: max r_i=%.6f, %d corner points',
             r_s, r_i_max, len(points))
    return RegionSample(r_s, points, hull, summaries)


def degradation_channel(size: int, lam: float) -> ChannelMatrix:
    """lam * identity + (1 - lam) * uniform output."""
    if not 0.0 <= lam <= 1.0:
        raise InvalidArgumentError(f'lambda must be in [0, 1], got {lam}')
    return ChannelMatrix(lam * np.eye(size) + (1.0 - lam) / size)


def i_zv(system: BisSystem, u_channel: ChannelMatrix, v_channel: ChannelMatrix) -> float:
    return mutual_information(chain_joint(system, u_channel, v_channel), 'z', 'v')


def a2_witness_for(system: BisSystem, u_channel: ChannelMatrix, r_i: float,
                   tol: float = WITNESS_TOL) -> A2Witness:
    """V witness with I(Z;V) = r_i, found by bisection over the degradation
    weight; I(Z;V) is nondecreasing in lambda because the family composes."""
    size = u_channel.cols
    i_zu = mutual_information(chain_joint(system, u_channel), 'z', 'u')
    if r_i < 0.0:
        raise InvalidArgumentError(f'r_i must be >= 0, got {r_i}')
    if r_i > i_zu + DPI_TOL:
        raise InfeasibleError(f'r_i = {r_i:.6g} exceeds I(Z;U) = {i_zu:.6g}')

    def at(lam: float) -> tuple[ChannelMatrix, float]:
        v = degradation_channel(size, lam)
        return v, i_zv(system, u_channel, v)

    for lam in (0.0, 1.0):
        v, value = at(lam)
        if abs(value - r_i) <= tol:
            return A2Witness(u_channel, v, lam, value)
    lo, hi = 0.0, 1.0
    for it in range(1, BISECTION_LIMIT + 1):
        mid = 0.5 * (lo + hi)
        v, value = at(mid)
        if abs(value - r_i) <= tol:
            return A2Witness(u_channel, v, mid, value, it)
        if value < r_i:
            lo = mid
        else:
            hi = mid
    raise NumericalFailureError(
        f'bisection for I(Z;V) = {r_i:.6g} did not converge in {BISECTION_LIMIT} steps')


def a2_bounds(system: BisSystem, witness: A2Witness) -> A2Bounds:
    joint = chain_joint(system, witness.u_channel, witness.v_channel)
    i_zu = mutual_information(joint, 'z', 'u')
    i_zv_value = mutual_information(joint, 'z', 'v')
    return A2Bounds(
        r_i_cap=i_zv_value,
        r_s_cap=i_zu - i_zv_value,
        r_j_min=mutual_information(joint, 'y', 'u') - i_zu + i_zv_value,
        r_l_min=mutual_information(joint, 'x', 'u') - i_zu + i_zv_value,
    )


@dataclass(frozen=True)
class EquivalenceRecord:
    witness_id: str
    r_i: float
    lam: float
    achieved_i_zv: float
    a1_r_j: float
    a2_r_j: float
    a1_r_l: float
    a2_r_l: float

    @property
    def deviation(self) -> float:
        return max(abs(self.a1_r_j - self.a2_r_j), abs(self.a1_r_l - self.a2_r_l))


def check_equivalence(system: BisSystem, pairs: int, rng: np.random.Generator,
                      u_size: Optional[int] = None) -> list[EquivalenceRecord]:
    """Single- vs two-auxiliary bounds on random (witness, r_i) pairs."""
    u_size = u_size or system.y_size + 2
    records = []
    for k in range(pairs):
        channel = random_u_channel(system.y_size, u_size, rng)
        rates = rates_for_test_channel(system, channel, allow_large_alphabet=True)
        r_i = float(rng.uniform(0.0, rates.i_zu))
        witness = a2_witness_for(system, channel, r_i)
        bounds = a2_bounds(system, witness)
        records.append(EquivalenceRecord(
            witness_id=f'eq-{k}', r_i=r_i, lam=witness.lam,
            achieved_i_zv=witness.achieved_i_zv,
            a1_r_j=rates.template_offset + r_i, a2_r_j=bounds.r_j_min,
            a1_r_l=rates.leakage_offset + r_i, a2_r_l=bounds.r_l_min,
        ))
    worst = max((r.deviation for r in records), default=0.0)
    log.info('Equivalence: %d pairs, max bound deviation %.3g', pairs, worst)
    return records


def check_special_cases(system: BisSystem, samples: int,
                        rng: np.random.Generator) -> SpecialCaseReport:
    """Noiseless-enrollment and single-individual reductions.

    (a) With Y = X the R_J and R_L bounds coincide for every witness.
    (b) At R_I = 0 the corner is (I(Y;U) - I(Z;U), I(X;U) - I(Z;U)) and
        the R_J bound does not depend on R_S.
    """
    noiseless = system.with_noiseless_enrollment()
    dev_a = dev_b = dev_s = 0.0
    for _ in range(samples):
        channel = random_u_channel(noiseless.y_size, noiseless.y_size + 2, rng)
        rates = rates_for_test_channel(noiseless, channel)
        r_i = float(rng.uniform(0.0, rates.i_zu))
        min_r_j = rates.template_offset + r_i
        min_r_l = rates.leakage_offset + r_i
        dev_a = max(dev_a, abs(min_r_j - min_r_l))

        channel = random_u_channel(system.y_size, system.y_size + 2, rng)
        rates = rates_for_test_channel(system, channel)
        corner = corner_point(rates, 0.0, 0.0)
        dev_b = max(dev_b,
                    abs(corner.r_j - max(0.0, rates.i_yu - rates.i_zu)),
                    abs(corner.r_l - max(0.0, rates.i_xu - rates.i_zu)))
        shifted = corner_point(rates, 0.0, rates.i_zu * float(rng.uniform()))
        dev_s = max(dev_s, abs(shifted.r_j - corner.r_j))
    report = SpecialCaseReport(dev_a, dev_b, dev_s, samples)
    log.info('Special cases over %d samples: noiseless %.3g, single-user %.3g, '
             'r_s independence %.3g -> %s', samples, dev_a, dev_b, dev_s,
             'PASS' if report.passed else 'FAIL')
    return report
