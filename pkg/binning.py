"""Random-binning enrollment/identification scheme at desk scale.

Codebook: v-words i.i.d. from P_V; for each v-word, n_u u-words drawn
through P_{U|V}; each u-list permuted uniformly and cut into n_b bins of
m_s words.  Enrollment stores the template (m, b) and hands back the
within-bin index s.  Identification looks for the unique (individual,
secret) whose codewords are jointly typical with the observation.

Public indices (m, b, s, individual) are 1-based.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from errors import InvalidArgumentError, ResourceLimitError
from probability import (BisSystem, ChannelMatrix, Sequence, chain_joint,
                         conditional_mutual_information, make_stream,
                         mutual_information, plugin_mutual_information,
                         sample_rows, sample_sequence, sample_through_channel,
                         typical_mask)

log = logging.getLogger('bis_region.binning')

MAX_EXPONENT = 16.0
STORAGE_CAP = 2 ** 20
Z_95 = 1.959963984540054


def default_delta(n: int) -> float:
    return 2.0 / math.sqrt(n)


def _count(n: int, rate: float, what: str) -> int:
    if rate < 0.0:
        raise InvalidArgumentError(f'{what} rate must be >= 0, got {rate}')
    if n * rate > MAX_EXPONENT:
        raise ResourceLimitError(
            f'{what}: n * rate = {n * rate:.3g} above desk-scale cap {MAX_EXPONENT}')
    return max(1, math.ceil(2.0 ** (n * rate) - 1e-9))


@dataclass(frozen=True)
class CodeParams:
    n: int
    delta: float
    n_v: int
    n_u: int
    m_s: int
    n_b: int
    m_i: int

    def __post_init__(self):
        counts = (self.n, self.n_v, self.n_u, self.m_s, self.n_b, self.m_i)
        if min(counts) < 1:
            raise InvalidArgumentError(f'all code sizes must be >= 1: {self}')
        if self.n_b * self.m_s != self.n_u:
            raise InvalidArgumentError(
                f'bins do not partition the list: {self.n_b} * {self.m_s} != {self.n_u}')
        if self.delta <= 0.0:
            raise InvalidArgumentError(f'delta must be > 0, got {self.delta}')

    @classmethod
    def from_counts(cls, n: int, n_v: int, n_u: int, m_s: int, m_i: int,
                    delta: Optional[float] = None) -> 'CodeParams':
        """Keep m_s, take n_b = n_u // m_s bins and trim n_u to n_b * m_s."""
        m_s = max(1, min(m_s, n_u))
        n_b = max(1, n_u // m_s)
        return cls(n, delta if delta is not None else default_delta(n),
                   n_v, n_b * m_s, m_s, n_b, m_i)

    @classmethod
    def from_rates(cls, n: int, rate_v: float, rate_u: float, rate_s: float,
                   rate_i: float, delta: Optional[float] = None) -> 'CodeParams':
        """Counts ceil(2^(n * rate)) for each codebook dimension."""
        return cls.from_counts(n, _count(n, rate_v, 'v-words'), _count(n, rate_u, 'u-words'),
                               _count(n, rate_s, 'secrets'), _count(n, rate_i, 'individuals'),
                               delta)

    @classmethod
    def for_scheme(cls, system: BisSystem, u_channel: ChannelMatrix,
                   v_channel: ChannelMatrix, n: int, margin: float = 0.2,
                   delta: Optional[float] = None) -> 'CodeParams':
        """Codebook rates padded by `margin`, message rates backed off by it."""
        joint = chain_joint(system, u_channel, v_channel)
        return cls.from_rates(
            n,
            rate_v=(1.0 + margin) * mutual_information(joint, 'y', 'v'),
            rate_u=(1.0 + margin) * conditional_mutual_information(joint, 'y', 'u', 'v'),
            rate_s=(1.0 - margin) * conditional_mutual_information(joint, 'z', 'u', 'v'),
            rate_i=(1.0 - margin) * mutual_information(joint, 'z', 'v'),
            delta=delta,
        )

    @property
    def identification_rate(self) -> float:
        return math.log2(self.m_i) / self.n

    @property
    def secrecy_rate(self) -> float:
        return math.log2(self.m_s) / self.n

    @property
    def template_rate(self) -> float:
        return math.log2(self.n_v * self.n_b) / self.n


@dataclass(frozen=True)
class Template:
    m: int
    b: int


@dataclass(frozen=True, eq=False)
class Codebook:
    """Immutable once built.

    positions[m, k] is the permuted position of u-word k under v-word m;
    members is its inverse.  Bin b holds positions [(b-1) m_s, b m_s).
    enroll_law / decode_law are P_{YVU} and P_{ZVU}.
    """

    params: CodeParams
    v_words: np.ndarray
    u_words: np.ndarray
    positions: np.ndarray
    members: np.ndarray
    enroll_law: np.ndarray
    decode_law: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        for arr in (self.v_words, self.u_words, self.positions, self.members,
                    self.enroll_law, self.decode_law):
            arr.setflags(write=False)

    def bin_of(self, m: int, k: int) -> tuple[int, int]:
        """Original u-index k of v-word m -> (bin, secret)."""
        pos = int(self.positions[m - 1, k - 1])
        return pos // self.params.m_s + 1, pos % self.params.m_s + 1

    def index_of(self, m: int, b: int, s: int) -> int:
        """(bin, secret) -> original u-index under v-word m."""
        return int(self.members[m - 1, (b - 1) * self.params.m_s + (s - 1)]) + 1

    def bin_members(self, m: int, b: int) -> np.ndarray:
        """Original u-indices (1-based) in bin b of v-word m, in secret order."""
        start = (b - 1) * self.params.m_s
        return self.members[m - 1, start:start + self.params.m_s] + 1

    def _bin_words(self, ms: np.ndarray, bs: np.ndarray) -> np.ndarray:
        """u-words of whole bins: ms, bs 0-based arrays -> (len, m_s, n)."""
        offsets = bs[:, None] * self.params.m_s + np.arange(self.params.m_s)[None, :]
        ks = self.members[ms[:, None], offsets]
        return self.u_words[ms[:, None], ks]


@dataclass(frozen=True)
class Enrollment:
    template: Template
    secret: int
    fallback: bool = False


@dataclass(frozen=True)
class Database:
    """Public templates only; secrets stay with the individuals."""

    records: tuple[Template, ...]

    @property
    def size(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class Decision:
    individual: int
    secret: int
    failure: Optional[str] = None  # 'no-match' | 'ambiguous-individual' | 'ambiguous-secret'


def build_codebook(system: BisSystem, u_channel: ChannelMatrix, v_channel: ChannelMatrix,
                   params: CodeParams, rng: np.random.Generator,
                   storage_cap: int = STORAGE_CAP, seed: Optional[int] = None) -> Codebook:
    n = params.n
    storage = (params.n_v * params.n_u + params.n_v) * n
    if storage > storage_cap:
        raise ResourceLimitError(
            f'codebook needs {storage} symbols, cap is {storage_cap}')
    joint = chain_joint(system, u_channel, v_channel)
    p_v = joint.marginal('v')
    p_vu = joint.marginal(('v', 'u'))
    u_given_v = np.where(p_v[:, None] > 0.0, p_vu / np.where(p_v > 0.0, p_v, 1.0)[:, None],
                         1.0 / p_vu.shape[1])

    word_rng, perm_rng = rng.spawn(2)
    v_cdf = np.broadcast_to(np.cumsum(p_v), (params.n_v, n, p_v.size))
    v_words = sample_rows(v_cdf, word_rng)
    u_cdf = np.cumsum(u_given_v, axis=1)[v_words]
    u_cdf = np.broadcast_to(u_cdf[:, None, :, :], (params.n_v, params.n_u, n, u_cdf.shape[-1]))
    u_words = sample_rows(u_cdf, word_rng)

    members = np.stack([stream.permutation(params.n_u) for stream in perm_rng.spawn(params.n_v)])
    positions = np.argsort(members, axis=1)
    return Codebook(
        params=params,
        v_words=v_words,
        u_words=u_words,
        positions=positions,
        members=members,
        enroll_law=np.ascontiguousarray(joint.marginal(('y', 'v', 'u'))),
        decode_law=np.ascontiguousarray(joint.marginal(('z', 'v', 'u'))),
        seed=seed,
    )


def _check_block(book: Codebook, seq: Sequence, size: int, what: str) -> None:
    if len(seq) != book.params.n:
        raise InvalidArgumentError(f'{what} has length {len(seq)}, block length is {book.params.n}')
    if seq.alphabet_size != size:
        raise InvalidArgumentError(f'{what} alphabet {seq.alphabet_size}, expected {size}')


def enroll(book: Codebook, y: Sequence, delta: float,
           rng: np.random.Generator) -> Enrollment:
    """Scan every (m, k); pick one jointly typical pair uniformly at random.

    One draw from rng per successful scan; none on fallback.
    """
    n_y, n_v_alpha, n_u_alpha = book.enroll_law.shape
    _check_block(book, y, n_y, 'enrollment sequence')
    index = (y.symbols[None, None, :] * n_v_alpha + book.v_words[:, None, :]) * n_u_alpha \
        + book.u_words
    matches = np.argwhere(typical_mask(index, book.enroll_law, delta))
    if not len(matches):
        return Enrollment(Template(1, 1), 1, fallback=True)
    m, k = matches[rng.integers(len(matches))]
    b, s = book.bin_of(int(m) + 1, int(k) + 1)
    return Enrollment(Template(int(m) + 1, b), s)


def enroll_population(book: Codebook, ys: list[Sequence], delta: float,
                      rng: np.random.Generator) -> tuple[Database, np.ndarray, int]:
    """Enroll individuals 1..len(ys); returns (database, secrets, fallback count)."""
    results = [enroll(book, y, delta, rng) for y in ys]
    db = Database(tuple(r.template for r in results))
    secrets = np.array([r.secret for r in results], dtype=np.int64)
    return db, secrets, sum(r.fallback for r in results)


def _decode_mask(book: Codebook, templates: list[Template], z: Sequence,
                 delta: float) -> np.ndarray:
    n_z, n_v_alpha, n_u_alpha = book.decode_law.shape
    _check_block(book, z, n_z, 'identification sequence')
    for t in templates:
        if not (1 <= t.m <= book.params.n_v and 1 <= t.b <= book.params.n_b):
            raise InvalidArgumentError(f'template {t} out of range')
    ms = np.array([t.m - 1 for t in templates], dtype=np.int64)
    bs = np.array([t.b - 1 for t in templates], dtype=np.int64)
    u = book._bin_words(ms, bs)
    v = book.v_words[ms]
    index = (z.symbols[None, None, :] * n_v_alpha + v[:, None, :]) * n_u_alpha + u
    return typical_mask(index, book.decode_law, delta)


def identify(book: Codebook, db: Database, z: Sequence, delta: float) -> Decision:
    """Unique (individual, secret) typical with z, else the (1, 1) fallback."""
    if not db.records:
        raise InvalidArgumentError('empty database')
    mask = _decode_mask(book, list(db.records), z, delta)
    hit_rows = np.nonzero(mask.any(axis=1))[0]
    if hit_rows.size == 0:
        return Decision(1, 1, 'no-match')
    if hit_rows.size > 1:
        return Decision(1, 1, 'ambiguous-individual')
    i = int(hit_rows[0])
    secrets = np.nonzero(mask[i])[0]
    if secrets.size > 1:
        return Decision(1, 1, 'ambiguous-secret')
    return Decision(i + 1, int(secrets[0]) + 1)


def partial_decode(book: Codebook, template: Template, z_i: Sequence, delta: float) -> int:
    """Secret estimate knowing the true individual's template; 1 unless unique."""
    hits = np.nonzero(_decode_mask(book, [template], z_i, delta)[0])[0]
    return int(hits[0]) + 1 if hits.size == 1 else 1


@dataclass
class _Tally:
    errors: np.ndarray
    visits: np.ndarray
    partial_errors: int = 0
    fallbacks: int = 0
    enrollments: int = 0
    secrecy_pairs: Counter = field(default_factory=Counter)
    privacy_pairs: Counter = field(default_factory=Counter)

    def merge(self, other: '_Tally') -> '_Tally':
        return _Tally(
            self.errors + other.errors,
            self.visits + other.visits,
            self.partial_errors + other.partial_errors,
            self.fallbacks + other.fallbacks,
            self.enrollments + other.enrollments,
            self.secrecy_pairs + other.secrecy_pairs,
            self.privacy_pairs + other.privacy_pairs,
        )


@dataclass(frozen=True)
class SimulationResult:
    n: int
    trials: int
    max_error_rate: float
    max_error_half_width: float
    max_error_std_error: float
    worst_individual: int
    error_rate: float
    partial_error_rate: float
    partial_std_error: float
    secrecy_leakage_bits: float
    privacy_leakage_rate: float
    fallback_rate: float
    identification_rate: float
    secrecy_rate: float
    template_rate: float
    params: CodeParams

    @property
    def partial_within_bound(self) -> bool:
        """Partial-decoder error no larger than the full decoder's, up to 3 standard errors."""
        return self.partial_error_rate <= self.max_error_rate + 3.0 * self.max_error_std_error


def _run_trials(system: BisSystem, u_channel: ChannelMatrix, v_channel: ChannelMatrix,
                params: CodeParams, delta: float, seed: Optional[int],
                trial_ids: range, fixed_book: Optional[Codebook],
                storage_cap: int) -> _Tally:
    tally = _Tally(np.zeros(params.m_i, dtype=np.int64), np.zeros(params.m_i, dtype=np.int64))
    x_size = system.x_size
    for trial in trial_ids:
        book_rng, source_rng, enroll_rng, id_rng = make_stream(seed, trial).spawn(4)
        book = fixed_book or build_codebook(system, u_channel, v_channel, params,
                                            book_rng, storage_cap, seed)
        xs = [sample_sequence(system.source, params.n, source_rng) for _ in range(params.m_i)]
        ys = [sample_through_channel(x, system.enrollment, source_rng) for x in xs]
        db, secrets, fallbacks = enroll_population(book, ys, delta, enroll_rng)

        w = trial % params.m_i
        z = sample_through_channel(xs[w], system.identification, id_rng)
        decision = identify(book, db, z, delta)
        tally.visits[w] += 1
        if (decision.individual, decision.secret) != (w + 1, int(secrets[w])):
            tally.errors[w] += 1
        if partial_decode(book, db.records[w], z, delta) != int(secrets[w]):
            tally.partial_errors += 1

        tally.fallbacks += fallbacks
        tally.enrollments += params.m_i
        for x, template, secret in zip(xs, db.records, secrets):
            key = (template.m, template.b)
            tally.secrecy_pairs[(int(secret), key)] += 1
            x_type = tuple(np.bincount(x.symbols, minlength=x_size).tolist())
            tally.privacy_pairs[(x_type, key)] += 1
    return tally


def run_simulation(system: BisSystem, u_channel: ChannelMatrix, v_channel: ChannelMatrix,
                   params: CodeParams, trials: int, delta: Optional[float] = None,
                   seed: Optional[int] = 0, codebook_mode: str = 'fresh',
                   storage_cap: int = STORAGE_CAP, chunks: int = 8,
                   n_jobs: int = 1) -> SimulationResult:
    """Monte Carlo estimate of the operational quantities.

    Trial t uses its own stream (seed, t) and tests individual t mod m_i, so
    every individual is visited round-robin and the result does not depend
    on how trials are split across workers.
    """
    if trials < 1:
        raise InvalidArgumentError(f'trials must be >= 1, got {trials}')
    if codebook_mode not in ('fresh', 'fixed'):
        raise InvalidArgumentError(f'unknown codebook mode {codebook_mode!r}')
    delta = params.delta if delta is None else delta
    fixed_book = None
    if codebook_mode == 'fixed':
        fixed_book = build_codebook(system, u_channel, v_channel, params,
                                    make_stream(seed), storage_cap, seed)
    else:
        storage = (params.n_v * params.n_u + params.n_v) * params.n
        if storage > storage_cap:
            raise ResourceLimitError(f'codebook needs {storage} symbols, cap is {storage_cap}')

    chunks = max(1, min(chunks, trials))
    bounds = np.linspace(0, trials, chunks + 1).astype(int)
    jobs = [delayed(_run_trials)(system, u_channel, v_channel, params, delta, seed,
                                 range(bounds[c], bounds[c + 1]), fixed_book, storage_cap)
            for c in range(chunks) if bounds[c + 1] > bounds[c]]
    parts = Parallel(n_jobs=n_jobs)(jobs)
    tally = parts[0]
    for part in parts[1:]:
        tally = tally.merge(part)

    visited = tally.visits > 0
    rates = np.zeros(params.m_i)
    rates[visited] = tally.errors[visited] / tally.visits[visited]
    worst = int(np.argmax(np.where(visited, rates, -1.0)))
    p_max = float(rates[worst])
    se_max = math.sqrt(p_max * (1.0 - p_max) / tally.visits[worst])
    p_partial = tally.partial_errors / trials
    result = SimulationResult(
        n=params.n,
        trials=trials,
        max_error_rate=p_max,
        max_error_half_width=Z_95 * se_max,
        max_error_std_error=se_max,
        worst_individual=worst + 1,
        error_rate=float(tally.errors.sum() / trials),
        partial_error_rate=p_partial,
        partial_std_error=math.sqrt(p_partial * (1.0 - p_partial) / trials),
        secrecy_leakage_bits=plugin_mutual_information(tally.secrecy_pairs),
        privacy_leakage_rate=plugin_mutual_information(tally.privacy_pairs) / params.n,
        fallback_rate=tally.fallbacks / tally.enrollments,
        identification_rate=params.identification_rate,
        secrecy_rate=params.secrecy_rate,
        template_rate=params.template_rate,
        params=params,
    )
    log.info('n=%d trials=%d: max error %.4f (+-%.4f), partial %.4f, I(S;J)=%.4g bits, '
             'leakage rate %.4g, fallback %.3f', params.n, trials, result.max_error_rate,
             result.max_error_half_width, result.partial_error_rate,
             result.secrecy_leakage_bits, result.privacy_leakage_rate, result.fallback_rate)
    return result
