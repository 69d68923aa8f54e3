"""Finite-alphabet probability core: distributions, channels, the joint law
along Z-X-Y-U(-V), information functionals, strong typicality and seeded
sampling.

All logarithms are base two; every rate is in bits.
"""

import math
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Iterable, Mapping, Optional, Sequence as Seq, Union

import numpy as np
from scipy.special import entr

from errors import InvalidArgumentError

MASS_TOL = 1e-12
MAX_ALPHABET = 16

AxisRef = Union[int, str]


def _frozen(values, ndim: int, what: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise InvalidArgumentError(f'{what} must be {ndim}-D, got shape {arr.shape}')
    if arr.size == 0:
        raise InvalidArgumentError(f'{what} is empty')
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f'{what} has non-finite entries')
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise InvalidArgumentError(f'{what} has entries outside [0, 1]')
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Probability vector over {0, ..., size-1}."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs, 1, 'distribution')
        if abs(probs.sum() - 1.0) > MASS_TOL:
            raise InvalidArgumentError(f'distribution sums to {probs.sum()!r}, not 1')
        object.__setattr__(self, 'probs', probs)

    @property
    def size(self) -> int:
        return self.probs.shape[0]

    @classmethod
    def uniform(cls, size: int) -> 'DiscreteDistribution':
        return cls(np.full(size, 1.0 / size))

    def tolist(self) -> list[float]:
        return self.probs.tolist()


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """Row-stochastic matrix: entries[a, b] = P(out=b | in=a)."""

    entries: np.ndarray

    def __post_init__(self):
        entries = _frozen(self.entries, 2, 'channel')
        sums = entries.sum(axis=1)
        if np.any(np.abs(sums - 1.0) > MASS_TOL):
            raise InvalidArgumentError(f'channel rows sum to {sums.tolist()}, not 1')
        object.__setattr__(self, 'entries', entries)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]

    @classmethod
    def identity(cls, size: int) -> 'ChannelMatrix':
        return cls(np.eye(size))

    @classmethod
    def bsc(cls, crossover: float) -> 'ChannelMatrix':
        """Binary symmetric channel."""
        return cls([[1.0 - crossover, crossover], [crossover, 1.0 - crossover]])

    @classmethod
    def constant(cls, rows: int, row: Seq[float]) -> 'ChannelMatrix':
        """Channel whose output ignores its input."""
        return cls(np.tile(np.asarray(row, dtype=float), (rows, 1)))

    def output(self, d: DiscreteDistribution) -> DiscreteDistribution:
        if d.size != self.rows:
            raise InvalidArgumentError(
                f'distribution of size {d.size} cannot feed a {self.rows}-row channel')
        out = d.probs @ self.entries
        return DiscreteDistribution(out / out.sum())

    def tolist(self) -> list[list[float]]:
        return self.entries.tolist()


@dataclass(frozen=True, eq=False)
class BisSystem:
    """The fixed triple (P_X, P_{Y|X}, P_{Z|X})."""

    source: DiscreteDistribution
    enrollment: ChannelMatrix
    identification: ChannelMatrix

    def __post_init__(self):
        n_x = self.source.size
        if self.enrollment.rows != n_x or self.identification.rows != n_x:
            raise InvalidArgumentError(
                f'source has {n_x} symbols but channels have '
                f'{self.enrollment.rows} / {self.identification.rows} rows')
        for size in (n_x, self.enrollment.cols, self.identification.cols):
            if size > MAX_ALPHABET:
                raise InvalidArgumentError(f'alphabet size {size} above cap {MAX_ALPHABET}')

    @property
    def x_size(self) -> int:
        return self.source.size

    @property
    def y_size(self) -> int:
        return self.enrollment.cols

    @property
    def z_size(self) -> int:
        return self.identification.cols

    @classmethod
    def symmetric_binary(cls, p0: float, enrollment_crossover: float,
                         identification_crossover: float) -> 'BisSystem':
        return cls(DiscreteDistribution([p0, 1.0 - p0]),
                   ChannelMatrix.bsc(enrollment_crossover),
                   ChannelMatrix.bsc(identification_crossover))

    def with_noiseless_enrollment(self) -> 'BisSystem':
        """Same source and identification channel, Y = X."""
        return BisSystem(self.source, ChannelMatrix.identity(self.x_size),
                         self.identification)


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Dense joint law; `names` label the axes (e.g. 'z', 'x', 'y', 'u', 'v')."""

    names: tuple[str, ...]
    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float)
        if len(self.names) != probs.ndim or len(set(self.names)) != len(self.names):
            raise InvalidArgumentError(f'axis names {self.names} do not fit shape {probs.shape}')
        if any(size > MAX_ALPHABET for size in probs.shape):
            raise InvalidArgumentError(f'axis size above cap {MAX_ALPHABET}: {probs.shape}')
        if np.any(probs < 0.0):
            raise InvalidArgumentError('joint distribution has negative entries')
        if abs(probs.sum() - 1.0) > MASS_TOL:
            raise InvalidArgumentError(f'joint distribution sums to {probs.sum()!r}')
        probs.setflags(write=False)
        object.__setattr__(self, 'names', tuple(self.names))
        object.__setattr__(self, 'probs', probs)

    def axis_index(self, ref: AxisRef) -> int:
        if isinstance(ref, str):
            if ref not in self.names:
                raise InvalidArgumentError(f'no axis named {ref!r} in {self.names}')
            return self.names.index(ref)
        if not 0 <= ref < len(self.names):
            raise InvalidArgumentError(f'axis {ref} out of range')
        return ref

    def _indices(self, refs: Union[AxisRef, Iterable[AxisRef]]) -> tuple[int, ...]:
        if isinstance(refs, (int, str)):
            refs = (refs,)
        return tuple(self.axis_index(r) for r in refs)

    def marginal(self, refs: Union[AxisRef, Iterable[AxisRef]]) -> np.ndarray:
        """Marginal over the given axes, returned in the given order."""
        keep = self._indices(refs)
        if len(set(keep)) != len(keep):
            raise InvalidArgumentError(f'repeated axes in {refs!r}')
        dropped = tuple(i for i in range(self.probs.ndim) if i not in keep)
        summed = self.probs.sum(axis=dropped) if dropped else self.probs
        remaining = [i for i in range(self.probs.ndim) if i in keep]
        return np.transpose(summed, [remaining.index(i) for i in keep])

    def entropy(self, refs: Union[AxisRef, Iterable[AxisRef]]) -> float:
        if isinstance(refs, (list, tuple)) and not refs:
            return 0.0
        return _entropy_bits(self.marginal(refs))


def _entropy_bits(p: np.ndarray) -> float:
    return float(entr(np.ravel(p)).sum() / np.log(2.0))


def entropy(d: DiscreteDistribution) -> float:
    """H(d) in bits, with 0 log 0 = 0."""
    return _entropy_bits(d.probs)


def _disjoint(joint: JointDistribution, *groups) -> list[tuple[int, ...]]:
    resolved = [joint._indices(g) for g in groups]
    seen: set[int] = set()
    for group in resolved:
        if not group:
            raise InvalidArgumentError('empty axis set')
        if seen & set(group) or len(set(group)) != len(group):
            raise InvalidArgumentError(f'axis sets overlap: {groups!r}')
        seen |= set(group)
    return resolved


def mutual_information(joint: JointDistribution, axes_a, axes_b) -> float:
    """I(A;B) = H(A) + H(B) - H(A,B), clipped at zero."""
    a, b = _disjoint(joint, axes_a, axes_b)
    value = joint.entropy(a) + joint.entropy(b) - joint.entropy(a + b)
    return max(0.0, value)


def conditional_mutual_information(joint: JointDistribution, axes_a, axes_b,
                                   given) -> float:
    """I(A;B|C) = H(A,C) + H(B,C) - H(A,B,C) - H(C), clipped at zero."""
    a, b, c = _disjoint(joint, axes_a, axes_b, given)
    value = (joint.entropy(a + c) + joint.entropy(b + c)
             - joint.entropy(a + b + c) - joint.entropy(c))
    return max(0.0, value)


def chain_joint(system: BisSystem, u_channel: ChannelMatrix,
                v_channel: Optional[ChannelMatrix] = None) -> JointDistribution:
    """P(z,x,y,u[,v]) factorized along Z - X - Y - U (- V)."""
    if u_channel.rows != system.y_size:
        raise InvalidArgumentError(
            f'U-channel has {u_channel.rows} rows, |Y| = {system.y_size}')
    px = system.source.probs
    pyx = system.enrollment.entries
    pzx = system.identification.entries
    puy = u_channel.entries
    probs = np.einsum('x,xy,xz,yu->zxyu', px, pyx, pzx, puy)
    names = ('z', 'x', 'y', 'u')
    if v_channel is not None:
        if v_channel.rows != u_channel.cols:
            raise InvalidArgumentError(
                f'V-channel has {v_channel.rows} rows, |U| = {u_channel.cols}')
        probs = np.einsum('zxyu,uv->zxyuv', probs, v_channel.entries)
        names += ('v',)
    return JointDistribution(names, probs)


def compose_channels(first: ChannelMatrix, second: ChannelMatrix) -> ChannelMatrix:
    """Cascade: input -> first -> second."""
    if first.cols != second.rows:
        raise InvalidArgumentError(
            f'cannot compose {first.rows}x{first.cols} with {second.rows}x{second.cols}')
    return ChannelMatrix(first.entries @ second.entries)


@dataclass(frozen=True, eq=False)
class Sequence:
    """A length-n block over {0, ..., alphabet_size-1}."""

    symbols: np.ndarray
    alphabet_size: int

    def __post_init__(self):
        symbols = np.array(self.symbols, dtype=np.int64)
        if symbols.ndim != 1:
            raise InvalidArgumentError('sequence must be 1-D')
        if symbols.size and (symbols.min() < 0 or symbols.max() >= self.alphabet_size):
            raise InvalidArgumentError(
                f'symbol outside alphabet of size {self.alphabet_size}')
        symbols.setflags(write=False)
        object.__setattr__(self, 'symbols', symbols)

    def __len__(self) -> int:
        return self.symbols.shape[0]


def joint_type_counts(index: np.ndarray, cells: int) -> np.ndarray:
    """Occurrence counts of each cell along the last axis of `index`.

    index has shape (..., n) with entries in [0, cells); the result has
    shape (..., cells).
    """
    index = np.asarray(index, dtype=np.int64)
    lead = index.shape[:-1]
    flat = index.reshape(-1, index.shape[-1])
    rows = flat.shape[0]
    offsets = (np.arange(rows, dtype=np.int64) * cells)[:, None]
    counts = np.bincount((flat + offsets).ravel(), minlength=rows * cells)
    return counts.reshape(*lead, cells)


def typical_mask(index: np.ndarray, probs: np.ndarray, delta: float) -> np.ndarray:
    """Strong typicality of every row of `index` against the flat law `probs`.

    A row is typical iff each cell frequency is within delta of its
    probability and no zero-probability cell occurs.
    """
    probs = np.ravel(probs)
    n = np.shape(index)[-1]
    counts = joint_type_counts(index, probs.size)
    close = np.abs(counts / n - probs) <= delta
    forbidden = (probs == 0.0) & (counts > 0)
    return np.all(close & ~forbidden, axis=-1)


def is_strongly_typical(seq: Sequence, d: DiscreteDistribution, delta: float) -> bool:
    if seq.alphabet_size != d.size:
        raise InvalidArgumentError(
            f'sequence alphabet {seq.alphabet_size} vs distribution size {d.size}')
    if len(seq) == 0:
        return False
    return bool(typical_mask(seq.symbols, d.probs, delta))


def is_jointly_typical(seqs: Seq[Sequence], joint: JointDistribution, delta: float,
                       names: Optional[Seq[str]] = None) -> bool:
    """Joint strong typicality of aligned sequences against a joint law.

    `names` picks the marginal of `joint` to test against, in the order of
    `seqs`; by default all axes of `joint` are used in order.
    """
    law = joint.marginal(names) if names is not None else joint.probs
    sizes = law.shape
    if len(seqs) != len(sizes):
        raise InvalidArgumentError(f'{len(seqs)} sequences for a {len(sizes)}-axis law')
    lengths = {len(s) for s in seqs}
    if len(lengths) != 1:
        raise InvalidArgumentError(f'sequence lengths differ: {sorted(lengths)}')
    for seq, size in zip(seqs, sizes):
        if seq.alphabet_size != size:
            raise InvalidArgumentError(
                f'sequence alphabet {seq.alphabet_size} vs axis size {size}')
    if lengths == {0}:
        return False
    index = np.ravel_multi_index(tuple(s.symbols for s in seqs), sizes)
    return bool(typical_mask(index, law, delta))


def plugin_mutual_information(pair_counts: Mapping[tuple[Hashable, Hashable], int]) -> float:
    """Plug-in I(A;B) in bits from a histogram of (a, b) observations.

    A constant A (or B) gives exactly 0.0.
    """
    total = sum(pair_counts.values())
    if total == 0:
        return 0.0
    left: Counter = Counter()
    right: Counter = Counter()
    for (a, b), c in pair_counts.items():
        left[a] += c
        right[b] += c
    value = 0.0
    for (a, b), c in sorted(pair_counts.items()):
        if c == 0:
            continue
        p_ab = c / total
        value += p_ab * math.log2(p_ab / ((left[a] / total) * (right[b] / total)))
    return max(0.0, value)


def make_stream(seed: Optional[int], *key: int) -> np.random.Generator:
    """Independent generator for (seed, key...); same arguments, same stream."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def _inverse_cdf(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.minimum((u[:, None] >= cdf).sum(axis=1), cdf.shape[-1] - 1)


def sample_sequence(d: DiscreteDistribution, n: int, rng: np.random.Generator) -> Sequence:
    """n i.i.d. draws from d."""
    if n < 1:
        raise InvalidArgumentError(f'block length must be >= 1, got {n}')
    u = rng.random(n)
    cdf = np.broadcast_to(np.cumsum(d.probs), (n, d.size))
    return Sequence(_inverse_cdf(cdf, u), d.size)


def sample_through_channel(seq: Sequence, c: ChannelMatrix,
                           rng: np.random.Generator) -> Sequence:
    """Memoryless channel applied symbol by symbol."""
    if seq.alphabet_size != c.rows:
        raise InvalidArgumentError(
            f'sequence alphabet {seq.alphabet_size} vs channel rows {c.rows}')
    u = rng.random(len(seq))
    cdf = np.cumsum(c.entries, axis=1)[seq.symbols]
    return Sequence(_inverse_cdf(cdf, u), c.cols)


def sample_rows(cdf_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row of a batch of cumulative distributions (..., k)."""
    shape = cdf_rows.shape[:-1]
    flat = cdf_rows.reshape(-1, cdf_rows.shape[-1])
    u = rng.random(flat.shape[0])
    return _inverse_cdf(flat, u).reshape(shape)
