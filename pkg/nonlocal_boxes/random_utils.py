"""
Counter-indexed randomness sources.

Every random value a protocol consumes is addressed by a key ``(stream, index)``.
Three sources implement the same interface:

- ``CounterRandomness`` hashes ``(master_seed, trial, stream, index)`` into a
  64-bit word, so any trial can be evaluated on any worker and still observe
  the same values.
- ``TracingRandomness`` records which keys a run reads (and how wide they are)
  without producing randomness.
- ``EnumeratedRandomness`` replays a traced layout where the batch axis runs
  over every assignment of the recorded atoms, carrying a probability weight
  per row.  This is what turns a protocol run into an exact computation.
"""

import enum
import logging
from typing import Dict, Optional, Tuple

import numpy as np

log = logging.getLogger("nonlocal_boxes")

MASK64 = (1 << 64) - 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_STREAM_SALT = np.uint64(0xD1B54A32D192ED03)


class Stream(enum.IntEnum):
    INPUT_ALICE = 1
    INPUT_BOB = 2
    SHARED = 3
    PRIVATE_ALICE = 4
    PRIVATE_BOB = 5
    BOX_FIRST = 6
    BOX_SECOND = 7


def splitmix64(x) -> np.ndarray:
    """Vectorised splitmix64 finalizer on uint64 arrays (wrapping arithmetic)."""
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = x ^ (x >> np.uint64(30))
        x = x * _MIX1
        x = x ^ (x >> np.uint64(27))
        x = x * _MIX2
        x = x ^ (x >> np.uint64(31))
    return x


def derive_seed(master_seed: int, *labels: int) -> int:
    """Derive a 64-bit sub-seed from a master seed and integer labels."""
    h = splitmix64(np.uint64(master_seed & MASK64))
    for label in labels:
        with np.errstate(over="ignore"):
            h = splitmix64(h ^ (np.uint64(label & MASK64) * _GOLDEN))
    return int(h)


def _width_mask(width: int) -> np.uint64:
    if width < 0 or width > 63:
        raise ValueError(f"word width must be in [0, 63], not {width}")
    return np.uint64((1 << width) - 1)


class RandomnessSource:
    """Interface shared by the sampled, traced and enumerated sources."""

    batch_shape: Tuple[int, ...] = ()

    def bits(self, stream: int, index, width: int) -> np.ndarray:
        """Uniform ``width``-bit words, shape ``batch_shape + index.shape``."""
        raise NotImplementedError()

    def bernoulli(self, stream: int, index, prob) -> np.ndarray:
        """0/1 draws equal to 1 with probability ``prob`` (broadcast to the output shape)."""
        raise NotImplementedError()


class CounterRandomness(RandomnessSource):
    def __init__(self, master_seed: int, trials):
        trials = np.asarray(trials, dtype=np.uint64)
        if trials.ndim != 1:
            raise ValueError(f"trials must be one-dimensional, not shape {trials.shape}")
        self.master_seed = master_seed
        self.trials = trials
        self.batch_shape = trials.shape
        seed_key = splitmix64(np.uint64(master_seed & MASK64))
        with np.errstate(over="ignore"):
            self._trial_keys = splitmix64(seed_key + (trials + np.uint64(1)) * _GOLDEN)

    def _words(self, stream: int, index) -> np.ndarray:
        index = np.asarray(index, dtype=np.uint64)
        with np.errstate(over="ignore"):
            salt = splitmix64(np.uint64(int(stream)) * _STREAM_SALT + index * _GOLDEN)
        keys = self._trial_keys.reshape(self.batch_shape + (1,) * index.ndim)
        return splitmix64(keys ^ salt)

    def bits(self, stream, index, width):
        mask = _width_mask(width)
        return self._words(stream, index) & mask

    def bernoulli(self, stream, index, prob):
        uniform = (self._words(stream, index) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (uniform < prob).astype(np.uint8)


class TracingRandomness(RandomnessSource):
    """Records ``(kind, stream, index, width)`` for every key read; returns zeros."""

    def __init__(self):
        self.batch_shape = (1,)
        self.records = []

    def bits(self, stream, index, width):
        _width_mask(width)
        index = np.asarray(index, dtype=np.int64)
        self.records.append(("bits", int(stream), index.ravel().copy(), width))
        return np.zeros(self.batch_shape + index.shape, dtype=np.uint64)

    def bernoulli(self, stream, index, prob):
        index = np.asarray(index, dtype=np.int64)
        self.records.append(("bernoulli", int(stream), index.ravel().copy(), 1))
        return np.zeros(self.batch_shape + index.shape, dtype=np.uint8)


class AtomLayout:
    """
    Assigns every traced key a contiguous bit field inside an enumeration row.

    Row ``r`` of the enumeration reads key ``k`` as ``(r >> offset[k]) & mask``.
    Uniform words contribute a static weight of ``2**-width``; Bernoulli atoms
    are weighted at draw time because their probability may depend on inputs.
    """

    def __init__(self):
        self._offsets: Dict[Tuple[str, int], np.ndarray] = {}
        self._widths: Dict[Tuple[str, int], int] = {}
        self.total_bits = 0
        self.uniform_bits = 0

    @classmethod
    def from_trace(cls, trace: TracingRandomness) -> "AtomLayout":
        layout = cls()
        for kind, stream, indices, width in trace.records:
            layout._add(kind, stream, indices, width)
        log.debug(
            "traced %d atom bits (%d uniform)", layout.total_bits, layout.uniform_bits
        )
        return layout

    def _add(self, kind, stream, indices, width):
        key = (kind, stream)
        known = self._widths.setdefault(key, width)
        if known != width:
            raise ValueError(
                f"stream {stream} read with widths {known} and {width}; widths must be constant"
            )
        table = self._offsets.get(key)
        size = int(indices.max()) + 1 if indices.size else 0
        if table is None:
            table = np.full(size, -1, dtype=np.int64)
        elif table.size < size:
            table = np.concatenate([table, np.full(size - table.size, -1, dtype=np.int64)])
        for idx in indices:
            if table[idx] >= 0:
                # Both parties reading one shared word is fine; a weighted draw must be unique.
                if kind == "bits":
                    continue
                raise ValueError(f"key ({kind}, {stream}, {idx}) is read more than once")
            table[idx] = self.total_bits
            self.total_bits += width
            if kind == "bits":
                self.uniform_bits += width
        self._offsets[key] = table

    def offsets(self, kind, stream, index) -> Tuple[np.ndarray, int]:
        key = (kind, int(stream))
        if key not in self._offsets:
            raise KeyError(f"stream {stream} was not traced as {kind}")
        table = self._offsets[key]
        index = np.asarray(index, dtype=np.int64)
        if index.size and (index.min() < 0 or index.max() >= table.size):
            raise KeyError(f"untraced index read from stream {stream}")
        offsets = table[index]
        if np.any(offsets < 0):
            raise KeyError(f"untraced index read from stream {stream}")
        return offsets, self._widths[key]

    @property
    def row_count(self) -> int:
        return 1 << self.total_bits


class EnumeratedRandomness(RandomnessSource):
    def __init__(self, layout: AtomLayout, rows):
        rows = np.asarray(rows, dtype=np.uint64)
        self.layout = layout
        self.rows = rows
        self.batch_shape = rows.shape
        self.weight = np.full(rows.shape, 2.0 ** -layout.uniform_bits)

    def _field(self, kind, stream, index) -> Tuple[np.ndarray, int]:
        offsets, width = self.layout.offsets(kind, stream, index)
        rows = self.rows.reshape(self.batch_shape + (1,) * offsets.ndim)
        return (rows >> offsets.astype(np.uint64)), width

    def bits(self, stream, index, width):
        field, traced_width = self._field("bits", stream, index)
        if traced_width != width:
            raise ValueError(f"stream {stream} traced with width {traced_width}, read with {width}")
        return field & _width_mask(width)

    def bernoulli(self, stream, index, prob):
        field, _ = self._field("bernoulli", stream, index)
        value = (field & np.uint64(1)).astype(np.uint8)
        prob = np.broadcast_to(np.asarray(prob, dtype=np.float64), value.shape)
        factor = np.where(value == 1, prob, 1.0 - prob)
        tail = tuple(range(len(self.batch_shape), factor.ndim))
        if tail:
            factor = factor.prod(axis=tail)
        self.weight = self.weight * factor
        return value


def row_chunks(layout: AtomLayout, chunk_rows: int, max_bits: Optional[int] = None):
    """Yield ``uint64`` arrays of enumeration row numbers in chunks."""
    if max_bits is not None and layout.total_bits > max_bits:
        raise ValueError(
            f"randomness space of 2**{layout.total_bits} atoms exceeds 2**{max_bits}"
        )
    total = layout.row_count
    for start in range(0, total, chunk_rows):
        yield np.arange(start, min(start + chunk_rows, total), dtype=np.uint64)
