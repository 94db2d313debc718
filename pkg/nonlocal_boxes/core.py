"""
Bits, distributed bits, Boolean functions, shared randomness and the two-party
execution discipline.

Bits are stored as ``uint8`` numpy arrays so the same code evaluates a single
protocol run (0-d or shape ``(1,)``) or a whole batch of trials at once.  Plain
Python ints are accepted wherever a bit is.
"""

import enum
import itertools
import logging
from dataclasses import dataclass
from typing import Any, Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .random_utils import RandomnessSource, Stream

log = logging.getLogger("nonlocal_boxes")

Bit = Union[int, np.ndarray]


class ArityError(ValueError):
    pass


class CommunicationError(Exception):
    pass


class RandomnessBudgetError(Exception):
    pass


def as_bits(value) -> np.ndarray:
    arr = np.asarray(value)
    if arr.dtype.kind == "b":
        return arr.astype(np.uint8)
    if arr.dtype.kind not in "ui":
        raise TypeError(f"bits must be integers, not {arr.dtype}")
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        raise ValueError(f"bits must be 0 or 1, got {value!r}")
    return arr.astype(np.uint8)


def encode_bits(bits: Sequence[int]) -> int:
    """Big-endian: (x1, ..., xm) -> sum x_i * 2**(m-i)."""
    code = 0
    for b in bits:
        if b not in (0, 1):
            raise ValueError(f"bits must be 0 or 1, got {bits!r}")
        code = (code << 1) | int(b)
    return code


def decode_bits(code, width: int) -> Tuple[np.ndarray, ...]:
    """Inverse of ``encode_bits``; works elementwise on arrays of codes."""
    code = np.asarray(code, dtype=np.int64)
    return tuple(
        ((code >> (width - 1 - i)) & 1).astype(np.uint8) for i in range(width)
    )


###################
# Distributed bits
###################


@dataclass(frozen=True, eq=False)
class DistributedBit:
    """A logical bit held as two shares; its value is ``alice_share ^ bob_share``."""

    alice_share: Bit
    bob_share: Bit

    def __post_init__(self):
        object.__setattr__(self, "alice_share", as_bits(self.alice_share))
        object.__setattr__(self, "bob_share", as_bits(self.bob_share))

    @property
    def value(self) -> np.ndarray:
        return self.alice_share ^ self.bob_share

    def __eq__(self, other):
        if not isinstance(other, DistributedBit):
            return NotImplemented
        return np.array_equal(self.alice_share, other.alice_share) and np.array_equal(
            self.bob_share, other.bob_share
        )

    def __repr__(self):
        return f"DistributedBit({self.alice_share.tolist()}, {self.bob_share.tolist()})"


def db_value(d: DistributedBit) -> np.ndarray:
    return d.alice_share ^ d.bob_share


def db_not(d: DistributedBit) -> DistributedBit:
    # Alice negates her share; Bob's is untouched.
    return DistributedBit(d.alice_share ^ 1, d.bob_share)


def db_xor(u: DistributedBit, v: DistributedBit) -> DistributedBit:
    return DistributedBit(u.alice_share ^ v.alice_share, u.bob_share ^ v.bob_share)


#####################
# Boolean functions
#####################


def _check_arity(m: int, n: int):
    from . import config

    max_arity = config.get("function.max-arity", 20)
    max_table_bits = config.get("function.max-table-bits", 24)
    for name, arity in (("alice_arity", m), ("bob_arity", n)):
        if not isinstance(arity, (int, np.integer)) or arity < 0:
            raise ArityError(f"{name} must be a non-negative integer, not {arity!r}")
        if arity > max_arity:
            raise ArityError(f"{name}={arity} exceeds the arity guard of {max_arity}")
    if m + n > max_table_bits:
        raise ArityError(
            f"a {m}x{n} truth table has 2**{m + n} entries; the table guard is 2**{max_table_bits}"
        )


class BooleanFunction:
    """Total function {0,1}^m x {0,1}^n -> {0,1} stored as a 2^m x 2^n table."""

    def __init__(self, table, alice_arity: int, bob_arity: int, name: Optional[str] = None):
        _check_arity(alice_arity, bob_arity)
        table = np.array(table)
        expected = (1 << alice_arity, 1 << bob_arity)
        if table.shape != expected:
            raise ValueError(f"table must have shape {expected}, not {table.shape}")
        table = as_bits(table)
        table.setflags(write=False)
        self.table = table
        self.alice_arity = alice_arity
        self.bob_arity = bob_arity
        self.name = name or f"table[{alice_arity},{bob_arity}]"

    def __call__(self, x, y) -> np.ndarray:
        """Evaluate on integer codes (arrays broadcast) or on bit tuples."""
        if isinstance(x, (tuple, list)):
            x = encode_bits(x)
        if isinstance(y, (tuple, list)):
            y = encode_bits(y)
        return self.table[np.asarray(x, dtype=np.int64), np.asarray(y, dtype=np.int64)]

    def __eq__(self, other):
        if not isinstance(other, BooleanFunction):
            return NotImplemented
        return (
            self.alice_arity == other.alice_arity
            and self.bob_arity == other.bob_arity
            and np.array_equal(self.table, other.table)
        )

    def __repr__(self):
        return f"BooleanFunction({self.name}, m={self.alice_arity}, n={self.bob_arity})"

    def inputs(self):
        return itertools.product(range(1 << self.alice_arity), range(1 << self.bob_arity))


def make_function(table, m: int, n: int, name: Optional[str] = None) -> BooleanFunction:
    return BooleanFunction(table, m, n, name=name)


def _code_grid(m: int, n: int):
    _check_arity(m, n)
    x = np.arange(1 << m, dtype=np.int64)[:, None]
    y = np.arange(1 << n, dtype=np.int64)[None, :]
    return x, y


def inner_product(n: int) -> BooleanFunction:
    x, y = _code_grid(n, n)
    both = x & y
    parity = np.zeros(both.shape, dtype=np.int64)
    for i in range(n):
        parity ^= (both >> i) & 1
    return BooleanFunction(parity, n, n, name=f"ip:{n}")


def equality(n: int) -> BooleanFunction:
    x, y = _code_grid(n, n)
    return BooleanFunction((x == y).astype(np.uint8), n, n, name=f"eq:{n}")


def and2() -> BooleanFunction:
    return BooleanFunction([[0, 0], [0, 1]], 1, 1, name="and")


def xor2() -> BooleanFunction:
    return BooleanFunction([[0, 1], [1, 0]], 1, 1, name="xor")


def random_function(m: int, n: int, seed: int) -> BooleanFunction:
    _check_arity(m, n)
    rng = np.random.default_rng(seed)
    table = rng.integers(0, 2, size=(1 << m, 1 << n), dtype=np.uint8)
    return BooleanFunction(table, m, n, name=f"random:{m},{n},{seed}")


##########################
# Randomness and accounting
##########################


class Phase(enum.Enum):
    DISTRIBUTED = "distributed-phase"
    REVEAL = "reveal-phase"


class Party(enum.Enum):
    ALICE = "alice"
    BOB = "bob"


@dataclass
class Transcript:
    """Per-run audit record (counts are per protocol run, not per trial)."""

    box_invocations: int = 0
    shared_words_consumed: int = 0
    bits_communicated: int = 0
    phase: Phase = Phase.DISTRIBUTED

    def record_boxes(self, count: int):
        self.box_invocations += int(count)

    def record_shared(self, count: int):
        self.shared_words_consumed += int(count)

    def begin_reveal(self):
        self.phase = Phase.REVEAL

    def send(self, bits, *, width: int = 1):
        """Communicate ``width`` bits; only legal in the reveal phase."""
        if self.phase is Phase.DISTRIBUTED:
            raise CommunicationError("communication is not allowed during a distributed computation")
        self.bits_communicated += width
        return as_bits(bits)

    def check_distributed(self):
        if self.bits_communicated != 0:
            raise CommunicationError(
                f"distributed computation communicated {self.bits_communicated} bits"
            )


class SharedRandomness:
    """
    Counter-indexed words readable identically by both parties.

    Both parties read through the same object; the consumption counter counts
    distinct words, so Bob re-reading the word Alice read is not double counted.
    """

    def __init__(
        self,
        source: RandomnessSource,
        transcript: Optional[Transcript] = None,
        budget: Optional[int] = None,
    ):
        self.source = source
        self.transcript = transcript
        self.budget = budget
        self._seen = set()

    @property
    def consumed(self) -> int:
        return len(self._seen)

    @property
    def remaining(self) -> Optional[int]:
        if self.budget is None:
            return None
        return self.budget - self.consumed

    def require(self, words: int):
        if self.budget is not None and self.consumed + words > self.budget:
            raise RandomnessBudgetError(
                f"{words} fresh shared words requested, only {self.remaining} remain"
            )

    def word(self, index, width: int) -> np.ndarray:
        flat = np.asarray(index, dtype=np.int64).ravel().tolist()
        fresh = [i for i in flat if i not in self._seen]
        self.require(len(fresh))
        self._seen.update(fresh)
        if self.transcript is not None and fresh:
            self.transcript.record_shared(len(fresh))
        return self.source.bits(Stream.SHARED, index, width)


class PrivateRandomness:
    _streams = {Party.ALICE: Stream.PRIVATE_ALICE, Party.BOB: Stream.PRIVATE_BOB}

    def __init__(self, source: RandomnessSource, party: Party):
        self.source = source
        self.party = party

    def coin(self, index) -> np.ndarray:
        return self.source.bits(self._streams[self.party], index, 1).astype(np.uint8)


###################
# Party isolation
###################


@dataclass(frozen=True)
class PartyView:
    """Everything one party may look at: own input, shared words, private coins, own box ports."""

    party: Party
    input: Any
    shared: SharedRandomness
    private: PrivateRandomness
    ports: Any = None


Strategy = Callable[[PartyView], Bit]


def run_distributed(
    alice: Strategy,
    bob: Strategy,
    x,
    y,
    source: RandomnessSource,
    *,
    boxes=None,
    transcript: Optional[Transcript] = None,
    shared: Optional[SharedRandomness] = None,
) -> Tuple[DistributedBit, Transcript]:
    """
    Run a zero-communication computation.

    Alice's strategy runs to completion before Bob's starts; the only objects
    both can reach are the shared-randomness stream and the boxes, each party
    through its own ports.
    """
    if transcript is None:
        transcript = Transcript()
    if shared is None:
        shared = SharedRandomness(source, transcript)
    alice_ports = boxes.port(Party.ALICE) if boxes is not None else None
    bob_ports = boxes.port(Party.BOB) if boxes is not None else None

    a = alice(PartyView(Party.ALICE, x, shared, PrivateRandomness(source, Party.ALICE), alice_ports))
    b = bob(PartyView(Party.BOB, y, shared, PrivateRandomness(source, Party.BOB), bob_ports))
    transcript.check_distributed()
    return DistributedBit(a, b), transcript
