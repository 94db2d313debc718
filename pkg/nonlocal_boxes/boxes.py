"""
Nonlocal-box models, their exact behaviour tables, and one-shot box instances.

A model is named by a short spec string (``perfect``, ``noisy:0.9``,
``local:01,00``, ``classical``, ``quantum``, ``quantum:0,0.785,0.39,-0.39``);
``BoxModel.find`` parses any of them.

Every model reduces to a behaviour table ``T[x, y, a, b] = P(a, b | x, y)``.
Sampling reads the table: whichever party feeds a box first draws from its
marginal, the second draws from the conditional given the first party's input
and output.  For a no-signalling model this reproduces ``P(a, b | x, y)``
exactly and never lets the first party's output depend on the other input.
"""

import itertools
import logging
import re
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import Party, Transcript, as_bits
from .random_utils import RandomnessSource, Stream

log = logging.getLogger("nonlocal_boxes")

TSIRELSON = (2 + np.sqrt(2)) / 4
CANONICAL_ALICE_ANGLES = (0.0, np.pi / 4)
CANONICAL_BOB_ANGLES = (np.pi / 8, -np.pi / 8)

_BELL_STATE = np.array([1.0, 0.0, 0.0, 1.0]) / np.sqrt(2)


class BoxReuseError(Exception):
    pass


class BoxBudgetError(Exception):
    pass


def _tolerance():
    from . import config

    return config.get("tolerance", 1e-12)


#############
# Behaviour
#############


class BoxBehavior:
    """Conditional distribution of a box, stored as ``table[x, y, a, b]``."""

    def __init__(self, table):
        table = np.array(table, dtype=np.float64)
        if table.shape != (2, 2, 2, 2):
            raise ValueError(f"behaviour table must have shape (2, 2, 2, 2), not {table.shape}")
        tol = _tolerance()
        if np.any(table < -tol):
            raise ValueError("behaviour table has negative probabilities")
        sums = table.sum(axis=(2, 3))
        if np.any(np.abs(sums - 1.0) > tol):
            raise ValueError(f"behaviour columns must sum to 1, got {sums.ravel().tolist()}")
        table.setflags(write=False)
        self.table = table

    @classmethod
    def from_matrix(cls, matrix) -> "BoxBehavior":
        """Rows index ``(a, b)`` as ``2a + b``; columns index ``(x, y)`` as ``2x + y``."""
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.shape != (4, 4):
            raise ValueError(f"behaviour matrix must be 4x4, not {matrix.shape}")
        return cls(matrix.reshape(2, 2, 2, 2).transpose(2, 3, 0, 1))

    @property
    def matrix(self) -> np.ndarray:
        return self.table.transpose(2, 3, 0, 1).reshape(4, 4)

    def prob(self, a, b, x, y) -> float:
        return float(self.table[x, y, a, b])

    @property
    def success(self) -> np.ndarray:
        """``success[x, y] = P(a xor b = x and y | x, y)``."""
        out = np.empty((2, 2))
        for x, y in itertools.product(range(2), repeat=2):
            target = x & y
            out[x, y] = self.table[x, y, target ^ 0, 0] + self.table[x, y, target ^ 1, 1]
        return out

    def alice_marginal(self) -> np.ndarray:
        """``[x, y, a]``"""
        return self.table.sum(axis=3)

    def bob_marginal(self) -> np.ndarray:
        """``[x, y, b]``"""
        return self.table.sum(axis=2)

    def __eq__(self, other):
        if not isinstance(other, BoxBehavior):
            return NotImplemented
        return np.allclose(self.table, other.table, rtol=0, atol=_tolerance())

    def __repr__(self):
        return f"BoxBehavior({self.matrix.round(6).tolist()})"


def _contract_table(p: float) -> np.ndarray:
    table = np.empty((2, 2, 2, 2))
    for x, y, a, b in itertools.product(range(2), repeat=4):
        table[x, y, a, b] = 0.5 * (p if a ^ b == x & y else 1 - p)
    return table


def _local_table(alice_rule, bob_rule) -> np.ndarray:
    table = np.zeros((2, 2, 2, 2))
    for x, y in itertools.product(range(2), repeat=2):
        table[x, y, alice_rule[x], bob_rule[y]] = 1.0
    return table


def quantum_behavior(alice_angles: Sequence[float], bob_angles: Sequence[float]) -> BoxBehavior:
    """
    Exact statistics of measuring both halves of ``(|00> + |11>)/sqrt(2)``.

    On input ``x`` Alice measures in the real basis rotated by ``alice_angles[x]``:
    outcome 0 projects onto ``(cos t, sin t)``, outcome 1 onto ``(-sin t, cos t)``.
    Bob likewise.  Outcomes agree with probability ``cos^2(tA - tB)``.
    """
    angles = np.array(list(alice_angles) + list(bob_angles), dtype=np.float64)
    if angles.shape != (4,):
        raise ValueError("expected two angles for Alice and two for Bob")
    if not np.all(np.isfinite(angles)):
        raise ValueError(f"measurement angles must be finite, not {angles.tolist()}")

    def basis(t):
        return np.array([[np.cos(t), np.sin(t)], [-np.sin(t), np.cos(t)]])

    table = np.empty((2, 2, 2, 2))
    for x, y in itertools.product(range(2), repeat=2):
        va = basis(angles[x])
        vb = basis(angles[2 + y])
        for a, b in itertools.product(range(2), repeat=2):
            amplitude = np.kron(va[a], vb[b]) @ _BELL_STATE
            table[x, y, a, b] = amplitude**2
    return BoxBehavior(table)


##########
# Models
##########


class BoxModel:
    _subtypes = []

    def __repr__(self):
        return f"{self.__class__.__name__}({self})"

    def __eq__(self, other):
        if not isinstance(other, BoxModel):
            return NotImplemented
        return self.__class__ is other.__class__ and str(self) == str(other)

    def __hash__(self):
        return hash((self.__class__.__name__, str(self)))

    def __init_subclass__(cls):
        BoxModel._subtypes.append(cls)

    def behavior(self) -> BoxBehavior:
        raise NotImplementedError()

    @staticmethod
    def find(text: str) -> "BoxModel":
        if isinstance(text, BoxModel):
            return text
        text = text.strip()
        for klass in BoxModel._subtypes:
            result = klass.parse(text)
            if result is not None:
                return result

        raise ValueError(f"Unknown box model: {text}")


class Perfect(BoxModel):
    def __str__(self):
        return "perfect"

    def behavior(self):
        return BoxBehavior(_contract_table(1.0))

    @classmethod
    def parse(cls, text: str):
        if text == "perfect":
            return Perfect()


class Noisy(BoxModel):
    """Perfect box whose correlation is flipped with probability ``1 - p``."""

    _patt = re.compile(r"^noisy:\s*(\S+)$")

    def __init__(self, p: float):
        p = float(p)
        if not 0.5 <= p <= 1.0:
            raise ValueError(f"noisy box correctness must be in [1/2, 1], not {p}")
        self.p = p

    def __str__(self):
        return f"noisy:{self.p!r}"

    def behavior(self):
        return BoxBehavior(_contract_table(self.p))

    @classmethod
    def parse(cls, text: str):
        if m := cls._patt.match(text):
            value = m.group(1)
            if value in ("tsirelson", "quantum"):
                return Noisy(TSIRELSON)
            return Noisy(float(value))


def _rule(rule) -> Tuple[int, int]:
    rule = tuple(int(v) for v in rule)
    if len(rule) != 2 or any(v not in (0, 1) for v in rule):
        raise ValueError(f"a local rule is a pair (r(0), r(1)) of bits, not {rule!r}")
    return rule


def _rule_string(rule) -> str:
    return f"{rule[0]}{rule[1]}"


class LocalDeterministic(BoxModel):
    """Each party answers with a fixed function of its own input."""

    _patt = re.compile(r"^local:([01]{2}),([01]{2})$")

    def __init__(self, alice_rule, bob_rule):
        self.alice_rule = _rule(alice_rule)
        self.bob_rule = _rule(bob_rule)

    def __str__(self):
        return f"local:{_rule_string(self.alice_rule)},{_rule_string(self.bob_rule)}"

    def behavior(self):
        return BoxBehavior(_local_table(self.alice_rule, self.bob_rule))

    @classmethod
    def parse(cls, text: str):
        if m := cls._patt.match(text):
            return LocalDeterministic(
                [int(c) for c in m.group(1)], [int(c) for c in m.group(2)]
            )

    @staticmethod
    def all_pairs() -> List["LocalDeterministic"]:
        rules = list(itertools.product(range(2), repeat=2))
        return [LocalDeterministic(ar, br) for ar in rules for br in rules]


class LocalMixture(BoxModel):
    """Uniform mixture over deterministic pairs, chosen by shared randomness."""

    _patt = re.compile(r"^mixture:(.+)$")

    def __init__(self, strategies: Sequence[LocalDeterministic]):
        strategies = tuple(strategies)
        if not strategies:
            raise ValueError("a local mixture needs at least one strategy pair")
        for s in strategies:
            if not isinstance(s, LocalDeterministic):
                raise TypeError(f"strategies must be LocalDeterministic, not {type(s)}")
        self.strategies = strategies

    @classmethod
    def classical(cls) -> "LocalMixture":
        return cls(best_local_deterministic().maximizers)

    def __str__(self):
        if self.strategies == LocalMixture.classical().strategies:
            return "classical"
        body = ";".join(str(s).split(":", 1)[1] for s in self.strategies)
        return f"mixture:{body}"

    def behavior(self):
        table = np.mean([_local_table(s.alice_rule, s.bob_rule) for s in self.strategies], axis=0)
        return BoxBehavior(table)

    @classmethod
    def parse(cls, text: str):
        if text == "classical":
            return cls.classical()
        if m := cls._patt.match(text):
            return LocalMixture([LocalDeterministic.parse(f"local:{s}") for s in m.group(1).split(";")])


class QuantumStrategy(BoxModel):
    _patt = re.compile(r"^quantum(?::(.+))?$")

    def __init__(self, alice_angles=CANONICAL_ALICE_ANGLES, bob_angles=CANONICAL_BOB_ANGLES):
        self.alice_angles = tuple(float(t) for t in alice_angles)
        self.bob_angles = tuple(float(t) for t in bob_angles)
        # validates shape and finiteness
        self._behavior = quantum_behavior(self.alice_angles, self.bob_angles)

    @property
    def is_canonical(self) -> bool:
        return self.alice_angles == CANONICAL_ALICE_ANGLES and self.bob_angles == CANONICAL_BOB_ANGLES

    def __str__(self):
        if self.is_canonical:
            return "quantum"
        return "quantum:" + ",".join(repr(t) for t in self.alice_angles + self.bob_angles)

    def behavior(self):
        return self._behavior

    @classmethod
    def parse(cls, text: str):
        if m := cls._patt.match(text):
            if m.group(1) is None:
                return QuantumStrategy()
            angles = [float(t) for t in m.group(1).split(",")]
            if len(angles) != 4:
                raise ValueError(f"quantum model needs four angles, got {text!r}")
            return QuantumStrategy(angles[:2], angles[2:])


###############
# Model checks
###############


def behavior(model) -> BoxBehavior:
    if isinstance(model, BoxBehavior):
        return model
    return BoxModel.find(model).behavior()


def box_success(model, average: bool = False) -> float:
    """Worst-case (or, with ``average=True``, input-averaged) success of one box."""
    success = behavior(model).success
    return float(success.mean() if average else success.min())


def chsh_value(model) -> float:
    return 8 * box_success(model, average=True) - 4


@dataclass(frozen=True)
class NoSignallingReport:
    passed: bool
    alice_deviation: float
    bob_deviation: float
    alice_uniform: bool
    bob_uniform: bool

    def __bool__(self):
        return self.passed


def check_no_signalling(model, tolerance: Optional[float] = None) -> NoSignallingReport:
    table = behavior(model)
    if tolerance is None:
        tolerance = _tolerance()
    pa = table.alice_marginal()
    pb = table.bob_marginal()
    # Alice's marginal must not move with y; Bob's must not move with x.
    alice_dev = float(np.abs(pa[:, 0, :] - pa[:, 1, :]).max())
    bob_dev = float(np.abs(pb[0, :, :] - pb[1, :, :]).max())
    return NoSignallingReport(
        passed=alice_dev <= tolerance and bob_dev <= tolerance,
        alice_deviation=alice_dev,
        bob_deviation=bob_dev,
        alice_uniform=bool(np.all(np.abs(pa - 0.5) <= tolerance)),
        bob_uniform=bool(np.all(np.abs(pb - 0.5) <= tolerance)),
    )


@dataclass(frozen=True)
class LocalOptimum:
    max_success: float
    maximizers: Tuple[LocalDeterministic, ...]
    worst_case_max: float
    averages: Tuple[float, ...]


def best_local_deterministic() -> LocalOptimum:
    """
    Enumerate all 16 deterministic strategy pairs.

    ``max_success`` is the best input-averaged success (3/4).  Every single
    pair is wrong on at least one input, so ``worst_case_max`` is 0; the
    uniform mixture of the maximizers is what reaches 3/4 on every input.
    """
    pairs = LocalDeterministic.all_pairs()
    averages = [box_success(pair, average=True) for pair in pairs]
    worst = [box_success(pair) for pair in pairs]
    best = max(averages)
    tol = _tolerance()
    maximizers = tuple(pair for pair, avg in zip(pairs, averages) if abs(avg - best) <= tol)
    return LocalOptimum(best, maximizers, max(worst), tuple(averages))


##################
# Box instances
##################


class BoxBank:
    """
    ``count`` independent one-shot boxes of one model.

    Each box is addressed by id; its first and second draws read the
    ``BOX_FIRST`` / ``BOX_SECOND`` streams at ``offset + id``, so distinct
    banks in one run must use disjoint offset ranges.
    """

    def __init__(
        self,
        model,
        count: int,
        source: RandomnessSource,
        transcript: Optional[Transcript] = None,
        offset: int = 0,
    ):
        self.model = BoxModel.find(model)
        self.count = int(count)
        self.source = source
        self.transcript = transcript
        self.offset = int(offset)

        table = self.model.behavior().table
        self._alice_first = table[:, 0, 1, :].sum(axis=-1)  # [x]
        self._bob_first = table[0, :, :, 1].sum(axis=-1)  # [y]
        with np.errstate(invalid="ignore", divide="ignore"):
            cond_b = table[..., 1] / table.sum(axis=3)  # [x, y, a]
            cond_a = table[:, :, 1, :] / table.sum(axis=2)  # [x, y, b]
        self._bob_second = np.where(np.isfinite(cond_b), cond_b, 0.5)
        self._alice_second = np.where(np.isfinite(cond_a), cond_a, 0.5)

        shape = tuple(source.batch_shape) + (self.count,)
        self._fed = {party: np.zeros(self.count, dtype=bool) for party in Party}
        self._inputs = {party: np.zeros(shape, dtype=np.uint8) for party in Party}
        self._outputs = {party: np.zeros(shape, dtype=np.uint8) for party in Party}

    def port(self, party: Party) -> "BoxPort":
        return BoxPort(self, party)

    def fired(self, box_id: int) -> bool:
        return bool(self._fed[Party.ALICE][box_id] and self._fed[Party.BOB][box_id])

    @property
    def invocations(self) -> int:
        return int(np.count_nonzero(self._fed[Party.ALICE] & self._fed[Party.BOB]))

    def _feed(self, party: Party, box_ids, inputs) -> np.ndarray:
        ids = np.asarray(box_ids, dtype=np.int64)
        scalar = ids.ndim == 0
        ids = ids.reshape(-1)
        if ids.size and (ids.min() < 0 or ids.max() >= self.count):
            raise BoxBudgetError(
                f"box id {int(ids.max())} requested from a bank of {self.count} boxes"
            )
        if np.unique(ids).size != ids.size:
            raise BoxReuseError(f"{party.value} fed the same box twice in one call")
        if np.any(self._fed[party][ids]):
            reused = int(ids[self._fed[party][ids]][0])
            raise BoxReuseError(f"{party.value} already used box {reused}")

        batch = tuple(self.source.batch_shape)
        inputs = as_bits(inputs)
        if scalar and inputs.ndim > len(batch):
            raise ValueError("one box takes one input bit per trial")
        if scalar:
            inputs = inputs[..., None]
        inputs = np.broadcast_to(inputs, batch + ids.shape).astype(np.uint8)

        other = Party.BOB if party is Party.ALICE else Party.ALICE
        second = self._fed[other][ids]
        out = np.empty(batch + ids.shape, dtype=np.uint8)

        first_pos = np.flatnonzero(~second)
        if first_pos.size:
            marginal = self._alice_first if party is Party.ALICE else self._bob_first
            prob = marginal[inputs[..., first_pos]]
            out[..., first_pos] = self.source.bernoulli(
                Stream.BOX_FIRST, self.offset + ids[first_pos], prob
            )

        second_pos = np.flatnonzero(second)
        if second_pos.size:
            sid = ids[second_pos]
            mine = inputs[..., second_pos]
            theirs_in = self._inputs[other][..., sid]
            theirs_out = self._outputs[other][..., sid]
            if party is Party.BOB:
                prob = self._bob_second[theirs_in, mine, theirs_out]
            else:
                prob = self._alice_second[mine, theirs_in, theirs_out]
            out[..., second_pos] = self.source.bernoulli(
                Stream.BOX_SECOND, self.offset + sid, prob
            )
            if self.transcript is not None:
                self.transcript.record_boxes(sid.size)

        self._fed[party][ids] = True
        self._inputs[party][..., ids] = inputs
        self._outputs[party][..., ids] = out
        return out[..., 0] if scalar else out


class BoxPort:
    """One party's access to a bank: it can feed boxes and see only its own outputs."""

    def __init__(self, bank: BoxBank, party: Party):
        self._bank = bank
        self.party = party

    @property
    def count(self) -> int:
        return self._bank.count

    def feed(self, box_ids, inputs) -> np.ndarray:
        return self._bank._feed(self.party, box_ids, inputs)

    def bind(self, box_id: int) -> "BoundPort":
        return BoundPort(self, box_id)


class BoundPort:
    """A port restricted to a single box; ``feed(bit)`` returns this party's output."""

    def __init__(self, port: BoxPort, box_id: int):
        self.port = port
        self.box_id = box_id

    def feed(self, inputs) -> np.ndarray:
        return self.port.feed(self.box_id, inputs)


class BoxInstance:
    """A single one-shot box: ``alice`` and ``bob`` are its two ports."""

    def __init__(self, bank: BoxBank, box_id: int = 0):
        self.bank = bank
        self.box_id = box_id
        self.alice = bank.port(Party.ALICE).bind(box_id)
        self.bob = bank.port(Party.BOB).bind(box_id)

    @property
    def model(self) -> BoxModel:
        return self.bank.model

    @property
    def fired(self) -> bool:
        return self.bank.fired(self.box_id)

    def __repr__(self):
        return f"BoxInstance({self.model}, fired={self.fired})"


def make_boxes(
    model, count: int, source: RandomnessSource, transcript: Optional[Transcript] = None, offset: int = 0
) -> List[BoxInstance]:
    bank = BoxBank(model, count, source, transcript, offset)
    return [BoxInstance(bank, i) for i in range(count)]


def invoke(box: BoxInstance, x, y) -> Tuple[np.ndarray, np.ndarray]:
    """Feed ``x`` to Alice's port and ``y`` to Bob's; return ``(a, b)``."""
    if box.fired:
        raise BoxReuseError(f"box {box.box_id} has already fired")
    a = box.alice.feed(x)
    b = box.bob.feed(y)
    return a, b
