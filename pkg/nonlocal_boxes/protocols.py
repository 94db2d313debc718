"""
Zero-communication protocols built from nonlocal boxes.

Each protocol is written as two per-party strategies.  A strategy sees only a
``PartyView``: its own input, the shared-randomness stream, its private coins
and its own ports into the boxes.  ``run_distributed`` executes Alice's
strategy completely before Bob's, so nothing one party computes can reach the
other except through a box.

All strategies are vectorised: inputs and shares carry a leading batch axis
(trials, or enumeration rows), and the amplification tree carries an extra
axis over the nodes of one level.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .boxes import BoxBank, BoxInstance, BoxModel, invoke
from .core import (
    BooleanFunction,
    DistributedBit,
    PartyView,
    RandomnessBudgetError,  # noqa: F401 (re-exported)
    SharedRandomness,
    Transcript,
    as_bits,
    decode_bits,
    run_distributed,
)
from .random_utils import RandomnessSource

log = logging.getLogger("nonlocal_boxes")

Feed = Callable[[np.ndarray], np.ndarray]


##########################
# Per-party building blocks
##########################


def and_alice(x1, x2, feed1: Feed, feed2: Feed) -> np.ndarray:
    """Alice's share of ``(x1 ^ y1) & (x2 ^ y2)``: box 1 gets ``x1``, box 2 gets ``x2``."""
    return (x1 & x2) ^ feed1(x1) ^ feed2(x2)


def and_bob(y1, y2, feed1: Feed, feed2: Feed) -> np.ndarray:
    """Bob's share; box 1 gets ``y2`` and box 2 gets ``y1`` so the cross terms appear."""
    return (y1 & y2) ^ feed1(y2) ^ feed2(y1)


def nle_alice(x1, x2, x3, feed1, feed2):
    return and_alice(1 ^ x1 ^ x2, 1 ^ x2 ^ x3, feed1, feed2)


def nle_bob(y1, y2, y3, feed1, feed2):
    return and_bob(y1 ^ y2, y2 ^ y3, feed1, feed2)


def nlm_alice(x1, x2, x3, feed1, feed2):
    return 1 ^ nle_alice(x1, x2, x3, feed1, feed2) ^ x1 ^ x2 ^ x3


def nlm_bob(y1, y2, y3, feed1, feed2):
    return nle_bob(y1, y2, y3, feed1, feed2) ^ y1 ^ y2 ^ y3


def _three_bits(value) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(value, (tuple, list)):
        if len(value) != 3:
            raise ValueError(f"expected three bits, got {value!r}")
        return tuple(as_bits(v) for v in value)
    return decode_bits(value, 3)


def _feeds(port, id1, id2) -> Tuple[Feed, Feed]:
    return (lambda bits: port.feed(id1, bits)), (lambda bits: port.feed(id2, bits))


##############################
# Operations on DistributedBits
##############################


def distributed_and(u: DistributedBit, v: DistributedBit, boxes: Sequence[BoxInstance]) -> DistributedBit:
    box1, box2 = boxes
    a = and_alice(u.alice_share, v.alice_share, box1.alice.feed, box2.alice.feed)
    b = and_bob(u.bob_share, v.bob_share, box1.bob.feed, box2.bob.feed)
    return DistributedBit(a, b)


def nonlocal_equality(x, y, boxes: Sequence[BoxInstance]) -> DistributedBit:
    """Shares of ``[x1^y1 == x2^y2 == x3^y3]`` from two boxes."""
    box1, box2 = boxes
    a = nle_alice(*_three_bits(x), box1.alice.feed, box2.alice.feed)
    b = nle_bob(*_three_bits(y), box1.bob.feed, box2.bob.feed)
    return DistributedBit(a, b)


def nonlocal_majority(x, y, boxes: Sequence[BoxInstance]) -> DistributedBit:
    """Shares of ``Maj(x1^y1, x2^y2, x3^y3)`` from two boxes."""
    box1, box2 = boxes
    a = nlm_alice(*_three_bits(x), box1.alice.feed, box2.alice.feed)
    b = nlm_bob(*_three_bits(y), box1.bob.feed, box2.bob.feed)
    return DistributedBit(a, b)


def box_shared_coin(box: BoxInstance) -> Tuple[np.ndarray, np.ndarray]:
    """Both parties feed 0, so the outputs agree (with the box's correctness) and are uniform."""
    return invoke(box, 0, 0)


################
# Base bias
################


def _leaf_input(value, leaves: int):
    value = np.asarray(value, dtype=np.int64)
    return np.broadcast_to(value[..., None], value.shape + (leaves,))


def base_bias_alice(view: PartyView, f: BooleanFunction, leaves: int = 1) -> np.ndarray:
    z = view.shared.word(np.arange(leaves), f.bob_arity).astype(np.int64)
    return f(_leaf_input(view.input, leaves), z)


def base_bias_bob(view: PartyView, f: BooleanFunction, leaves: int = 1) -> np.ndarray:
    idx = np.arange(leaves)
    z = view.shared.word(idx, f.bob_arity).astype(np.int64)
    coin = view.private.coin(idx)
    return np.where(_leaf_input(view.input, leaves) == z, 0, coin).astype(np.uint8)


def base_bias(
    f: BooleanFunction,
    x,
    y,
    shared: SharedRandomness,
    transcript: Optional[Transcript] = None,
) -> DistributedBit:
    """
    Alice guesses Bob's input is the shared word ``z`` and outputs ``f(x, z)``;
    Bob outputs 0 when the guess is right and a private coin otherwise.
    Correct with probability ``1/2 + 2**-(n+1)`` on every input.
    """
    out, _ = run_distributed(
        lambda view: base_bias_alice(view, f)[..., 0],
        lambda view: base_bias_bob(view, f)[..., 0],
        x,
        y,
        shared.source,
        transcript=transcript if transcript is not None else shared.transcript,
        shared=shared,
    )
    return out


#####################
# Amplification tree
#####################


@dataclass(frozen=True)
class AmplificationSpec:
    depth: int
    box_model: BoxModel
    leaf_protocol: str = "base-bias"

    def __post_init__(self):
        if not isinstance(self.depth, (int, np.integer)) or self.depth < 0:
            raise ValueError(f"depth must be a non-negative integer, not {self.depth!r}")
        if self.leaf_protocol != "base-bias":
            raise ValueError(f"unsupported leaf protocol: {self.leaf_protocol}")
        object.__setattr__(self, "box_model", BoxModel.find(self.box_model))

    @property
    def leaf_count(self) -> int:
        return 3**self.depth

    @property
    def node_count(self) -> int:
        return (3**self.depth - 1) // 2

    @property
    def box_count(self) -> int:
        return 2 * self.node_count


@dataclass
class ProtocolRun:
    output: Optional[DistributedBit]
    transcript: Transcript
    guess: Optional[np.ndarray] = None

    @property
    def value(self) -> np.ndarray:
        """The revealed guess when there is one, else the XOR of the output shares."""
        if self.guess is not None:
            return self.guess
        return self.output.value


def majority_tree(leaves: np.ndarray, port, depth: int, node: Callable) -> np.ndarray:
    """
    Reduce ``3**depth`` leaf shares (last axis) with one party's half of nonlocal majority.

    Nodes are numbered level by level from the leaves up; node ``g`` uses boxes
    ``2g`` and ``2g + 1``.
    """
    shares = leaves
    first = 0
    for _ in range(depth):
        grouped = shares.reshape(shares.shape[:-1] + (-1, 3))
        nodes = np.arange(first, first + grouped.shape[-2])
        feed1, feed2 = _feeds(port, 2 * nodes, 2 * nodes + 1)
        shares = node(grouped[..., 0], grouped[..., 1], grouped[..., 2], feed1, feed2)
        first += nodes.size
    return shares[..., 0]


def amplify_alice(view: PartyView, f: BooleanFunction, depth: int) -> np.ndarray:
    return majority_tree(base_bias_alice(view, f, 3**depth), view.ports, depth, nlm_alice)


def amplify_bob(view: PartyView, f: BooleanFunction, depth: int) -> np.ndarray:
    return majority_tree(base_bias_bob(view, f, 3**depth), view.ports, depth, nlm_bob)


def _amplify_run(f, x, y, spec, randomness, boxes, budget):
    transcript = Transcript()
    shared = SharedRandomness(randomness, transcript, budget=budget)
    # all leaves draw up front, so a short budget fails before any box fires
    shared.require(spec.leaf_count)
    if boxes is None:
        boxes = BoxBank(spec.box_model, spec.box_count, randomness, transcript)
    else:
        boxes.transcript = transcript
    output, transcript = run_distributed(
        lambda view: amplify_alice(view, f, spec.depth),
        lambda view: amplify_bob(view, f, spec.depth),
        x,
        y,
        randomness,
        boxes=boxes,
        transcript=transcript,
        shared=shared,
    )
    log.debug(
        "amplify depth=%d: %d boxes, %d shared words",
        spec.depth,
        transcript.box_invocations,
        transcript.shared_words_consumed,
    )
    return output, transcript


def amplify(
    f: BooleanFunction,
    x,
    y,
    spec: AmplificationSpec,
    randomness: RandomnessSource,
    *,
    boxes: Optional[BoxBank] = None,
    budget: Optional[int] = None,
) -> ProtocolRun:
    """Ternary tree of nonlocal majorities over ``3**depth`` independent base-bias leaves."""
    output, transcript = _amplify_run(f, x, y, spec, randomness, boxes, budget)
    return ProtocolRun(output, transcript)


def trivial_protocol(
    f: BooleanFunction,
    x,
    y,
    spec: AmplificationSpec,
    randomness: RandomnessSource,
    *,
    boxes: Optional[BoxBank] = None,
    budget: Optional[int] = None,
) -> Tuple[np.ndarray, Transcript]:
    """Amplify, then Bob sends his root share; Alice's guess is the XOR."""
    output, transcript = _amplify_run(f, x, y, spec, randomness, boxes, budget)
    transcript.begin_reveal()
    received = transcript.send(output.bob_share)
    return output.alice_share ^ received, transcript


###############
# van Dam
###############


def van_dam_alice(view: PartyView, f: BooleanFunction) -> np.ndarray:
    z = np.arange(1 << f.bob_arity)
    outputs = view.ports.feed(z, f(_leaf_input(view.input, z.size), z))
    return np.bitwise_xor.reduce(outputs, axis=-1)


def van_dam_bob(view: PartyView, f: BooleanFunction) -> np.ndarray:
    z = np.arange(1 << f.bob_arity)
    outputs = view.ports.feed(z, (_leaf_input(view.input, z.size) == z).astype(np.uint8))
    return np.bitwise_xor.reduce(outputs, axis=-1)


def van_dam_protocol(
    f: BooleanFunction,
    x,
    y,
    boxes: BoxBank,
    *,
    reveal: bool = False,
) -> ProtocolRun:
    """
    One box per possible Bob input ``z``: Alice feeds ``f(x, z)``, Bob feeds
    ``[y == z]``.  The XOR of all box outputs is a sharing of ``f(x, y)``.
    """
    transcript = boxes.transcript if boxes.transcript is not None else Transcript()
    boxes.transcript = transcript
    output, transcript = run_distributed(
        lambda view: van_dam_alice(view, f),
        lambda view: van_dam_bob(view, f),
        x,
        y,
        boxes.source,
        boxes=boxes,
        transcript=transcript,
    )
    guess = None
    if reveal:
        transcript.begin_reveal()
        guess = output.alice_share ^ transcript.send(output.bob_share)
    return ProtocolRun(output, transcript, guess)


###########################
# Protocols as engine inputs
###########################


class Protocol:
    """
    A protocol with fixed parameters, runnable on integer-coded inputs.

    ``run(x, y, source)`` evaluates the protocol on a batch, ``target(x, y)``
    is the bit it should produce, and ``structure()`` declares how its success
    composes from smaller protocols (``None`` when it does not).
    """

    name = None
    alice_bits = 0
    bob_bits = 0
    _registry = {}

    def __init_subclass__(cls):
        if cls.name is not None:
            Protocol._registry[cls.name] = cls

    def run(self, x, y, source: RandomnessSource) -> ProtocolRun:
        raise NotImplementedError()

    def target(self, x, y) -> np.ndarray:
        raise NotImplementedError()

    def structure(self):
        return None

    @classmethod
    def from_options(cls, *, function=None, model="perfect", depth=0) -> "Protocol":
        raise NotImplementedError()

    def inputs(self):
        for x in range(1 << self.alice_bits):
            for y in range(1 << self.bob_bits):
                yield x, y

    def __repr__(self):
        return f"{self.__class__.__name__}({self.describe()})"

    def describe(self) -> str:
        return self.name


def _majority3(b1, b2, b3):
    return (b1 & b2) | (b1 & b3) | (b2 & b3)


class _BoxProtocol(Protocol):
    box_count = 2

    def __init__(self, model):
        self.model = BoxModel.find(model)

    def describe(self):
        return f"{self.name}, {self.model}"

    @classmethod
    def from_options(cls, *, function=None, model="perfect", depth=0):
        return cls(model)

    def _run(self, alice, bob, x, y, source):
        transcript = Transcript()
        bank = BoxBank(self.model, self.box_count, source, transcript)
        output, transcript = run_distributed(alice, bob, x, y, source, boxes=bank, transcript=transcript)
        return ProtocolRun(output, transcript)


class NonlocalBoxProtocol(_BoxProtocol):
    """A single box: inputs ``x``, ``y``; the target is ``x & y``."""

    name = "box"
    alice_bits = 1
    bob_bits = 1
    box_count = 1

    def run(self, x, y, source):
        return self._run(
            lambda view: view.ports.feed(0, view.input),
            lambda view: view.ports.feed(0, view.input),
            x,
            y,
            source,
        )

    def target(self, x, y):
        return (np.asarray(x) & np.asarray(y)).astype(np.uint8)

    def structure(self):
        return ("xor-chain", self, 1)


class DistributedAndProtocol(_BoxProtocol):
    """Alice holds ``(x1, x2)``, Bob ``(y1, y2)``; target ``(x1 ^ y1) & (x2 ^ y2)``."""

    name = "and"
    alice_bits = 2
    bob_bits = 2

    def run(self, x, y, source):
        def alice(view):
            x1, x2 = decode_bits(view.input, 2)
            return and_alice(x1, x2, *_feeds(view.ports, 0, 1))

        def bob(view):
            y1, y2 = decode_bits(view.input, 2)
            return and_bob(y1, y2, *_feeds(view.ports, 0, 1))

        return self._run(alice, bob, x, y, source)

    def target(self, x, y):
        u1, u2 = decode_bits(np.asarray(x) ^ np.asarray(y), 2)
        return u1 & u2

    def structure(self):
        return ("xor-chain", self, 1)


class NonlocalEqualityProtocol(_BoxProtocol):
    name = "nle"
    alice_bits = 3
    bob_bits = 3

    def run(self, x, y, source):
        return self._run(
            lambda view: nle_alice(*decode_bits(view.input, 3), *_feeds(view.ports, 0, 1)),
            lambda view: nle_bob(*decode_bits(view.input, 3), *_feeds(view.ports, 0, 1)),
            x,
            y,
            source,
        )

    def target(self, x, y):
        z = np.asarray(x) ^ np.asarray(y)
        return ((z == 0) | (z == 7)).astype(np.uint8)

    def structure(self):
        return ("xor-chain", DistributedAndProtocol(self.model), 1)


class NonlocalMajorityProtocol(_BoxProtocol):
    name = "nlm"
    alice_bits = 3
    bob_bits = 3

    def run(self, x, y, source):
        return self._run(
            lambda view: nlm_alice(*decode_bits(view.input, 3), *_feeds(view.ports, 0, 1)),
            lambda view: nlm_bob(*decode_bits(view.input, 3), *_feeds(view.ports, 0, 1)),
            x,
            y,
            source,
        )

    def target(self, x, y):
        return _majority3(*decode_bits(np.asarray(x) ^ np.asarray(y), 3))

    def structure(self):
        return ("xor-chain", DistributedAndProtocol(self.model), 1)


class _FunctionProtocol(Protocol):
    def __init__(self, f: BooleanFunction):
        self.f = f
        self.alice_bits = f.alice_arity
        self.bob_bits = f.bob_arity

    def target(self, x, y):
        return self.f(x, y)

    @staticmethod
    def _require(name, function):
        if function is None:
            raise ValueError(f"protocol {name} needs a function")
        return function


class BaseBiasProtocol(_FunctionProtocol):
    name = "base-bias"

    def describe(self):
        return f"{self.name}, {self.f.name}"

    @classmethod
    def from_options(cls, *, function=None, model="perfect", depth=0):
        return cls(cls._require(cls.name, function))

    def run(self, x, y, source):
        transcript = Transcript()
        output = base_bias(self.f, x, y, SharedRandomness(source, transcript), transcript)
        return ProtocolRun(output, transcript)


class AmplifyProtocol(_FunctionProtocol):
    name = "amplify"

    def __init__(self, f: BooleanFunction, spec: AmplificationSpec, budget: Optional[int] = None):
        super().__init__(f)
        self.spec = spec
        self.budget = budget

    def describe(self):
        return f"{self.name}, {self.f.name}, depth={self.spec.depth}, {self.spec.box_model}"

    @classmethod
    def from_options(cls, *, function=None, model="perfect", depth=0):
        return cls(cls._require(cls.name, function), AmplificationSpec(depth, model))

    def run(self, x, y, source):
        return amplify(self.f, x, y, self.spec, source, budget=self.budget)

    def structure(self):
        return (
            "majority-tree",
            BaseBiasProtocol(self.f),
            NonlocalMajorityProtocol(self.spec.box_model),
            self.spec.depth,
        )


class TrivialProtocol(AmplifyProtocol):
    name = "trivial"

    def run(self, x, y, source):
        output, transcript = _amplify_run(self.f, x, y, self.spec, source, None, self.budget)
        transcript.begin_reveal()
        guess = output.alice_share ^ transcript.send(output.bob_share)
        return ProtocolRun(output, transcript, guess)


class VanDamProtocol(_FunctionProtocol):
    name = "van-dam"

    def __init__(self, f: BooleanFunction, model, reveal: bool = False):
        super().__init__(f)
        self.model = BoxModel.find(model)
        self.reveal = reveal

    def describe(self):
        return f"{self.name}, {self.f.name}, {self.model}"

    @classmethod
    def from_options(cls, *, function=None, model="perfect", depth=0):
        return cls(cls._require(cls.name, function), model)

    def run(self, x, y, source):
        bank = BoxBank(self.model, 1 << self.f.bob_arity, source, Transcript())
        return van_dam_protocol(self.f, x, y, bank, reveal=self.reveal)

    def structure(self):
        return ("xor-chain", NonlocalBoxProtocol(self.model), 1 << self.f.bob_arity)


def build_protocol(name: str, *, function: Optional[BooleanFunction] = None, model=None, depth: int = 0):
    """Construct a registered protocol by name from CLI-style parameters."""
    if name not in Protocol._registry:
        raise ValueError(f"Unknown protocol: {name}; choose from {sorted(Protocol._registry)}")
    klass = Protocol._registry[name]
    return klass.from_options(function=function, model=model or "perfect", depth=depth)
