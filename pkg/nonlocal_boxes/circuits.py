"""
Distributed circuits over shared bits.

NOT and XOR act on shares locally and are exact; every AND consumes two boxes
through the distributed-AND construction and inherits their noise.

Circuits have a line-oriented text form, one gate per line::

    # comment
    INPUT alice 0 -> x0
    INPUT bob 0 -> y0
    AND x0 y0 -> w0
    XOR w0 w1 -> w2
    NOT w2 -> w3
    OUTPUT w3

An ``INPUT alice i`` wire is the distributed bit ``(x_i, 0)``: Alice's share is
her ``i``-th input bit (big-endian) and Bob's share is 0.  ``INPUT bob i`` is
``(0, y_i)``.  The ``k``-th AND gate in file order uses boxes ``2k`` and
``2k + 1``.
"""

import itertools
import logging
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import jinja2
import numpy as np

from . import analysis
from .boxes import BoxBank, BoxBudgetError, BoxModel
from .core import (
    ArityError,
    DistributedBit,
    Party,
    PartyView,
    Transcript,
    as_bits,
    decode_bits,
    inner_product,
    run_distributed,
)
from .protocols import DistributedAndProtocol, Protocol, ProtocolRun, and_alice, and_bob
from .random_utils import RandomnessSource

log = logging.getLogger("nonlocal_boxes")

_NAME = r"[A-Za-z_][A-Za-z0-9_]*"


class CircuitError(ValueError):
    pass


class Wire:
    """
    A circuit wire; assigned exactly once (by the gate producing it) and read
    any number of times afterwards.
    """

    def __init__(self, name: str):
        self.name = name
        self._assigned = False

    def __eq__(self, other):
        if not isinstance(other, Wire):
            return NotImplemented
        return self.name == other.name

    def __hash__(self):
        return hash(self.name)

    def __repr__(self):
        return f"Wire({self.name})"

    def __str__(self):
        if not self._assigned:
            raise CircuitError(f"wire {self.name} is read before it is assigned")
        return self.name

    @property
    def assign(self) -> str:
        if self._assigned:
            raise CircuitError(f"wire {self.name} is assigned twice")
        self._assigned = True
        return self.name


#########
# Gates
#########


class Gate:
    keyword = None
    _subtypes = []

    def __init__(self, inputs: Sequence[str], output: Optional[str]):
        self.inputs = tuple(inputs)
        self.output = output

    def __init_subclass__(cls):
        Gate._subtypes.append(cls)

    def __eq__(self, other):
        if not isinstance(other, Gate):
            return NotImplemented
        return self.__class__ is other.__class__ and str(self) == str(other)

    def __repr__(self):
        return f"{self.__class__.__name__}({self})"

    def __str__(self):
        return f"{self.keyword} {' '.join(self.inputs)} -> {self.output}"

    def apply(self, party: Party, wires: Dict[str, np.ndarray], env: "_PartyEnv") -> np.ndarray:
        raise NotImplementedError()

    @staticmethod
    def find(text: str) -> "Gate":
        text = text.strip()
        for klass in Gate._subtypes:
            result = klass.parse(text)
            if result is not None:
                return result
        raise CircuitError(f"Unknown gate: {text}")


class InputGate(Gate):
    keyword = "INPUT"
    _patt = re.compile(rf"^INPUT\s+(alice|bob)\s+(\d+)\s*->\s*({_NAME})$")

    def __init__(self, owner: str, bit: int, output: str):
        super().__init__((), output)
        self.owner = Party(owner)
        self.bit = int(bit)

    def __str__(self):
        return f"INPUT {self.owner.value} {self.bit} -> {self.output}"

    def apply(self, party, wires, env):
        if party is self.owner:
            return env.bits[self.bit]
        return np.zeros((), dtype=np.uint8)

    @classmethod
    def parse(cls, text):
        if m := cls._patt.match(text):
            return InputGate(m.group(1), int(m.group(2)), m.group(3))


class NotGate(Gate):
    keyword = "NOT"
    _patt = re.compile(rf"^NOT\s+({_NAME})\s*->\s*({_NAME})$")

    def apply(self, party, wires, env):
        (u,) = self.inputs
        # only Alice flips her share
        return wires[u] ^ 1 if party is Party.ALICE else wires[u]

    @classmethod
    def parse(cls, text):
        if m := cls._patt.match(text):
            return NotGate([m.group(1)], m.group(2))


class XorGate(Gate):
    keyword = "XOR"
    _patt = re.compile(rf"^XOR\s+({_NAME})\s+({_NAME})\s*->\s*({_NAME})$")

    def apply(self, party, wires, env):
        u, v = self.inputs
        return wires[u] ^ wires[v]

    @classmethod
    def parse(cls, text):
        if m := cls._patt.match(text):
            return XorGate([m.group(1), m.group(2)], m.group(3))


class AndGate(Gate):
    keyword = "AND"
    _patt = re.compile(rf"^AND\s+({_NAME})\s+({_NAME})\s*->\s*({_NAME})$")

    def apply(self, party, wires, env):
        u, v = self.inputs
        k = env.next_and()
        feed1 = lambda bits: env.port.feed(2 * k, bits)  # noqa: E731
        feed2 = lambda bits: env.port.feed(2 * k + 1, bits)  # noqa: E731
        combine = and_alice if party is Party.ALICE else and_bob
        return combine(wires[u], wires[v], feed1, feed2)

    @classmethod
    def parse(cls, text):
        if m := cls._patt.match(text):
            return AndGate([m.group(1), m.group(2)], m.group(3))


class OutputGate(Gate):
    keyword = "OUTPUT"
    _patt = re.compile(rf"^OUTPUT\s+({_NAME})$")

    def __init__(self, wire: str):
        super().__init__([wire], None)

    def __str__(self):
        return f"OUTPUT {self.inputs[0]}"

    def apply(self, party, wires, env):
        return wires[self.inputs[0]]

    @classmethod
    def parse(cls, text):
        if m := cls._patt.match(text):
            return OutputGate(m.group(1))


class _PartyEnv:
    def __init__(self, bits, port):
        self.bits = bits
        self.port = port
        self._ands = itertools.count()

    def next_and(self) -> int:
        return next(self._ands)


##########
# Circuit
##########


class DistributedCircuit:
    text_template = jinja2.Template(
        "# distributed circuit, {{ and_count }} AND gates\n"
        "INPUTS alice={{ alice_bits }} bob={{ bob_bits }}\n"
        "{% for gate in gates %}{{ gate }}\n{% endfor %}",
        undefined=jinja2.StrictUndefined,
    )
    _inputs_patt = re.compile(r"^INPUTS\s+alice=(\d+)\s+bob=(\d+)$")

    def __init__(self, gates: Sequence[Gate], alice_bits: Optional[int] = None, bob_bits: Optional[int] = None):
        self.gates = tuple(gates)
        self._validate()
        inputs = [g for g in self.gates if isinstance(g, InputGate)]
        used = {party: [g.bit + 1 for g in inputs if g.owner is party] for party in Party}
        self.alice_bits = max(used[Party.ALICE], default=0) if alice_bits is None else alice_bits
        self.bob_bits = max(used[Party.BOB], default=0) if bob_bits is None else bob_bits
        for party, arity in ((Party.ALICE, self.alice_bits), (Party.BOB, self.bob_bits)):
            if max(used[party], default=0) > arity:
                raise CircuitError(f"{party.value} input bit {max(used[party]) - 1} exceeds arity {arity}")

    def _validate(self):
        defined = set()
        outputs = []
        for lineno, gate in enumerate(self.gates, 1):
            for name in gate.inputs:
                if name not in defined:
                    raise CircuitError(f"gate {lineno} ({gate}) reads undefined wire {name}")
            if isinstance(gate, OutputGate):
                outputs.append(gate)
            elif gate.output in defined:
                raise CircuitError(f"gate {lineno} ({gate}) redefines wire {gate.output}")
            else:
                defined.add(gate.output)
        if len(outputs) != 1:
            raise CircuitError(f"a circuit has exactly one OUTPUT, found {len(outputs)}")
        if not isinstance(self.gates[-1], OutputGate):
            raise CircuitError("OUTPUT must be the last gate")

    @property
    def and_count(self) -> int:
        return sum(isinstance(g, AndGate) for g in self.gates)

    @property
    def xor_count(self) -> int:
        return sum(isinstance(g, XorGate) for g in self.gates)

    @property
    def box_count(self) -> int:
        return 2 * self.and_count

    def __eq__(self, other):
        if not isinstance(other, DistributedCircuit):
            return NotImplemented
        return (
            self.gates == other.gates
            and self.alice_bits == other.alice_bits
            and self.bob_bits == other.bob_bits
        )

    def __repr__(self):
        return f"DistributedCircuit({len(self.gates)} gates, {self.and_count} AND)"

    def to_text(self) -> str:
        return self.text_template.render(
            gates=self.gates, alice_bits=self.alice_bits, bob_bits=self.bob_bits, and_count=self.and_count
        )

    @classmethod
    def from_text(cls, text: str) -> "DistributedCircuit":
        gates = []
        arity = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if m := cls._inputs_patt.match(line):
                if gates or arity:
                    raise CircuitError(f"line {lineno}: INPUTS must come before every gate")
                arity = {"alice_bits": int(m.group(1)), "bob_bits": int(m.group(2))}
                continue
            try:
                gates.append(Gate.find(line))
            except (CircuitError, ValueError) as e:
                raise CircuitError(f"line {lineno}: {e}") from e
        if not gates:
            raise CircuitError("circuit text contains no gates")
        return cls(gates, **arity)

    def strategy(self, party: Party, view: PartyView) -> np.ndarray:
        width = self.alice_bits if party is Party.ALICE else self.bob_bits
        env = _PartyEnv(_input_bits(view.input, width), view.ports)
        wires = {}
        for gate in self.gates:
            value = gate.apply(party, wires, env)
            if isinstance(gate, OutputGate):
                return value
            wires[gate.output] = value

    def reference(self, x, y) -> np.ndarray:
        """The Boolean value of the circuit, evaluated directly on the inputs."""
        xb = _input_bits(x, self.alice_bits)
        yb = _input_bits(y, self.bob_bits)
        wires = {}
        for gate in self.gates:
            if isinstance(gate, InputGate):
                value = xb[gate.bit] if gate.owner is Party.ALICE else yb[gate.bit]
            elif isinstance(gate, NotGate):
                value = wires[gate.inputs[0]] ^ 1
            elif isinstance(gate, XorGate):
                value = wires[gate.inputs[0]] ^ wires[gate.inputs[1]]
            elif isinstance(gate, AndGate):
                value = wires[gate.inputs[0]] & wires[gate.inputs[1]]
            else:
                return wires[gate.inputs[0]]
            wires[gate.output] = value

    def xor_chain_length(self) -> Optional[int]:
        """
        Number of AND gates when the output is a XOR (possibly negated) of AND
        gates whose operands are circuit inputs and which are each used once;
        None otherwise.
        """
        kinds = {}
        uses = {}
        for gate in self.gates:
            for name in gate.inputs:
                uses[name] = uses.get(name, 0) + 1
            if isinstance(gate, AndGate):
                if any(kinds[name] is not InputGate for name in gate.inputs):
                    return None
            elif isinstance(gate, (XorGate, NotGate)):
                if any(kinds[name] is InputGate for name in gate.inputs):
                    return None
            if gate.output is not None:
                kinds[gate.output] = type(gate)
        for name, kind in kinds.items():
            if kind is not InputGate and uses.get(name, 0) != 1:
                return None
        return self.and_count


def _input_bits(value, width: int) -> Tuple[np.ndarray, ...]:
    if isinstance(value, (tuple, list)):
        if len(value) != width:
            raise ValueError(f"expected {width} input bits, got {len(value)}")
        return tuple(as_bits(v) for v in value)
    return decode_bits(value, width)


class CircuitBuilder:
    """Builds a ``DistributedCircuit`` gate by gate, handing out fresh wires."""

    def __init__(self, alice_bits: Optional[int] = None, bob_bits: Optional[int] = None):
        self.alice_bits = alice_bits
        self.bob_bits = bob_bits
        self.gates: List[Gate] = []
        self._counter = itertools.count()

    def new_wire(self, prefix: str = "w") -> Wire:
        return Wire(f"{prefix}{next(self._counter)}")

    def input(self, owner: str, bit: int) -> Wire:
        wire = self.new_wire("x" if owner == "alice" else "y")
        self.gates.append(InputGate(owner, bit, wire.assign))
        return wire

    def not_(self, u: Wire) -> Wire:
        wire = self.new_wire()
        self.gates.append(NotGate([str(u)], wire.assign))
        return wire

    def xor(self, u: Wire, v: Wire) -> Wire:
        wire = self.new_wire()
        self.gates.append(XorGate([str(u), str(v)], wire.assign))
        return wire

    def and_(self, u: Wire, v: Wire) -> Wire:
        wire = self.new_wire()
        self.gates.append(AndGate([str(u), str(v)], wire.assign))
        return wire

    def output(self, u: Wire) -> DistributedCircuit:
        self.gates.append(OutputGate(str(u)))
        return DistributedCircuit(self.gates, self.alice_bits, self.bob_bits)


def build_ip_circuit(n: int) -> DistributedCircuit:
    """``n`` AND gates ``x_i & y_i`` combined by a chain of ``n - 1`` XORs."""
    from . import config

    max_arity = config.get("function.max-arity", 20)
    if not 1 <= n <= max_arity:
        raise ArityError(f"inner-product circuit needs 1 <= n <= {max_arity}, not {n}")
    builder = CircuitBuilder(n, n)
    terms = [builder.and_(builder.input("alice", i), builder.input("bob", i)) for i in range(n)]
    acc = terms[0]
    for term in terms[1:]:
        acc = builder.xor(acc, term)
    return builder.output(acc)


def eval_circuit(
    circuit: DistributedCircuit,
    x,
    y,
    model,
    randomness: RandomnessSource,
    boxes: Optional[BoxBank] = None,
    transcript: Optional[Transcript] = None,
) -> DistributedBit:
    """Evaluate ``circuit`` on the parties' inputs with box-backed AND gates."""
    if transcript is None:
        transcript = Transcript()
    if boxes is None:
        boxes = BoxBank(model, circuit.box_count, randomness, transcript)
    elif boxes.count < circuit.box_count:
        raise BoxBudgetError(f"circuit needs {circuit.box_count} boxes, bank has {boxes.count}")
    else:
        boxes.transcript = transcript
    output, _ = run_distributed(
        lambda view: circuit.strategy(Party.ALICE, view),
        lambda view: circuit.strategy(Party.BOB, view),
        x,
        y,
        randomness,
        boxes=boxes,
        transcript=transcript,
    )
    return output


class CircuitProtocol(Protocol):
    name = "ip-circuit"

    def __init__(self, circuit: DistributedCircuit, model):
        self.circuit = circuit
        self.model = BoxModel.find(model)
        self.alice_bits = circuit.alice_bits
        self.bob_bits = circuit.bob_bits

    def describe(self):
        return f"circuit, {self.circuit.and_count} AND, {self.model}"

    @classmethod
    def from_options(cls, *, function=None, model="perfect", depth=0):
        if function is None:
            raise ValueError("protocol ip-circuit needs a function")
        n = function.alice_arity
        if function != inner_product(n):
            raise ValueError(f"ip-circuit computes inner product, not {function.name}")
        return cls(build_ip_circuit(n), model)

    def run(self, x, y, source):
        transcript = Transcript()
        output = eval_circuit(self.circuit, x, y, self.model, source, transcript=transcript)
        return ProtocolRun(output, transcript)

    def target(self, x, y):
        return self.circuit.reference(x, y)

    def structure(self):
        k = self.circuit.xor_chain_length()
        if k is None:
            return None
        return ("xor-chain", DistributedAndProtocol(self.model), k)


####################
# Inner-product decay
####################


@dataclass(frozen=True)
class IpDecayRow:
    n: int
    mode: str
    success: float
    ci_low: float
    ci_high: float
    analytic: float


def ip_decay_experiment(
    n_range: Sequence[int],
    model,
    engine: str = "auto",
    trials: int = 10_000,
    seed: int = 0,
    workers: Optional[int] = None,
) -> List[IpDecayRow]:
    """
    Worst-case success of the inner-product circuit for each ``n``.

    ``engine`` is ``exact`` (full enumeration), ``compositional``, ``sampled``
    or ``auto`` (exact up to ``ip-decay.exact-max-n``, sampled above).  The
    sampled figure is taken over uniformly random inputs; gate noise in every
    shipped model does not depend on the inputs, so it estimates the same
    worst case.
    """
    from . import config
    from .engines import exact_success, sample_success
    from .random_utils import derive_seed

    if engine not in ("auto", "exact", "compositional", "sampled"):
        raise ValueError(f"unknown engine: {engine}")
    model = BoxModel.find(model)
    gate = exact_success(DistributedAndProtocol(model)).worst_case
    exact_max = config.get("ip-decay.exact-max-n", 3)
    rows = []
    for n in n_range:
        protocol = CircuitProtocol(build_ip_circuit(n), model)
        analytic = analysis.xor_chain_success(gate, n)
        mode = engine
        if mode == "auto":
            mode = "exact" if n <= exact_max else "sampled"
        if mode == "sampled":
            result = sample_success(protocol, trials, derive_seed(seed, n), workers=workers)
            row = IpDecayRow(n, mode, result.estimate, *result.ci95, analytic)
        else:
            result = exact_success(protocol, "full" if mode == "exact" else "compositional")
            row = IpDecayRow(n, mode, result.worst_case, result.worst_case, result.worst_case, analytic)
        log.info("ip-decay n=%d %s: %.6f (analytic %.6f)", n, mode, row.success, analytic)
        rows.append(row)
    return rows
