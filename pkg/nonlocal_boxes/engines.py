"""
Exact and Monte Carlo evaluation of protocol success probabilities.

The exact engine runs a protocol once against ``TracingRandomness`` to learn
every random atom it reads, lays the atoms out as bit fields, and then runs
the protocol again with the batch axis ranging over every assignment of those
atoms.  Summing the per-row probability weights of correct rows gives the
exact success for one input pair.

The sampling engine runs trials in contiguous index ranges.  Every random
value a trial reads is a hash of ``(master_seed, trial, stream, index)``, so
the answer does not depend on how the ranges are distributed over workers.
"""

import itertools
import logging
import math
import multiprocessing as mp
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import stats

from . import analysis
from .protocols import Protocol
from .random_utils import (
    AtomLayout,
    CounterRandomness,
    EnumeratedRandomness,
    Stream,
    TracingRandomness,
    derive_seed,
    row_chunks,
)

log = logging.getLogger("nonlocal_boxes")


class RandomnessSpaceError(Exception):
    pass


class CompositionError(Exception):
    pass


class ConstantMap(Mapping):
    """Read-only map assigning one value to every input pair of a protocol, without materialising it."""

    def __init__(self, alice_bits: int, bob_bits: int, value: float):
        self.alice_bits = alice_bits
        self.bob_bits = bob_bits
        self._value = value

    @property
    def value(self) -> float:
        """The success shared by every input pair."""
        return self._value

    def __getitem__(self, key):
        x, y = key
        if not (0 <= x < 1 << self.alice_bits and 0 <= y < 1 << self.bob_bits):
            raise KeyError(key)
        return self._value

    def __iter__(self):
        return itertools.product(range(1 << self.alice_bits), range(1 << self.bob_bits))

    def __len__(self):
        return 1 << (self.alice_bits + self.bob_bits)


@dataclass(frozen=True)
class ExactResult:
    per_input: Mapping
    worst_case: float
    mode: str
    atom_bits: Optional[int] = None
    provenance: str = "exact"

    @classmethod
    def from_map(cls, per_input, mode, atom_bits=None) -> "ExactResult":
        if isinstance(per_input, ConstantMap):
            return cls(per_input, per_input.value, mode, atom_bits)
        return cls(per_input, min(per_input.values()), mode, atom_bits)

    @property
    def average(self) -> float:
        if isinstance(self.per_input, ConstantMap):
            return self.per_input.value
        return float(np.mean(list(self.per_input.values())))

    @property
    def is_uniform(self) -> bool:
        if isinstance(self.per_input, ConstantMap):
            return True
        values = list(self.per_input.values())
        return max(values) - min(values) <= _tolerance()


@dataclass(frozen=True)
class SampleResult:
    trials: int
    successes: int
    estimate: float
    ci95: Tuple[float, float]
    master_seed: int
    bits_communicated: int = 0
    box_invocations: int = 0
    inputs: Optional[Tuple[int, int]] = None
    provenance: str = "sampled"


def _tolerance():
    from . import config

    return config.get("tolerance", 1e-12)


#########
# Exact
#########


def trace_layout(protocol: Protocol) -> AtomLayout:
    trace = TracingRandomness()
    protocol.run(0, 0, trace)
    return AtomLayout.from_trace(trace)


def _exact_for_input(protocol, layout, x, y, chunk_rows) -> float:
    target = protocol.target(x, y)
    total = 0.0
    for rows in row_chunks(layout, chunk_rows):
        source = EnumeratedRandomness(layout, rows)
        run = protocol.run(x, y, source)
        correct = np.broadcast_to(run.value == target, source.batch_shape)
        total += float(np.sum(source.weight, where=correct))
    return min(max(total, 0.0), 1.0)


def _full(protocol: Protocol) -> ExactResult:
    from . import config

    layout = trace_layout(protocol)
    max_bits = config.get("exact.max-atom-bits", 30)
    if layout.total_bits > max_bits:
        raise RandomnessSpaceError(
            f"{protocol!r} reads {layout.total_bits} random bits; "
            f"full enumeration is limited to 2**{max_bits} assignments"
        )
    chunk_rows = config.get("exact.chunk-rows", 65536)
    log.debug(
        "enumerating %r: %d inputs x 2**%d rows", protocol, 1 << (protocol.alice_bits + protocol.bob_bits),
        layout.total_bits,
    )
    per_input = {
        (x, y): _exact_for_input(protocol, layout, x, y, chunk_rows) for x, y in protocol.inputs()
    }
    return ExactResult.from_map(per_input, "full", layout.total_bits)


def _uniform_success(protocol: Protocol, role: str) -> float:
    result = _full(protocol)
    if not result.is_uniform:
        raise CompositionError(
            f"{role} {protocol!r} succeeds with input-dependent probability; "
            "composition needs a constant"
        )
    return result.worst_case


def _compositional(protocol: Protocol) -> ExactResult:
    structure = protocol.structure()
    if structure is None:
        raise CompositionError(f"{protocol!r} declares no composition structure")
    kind = structure[0]
    if kind == "xor-chain":
        _, gate, k = structure
        value = analysis.xor_chain_success(_uniform_success(gate, "gate"), k)
    elif kind == "majority-tree":
        _, leaf, gate, depth = structure
        p = _uniform_success(leaf, "leaf")
        q = _uniform_success(gate, "majority gate")
        value = analysis.amplified_success(p, q, depth)
    else:
        raise CompositionError(f"unknown composition structure: {kind}")
    per_input = ConstantMap(protocol.alice_bits, protocol.bob_bits, value)
    return ExactResult.from_map(per_input, "compositional")


def exact_success(protocol: Protocol, mode: str = "full") -> ExactResult:
    """
    Exact success of ``protocol`` on every input pair.

    ``mode="full"`` enumerates every randomness assignment;
    ``mode="compositional"`` computes the declared leaf/gate successes exactly
    and composes them with the majority or XOR-chain law.
    """
    if mode == "full":
        return _full(protocol)
    if mode == "compositional":
        return _compositional(protocol)
    raise ValueError(f"mode must be 'full' or 'compositional', not {mode!r}")


###########
# Sampling
###########


def _sample_chunk(protocol: Protocol, master_seed: int, start: int, stop: int, inputs=None):
    source = CounterRandomness(master_seed, np.arange(start, stop, dtype=np.uint64))
    if inputs is None:
        x = source.bits(Stream.INPUT_ALICE, 0, protocol.alice_bits).astype(np.int64)
        y = source.bits(Stream.INPUT_BOB, 0, protocol.bob_bits).astype(np.int64)
    else:
        x, y = inputs
    run = protocol.run(x, y, source)
    correct = np.broadcast_to(run.value == protocol.target(x, y), source.batch_shape)
    return (
        int(np.count_nonzero(correct)),
        run.transcript.bits_communicated,
        run.transcript.box_invocations,
    )


def trial_ranges(trials: int, batch_size: int) -> List[Tuple[int, int]]:
    return [(start, min(start + batch_size, trials)) for start in range(0, trials, batch_size)]


def confidence_interval(successes: int, trials: int, level: float = 0.95) -> Tuple[float, float]:
    """Normal approximation, widened by ``1/(2T)`` so it never collapses at 0 or 1."""
    estimate = successes / trials
    z = stats.norm.ppf(0.5 + level / 2)
    half = z * math.sqrt(estimate * (1 - estimate) / trials) + 1 / (2 * trials)
    return float(max(0.0, estimate - half)), float(min(1.0, estimate + half))


def sample_success(
    protocol: Protocol,
    trials: int,
    master_seed: int,
    workers: Optional[int] = None,
    inputs: Optional[Tuple[int, int]] = None,
) -> SampleResult:
    """
    Monte Carlo success estimate over ``trials`` independent runs.

    With ``inputs=None`` each trial draws its input pair uniformly from the
    input streams; otherwise every trial uses the given pair.
    """
    from . import config

    if trials < 1:
        raise ValueError(f"trials must be at least 1, not {trials}")
    if workers is None:
        workers = config.get("sample.workers", 1)
    batch_size = config.get("sample.batch-size", 2000)
    args = [(protocol, master_seed, start, stop, inputs) for start, stop in trial_ranges(trials, batch_size)]
    log.debug("sampling %r: %d trials in %d chunks on %d workers", protocol, trials, len(args), workers)

    if workers > 1 and len(args) > 1:
        with mp.Pool(min(workers, len(args))) as pool:
            chunks = pool.starmap(_sample_chunk, args)
    else:
        chunks = [_sample_chunk(*a) for a in args]

    successes = sum(c[0] for c in chunks)
    bits = max(c[1] for c in chunks)
    boxes = max(c[2] for c in chunks)
    return SampleResult(
        trials=trials,
        successes=successes,
        estimate=successes / trials,
        ci95=confidence_interval(successes, trials),
        master_seed=master_seed,
        bits_communicated=bits,
        box_invocations=boxes,
        inputs=inputs,
    )


###############
# Cross check
###############


@dataclass(frozen=True)
class CrossCheckRow:
    x: int
    y: int
    exact: float
    estimate: float
    sigma: float
    passed: bool


@dataclass(frozen=True)
class CrossCheckReport:
    protocol: str
    trials: int
    sigmas: float
    rows: List[CrossCheckRow] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)

    @property
    def worst_deviation(self) -> float:
        """Largest |estimate - exact| in units of sigma (inf when sigma is 0 and they differ)."""
        worst = 0.0
        for row in self.rows:
            diff = abs(row.estimate - row.exact)
            if row.sigma > 0:
                worst = max(worst, diff / row.sigma)
            elif diff > _tolerance():
                worst = math.inf
        return worst

    def __bool__(self):
        return self.passed


def cross_check(
    protocol: Protocol,
    trials: int,
    seed: int,
    *,
    oracle: Optional[Protocol] = None,
    sigmas: Optional[float] = None,
    workers: Optional[int] = None,
) -> CrossCheckReport:
    """
    Sample ``protocol`` on every input pair and compare with the exact success
    of ``oracle`` (the protocol itself by default) within ``sigmas`` binomial
    standard deviations.
    """
    from . import config

    if sigmas is None:
        sigmas = config.get("sample.sigmas", 5.0)
    exact = exact_success(oracle if oracle is not None else protocol, "full")
    tol = _tolerance()
    rows = []
    for (x, y), p in exact.per_input.items():
        sample = sample_success(protocol, trials, derive_seed(seed, x, y), workers=workers, inputs=(x, y))
        sigma = math.sqrt(p * (1 - p) / trials)
        passed = abs(sample.estimate - p) <= sigmas * sigma + tol
        rows.append(CrossCheckRow(x, y, p, sample.estimate, sigma, passed))
    report = CrossCheckReport(repr(protocol), trials, sigmas, rows)
    log.info("cross-check %s: %s", report.protocol, "pass" if report.passed else "FAIL")
    return report
