import itertools

import numpy as np
import pytest

from nonlocal_boxes import analysis
from nonlocal_boxes.boxes import BoxBank, Noisy, make_boxes
from nonlocal_boxes.core import (
    CommunicationError,
    DistributedBit,
    SharedRandomness,
    Transcript,
    decode_bits,
    inner_product,
)
from nonlocal_boxes.engines import exact_success
from nonlocal_boxes.protocols import (
    AmplificationSpec,
    AmplifyProtocol,
    BaseBiasProtocol,
    DistributedAndProtocol,
    NonlocalBoxProtocol,
    NonlocalEqualityProtocol,
    NonlocalMajorityProtocol,
    RandomnessBudgetError,
    TrivialProtocol,
    VanDamProtocol,
    amplify,
    base_bias,
    box_shared_coin,
    build_protocol,
    distributed_and,
    nonlocal_equality,
    nonlocal_majority,
    trivial_protocol,
    van_dam_protocol,
)
from nonlocal_boxes.random_utils import CounterRandomness

TRIALS = 500


@pytest.fixture
def source():
    return CounterRandomness(2024, np.arange(TRIALS))


def _all_pairs(bits):
    return list(itertools.product(range(1 << bits), repeat=2))


def test_distributed_and_with_perfect_boxes(source):
    for x1, x2, y1, y2 in itertools.product(range(2), repeat=4):
        boxes = make_boxes("perfect", 2, source)
        out = distributed_and(DistributedBit(x1, y1), DistributedBit(x2, y2), boxes)
        np.testing.assert_array_equal(out.value, np.full(TRIALS, (x1 ^ y1) & (x2 ^ y2)))


@pytest.mark.parametrize("x, y", _all_pairs(3))
def test_nonlocal_equality_and_majority_are_exact(x, y, source):
    z = decode_bits(x ^ y, 3)
    equal = int(z[0] == z[1] == z[2])
    majority = int(sum(int(b) for b in z) >= 2)
    out = nonlocal_equality(x, y, make_boxes("perfect", 2, source))
    np.testing.assert_array_equal(out.value, np.full(TRIALS, equal))
    out = nonlocal_majority(x, y, make_boxes("perfect", 2, source))
    np.testing.assert_array_equal(out.value, np.full(TRIALS, majority))


def test_majority_accepts_bit_tuples(source):
    out = nonlocal_majority((1, 0, 1), (0, 1, 1), make_boxes("perfect", 2, source))
    np.testing.assert_array_equal(out.value, np.ones(TRIALS))
    with pytest.raises(ValueError, match="three bits"):
        nonlocal_majority((1, 0), (0, 0), make_boxes("perfect", 2, source))


def test_box_shared_coin():
    trials = 4000
    source = CounterRandomness(8, np.arange(trials))
    (box,) = make_boxes("perfect", 1, source)
    a, b = box_shared_coin(box)
    np.testing.assert_array_equal(a, b)
    assert abs(a.mean() - 0.5) < 5 * np.sqrt(0.25 / trials)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_base_bias_exact(n):
    result = exact_success(BaseBiasProtocol(inner_product(n)))
    expected = analysis.base_bias_success(n)
    assert len(result.per_input) == 4**n
    for success in result.per_input.values():
        assert success == pytest.approx(expected, abs=1e-12)


def test_base_bias_reads_one_shared_word(source):
    transcript = Transcript()
    shared = SharedRandomness(source, transcript)
    out = base_bias(inner_product(2), 3, 1, shared)
    assert out.value.shape == (TRIALS,)
    assert transcript.shared_words_consumed == 1
    assert transcript.bits_communicated == 0


@pytest.mark.parametrize("p", [0.8, 0.9, 0.95, 1.0])
def test_nonlocal_majority_composes_noisy_boxes(p):
    result = exact_success(NonlocalMajorityProtocol(Noisy(p)))
    assert len(result.per_input) == 64
    for success in result.per_input.values():
        assert success == pytest.approx(p**2 + (1 - p) ** 2, abs=1e-12)


def test_nonlocal_majority_at_point_nine():
    assert exact_success(NonlocalMajorityProtocol("noisy:0.9")).worst_case == pytest.approx(0.82, abs=1e-12)


def test_nonlocal_equality_exhaustive():
    result = exact_success(NonlocalEqualityProtocol("perfect"))
    assert len(result.per_input) == 64
    assert all(success == pytest.approx(1.0, abs=1e-12) for success in result.per_input.values())


@pytest.mark.parametrize(
    "model, q",
    [
        pytest.param("perfect", 1.0, id="q=1"),
        pytest.param("noisy:0.95", 0.905, id="q=0.905"),
    ],
)
@pytest.mark.parametrize("n", [1, 2])
def test_amplify_depth_one(model, q, n):
    protocol = AmplifyProtocol(inner_product(n), AmplificationSpec(1, model))
    result = exact_success(protocol)
    expected = analysis.h(analysis.base_bias_success(n), q)
    for success in result.per_input.values():
        assert success == pytest.approx(expected, abs=1e-12)


def test_amplify_depth_one_perfect_value():
    protocol = AmplifyProtocol(inner_product(1), AmplificationSpec(1, "perfect"))
    assert exact_success(protocol).worst_case == pytest.approx(0.84375, abs=1e-12)


def test_amplification_spec_counts():
    spec = AmplificationSpec(3, "noisy:0.9")
    assert spec.leaf_count == 27
    assert spec.node_count == 13
    assert spec.box_count == 26
    assert spec.box_model == Noisy(0.9)
    with pytest.raises(ValueError, match="depth"):
        AmplificationSpec(-1, "perfect")
    with pytest.raises(ValueError, match="leaf protocol"):
        AmplificationSpec(1, "perfect", leaf_protocol="van-dam")


def test_amplify_accounting(source):
    spec = AmplificationSpec(2, "noisy:0.95")
    run = amplify(inner_product(2), 1, 3, spec, source)
    assert run.transcript.box_invocations == 8
    assert run.transcript.shared_words_consumed == 9
    assert run.transcript.bits_communicated == 0
    assert run.value.shape == (TRIALS,)


def test_amplify_randomness_budget(source):
    spec = AmplificationSpec(2, "perfect")
    with pytest.raises(RandomnessBudgetError):
        amplify(inner_product(1), 0, 0, spec, source, budget=8)
    with pytest.raises(RandomnessBudgetError):
        AmplifyProtocol(inner_product(1), spec, budget=3).run(0, 0, source)
    amplify(inner_product(1), 0, 0, spec, source, budget=9)


def test_amplify_uses_a_supplied_bank(source):
    spec = AmplificationSpec(1, "perfect")
    bank = BoxBank("perfect", spec.box_count, source)
    run = amplify(inner_product(1), 1, 1, spec, source, boxes=bank)
    assert bank.invocations == 2
    assert run.transcript is bank.transcript


def test_trivial_protocol_communicates_one_bit(source):
    spec = AmplificationSpec(2, "noisy:0.95")
    guess, transcript = trivial_protocol(inner_product(2), 2, 3, spec, source)
    assert guess.shape == (TRIALS,)
    assert transcript.bits_communicated == 1
    assert transcript.box_invocations == 8


def test_trivial_protocol_perfect_boxes_depth_zero_matches_base_bias():
    protocol = TrivialProtocol(inner_product(2), AmplificationSpec(0, "perfect"))
    result = exact_success(protocol)
    assert result.worst_case == pytest.approx(analysis.base_bias_success(2), abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_van_dam_perfect_boxes_compute_any_function(n, source):
    f = inner_product(n)
    for x, y in f.inputs():
        bank = BoxBank("perfect", 1 << n, source, Transcript())
        run = van_dam_protocol(f, x, y, bank)
        np.testing.assert_array_equal(run.value, np.full(TRIALS, f(x, y)))
        assert run.transcript.box_invocations == 1 << n
        assert run.transcript.bits_communicated == 0


def test_van_dam_reveal(source):
    bank = BoxBank("perfect", 4, source)
    run = van_dam_protocol(inner_product(2), 3, 3, bank, reveal=True)
    assert run.transcript.bits_communicated == 1
    np.testing.assert_array_equal(run.guess, np.zeros(TRIALS))


@pytest.mark.parametrize("p, n", [(0.9, 1), (0.95, 2)])
def test_van_dam_noisy(p, n):
    result = exact_success(VanDamProtocol(inner_product(n), Noisy(p)))
    assert result.worst_case == pytest.approx(analysis.van_dam_success(p, n), abs=1e-12)
    assert result.is_uniform


def test_distributed_protocols_never_communicate(source):
    runs = [
        NonlocalBoxProtocol("perfect").run(1, 1, source),
        DistributedAndProtocol("noisy:0.9").run(2, 3, source),
        NonlocalEqualityProtocol("perfect").run(5, 2, source),
        BaseBiasProtocol(inner_product(2)).run(1, 2, source),
        AmplifyProtocol(inner_product(2), AmplificationSpec(1, "perfect")).run(1, 2, source),
    ]
    for run in runs:
        assert run.transcript.bits_communicated == 0
        run.transcript.check_distributed()


def test_reveal_outside_protocol_is_refused():
    with pytest.raises(CommunicationError):
        Transcript().send(0)


@pytest.mark.parametrize(
    "name, kwargs, klass",
    [
        ("box", {}, NonlocalBoxProtocol),
        ("and", {"model": "noisy:0.9"}, DistributedAndProtocol),
        ("nle", {}, NonlocalEqualityProtocol),
        ("nlm", {}, NonlocalMajorityProtocol),
        ("base-bias", {"function": inner_product(2)}, BaseBiasProtocol),
        ("amplify", {"function": inner_product(2), "depth": 2}, AmplifyProtocol),
        ("trivial", {"function": inner_product(2), "depth": 1}, TrivialProtocol),
        ("van-dam", {"function": inner_product(1)}, VanDamProtocol),
    ],
)
def test_build_protocol(name, kwargs, klass):
    protocol = build_protocol(name, **kwargs)
    assert type(protocol) is klass
    assert repr(protocol).startswith(f"{klass.__name__}({name}")


def test_build_protocol_errors():
    with pytest.raises(ValueError, match="Unknown protocol"):
        build_protocol("teleport")
    with pytest.raises(ValueError, match="needs a function"):
        build_protocol("amplify", depth=1)


def test_structures():
    amp = AmplifyProtocol(inner_product(2), AmplificationSpec(3, "noisy:0.9"))
    kind, leaf, gate, depth = amp.structure()
    assert (kind, depth) == ("majority-tree", 3)
    assert isinstance(leaf, BaseBiasProtocol)
    assert gate.model == Noisy(0.9)
    assert BaseBiasProtocol(inner_product(1)).structure() is None
    assert VanDamProtocol(inner_product(3), "perfect").structure()[2] == 8
