import math

import pytest

from nonlocal_boxes import analysis, config
from nonlocal_boxes.boxes import TSIRELSON, LocalMixture, Noisy, QuantumStrategy
from nonlocal_boxes.core import inner_product
from nonlocal_boxes.engines import (
    CompositionError,
    ConstantMap,
    RandomnessSpaceError,
    confidence_interval,
    cross_check,
    exact_success,
    sample_success,
    trace_layout,
    trial_ranges,
)
from nonlocal_boxes.protocols import (
    AmplificationSpec,
    AmplifyProtocol,
    BaseBiasProtocol,
    DistributedAndProtocol,
    NonlocalBoxProtocol,
    NonlocalEqualityProtocol,
    NonlocalMajorityProtocol,
    TrivialProtocol,
    VanDamProtocol,
)


@pytest.fixture(scope="module")
def nlm90():
    return NonlocalMajorityProtocol(Noisy(0.9))


def test_trace_layout_counts_atoms():
    # two boxes, two weighted draws each
    assert trace_layout(NonlocalMajorityProtocol("perfect")).total_bits == 4
    # shared word of n bits plus one private coin
    assert trace_layout(BaseBiasProtocol(inner_product(3))).total_bits == 4


@pytest.mark.parametrize(
    "model, expected",
    [
        pytest.param(QuantumStrategy(), TSIRELSON, id="quantum"),
        pytest.param(LocalMixture.classical(), 0.75, id="classical"),
        pytest.param(Noisy(0.6), 0.6, id="noisy"),
    ],
)
def test_single_box_exact(model, expected):
    result = exact_success(NonlocalBoxProtocol(model))
    assert result.provenance == "exact"
    assert result.mode == "full"
    assert result.atom_bits == 2
    assert sorted(result.per_input) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert result.worst_case == pytest.approx(expected, abs=1e-9)
    assert result.is_uniform


def test_exact_noisy_and_at_tsirelson():
    result = exact_success(DistributedAndProtocol(Noisy(TSIRELSON)))
    assert result.worst_case == pytest.approx(0.75, abs=1e-12)
    assert result.average == pytest.approx(0.75, abs=1e-12)


def test_quantum_zero_angles_is_not_uniform():
    result = exact_success(NonlocalBoxProtocol(QuantumStrategy((0, 0), (0, 0))))
    assert not result.is_uniform
    assert result.worst_case == pytest.approx(0.0, abs=1e-12)
    assert result.average == pytest.approx(0.75, abs=1e-12)


def test_compositional_matches_full(nlm90):
    full = exact_success(nlm90, "full")
    composed = exact_success(nlm90, "compositional")
    assert composed.mode == "compositional"
    assert composed.worst_case == pytest.approx(full.worst_case, abs=1e-12)
    assert composed.per_input[(7, 3)] == pytest.approx(full.per_input[(7, 3)], abs=1e-12)
    assert len(composed.per_input) == 64


@pytest.mark.parametrize("n", [1, 2])
def test_compositional_amplify_matches_full(n):
    protocol = AmplifyProtocol(inner_product(n), AmplificationSpec(1, "noisy:0.95"))
    full = exact_success(protocol, "full")
    composed = exact_success(protocol, "compositional")
    assert composed.worst_case == pytest.approx(full.worst_case, abs=1e-12)


def test_compositional_reaches_deep_trees():
    protocol = AmplifyProtocol(inner_product(4), AmplificationSpec(12, "noisy:0.95"))
    result = exact_success(protocol, "compositional")
    expected = analysis.amplified_success(analysis.base_bias_success(4), analysis.q_of_p(0.95), 12)
    assert result.worst_case == pytest.approx(expected, abs=1e-12)
    assert isinstance(result.per_input, ConstantMap)
    assert len(result.per_input) == 256
    with pytest.raises(KeyError):
        result.per_input[(16, 0)]


def test_constant_map_behaves_like_a_mapping():
    protocol = AmplifyProtocol(inner_product(2), AmplificationSpec(1, "noisy:0.95"))
    result = exact_success(protocol, "compositional")
    per_input = result.per_input
    assert per_input.value == result.worst_case == result.average
    assert len(list(per_input.values())) == len(per_input) == 16
    assert set(per_input.values()) == {result.worst_case}
    assert dict(per_input.items()) == {key: result.worst_case for key in per_input}
    assert result.is_uniform


def test_compositional_errors():
    with pytest.raises(CompositionError, match="no composition structure"):
        exact_success(BaseBiasProtocol(inner_product(2)), "compositional")
    with pytest.raises(CompositionError, match="input-dependent"):
        exact_success(VanDamProtocol(inner_product(1), "local:00,00"), "compositional")
    with pytest.raises(ValueError, match="mode"):
        exact_success(BaseBiasProtocol(inner_product(2)), "symbolic")


def test_randomness_space_guard():
    with config.set({"exact.max-atom-bits": 3}):
        with pytest.raises(RandomnessSpaceError):
            exact_success(NonlocalEqualityProtocol("perfect"))


def test_chunked_enumeration_agrees():
    protocol = AmplifyProtocol(inner_product(1), AmplificationSpec(1, "noisy:0.9"))
    whole = exact_success(protocol)
    with config.set({"exact.chunk-rows": 7}):
        chunked = exact_success(protocol)
    assert chunked.worst_case == pytest.approx(whole.worst_case, abs=1e-12)


def test_trial_ranges():
    assert trial_ranges(10, 4) == [(0, 4), (4, 8), (8, 10)]
    assert trial_ranges(3, 10) == [(0, 3)]


def test_confidence_interval():
    low, high = confidence_interval(800, 1000)
    assert low < 0.8 < high
    half = 1.959963984540054 * math.sqrt(0.8 * 0.2 / 1000) + 1 / 2000
    assert high - 0.8 == pytest.approx(half)
    low, high = confidence_interval(0, 100)
    assert low == 0.0 and high > 0.0
    assert confidence_interval(100, 100)[1] == 1.0


def test_sample_success(nlm90):
    result = sample_success(nlm90, 20_000, master_seed=3)
    assert result.trials == 20_000
    assert result.provenance == "sampled"
    assert result.bits_communicated == 0
    assert result.box_invocations == 2
    sigma = math.sqrt(0.82 * 0.18 / result.trials)
    assert abs(result.estimate - 0.82) < 5 * sigma
    assert result.ci95[0] <= result.estimate <= result.ci95[1]


def test_sample_success_fixed_inputs(nlm90):
    result = sample_success(nlm90, 5000, master_seed=3, inputs=(5, 6))
    assert result.inputs == (5, 6)
    assert abs(result.estimate - 0.82) < 5 * math.sqrt(0.82 * 0.18 / 5000)


def test_sampling_across_many_seeds():
    protocol = NonlocalBoxProtocol(Noisy(0.9))
    trials, seeds = 200, 100
    estimates = [sample_success(protocol, trials, master_seed=seed).estimate for seed in range(seeds)]
    sigma = math.sqrt(0.9 * 0.1 / trials)
    assert abs(sum(estimates) / seeds - 0.9) < 5 * sigma / math.sqrt(seeds)
    within = sum(abs(e - 0.9) <= 3 * sigma for e in estimates)
    assert within >= 0.95 * seeds


def test_sample_rejects_no_trials(nlm90):
    with pytest.raises(ValueError, match="at least 1"):
        sample_success(nlm90, 0, master_seed=0)


def test_sampling_is_reproducible(nlm90):
    assert sample_success(nlm90, 3000, master_seed=11) == sample_success(nlm90, 3000, master_seed=11)
    assert sample_success(nlm90, 3000, master_seed=11) != sample_success(nlm90, 3000, master_seed=12)


def test_sampling_does_not_depend_on_batching(nlm90):
    with config.set({"sample.batch-size": 257}):
        small = sample_success(nlm90, 3000, master_seed=5)
    with config.set({"sample.batch-size": 3000}):
        large = sample_success(nlm90, 3000, master_seed=5)
    assert small == large


def test_sampling_is_identical_across_worker_counts():
    protocol = TrivialProtocol(inner_product(2), AmplificationSpec(3, "noisy:0.95"))
    with config.set({"sample.batch-size": 500}):
        one = sample_success(protocol, 8000, master_seed=99, workers=1)
        eight = sample_success(protocol, 8000, master_seed=99, workers=8)
    assert one == eight
    assert one.bits_communicated == 1


def test_cross_check_passes(nlm90):
    report = cross_check(nlm90, 2000, seed=1)
    assert report
    assert len(report.rows) == 64
    assert report.sigmas == 5.0
    assert report.worst_deviation <= 5.0


def test_cross_check_negative_control():
    protocol = NonlocalMajorityProtocol(Noisy(0.8))
    report = cross_check(protocol, 2000, seed=1, oracle=NonlocalMajorityProtocol(Noisy(0.95)))
    assert not report
    assert report.worst_deviation > 5.0


def test_cross_check_deterministic_protocol():
    report = cross_check(NonlocalEqualityProtocol("perfect"), 200, seed=0)
    assert report.passed
    assert report.worst_deviation == 0.0


##################################
# End-to-end threshold behaviour
##################################


@pytest.fixture(scope="module")
def threshold_runs():
    f = inner_product(2)
    leaf = analysis.base_bias_success(2)
    runs = {}
    with config.set({"sample.batch-size": 500}):
        for p in (0.95, 0.85):
            protocol = TrivialProtocol(f, AmplificationSpec(8, Noisy(p)))
            result = sample_success(protocol, 100_000, master_seed=2008, workers=4)
            runs[p] = (result, analysis.amplified_success(leaf, analysis.q_of_p(p), 8))
    return runs


def test_amplification_above_threshold(threshold_runs):
    result, analytic = threshold_runs[0.95]
    sigma = math.sqrt(analytic * (1 - analytic) / result.trials)
    assert abs(result.estimate - analytic) <= 3 * sigma
    assert 0.8 < analytic < analysis.final_success(0.95)
    assert result.bits_communicated == 1


def test_no_boost_below_threshold(threshold_runs):
    result, analytic = threshold_runs[0.85]
    sigma = math.sqrt(analytic * (1 - analytic) / result.trials)
    assert result.estimate <= analytic + 3 * sigma
    assert result.estimate < analysis.base_bias_success(2)
    assert result.bits_communicated == 1
