import numpy as np
import pytest

from nonlocal_boxes.random_utils import (
    AtomLayout,
    CounterRandomness,
    EnumeratedRandomness,
    Stream,
    TracingRandomness,
    derive_seed,
    row_chunks,
    splitmix64,
)


def test_splitmix64_is_a_permutation_sample():
    x = np.arange(10_000, dtype=np.uint64)
    assert np.unique(splitmix64(x)).size == x.size


def test_derive_seed_depends_on_every_label():
    seeds = {derive_seed(7), derive_seed(7, 0), derive_seed(7, 1), derive_seed(7, 0, 1), derive_seed(8, 0)}
    assert len(seeds) == 5
    assert derive_seed(7, 3, 4) == derive_seed(7, 3, 4)


def test_counter_randomness_is_a_function_of_trial_index():
    whole = CounterRandomness(42, np.arange(1000))
    tail = CounterRandomness(42, np.arange(600, 1000))
    words = whole.bits(Stream.SHARED, np.arange(5), 16)
    assert words.shape == (1000, 5)
    np.testing.assert_array_equal(words[600:], tail.bits(Stream.SHARED, np.arange(5), 16))


def test_counter_randomness_streams_and_seeds_differ():
    a = CounterRandomness(1, np.arange(256))
    b = CounterRandomness(2, np.arange(256))
    shared = a.bits(Stream.SHARED, 0, 32)
    assert not np.array_equal(shared, a.bits(Stream.PRIVATE_ALICE, 0, 32))
    assert not np.array_equal(shared, b.bits(Stream.SHARED, 0, 32))


def test_counter_bits_are_roughly_uniform():
    source = CounterRandomness(3, np.arange(40_000))
    coins = source.bits(Stream.PRIVATE_BOB, 0, 1)
    assert coins.max() <= 1
    # 5 sigma for a fair coin
    assert abs(coins.mean() - 0.5) < 5 * np.sqrt(0.25 / coins.size)


def test_counter_bernoulli_extremes():
    source = CounterRandomness(3, np.arange(1000))
    assert source.bernoulli(Stream.BOX_FIRST, 0, 0.0).sum() == 0
    assert source.bernoulli(Stream.BOX_FIRST, 0, 1.0).sum() == 1000


@pytest.mark.parametrize("width", [-1, 64])
def test_bad_width(width):
    source = CounterRandomness(0, np.arange(4))
    with pytest.raises(ValueError, match="word width"):
        source.bits(Stream.SHARED, 0, width)


def test_trials_must_be_one_dimensional():
    with pytest.raises(ValueError, match="one-dimensional"):
        CounterRandomness(0, np.zeros((2, 2)))


@pytest.fixture
def traced_layout():
    trace = TracingRandomness()
    trace.bits(Stream.SHARED, np.arange(2), 3)
    trace.bits(Stream.SHARED, np.arange(2), 3)  # second party re-reads the same words
    trace.bits(Stream.PRIVATE_BOB, 0, 1)
    trace.bernoulli(Stream.BOX_FIRST, np.arange(2), 0.5)
    return AtomLayout.from_trace(trace)


def test_layout_counts_each_atom_once(traced_layout):
    assert traced_layout.total_bits == 2 * 3 + 1 + 2
    assert traced_layout.uniform_bits == 7
    assert traced_layout.row_count == 2**9


def test_enumeration_visits_every_word(traced_layout):
    source = EnumeratedRandomness(traced_layout, np.arange(traced_layout.row_count))
    words = source.bits(Stream.SHARED, np.arange(2), 3)
    pairs = {tuple(row) for row in words.tolist()}
    assert len(pairs) == 64
    np.testing.assert_allclose(source.weight, 2.0**-7)


def test_enumerated_bernoulli_weights_sum_to_one(traced_layout):
    source = EnumeratedRandomness(traced_layout, np.arange(traced_layout.row_count))
    draws = source.bernoulli(Stream.BOX_FIRST, np.arange(2), [0.9, 0.25])
    assert draws.shape == (traced_layout.row_count, 2)
    assert source.weight.sum() == pytest.approx(1.0, abs=1e-12)
    p_first = np.sum(source.weight, where=draws[:, 0] == 1)
    assert p_first == pytest.approx(0.9, abs=1e-12)


def test_enumerated_width_mismatch(traced_layout):
    source = EnumeratedRandomness(traced_layout, np.arange(4))
    with pytest.raises(ValueError, match="traced with width 3"):
        source.bits(Stream.SHARED, 0, 4)


def test_untraced_key(traced_layout):
    source = EnumeratedRandomness(traced_layout, np.arange(4))
    with pytest.raises(KeyError):
        source.bits(Stream.PRIVATE_ALICE, 0, 1)
    with pytest.raises(KeyError):
        source.bits(Stream.SHARED, 5, 3)


def test_repeated_weighted_draw_is_rejected():
    trace = TracingRandomness()
    trace.bernoulli(Stream.BOX_SECOND, 0, 0.5)
    trace.bernoulli(Stream.BOX_SECOND, 0, 0.5)
    with pytest.raises(ValueError, match="more than once"):
        AtomLayout.from_trace(trace)


def test_row_chunks(traced_layout):
    chunks = list(row_chunks(traced_layout, 100))
    assert [c.size for c in chunks] == [100] * 5 + [12]
    assert np.concatenate(chunks).tolist() == list(range(512))
    with pytest.raises(ValueError, match="exceeds"):
        list(row_chunks(traced_layout, 100, max_bits=8))
