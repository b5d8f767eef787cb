import numpy as np
import pytest

from fladopt.params import ParamLayout, ParamVector
from fladopt.seeding import child_rng, child_seed_sequence


def test_layout_size_sums_spans():
    layout = ParamLayout((("w0", (2, 3)), ("b0", (3,)), ("w1", (3, 2)), ("b1", (2,))))
    assert layout.size == 6 + 3 + 6 + 2


def test_layout_rejects_duplicate_names():
    with pytest.raises(ValueError, match="duplicate"):
        ParamLayout((("w0", (2,)), ("w0", (3,))))


def test_vector_length_must_match_layout():
    layout = ParamLayout((("w0", (2, 2)),))
    with pytest.raises(ValueError, match="does not match"):
        ParamVector(np.zeros(5), layout)


def test_view_is_writable_and_reshaped():
    layout = ParamLayout((("w0", (2, 3)), ("b0", (3,))))
    vec = ParamVector(np.arange(9, dtype=float), layout)
    assert vec.view("w0").shape == (2, 3)
    assert np.array_equal(vec.view("b0"), [6.0, 7.0, 8.0])
    vec.view("b0")[:] = 0.0
    assert np.array_equal(vec.values[6:], np.zeros(3))


def test_check_finite_names_the_bad_index():
    layout = ParamLayout((("w0", (3,)),))
    vec = ParamVector(np.array([1.0, np.nan, 2.0]), layout)
    with pytest.raises(FloatingPointError, match="index 1"):
        vec.check_finite()


def test_child_rng_reproducible_and_streams_independent():
    a1 = child_rng(42, "init", 0).normal(size=4)
    a2 = child_rng(42, "init", 0).normal(size=4)
    b = child_rng(42, "init", 1).normal(size=4)
    c = child_rng(42, "shuffle", 0).normal(size=4)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)


def test_child_seed_sequence_distinguishes_string_labels():
    s1 = child_seed_sequence(7, "alpha").generate_state(2)
    s2 = child_seed_sequence(7, "beta").generate_state(2)
    assert not np.array_equal(s1, s2)
