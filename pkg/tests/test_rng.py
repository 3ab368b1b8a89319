import numpy as np

from igo_surrogate import StreamKey


def test_streams_are_reproducible_and_distinct():
    a = StreamKey(7, "check").generator().standard_normal(4)
    assert np.array_equal(a, StreamKey(7, "check").generator().standard_normal(4))
    assert not np.array_equal(a, StreamKey(8, "check").generator().standard_normal(4))
    assert not np.array_equal(a, StreamKey(7, "other").generator().standard_normal(4))


def test_child_names():
    k = StreamKey(1, "verify").child("quadratic-term", 3)
    assert k.name == "verify/quadratic-term/3"
    assert StreamKey(1).child("x").name == "x"


def test_replicates_independent_of_batch_size():
    key = StreamKey(3, "drift")
    big = key.normals(10, (4, 2))
    small = key.normals(3, (4, 2))
    assert np.array_equal(big[:3], small)
    assert np.array_equal(big[5], key.generator(5).standard_normal((4, 2)))
    assert not np.array_equal(big[0], big[1])


def test_large_seeds():
    assert StreamKey(2**64 - 1, "a").key != StreamKey(0, "a").key
