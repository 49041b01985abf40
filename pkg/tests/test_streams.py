import numpy as np
import pytest
from scipy import stats

from reflift.streams import ChainStreams


def test_same_seed_same_draws():
    a = ChainStreams(11, 50).normal("noise", None, 3)
    b = ChainStreams(11, 50).normal("noise", None, 3)
    np.testing.assert_array_equal(a, b)


def test_block_split_matches_whole():
    whole = ChainStreams(5, 40)
    left, right = ChainStreams(5, 15), ChainStreams(5, 25, first_chain=15)
    for _ in range(3):
        full = whole.uniform("refresh_clock", None, 2)
        np.testing.assert_array_equal(full[:15], left.uniform("refresh_clock", None, 2))
        np.testing.assert_array_equal(full[15:], right.uniform("refresh_clock", None, 2))


def test_subset_draws_advance_only_selected_chains():
    a, b = ChainStreams(3, 4), ChainStreams(3, 4)
    a.normal("noise", [1, 3])
    a_rest = a.normal("noise")
    b_first = b.normal("noise")
    b_second = b.normal("noise")
    np.testing.assert_array_equal(a_rest[[0, 2]], b_first[[0, 2]])
    np.testing.assert_array_equal(a_rest[[1, 3]], b_second[[1, 3]])


def test_tags_and_streams_are_distinct():
    s = ChainStreams(1, 1000)
    u1 = s.uniform("noise")[:, 0]
    u2 = s.uniform("refresh_clock")[:, 0]
    u3 = ChainStreams(1, 1000, stream=1).uniform("noise")[:, 0]
    assert abs(np.corrcoef(u1, u2)[0, 1]) < 0.1
    assert abs(np.corrcoef(u1, u3)[0, 1]) < 0.1
    assert not np.array_equal(u1, u3)
    with pytest.raises(ValueError):
        s.uniform("bogus")


def test_marginal_laws():
    s = ChainStreams(2024, 20000)
    u = s.uniform("noise", None, 5).ravel()
    assert u.min() > 0.0 and u.max() < 1.0
    assert stats.kstest(u, "uniform").pvalue > 1e-3
    z = s.normal("init", None, 5).ravel()
    assert stats.kstest(z, "norm").pvalue > 1e-3
    e = s.exponential("refresh_clock", 2.0)
    assert stats.kstest(e, "expon", args=(0, 0.5)).pvalue > 1e-3
