import pytest
from hypothesis import given, strategies as st

from bodega.model import (
    Ballot,
    ClusterConfig,
    EMPTY_ROSTER,
    KeyRange,
    Roster,
    full_range_roster,
    next_ballot,
    responders_of,
    validate_roster,
)


def test_next_ballot_construction():
    assert next_ballot(Ballot(2, 1), 3) == Ballot(3, 3)
    assert next_ballot(Ballot(0, 0), 0) == Ballot(1, 0)


def test_ballot_lexicographic_order():
    assert Ballot(3, 0) > Ballot(2, 4)
    assert Ballot(3, 3) > Ballot(3, 0)
    assert Ballot(0, 0) < Ballot(1, 0)


@given(st.integers(0, 100), st.integers(0, 6), st.integers(0, 6))
def test_next_ballot_strictly_increasing(r, n, p):
    cur = Ballot(r, n)
    assert next_ballot(cur, p) > cur


@given(st.tuples(st.integers(0, 20), st.integers(0, 6)),
       st.tuples(st.integers(0, 20), st.integers(0, 6)))
def test_distinct_pairs_never_compare_equal(a, b):
    ba, bb = Ballot(*a), Ballot(*b)
    assert (ba == bb) == (a == b)


def test_responders_full_range_with_leader():
    ros = full_range_roster(0, {2, 3, 4})
    assert responders_of(ros, b"x") == {0, 2, 3, 4}


def test_responders_empty_roster():
    assert responders_of(EMPTY_ROSTER, b"x") == frozenset()


def test_responders_range_membership():
    ros = Roster(1, (
        (KeyRange(b"a", b"c"), frozenset({2})),
        (KeyRange(b"c", b"z"), frozenset({3})),
    ))
    assert responders_of(ros, b"b") == {1, 2}
    assert responders_of(ros, b"c") == {1, 3}
    # no range matches: leader only
    assert responders_of(ros, b"zz") == {1}


@given(st.binary(max_size=4))
def test_responders_always_contain_leader(key):
    ros = Roster(2, ((KeyRange(b"a", b"m"), frozenset({0, 1})),))
    assert 2 in responders_of(ros, key)


def test_validate_ok():
    ros = Roster(0, (
        (KeyRange(b"a", b"m"), frozenset({1, 2})),
        (KeyRange(b"m", None), frozenset({3})),
    ))
    assert validate_roster(ros, 5) is None


def test_validate_overlap():
    ros = Roster(0, (
        (KeyRange(b"a", b"m"), frozenset({1})),
        (KeyRange(b"k", b"z"), frozenset({2})),
    ))
    v = validate_roster(ros, 5)
    assert v is not None and "overlap" in v.reason


def test_validate_bad_id():
    ros = full_range_roster(0, {7})
    v = validate_roster(ros, 5)
    assert v is not None and "7" in v.reason


def test_validate_unsorted():
    ros = Roster(0, (
        (KeyRange(b"m", None), frozenset({1})),
        (KeyRange(b"a", b"c"), frozenset({2})),
    ))
    assert validate_roster(ros, 5) is not None


def test_cluster_config_rules():
    ClusterConfig(n=5)
    with pytest.raises(ValueError):
        ClusterConfig(n=4)
    with pytest.raises(ValueError):
        ClusterConfig(n=5, t_hb_send=2_000_000)  # violates hb_send < hb_fail
    with pytest.raises(ValueError):
        ClusterConfig(n=5, t_guard=2_000_000)  # guard must equal lease
    assert ClusterConfig(n=5).majority == 3
    assert ClusterConfig(n=7).majority == 4


def test_roster_wire_roundtrip():
    ros = Roster(1, (
        (KeyRange(b"a", b"c"), frozenset({2})),
        (KeyRange(b"c", None), frozenset({3, 4})),
    ))
    assert Roster.from_wire(ros.to_wire()) == ros
