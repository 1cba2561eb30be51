"""Auto-tuner decision tables, failure detector jitter bounds, and the
full-vs-lightweight heartbeat bookkeeping."""
from bodega.control import (
    FailureDetector,
    KeyStats,
    PeerRosterView,
    auto_tune_proposal,
    responder_choice,
)
from bodega.model import Ballot, full_range_roster


def stats_for(read_shares: dict[int, int], writes_site: int, writes: int) -> dict:
    per_site: dict[int, list[int]] = {}
    for site, reads in read_shares.items():
        per_site.setdefault(site, [0, 0])[0] += reads
    per_site.setdefault(writes_site, [0, 0])[1] += writes
    return per_site


def test_tuner_threshold_example():
    # 96% reads; shares WI=0.5, UT=0.3, MA=0.2 of the reads
    per_site = stats_for({0: 48, 1: 29, 2: 19}, 0, 4)
    assert sum(c[0] for c in per_site.values()) == 96
    picked = responder_choice(per_site)
    assert picked == {0, 1}


def test_tuner_exact_20_percent_excluded():
    per_site = stats_for({0: 50, 1: 30, 2: 20}, 0, 4)  # 96% reads, MA exactly 20%
    assert responder_choice(per_site) == {0, 1}


def test_tuner_read_ratio_gate():
    assert responder_choice(stats_for({0: 96, 1: 0}, 0, 4)) == {0}  # 96% > 95%
    assert responder_choice(stats_for({0: 94}, 0, 6)) is None  # 94% fails
    assert responder_choice(stats_for({0: 95}, 0, 5)) is None  # exactly 95% fails
    assert responder_choice(stats_for({0: 21, 1: 79}, 0, 0)) == {0, 1}  # 100% reads


def test_tuner_site_share_21_vs_19():
    assert responder_choice(stats_for({0: 21, 1: 79}, 0, 0)) == {0, 1}
    assert responder_choice(stats_for({0: 19, 1: 81}, 0, 0)) == {1}


def test_tuner_all_zero_window_no_proposal():
    stats = KeyStats()
    ros = full_range_roster(0, {2})
    assert auto_tune_proposal(stats, ros) is None


def test_tuner_coalesces_adjacent_keys():
    stats = KeyStats()
    for key in (b"a", b"b", b"c"):
        for _ in range(96):
            stats.record(key, 1, False)
        for _ in range(4):
            stats.record(key, 0, True)
    for _ in range(100):
        stats.record(b"d", 2, False)
    ros = full_range_roster(0, set())
    prop = auto_tune_proposal(stats, ros)
    assert prop is not None and prop.leader == 0
    assert len(prop.responder_map) == 2
    (r1, s1), (r2, s2) = prop.responder_map
    assert r1.lo == b"a" and r1.hi == b"d" and s1 == {1}
    assert r2.lo == b"d" and r2.hi == b"d\x00" and s2 == {2}


def test_tuner_no_proposal_when_unchanged():
    stats = KeyStats()
    for _ in range(100):
        stats.record(b"d", 2, False)
    current = auto_tune_proposal(stats, full_range_roster(0, set()))
    assert current is not None
    again = auto_tune_proposal(stats, current)
    assert again is None


def test_stats_rows_roundtrip():
    stats = KeyStats()
    stats.record(b"a", 1, False)
    stats.record(b"a", 1, True)
    stats.record(b"b", 0, False)
    rows = stats.rows()
    other = KeyStats()
    other.merge_rows(rows)
    assert other.rows() == rows


def test_failure_detector_jitter_band():
    fd = FailureDetector(0, 5, 1_200_000, 0.25, seed=42)
    for p in range(1, 5):
        t = fd.timeout_for(p)
        assert 900_000 <= t <= 1_500_000
    fd2 = FailureDetector(0, 5, 1_200_000, 0.25, seed=42)
    assert all(fd.timeout_for(p) == fd2.timeout_for(p) for p in range(1, 5))


def test_failure_detector_down_and_recovery():
    fd = FailureDetector(0, 3, 1_000_000, 0.0, seed=1)
    fd.refresh(1, 0)
    assert fd.expire(1) is True
    assert fd.expire(1) is False
    assert fd.healthy() == [0, 2]
    fd.refresh(1, 5_000_000)
    assert fd.healthy() == [0, 1, 2]


def test_peer_roster_view_full_vs_light():
    pv = PeerRosterView(3)
    b1, b2 = Ballot(1, 0), Ballot(2, 1)
    assert pv.needs_full(1, b1)
    pv.saw(1, b1)
    assert not pv.needs_full(1, b1)
    assert pv.needs_full(1, b2)
    pv.saw(1, b2)
    pv.saw(1, b1)  # stale advertisement never regresses
    assert not pv.needs_full(1, b2)
