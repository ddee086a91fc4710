import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from facet.accumulate import (
    AccumulationConfig,
    accumulate_bin,
    accumulate_causal,
    accumulate_fast_causal,
    accumulate_volume,
    compare_ept,
    kernel,
    measure_ept,
    normalize_minmax,
    read_fcv1,
    write_fcv1,
)
from facet.events import BinningConfig, EventBin, EventStream, FormatError


def make_bin(t, x, y, p, t_start, t_end, size=8):
    return EventBin(size, size, np.asarray(t), np.asarray(x), np.asarray(y),
                    np.asarray(p, np.uint8), t_start, t_end)


def fig3_bin():
    # three positive events at 2.2, 2.7, 2.9 ms in a 1 ms window ending at 3.0 ms
    return make_bin([2200, 2700, 2900], [3, 3, 3], [4, 4, 4], [1, 1, 1], 2000, 3000)


class TestKernel:
    def test_most_recent_event(self):
        assert kernel(0.0) == 1.0

    def test_direct_evaluation(self):
        assert kernel(0.3) == pytest.approx(0.7)

    def test_future_events_killed(self):
        assert kernel(-0.1) == 0.0

    def test_outside_support(self):
        assert kernel(1.5) == 0.0


class TestCausal:
    def test_event_at_bin_end_contributes_one(self):
        b = make_bin([3000], [3], [4], [1], 2000, 3000)
        rep = accumulate_causal(b)
        assert rep.v_pos[4, 3] == 1.0
        assert rep.v_neg.sum() == 0.0
        assert rep.t_ref == 3000

    def test_hand_evaluated_sum(self):
        rep = accumulate_causal(fig3_bin())
        assert rep.v_pos[4, 3] == pytest.approx(0.2 + 0.7 + 0.9, abs=1e-12)

    def test_empty_bin_all_zero(self):
        b = make_bin([], [], [], [], 0, 1000)
        rep = accumulate_causal(b)
        assert rep.v_pos.sum() == 0.0 and rep.v_neg.sum() == 0.0


class TestVolume:
    def test_future_event_contributes(self):
        # event 0.3*dt after t_ref still contributes 0.7
        b = make_bin([1300], [2], [2], [1], 0, 2000)
        rep = accumulate_volume(b, t_ref=700)
        assert rep.v_pos[2, 2] == pytest.approx(0.7, abs=1e-12)

    def test_at_bin_end_equals_causal(self):
        b = fig3_bin()
        rv = accumulate_volume(b)
        rc = accumulate_causal(b)
        np.testing.assert_allclose(rv.v_pos, rc.v_pos, atol=1e-12)

    def test_hand_evaluated_interior_reference(self):
        rep = accumulate_volume(fig3_bin(), t_ref=2000)
        assert rep.v_pos[4, 3] == pytest.approx(0.8 + 0.3 + 0.1, abs=1e-12)

    def test_t_ref_outside_window_rejected(self):
        with pytest.raises(ValueError, match="outside bin window"):
            accumulate_volume(fig3_bin(), t_ref=1000)


class TestFastCausal:
    def test_skip_drops_whole_event(self):
        rep = accumulate_fast_causal(fig3_bin(), limit=1.0, mode="skip")
        assert rep.v_pos[4, 3] == pytest.approx(0.2 + 0.7, abs=1e-12)

    def test_inactive_limit_matches_causal(self):
        rep = accumulate_fast_causal(fig3_bin(), limit=10.0)
        assert rep.v_pos[4, 3] == pytest.approx(1.8, abs=1e-12)

    def test_clip_trims_final_contribution(self):
        rep = accumulate_fast_causal(fig3_bin(), limit=0.5, mode="clip")
        assert rep.v_pos[4, 3] == 0.5

    def test_default_limit_is_paper_value(self):
        import inspect

        sig = inspect.signature(accumulate_fast_causal)
        assert sig.parameters["limit"].default == 25.0
        assert AccumulationConfig().limit == 25.0

    def test_nonpositive_limit_rejected(self):
        with pytest.raises(ValueError):
            accumulate_fast_causal(fig3_bin(), limit=0.0)
        with pytest.raises(ValueError):
            AccumulationConfig(method="fast_causal", limit=-1.0)


def random_bin(rng, n_min=1, n_max=400, size=16):
    n = int(rng.integers(n_min, n_max))
    t = np.sort(rng.integers(0, 10000, n))
    return make_bin(t, rng.integers(0, size, n), rng.integers(0, size, n),
                    rng.integers(0, 2, n), 0, 10000, size=size)


class TestProperties:
    def test_equivalence_bit_for_bit(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            b = random_bin(rng)
            rc = accumulate_causal(b)
            rf = accumulate_fast_causal(b, limit=float(len(b)))
            assert np.array_equal(rc.v_pos, rf.v_pos)
            assert np.array_equal(rc.v_neg, rf.v_neg)

    def test_limit_monotone_in_clip_mode(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            b = random_bin(rng)
            rc = accumulate_causal(b)
            r1 = accumulate_fast_causal(b, limit=1.5, mode="clip")
            r2 = accumulate_fast_causal(b, limit=4.0, mode="clip")
            for ch in ("v_pos", "v_neg"):
                a1, a2, ac = getattr(r1, ch), getattr(r2, ch), getattr(rc, ch)
                assert np.all(a1 <= a2 + 1e-15) and np.all(a2 <= ac + 1e-15)
                assert np.all(a1 <= 1.5) and np.all(a2 <= 4.0)

    def test_values_never_exceed_limit_in_skip_mode(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            b = random_bin(rng)
            r = accumulate_fast_causal(b, limit=2.5, mode="skip")
            assert r.v_pos.max(initial=0.0) <= 2.5
            assert r.v_neg.max(initial=0.0) <= 2.5

    def test_causality_under_truncation(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            b = random_bin(rng, n_min=10)
            t_prime = int(rng.integers(1, 10000))
            truncated = b.truncated(t_prime)
            for fn in (
                lambda bb: accumulate_causal(bb, t_ref=t_prime),
                lambda bb: accumulate_fast_causal(bb, 2.0, t_ref=t_prime),
            ):
                full = fn(b)
                cut = fn(truncated)
                assert np.array_equal(full.v_pos, cut.v_pos)
                assert np.array_equal(full.v_neg, cut.v_neg)

    def test_volume_violates_causality(self):
        b = fig3_bin()
        full = accumulate_volume(b, t_ref=2000)
        cut = accumulate_volume(b.truncated(2000), t_ref=2000)
        assert full.v_pos[4, 3] == pytest.approx(1.2, abs=1e-12)
        assert cut.v_pos[4, 3] == 0.0

    def test_polarity_separation(self):
        rng = np.random.default_rng(4)
        b = random_bin(rng, n_min=50)
        base = accumulate_causal(b)
        # scatter the negative events elsewhere; positive channel unchanged
        neg = b.p == 0
        x2 = b.x.copy()
        x2[neg] = (x2[neg] + 7) % b.width
        moved = make_bin(b.t, x2, b.y, b.p, b.t_start, b.t_end, size=b.width)
        assert np.array_equal(accumulate_causal(moved).v_pos, base.v_pos)

    def test_linearity_over_disjoint_unions(self):
        rng = np.random.default_rng(5)
        b = random_bin(rng, n_min=40, n_max=200)
        even = make_bin(b.t[::2], b.x[::2], b.y[::2], b.p[::2],
                        b.t_start, b.t_end, size=b.width)
        odd = make_bin(b.t[1::2], b.x[1::2], b.y[1::2], b.p[1::2],
                       b.t_start, b.t_end, size=b.width)
        whole = accumulate_causal(b)
        parts = accumulate_causal(even).v_pos + accumulate_causal(odd).v_pos
        np.testing.assert_allclose(whole.v_pos, parts, atol=1e-12)

    def test_causal_bounded_by_event_count(self):
        rng = np.random.default_rng(6)
        b = random_bin(rng)
        rep = accumulate_causal(b)
        assert rep.v_pos.max(initial=0.0) <= len(b)
        assert np.all(rep.v_pos >= 0.0) and np.all(rep.v_neg >= 0.0)


class TestNormalize:
    def test_example_values(self):
        rep = accumulate_causal(make_bin([], [], [], [], 0, 10, size=4))
        rep.v_pos[0, :3] = [0.0, 5.0, 25.0]
        out = normalize_minmax(rep)
        assert list(out.v_pos[0, :3]) == [0.0, 0.2, 1.0]

    def test_constant_channel_becomes_zero(self):
        rep = accumulate_causal(make_bin([], [], [], [], 0, 10, size=4))
        rep.v_neg[:] = 3.3
        out = normalize_minmax(rep)
        assert np.all(out.v_neg == 0.0)

    def test_fast_causal_output_lands_in_unit_interval(self):
        rng = np.random.default_rng(7)
        b = random_bin(rng, n_min=100)
        out = normalize_minmax(accumulate_fast_causal(b, limit=25.0))
        for ch in (out.v_pos, out.v_neg):
            assert ch.min() >= 0.0 and ch.max() <= 1.0


class TestEpt:
    def test_tiny_stream_single_repetition(self):
        t = np.sort(np.random.default_rng(0).integers(0, 5000, 60))
        s = EventStream(8, 8, t, np.zeros(60), np.zeros(60), np.zeros(60, np.uint8))
        report = measure_ept(s, BinningConfig("count", 20), AccumulationConfig(), 1)
        assert report.samples >= 1
        assert report.mean_ms > 0

    def test_empty_stream_rejected(self):
        with pytest.raises(ValueError):
            measure_ept(EventStream(8, 8), BinningConfig("count", 10),
                        AccumulationConfig(), 1)

    def test_compare_ept_reports_all_methods(self):
        t = np.sort(np.random.default_rng(0).integers(0, 5000, 200))
        s = EventStream(8, 8, t, np.zeros(200), np.zeros(200), np.zeros(200, np.uint8))
        configs = {m: AccumulationConfig(method=m)
                   for m in ("volume", "causal", "fast_causal")}
        reports = compare_ept(s, BinningConfig("count", 50), configs, 1)
        assert set(reports) == set(configs)
        assert all(r.samples == 4 for r in reports.values())


class TestFcv1:
    def test_round_trip(self):
        rep = accumulate_causal(fig3_bin())
        back = read_fcv1(write_fcv1(rep))
        assert back.width == rep.width and back.height == rep.height
        np.testing.assert_allclose(back.v_pos, rep.v_pos, atol=1e-6)
        np.testing.assert_allclose(back.v_neg, rep.v_neg, atol=1e-6)

    def test_header_layout(self):
        rep = accumulate_causal(fig3_bin())
        data = write_fcv1(rep)
        assert data[:4] == b"FCV1"
        assert data[4:6] == (8).to_bytes(2, "little")
        assert len(data) == 10 + 2 * 8 * 8 * 4

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="magic"):
            read_fcv1(b"NOPE" + bytes(20))

    def test_truncated_payload(self):
        rep = accumulate_causal(fig3_bin())
        with pytest.raises(FormatError, match="expected"):
            read_fcv1(write_fcv1(rep)[:-4])


@given(st.integers(0, 2**31), st.integers(2, 120))
@settings(max_examples=30, deadline=None)
def test_truncation_property(seed, n):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.integers(0, 1000, n))
    b = make_bin(t, rng.integers(0, 8, n), rng.integers(0, 8, n),
                 rng.integers(0, 2, n), 0, 1000)
    t_prime = int(rng.integers(0, 1001))
    full = accumulate_causal(b, t_ref=t_prime)
    cut = accumulate_causal(b.truncated(t_prime), t_ref=t_prime)
    assert np.array_equal(full.v_pos, cut.v_pos)
    assert np.array_equal(full.v_neg, cut.v_neg)


def test_accumulate_bin_dispatch_and_normalize():
    b = fig3_bin()
    rep = accumulate_bin(b, AccumulationConfig(method="causal", normalize=True))
    assert rep.v_pos.max() == 1.0
    rep2 = accumulate_bin(b, AccumulationConfig(method="volume"))
    np.testing.assert_allclose(rep2.v_pos, accumulate_volume(b).v_pos)
