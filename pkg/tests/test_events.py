import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from facet.events import (
    BinningConfig,
    EventBin,
    EventStream,
    FormatError,
    bin_fixed_count,
    bin_fixed_time,
    make_bins,
    read_events,
    write_events,
)


def small_stream():
    return EventStream(
        346, 260,
        t=np.array([100, 2000, 2000]),
        x=np.array([5, 345, 0]),
        y=np.array([6, 259, 0]),
        p=np.array([1, 0, 1], np.uint8),
    )


class TestBinaryFormat:
    def test_smallest_valid_file(self):
        data = write_events(small_stream(), "binary")
        s = read_events(data, "binary")
        assert s.width == 346 and s.height == 260
        assert len(s) == 3
        assert s.event(0) == (100, 5, 6, 1)

    def test_empty_stream_is_header_only(self):
        data = write_events(EventStream(64, 64), "binary")
        assert len(data) == 16  # magic + w + h + count
        assert len(read_events(data, "binary")) == 0

    def test_round_trip_bit_exact(self):
        s = small_stream()
        assert read_events(write_events(s, "binary"), "binary") == s

    def test_bad_magic_names_offset(self):
        data = b"XXXX" + write_events(small_stream(), "binary")[4:]
        with pytest.raises(FormatError, match="byte 0"):
            read_events(data, "binary")

    def test_truncated_payload(self):
        data = write_events(small_stream(), "binary")[:-1]
        with pytest.raises(FormatError, match="byte 16"):
            read_events(data, "binary")

    def test_coordinate_out_of_bounds_names_record(self):
        s = small_stream()
        data = bytearray(write_events(s, "binary"))
        # header declares 346x260; patch record 1's x to 346
        rec_off = 16 + 13 + 8
        data[rec_off:rec_off + 2] = (346).to_bytes(2, "little")
        with pytest.raises(FormatError, match="record 1"):
            read_events(bytes(data), "binary")

    def test_bad_polarity_names_record(self):
        data = bytearray(write_events(small_stream(), "binary"))
        data[16 + 12] = 2  # record 0 polarity byte
        with pytest.raises(FormatError, match="polarity 2.*record 0"):
            read_events(bytes(data), "binary")


class TestCsvFormat:
    def test_single_record(self):
        s = read_events("t,x,y,p\n100,5,6,1", "csv")
        assert len(s) == 1
        assert s.event(0) == (100, 5, 6, 1)

    def test_round_trip(self):
        s = small_stream()
        assert read_events(write_events(s, "csv"), "csv", width=346, height=260) == s

    def test_bad_header(self):
        with pytest.raises(FormatError, match="line 1"):
            read_events("time,x,y,p\n1,2,3,0", "csv")

    def test_bad_field_count_names_line(self):
        with pytest.raises(FormatError, match="line 3"):
            read_events("t,x,y,p\n1,2,3,0\n4,5,6", "csv")

    def test_polarity_two_rejected(self):
        with pytest.raises(FormatError, match="polarity 2"):
            read_events("t,x,y,p\n1,2,3,2", "csv")

    def test_unsorted_input_sorted_stably(self):
        s = read_events("t,x,y,p\n50,1,0,0\n10,2,0,1\n50,3,0,0", "csv", width=8, height=8)
        assert list(s.t) == [10, 50, 50]
        assert list(s.x) == [2, 1, 3]  # equal timestamps keep input order


class TestFixedCountBinning:
    def test_twelve_events_count_five(self):
        t = np.arange(12) * 10
        s = EventStream(8, 8, t, np.zeros(12), np.zeros(12), np.zeros(12, np.uint8))
        bins = bin_fixed_count(s, 5)
        assert [len(b) for b in bins] == [5, 5]  # remainder of 2 dropped
        assert bins[0].t_start == 0 and bins[0].t_end == 40
        assert bins[1].t_start == 40 and bins[1].t_end == 90  # chains from prev end

    def test_insufficient_events(self):
        s = EventStream(8, 8, np.arange(4), np.zeros(4), np.zeros(4), np.zeros(4, np.uint8))
        assert bin_fixed_count(s, 5) == []

    def test_count_zero_rejected(self):
        with pytest.raises(ValueError):
            bin_fixed_count(small_stream(), 0)

    def test_default_count_is_5000(self):
        import inspect

        assert inspect.signature(bin_fixed_count).parameters["count"].default == 5000


class TestFixedTimeBinning:
    def test_window_assignment(self):
        s = EventStream(8, 8, np.array([100, 9000, 15000]), np.zeros(3),
                        np.zeros(3), np.zeros(3, np.uint8))
        bins = bin_fixed_time(s, 10000)
        assert [len(b) for b in bins] == [2, 1]
        assert bins[0].t_start == 0 and bins[0].t_end == 10000

    def test_empty_stream(self):
        assert bin_fixed_time(EventStream(8, 8), 10000) == []

    def test_empty_windows_emitted(self):
        s = EventStream(8, 8, np.array([100, 45000]), np.zeros(2),
                        np.zeros(2), np.zeros(2, np.uint8))
        bins = bin_fixed_time(s, 10000)
        assert [len(b) for b in bins] == [1, 0, 0, 0, 1]

    def test_window_zero_rejected(self):
        with pytest.raises(ValueError):
            bin_fixed_time(small_stream(), 0)

    def test_one_second_synthetic_stream_has_100_windows(self):
        from facet.synth import Scenario, generate

        stream, _ = generate(Scenario(seed=0, duration_us=1_000_000))
        assert len(bin_fixed_time(stream, 10000)) == 100


def test_million_event_round_trip():
    from facet.synth import Scenario, generate

    stream, _ = generate(Scenario(seed=7, events_per_ms=1000.0, noise_rate=20.0))
    assert len(stream) >= 1_000_000
    assert read_events(write_events(stream, "binary"), "binary") == stream


events_strategy = st.lists(
    st.tuples(
        st.integers(0, 10**7), st.integers(0, 31), st.integers(0, 23),
        st.integers(0, 1),
    ),
    max_size=300,
)


def to_stream(rows):
    rows = sorted(rows)
    arr = np.array(rows, np.int64).reshape(-1, 4)
    return EventStream(32, 24, arr[:, 0], arr[:, 1], arr[:, 2],
                       arr[:, 3].astype(np.uint8))


@given(events_strategy)
@settings(max_examples=60, deadline=None)
def test_round_trip_identity_property(rows):
    s = to_stream(rows)
    assert read_events(write_events(s, "binary"), "binary") == s
    assert read_events(write_events(s, "csv"), "csv", width=32, height=24) == s


@given(events_strategy, st.integers(1, 40))
@settings(max_examples=60, deadline=None)
def test_fixed_count_bins_are_a_prefix(rows, count):
    s = to_stream(rows)
    bins = bin_fixed_count(s, count)
    assert all(len(b) == count for b in bins)
    if bins:
        cat = np.concatenate([b.t for b in bins])
        n = len(cat)
        assert np.array_equal(cat, s.t[:n])
        assert np.array_equal(np.concatenate([b.x for b in bins]), s.x[:n])


@given(events_strategy, st.integers(1, 10**6))
@settings(max_examples=60, deadline=None)
def test_fixed_time_partitions_events(rows, window):
    s = to_stream(rows)
    bins = bin_fixed_time(s, window)
    total = sum(len(b) for b in bins)
    assert total == len(s)
    for b in bins:
        assert b.duration == window
        if len(b):
            assert b.t[0] >= b.t_start and b.t[-1] < b.t_end


def test_make_bins_dispatch():
    s = small_stream()
    assert len(make_bins(s, BinningConfig("count", 3))) == 1
    assert make_bins(s, BinningConfig("time", 1000))[0].duration == 1000
    with pytest.raises(ValueError):
        BinningConfig("weird", 5)


def test_event_bin_rejects_out_of_window_events():
    with pytest.raises(ValueError, match="outside its window"):
        EventBin(8, 8, np.array([5]), np.array([0]), np.array([0]),
                 np.array([0], np.uint8), 10, 20)


def test_event_bin_rejects_out_of_grid_events():
    with pytest.raises(FormatError, match="event 0"):
        EventBin(8, 8, np.array([15]), np.array([9]), np.array([0]),
                 np.array([0], np.uint8), 10, 20)
