import pytest

from memlearn.trace import (
    MemoryAccess,
    StorageRequest,
    TraceFormatError,
    TraceSpec,
    generate_memory_trace,
    generate_storage_trace,
    read_trace,
    write_trace,
)


def lines_of(trace):
    return [a.vaddr // 64 for a in trace]


def test_stride_basic():
    spec = TraceSpec("stride", 3, 1, {"stride": 4, "base": 0})
    assert lines_of(generate_memory_trace(spec)) == [0, 4, 8]


def test_stride_unit_deltas():
    spec = TraceSpec("stride", 1000, 9, {"stride": 1})
    ls = lines_of(generate_memory_trace(spec))
    assert all(b - a == 1 for a, b in zip(ls, ls[1:]))


def test_stride_delta_property_various():
    for stride in (-3, 2, 7, 63):
        spec = TraceSpec("stride", 200, 5, {"stride": stride, "base": 1 << 20})
        ls = lines_of(generate_memory_trace(spec))
        assert all(b - a == stride for a, b in zip(ls, ls[1:]))


def test_stride_rejects_zero():
    with pytest.raises(ValueError):
        generate_memory_trace(TraceSpec("stride", 5, 1, {"stride": 0}))


def test_noise_fraction_range_checked():
    with pytest.raises(ValueError):
        generate_memory_trace(
            TraceSpec("stride", 5, 1, {"stride": 1, "noise_fraction": 1.5})
        )


def test_random_golden_sequence():
    # frozen from the first run of this generator; guards cross-version drift
    spec = TraceSpec("random", 10, 7, {"footprint": 1024})
    assert lines_of(generate_memory_trace(spec)) == [
        540, 459, 529, 766, 873, 812, 48, 504, 711, 760,
    ]


def test_seed_determinism():
    spec = TraceSpec("mixed_pc_stride", 500, 42,
                     {"pc_count": 3, "noise_fraction": 0.2})
    a = generate_memory_trace(spec)
    b = generate_memory_trace(spec)
    assert a == b


def test_cycles_non_decreasing():
    spec = TraceSpec("random", 100, 3, {"footprint": 64})
    t = generate_memory_trace(spec)
    assert all(x.cycle <= y.cycle for x, y in zip(t, t[1:]))


def test_hot_cold_all_hot():
    spec = TraceSpec("hot_cold", 100, 1,
                     {"hot_fraction": 1.0, "hot_set": 10, "footprint": 1000})
    t = generate_storage_trace(spec)
    assert all(r.page_id < 10 for r in t)


def test_hot_cold_fraction_bounds():
    spec = TraceSpec("hot_cold", 10000, 3,
                     {"hot_fraction": 0.9, "hot_set": 100, "footprint": 10000})
    t = generate_storage_trace(spec)
    hot = sum(1 for r in t if r.page_id < 100)
    assert 8800 <= hot <= 9200


def test_hot_cold_rejects_oversized_hot_set():
    with pytest.raises(ValueError):
        generate_storage_trace(
            TraceSpec("hot_cold", 10, 1, {"hot_set": 20, "footprint": 10})
        )


def test_sequential_burst_sizes():
    spec = TraceSpec("sequential_burst", 50, 2, {"size_pages": 8})
    t = generate_storage_trace(spec)
    assert all(r.size_pages == 8 for r in t)


def test_storage_timestamps_non_decreasing():
    spec = TraceSpec("hot_cold", 200, 11, {"hot_set": 4, "footprint": 100})
    t = generate_storage_trace(spec)
    assert all(x.timestamp <= y.timestamp for x, y in zip(t, t[1:]))


def test_memory_roundtrip(tmp_path):
    spec = TraceSpec("mixed_pc_stride", 300, 17, {"pc_count": 2})
    t = generate_memory_trace(spec)
    p = tmp_path / "t.trace"
    write_trace(t, p)
    assert read_trace(p) == t


def test_storage_roundtrip(tmp_path):
    spec = TraceSpec("hot_cold", 300, 17, {"hot_set": 16, "footprint": 999})
    t = generate_storage_trace(spec)
    p = tmp_path / "t.trace"
    write_trace(t, p)
    assert read_trace(p) == t


def test_write_is_byte_stable(tmp_path):
    t = generate_memory_trace(TraceSpec("stride", 20, 1, {"stride": 2}))
    p1, p2 = tmp_path / "a", tmp_path / "b"
    write_trace(t, p1)
    write_trace(read_trace(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_empty_file_reads_empty(tmp_path):
    p = tmp_path / "empty.trace"
    p.write_text("")
    assert read_trace(p) == []


def test_short_line_names_line_number(tmp_path):
    p = tmp_path / "bad.trace"
    p.write_text("memaccess,v1\n0x1,0x40,0,load\n0x1,0x80,1\n")
    with pytest.raises(TraceFormatError, match="line 3"):
        read_trace(p)


def test_timestamp_regression_rejected(tmp_path):
    p = tmp_path / "bad.trace"
    p.write_text("storagereq,v1\n0x1,1,read,100\n0x2,1,read,50\n")
    with pytest.raises(TraceFormatError, match="line 3"):
        read_trace(p)


def test_unknown_header_rejected(tmp_path):
    p = tmp_path / "bad.trace"
    p.write_text("whatever,v9\n")
    with pytest.raises(TraceFormatError, match="line 1"):
        read_trace(p)
