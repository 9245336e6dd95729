"""Trace event types, deterministic synthetic generators, and trace file IO.

Two event kinds are shared by the simulators: cache-level ``MemoryAccess``
(PC, byte address, cycle) and storage-level ``StorageRequest`` (page id,
size in pages, timestamp in microseconds). Generators are pure functions
of a ``TraceSpec``; the same spec always yields a byte-identical trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .prng import Rng64

CACHELINE_BYTES = 64
PAGE_BYTES = 4096
LINES_PER_PAGE = PAGE_BYTES // CACHELINE_BYTES  # 64 cachelines per 4 KiB page

MEMORY_GENERATORS = ("stride", "mixed_pc_stride", "random")
STORAGE_GENERATORS = ("hot_cold", "sequential_burst")

MEM_HEADER = "memaccess,v1"
STORAGE_HEADER = "storagereq,v1"


class TraceFormatError(ValueError):
    """Raised for malformed trace files; the message names the line."""


@dataclass(frozen=True)
class MemoryAccess:
    pc: int
    vaddr: int
    cycle: int
    kind: str  # "load" | "store"

    @property
    def line(self) -> int:
        return self.vaddr // CACHELINE_BYTES

    @property
    def page(self) -> int:
        return self.vaddr // PAGE_BYTES


@dataclass(frozen=True)
class StorageRequest:
    page_id: int
    size_pages: int
    kind: str  # "read" | "write"
    timestamp: int  # microseconds


@dataclass(frozen=True)
class TraceSpec:
    """Generator name, event count, seed, and generator-specific params."""

    generator: str
    length: int
    seed: int
    params: dict = field(default_factory=dict)

    def param(self, name, default=None):
        return self.params.get(name, default)


def _check_common(spec: TraceSpec, allowed: tuple) -> None:
    if spec.length <= 0:
        raise ValueError("trace length must be positive")
    if spec.generator not in allowed:
        raise ValueError(
            f"generator {spec.generator!r} is not one of {list(allowed)}"
        )


def generate_memory_trace(spec: TraceSpec) -> list[MemoryAccess]:
    """Generate a cache-level trace. Deterministic in the spec."""
    _check_common(spec, MEMORY_GENERATORS)
    noise = float(spec.param("noise_fraction", 0.0))
    if not 0.0 <= noise <= 1.0:
        raise ValueError("noise_fraction must lie in [0, 1]")
    rng = Rng64(spec.seed)
    footprint = int(spec.param("footprint", 1 << 20))  # cachelines, for noise/random

    if spec.generator == "stride":
        stride = int(spec.param("stride", 0))
        if stride == 0:
            raise ValueError("stride generator requires a nonzero stride")
        pc = int(spec.param("pc", 0x400000))
        base = int(spec.param("base", 0))
        streams = [(pc, base, stride)]
    elif spec.generator == "mixed_pc_stride":
        n = int(spec.param("pc_count", 4))
        if n < 1:
            raise ValueError("pc_count must be >= 1")
        strides = list(spec.param("strides", [])) or [
            (i % 7) + 1 for i in range(n)
        ]
        base_pc = int(spec.param("pc", 0x400000))
        region = int(spec.param("region_lines", 1 << 16))
        streams = [
            (base_pc + 0x40 * i, i * region * CACHELINE_BYTES, strides[i % len(strides)])
            for i in range(n)
        ]
        for _, _, s in streams:
            if s == 0:
                raise ValueError("mixed_pc_stride requires nonzero strides")
    else:  # random
        pc_count = int(spec.param("pc_count", 1))
        base_pc = int(spec.param("pc", 0x400000))
        streams = None

    out = []
    cyc = int(spec.param("cycle_stride", 1))
    if cyc < 0:
        raise ValueError("cycle_stride must be non-negative")
    if streams is not None:
        cursors = [b for _, b, _ in streams]
        for i in range(spec.length):
            k = i % len(streams)
            pc, _, stride = streams[k]
            if noise > 0.0 and rng.random() < noise:
                vaddr = rng.randrange(footprint) * CACHELINE_BYTES
            else:
                vaddr = cursors[k]
            cursors[k] += stride * CACHELINE_BYTES
            out.append(MemoryAccess(pc=pc, vaddr=vaddr, cycle=i * cyc, kind="load"))
    else:
        for i in range(spec.length):
            pc = base_pc + 0x40 * rng.randrange(pc_count)
            vaddr = rng.randrange(footprint) * CACHELINE_BYTES
            out.append(MemoryAccess(pc=pc, vaddr=vaddr, cycle=i * cyc, kind="load"))
    return out


def generate_storage_trace(spec: TraceSpec) -> list[StorageRequest]:
    """Generate a storage-level trace. Deterministic in the spec."""
    _check_common(spec, STORAGE_GENERATORS)
    rng = Rng64(spec.seed)
    gap = int(spec.param("gap_us", 500))
    read_fraction = float(spec.param("read_fraction", 0.7))
    if not 0.0 <= read_fraction <= 1.0:
        raise ValueError("read_fraction must lie in [0, 1]")

    out = []
    if spec.generator == "hot_cold":
        footprint = int(spec.param("footprint", 65536))
        hot_set = int(spec.param("hot_set", 1024))
        hot_fraction = float(spec.param("hot_fraction", 0.9))
        if not 0.0 <= hot_fraction <= 1.0:
            raise ValueError("hot_fraction must lie in [0, 1]")
        if hot_set > footprint:
            raise ValueError("hot_set must not exceed the footprint")
        size = int(spec.param("size_pages", 1))
        for i in range(spec.length):
            if hot_fraction >= 1.0 or rng.random() < hot_fraction:
                page = rng.randrange(hot_set)
            else:
                page = hot_set + rng.randrange(max(1, footprint - hot_set))
            kind = "read" if rng.random() < read_fraction else "write"
            out.append(
                StorageRequest(page_id=page, size_pages=size, kind=kind,
                               timestamp=i * gap)
            )
    else:  # sequential_burst
        size = int(spec.param("size_pages", 8))
        if size < 1:
            raise ValueError("size_pages must be >= 1")
        start = int(spec.param("start_page", 0))
        footprint = int(spec.param("footprint", 1 << 20))
        for i in range(spec.length):
            page = start + (i * size) % max(size, footprint)
            kind = "read" if rng.random() < read_fraction else "write"
            out.append(
                StorageRequest(page_id=page, size_pages=size, kind=kind,
                               timestamp=i * gap)
            )
    return out


def generate_trace(spec: TraceSpec):
    """Dispatch on the generator name to the right trace kind."""
    if spec.generator in MEMORY_GENERATORS:
        return generate_memory_trace(spec)
    return generate_storage_trace(spec)


def _format_event(ev) -> str:
    if isinstance(ev, MemoryAccess):
        return f"{ev.pc:#x},{ev.vaddr:#x},{ev.cycle},{ev.kind}"
    return f"{ev.page_id:#x},{ev.size_pages},{ev.kind},{ev.timestamp}"


def write_trace(events, path) -> None:
    """Write events to a text trace file (one-line header, one event/line)."""
    with open(path, "w") as f:
        if not events:
            return
        header = MEM_HEADER if isinstance(events[0], MemoryAccess) else STORAGE_HEADER
        f.write(header + "\n")
        for ev in events:
            f.write(_format_event(ev) + "\n")


def _parse_hex(token: str, lineno: int, what: str) -> int:
    if not token.startswith("0x"):
        raise TraceFormatError(f"line {lineno}: {what} must be 0x-prefixed hex")
    try:
        return int(token, 16)
    except ValueError:
        raise TraceFormatError(f"line {lineno}: bad hex value {token!r}") from None


def _parse_dec(token: str, lineno: int, what: str) -> int:
    try:
        v = int(token, 10)
    except ValueError:
        raise TraceFormatError(f"line {lineno}: bad {what} {token!r}") from None
    if v < 0:
        raise TraceFormatError(f"line {lineno}: {what} must be non-negative")
    return v


def read_trace(path):
    """Read a trace file written by write_trace; empty file -> empty list."""
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        return []
    header = lines[0].strip()
    if header == MEM_HEADER:
        return _read_memory_lines(lines)
    if header == STORAGE_HEADER:
        return _read_storage_lines(lines)
    raise TraceFormatError(f"line 1: unknown trace header {header!r}")


def _read_memory_lines(lines) -> list[MemoryAccess]:
    out = []
    last_cycle = -1
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 4:
            raise TraceFormatError(
                f"line {lineno}: expected 4 fields, got {len(parts)}"
            )
        pc = _parse_hex(parts[0].strip(), lineno, "pc")
        vaddr = _parse_hex(parts[1].strip(), lineno, "vaddr")
        cycle = _parse_dec(parts[2].strip(), lineno, "cycle")
        kind = parts[3].strip()
        if kind not in ("load", "store"):
            raise TraceFormatError(f"line {lineno}: kind must be load|store")
        if cycle < last_cycle:
            raise TraceFormatError(f"line {lineno}: cycle regressed")
        last_cycle = cycle
        out.append(MemoryAccess(pc=pc, vaddr=vaddr, cycle=cycle, kind=kind))
    return out


def _read_storage_lines(lines) -> list[StorageRequest]:
    out = []
    last_ts = -1
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 4:
            raise TraceFormatError(
                f"line {lineno}: expected 4 fields, got {len(parts)}"
            )
        page = _parse_hex(parts[0].strip(), lineno, "page_id")
        size = _parse_dec(parts[1].strip(), lineno, "size_pages")
        kind = parts[2].strip()
        ts = _parse_dec(parts[3].strip(), lineno, "timestamp")
        if size < 1:
            raise TraceFormatError(f"line {lineno}: size_pages must be >= 1")
        if kind not in ("read", "write"):
            raise TraceFormatError(f"line {lineno}: kind must be read|write")
        if ts < last_ts:
            raise TraceFormatError(f"line {lineno}: timestamp regressed")
        last_ts = ts
        out.append(StorageRequest(page_id=page, size_pages=size, kind=kind,
                                  timestamp=ts))
    return out
