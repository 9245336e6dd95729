"""Cycle-approximate three-level cache hierarchy with a bandwidth-limited
DRAM model.

Timing model: one outstanding demand at a time plus an asynchronous
prefetch queue. A demand walks L1 -> L2 -> LLC -> DRAM, paying the summed
latencies down to the level that serves it; a miss fills every level
(inclusive hierarchy, LRU everywhere, back-invalidation on LLC eviction).
DRAM enforces a configurable MTPS cap by spacing transfer starts at least
one reciprocal-rate gap apart, and a sliding window over transfer starts
feeds the low/high bandwidth gauge consumed by bandwidth-aware policies.

Speculative paths hosted here:
  * prefetches fill at L2 or LLC and never touch L1; a demand arriving
    while its line is still in flight merges with the prefetch
    ("accurate but late"),
  * Hermes requests run in parallel with the hierarchy walk for loads
    predicted to go off-chip and are discarded without filling anything
    when the prediction was wrong.
"""

from __future__ import annotations

import heapq
from collections import OrderedDict
from dataclasses import dataclass, field, replace

from .trace import CACHELINE_BYTES

LEVEL_NAMES = ("L1", "L2", "LLC")


@dataclass(frozen=True)
class CacheGeom:
    name: str
    sets: int
    ways: int
    latency_cycles: int

    @property
    def capacity_lines(self) -> int:
        return self.sets * self.ways


@dataclass(frozen=True)
class MemSimConfig:
    # Skylake-ish defaults: 32 KiB/8w L1, 256 KiB/8w L2, 2 MiB/16w LLC.
    l1: CacheGeom = CacheGeom("L1", 64, 8, 4)
    l2: CacheGeom = CacheGeom("L2", 512, 8, 12)
    llc: CacheGeom = CacheGeom("LLC", 2048, 16, 38)
    dram_base_latency: int = 200
    mtps: float = 1600.0          # DRAM million transfers per second
    core_ghz: float = 2.4         # converts MTPS into a per-cycle rate
    bw_window_cycles: int = 2000
    bw_high_threshold: float = 0.5
    prefetch_trigger: str = "l1_miss"   # "l1_miss" | "all"
    prefetch_fill_level: str = "L2"     # "L2" | "LLC"

    def geoms(self):
        return (self.l1, self.l2, self.llc)


class PrefetchRecord:
    """Lifecycle of one issued prefetch, for useful/unused accounting."""

    __slots__ = ("line", "fill_idx", "completion", "state", "demanded",
                 "levels")

    def __init__(self, line, fill_idx, completion):
        self.line = line
        self.fill_idx = fill_idx
        self.completion = completion
        self.state = "in_flight"  # in_flight -> filled -> done
        self.demanded = False
        self.levels = set()


class LineEntry:
    __slots__ = ("pf",)

    def __init__(self, pf=None):
        self.pf = pf


class CacheLevel:
    """Set-associative LRU array keyed by cacheline number."""

    def __init__(self, geom: CacheGeom):
        self.geom = geom
        self.latency = geom.latency_cycles
        self._sets = [OrderedDict() for _ in range(geom.sets)]

    def _set_for(self, line):
        return self._sets[line % self.geom.sets]

    def lookup(self, line, touch=True):
        s = self._set_for(line)
        entry = s.get(line)
        if entry is not None and touch:
            s.move_to_end(line)
        return entry

    def insert(self, line, entry: LineEntry):
        """Insert/refresh a line; returns (evicted_line, evicted_entry) or None."""
        s = self._set_for(line)
        if line in s:
            s[line] = entry if entry.pf is not None else s[line]
            s.move_to_end(line)
            return None
        evicted = None
        if len(s) >= self.geom.ways:
            evicted = s.popitem(last=False)
        s[line] = entry
        return evicted

    def invalidate(self, line):
        return self._set_for(line).pop(line, None)

    def resident_lines(self):
        for s in self._sets:
            yield from s.keys()


class DramModel:
    """Fixed service latency plus an MTPS bandwidth cap.

    Transfer starts are spaced at least ``gap = core_ghz*1e3/mtps`` cycles
    apart, so completed transfers in any window never exceed the cap. The
    start history also backs the sliding-window bandwidth gauge.
    """

    def __init__(self, base_latency: int, mtps: float, core_ghz: float,
                 window_cycles: int, high_threshold: float):
        if mtps <= 0 or core_ghz <= 0:
            raise ValueError("mtps and core_ghz must be positive")
        if not 0.0 < high_threshold < 1.0:
            raise ValueError("bandwidth threshold must lie in (0, 1)")
        self.base_latency = base_latency
        self.gap = core_ghz * 1e3 / mtps  # cycles per transfer
        self.window = window_cycles
        self.high_threshold = high_threshold
        self.starts: list[float] = []  # non-decreasing
        self._window_left = 0

    def request(self, issue_cycle: float) -> tuple[float, float]:
        """Schedule one transfer; returns (start, completion)."""
        start = issue_cycle
        if self.starts:
            start = max(start, self.starts[-1] + self.gap)
        self.starts.append(start)
        return start, start + self.base_latency

    @property
    def transfers(self) -> int:
        return len(self.starts)

    def utilization(self, now: float) -> float:
        lo = now - self.window
        while (self._window_left < len(self.starts)
               and self.starts[self._window_left] <= lo):
            self._window_left += 1
        in_window = sum(1 for s in self.starts[self._window_left:] if s <= now)
        cap = self.window / self.gap
        return in_window / cap if cap > 0 else 0.0

    def bandwidth_level(self, now: float) -> str:
        """'high' iff window utilization >= threshold (boundary is high)."""
        return "high" if self.utilization(now) >= self.high_threshold else "low"


@dataclass
class SimMetrics:
    demand_accesses: int = 0
    demand_loads: int = 0
    hits: dict = field(default_factory=lambda: {n: 0 for n in LEVEL_NAMES})
    demand_misses: dict = field(default_factory=lambda: {n: 0 for n in LEVEL_NAMES})
    off_chip_loads: int = 0
    prefetches_issued: int = 0
    prefetch_useful: int = 0       # timely + late
    covered_timely: int = 0
    covered_late: int = 0
    prefetch_unused: int = 0
    prefetch_redundant: int = 0
    prefetch_in_flight_at_end: int = 0
    hermes_issued: int = 0
    hermes_consumed: int = 0
    dram_transfers: int = 0
    total_load_cycles: float = 0.0

    def coverage(self) -> float:
        """Fraction of would-be off-chip demand misses covered by a prefetch
        that arrived first (timely) or was merged with (late)."""
        covered = self.covered_timely + self.covered_late
        uncovered = self.off_chip_loads - self.covered_late
        denom = covered + uncovered
        return covered / denom if denom else 0.0

    def overprediction_rate(self) -> float:
        """Unused fraction of completed prefetches."""
        denom = self.prefetch_useful + self.prefetch_unused
        return self.prefetch_unused / denom if denom else 0.0

    def mean_load_cycles(self) -> float:
        return self.total_load_cycles / self.demand_loads if self.demand_loads else 0.0

    def copy(self) -> "SimMetrics":
        return replace(self, hits=dict(self.hits),
                       demand_misses=dict(self.demand_misses))


def metrics_delta(after: SimMetrics, before: SimMetrics) -> SimMetrics:
    """Windowed counters: after minus before (for post-warmup metrics)."""
    d = SimMetrics()
    for name in ("demand_accesses", "demand_loads", "off_chip_loads",
                 "prefetches_issued", "prefetch_useful", "covered_timely",
                 "covered_late", "prefetch_unused", "prefetch_redundant",
                 "hermes_issued", "hermes_consumed", "dram_transfers",
                 "total_load_cycles"):
        setattr(d, name, getattr(after, name) - getattr(before, name))
    for lv in LEVEL_NAMES:
        d.hits[lv] = after.hits[lv] - before.hits[lv]
        d.demand_misses[lv] = after.demand_misses[lv] - before.demand_misses[lv]
    return d


@dataclass(frozen=True)
class PrefetchCommand:
    line: int
    fill_level: str = "L2"


class Hierarchy:
    """The inclusive cache stack plus DRAM and the speculative machinery."""

    def __init__(self, config: MemSimConfig | None = None):
        self.config = config or MemSimConfig()
        self.levels = [CacheLevel(g) for g in self.config.geoms()]
        self.dram = DramModel(self.config.dram_base_latency, self.config.mtps,
                              self.config.core_ghz, self.config.bw_window_cycles,
                              self.config.bw_high_threshold)
        self.metrics = SimMetrics()
        self.in_flight: dict[int, PrefetchRecord] = {}
        self._fill_heap: list = []
        self._fill_seq = 0
        self._next_free = 0.0
        self.fill_listeners = []  # called with each filled cacheline
        self.prefetcher = None

    # -- residency helpers ------------------------------------------------

    def resident_at_or_above(self, line, level_idx) -> bool:
        return any(self.levels[i].lookup(line, touch=False) is not None
                   for i in range(level_idx + 1))

    def resident_anywhere(self, line) -> bool:
        return self.resident_at_or_above(line, len(self.levels) - 1)

    def contents(self):
        """Per-level frozensets of resident lines (for run comparisons)."""
        return tuple(frozenset(lv.resident_lines()) for lv in self.levels)

    def bandwidth_level(self, now=None) -> str:
        return self.dram.bandwidth_level(self._next_free if now is None else now)

    # -- fills and evictions ----------------------------------------------

    def _evict_from(self, level_idx, line, entry):
        rec = entry.pf
        if rec is not None and rec.state == "filled":
            rec.levels.discard(level_idx)
            if not rec.levels and not rec.demanded:
                rec.state = "done"
                self.metrics.prefetch_unused += 1
        if level_idx == len(self.levels) - 1:
            # inclusive hierarchy: LLC eviction back-invalidates upper levels
            for j in range(level_idx):
                upper = self.levels[j].invalidate(line)
                if upper is not None:
                    self._evict_from(j, line, upper)

    def _insert(self, level_idx, line, pf_record=None):
        entry = LineEntry(pf=pf_record)
        evicted = self.levels[level_idx].insert(line, entry)
        if pf_record is not None:
            pf_record.levels.add(level_idx)
        if evicted is not None:
            ev_line, ev_entry = evicted
            self._evict_from(level_idx, ev_line, ev_entry)

    def _fill_demand_all(self, line):
        for idx in range(len(self.levels) - 1, -1, -1):
            self._insert(idx, line)
        self._notify_fill(line)

    def _notify_fill(self, line):
        for cb in self.fill_listeners:
            cb(line)

    def _drain_fills(self, now: float):
        while self._fill_heap and self._fill_heap[0][0] <= now:
            _, _, rec = heapq.heappop(self._fill_heap)
            if rec.state != "in_flight":
                continue  # merged with a demand while in flight
            rec.state = "filled"
            self.in_flight.pop(rec.line, None)
            for idx in range(rec.fill_idx, len(self.levels)):
                self._insert(idx, rec.line, pf_record=rec)
            self._notify_fill(rec.line)
            if self.prefetcher is not None:
                self.prefetcher.on_prefetch_fill(rec.line)

    # -- prefetch issue -----------------------------------------------------

    def issue_prefetch(self, line, fill_level: str, cycle: float):
        self.metrics.prefetches_issued += 1
        fill_idx = LEVEL_NAMES.index(fill_level)
        if self.resident_at_or_above(line, fill_idx) or line in self.in_flight:
            self.metrics.prefetch_redundant += 1
            # the data is (or will be) present: report the fill so the
            # requester can mark its bookkeeping entry as satisfied
            if self.prefetcher is not None and line not in self.in_flight:
                self.prefetcher.on_prefetch_fill(line)
            return None
        _, completion = self.dram.request(cycle)
        self.metrics.dram_transfers += 1
        rec = PrefetchRecord(line, fill_idx, completion)
        self.in_flight[line] = rec
        self._fill_seq += 1
        heapq.heappush(self._fill_heap, (completion, self._fill_seq, rec))
        return rec

    # -- demand path --------------------------------------------------------

    def access(self, acc, hermes_completion=None):
        """Serve one demand; returns (served_by, issue, completion, merged)."""
        clock = max(float(acc.cycle), self._next_free)
        self._drain_fills(clock)
        line = acc.vaddr // CACHELINE_BYTES
        m = self.metrics
        m.demand_accesses += 1
        is_load = acc.kind == "load"
        if is_load:
            m.demand_loads += 1

        served = None
        merged = False
        cum = 0
        hit_idx = None
        for idx, lv in enumerate(self.levels):
            cum += lv.latency
            entry = lv.lookup(line)
            if entry is not None:
                hit_idx = idx
                break
            m.demand_misses[LEVEL_NAMES[idx]] += 1

        if hit_idx is not None:
            completion = clock + cum
            served = LEVEL_NAMES[hit_idx]
            m.hits[served] += 1
            rec = entry.pf
            if rec is not None and rec.state == "filled" and not rec.demanded:
                rec.demanded = True
                rec.state = "done"
                m.prefetch_useful += 1
                m.covered_timely += 1
            for j in range(hit_idx - 1, -1, -1):  # fill the levels above
                self._insert(j, line)
        else:
            served = "DRAM"
            m.off_chip_loads += 1
            walk_done = clock + cum
            rec = self.in_flight.get(line)
            if rec is not None:
                # merge with the in-flight prefetch: accurate but late
                completion = max(walk_done, rec.completion)
                rec.demanded = True
                rec.state = "done"
                del self.in_flight[line]
                merged = True
                m.prefetch_useful += 1
                m.covered_late += 1
            elif hermes_completion is not None:
                completion = max(walk_done, hermes_completion)
                m.hermes_consumed += 1
            else:
                _, completion = self.dram.request(walk_done)
                m.dram_transfers += 1
            self._fill_demand_all(line)

        if is_load:
            m.total_load_cycles += completion - clock
        self._next_free = completion
        return served, clock, completion, merged


@dataclass(frozen=True)
class AccessRecord:
    issue: float
    completion: float
    served: str
    merged: bool = False  # waited on an in-flight prefetch

    @property
    def latency(self) -> float:
        return self.completion - self.issue


class SimSession:
    """Steppable simulation: feeds demands one at a time through a fresh
    hierarchy, invoking the prefetcher and off-chip predictor hooks.

    ``prefetcher`` needs on_demand(acc, bw) -> PrefetchCommand|None and
    on_prefetch_fill(line); ``offchip`` needs predict(acc) -> (bool, meta)
    and on_complete(meta, went_off_chip), plus an optional bind(hierarchy).
    """

    def __init__(self, config=None, prefetcher=None, offchip=None,
                 hermes_enabled=False, hermes_issue_latency=6):
        self.hier = Hierarchy(config)
        self.hier.prefetcher = prefetcher
        self.prefetcher = prefetcher
        self.offchip = offchip
        self.hermes_enabled = hermes_enabled
        self.hermes_issue_latency = hermes_issue_latency
        if offchip is not None and hasattr(offchip, "bind"):
            offchip.bind(self.hier)
        self._trigger_all = self.hier.config.prefetch_trigger == "all"
        self._finished = False

    @property
    def metrics(self) -> SimMetrics:
        return self.hier.metrics

    def step(self, acc) -> AccessRecord:
        hier = self.hier
        clock = max(float(acc.cycle), hier._next_free)
        hermes_completion = None
        meta = None
        if self.offchip is not None and acc.kind == "load":
            hier._drain_fills(clock)  # predict against up-to-date contents
            predicted, meta = self.offchip.predict(acc)
            if predicted and self.hermes_enabled:
                _, hermes_completion = hier.dram.request(
                    clock + self.hermes_issue_latency)
                hier.metrics.dram_transfers += 1
                hier.metrics.hermes_issued += 1
        served, clock, completion, merged = hier.access(acc, hermes_completion)
        if meta is not None:
            self.offchip.on_complete(meta, served == "DRAM")
        if self.prefetcher is not None and (self._trigger_all or served != "L1"):
            cmd = self.prefetcher.on_demand(acc, hier.dram.bandwidth_level(clock))
            if cmd is not None:
                hier.issue_prefetch(cmd.line, cmd.fill_level, clock)
        return AccessRecord(issue=clock, completion=completion, served=served,
                            merged=merged)

    def finish(self) -> Hierarchy:
        """Close end-of-run prefetch accounting (idempotent)."""
        if self._finished:
            return self.hier
        self._finished = True
        hier = self.hier
        hier.metrics.prefetch_in_flight_at_end = len(hier.in_flight)
        # resident prefetched lines never demanded also count as unused
        seen = set()
        for lv in hier.levels:
            for line in lv.resident_lines():
                entry = lv.lookup(line, touch=False)
                rec = entry.pf
                if rec is not None and rec.state == "filled" \
                        and not rec.demanded and id(rec) not in seen:
                    seen.add(id(rec))
                    rec.state = "done"
                    hier.metrics.prefetch_unused += 1
        return hier


def run(config, trace, prefetcher=None, offchip=None, hermes_enabled=False,
        hermes_issue_latency=6, record=False):
    """Drive a whole trace; returns (hierarchy, records or None)."""
    sess = SimSession(config, prefetcher, offchip, hermes_enabled,
                      hermes_issue_latency)
    records = [] if record else None
    for acc in trace:
        r = sess.step(acc)
        if records is not None:
            records.append(r)
    return sess.finish(), records


class StridePrefetcher:
    """Reference per-PC stride prefetcher (confirmation-based, degree 1)."""

    def __init__(self, fill_level="L2", table_size=256):
        self.fill_level = fill_level
        self.table = OrderedDict()  # pc -> (last_line, last_stride, confidence)
        self.table_size = table_size

    def on_demand(self, acc, bw):
        line = acc.vaddr // CACHELINE_BYTES
        prev = self.table.pop(acc.pc, None)
        cmd = None
        if prev is not None:
            last_line, last_stride, conf = prev
            stride = line - last_line
            if stride != 0 and stride == last_stride:
                conf = min(conf + 1, 3)
            else:
                conf = 0
            if conf >= 1:
                cmd = PrefetchCommand(line + stride, self.fill_level)
            self.table[acc.pc] = (line, stride, conf)
        else:
            self.table[acc.pc] = (line, 0, 0)
        if len(self.table) > self.table_size:
            self.table.popitem(last=False)
        return cmd

    def on_prefetch_fill(self, line):
        pass
