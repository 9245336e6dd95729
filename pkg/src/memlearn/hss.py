"""Hybrid storage system: a fast-small and a slow-large device, the
page->device map, LRU eviction, and the human-designed placement baselines.

Device timing is an affine cost (fixed + per-page) per request kind, plus
first-come queueing through ``busy_until``. Placing a range into a full
fast device first evicts least-recently-accessed fast pages to the slow
device; the eviction transfer time L_e busies both devices and feeds the
agent's reward penalty.

Baselines: Slow-Only and Fast-Only (idealized boundary policies that
ignore capacity), an offline oracle with future knowledge (Belady-style
farthest-future eviction under capacity), and a recency heuristic that
pins writes into fast storage and demotes LRU pages under pressure.
"""

from __future__ import annotations

import heapq
from collections import OrderedDict
from dataclasses import dataclass, field


@dataclass(frozen=True)
class DeviceConfig:
    name: str
    capacity_pages: int | None        # None = unbounded
    read_fixed_us: float
    read_per_page_us: float
    write_fixed_us: float
    write_per_page_us: float

    def __post_init__(self):
        for v in (self.read_fixed_us, self.read_per_page_us,
                  self.write_fixed_us, self.write_per_page_us):
            if v <= 0:
                raise ValueError("device latencies must be strictly positive")


# Loose derivation from a 2.4 GB/s-class device vs a 520 MB/s-class device.
FAST_DEVICE = DeviceConfig("fast", 4096, 82.0, 2.0, 90.0, 2.4)
SLOW_DEVICE = DeviceConfig("slow", None, 900.0, 12.0, 1000.0, 14.0)


@dataclass(frozen=True)
class HssConfig:
    fast: DeviceConfig = FAST_DEVICE
    slow: DeviceConfig = SLOW_DEVICE

    def __post_init__(self):
        if self.fast.capacity_pages is None:
            raise ValueError("the fast device needs a finite capacity")
        if not (self.fast.read_per_page_us < self.slow.read_per_page_us
                and self.fast.write_per_page_us < self.slow.write_per_page_us):
            raise ValueError("fast per-page costs must be below slow's")


class Device:
    def __init__(self, config: DeviceConfig):
        self.config = config
        self.busy_until = 0.0

    def latency_us(self, kind: str, n_pages: int) -> float:
        c = self.config
        if kind == "read":
            return c.read_fixed_us + c.read_per_page_us * n_pages
        return c.write_fixed_us + c.write_per_page_us * n_pages

    def service(self, now: float, kind: str, n_pages: int) -> float:
        """Queue behind busy_until, then pay the affine cost; returns L_t."""
        wait = max(0.0, self.busy_until - now)
        svc = self.latency_us(kind, n_pages)
        self.busy_until = now + wait + svc
        return wait + svc

    def reserve(self, now: float, duration: float) -> None:
        self.busy_until = max(self.busy_until, now) + duration


@dataclass
class PageInfo:
    device: str           # "fast" | "slow"
    access_count: int = 0
    last_access_ts: int | None = None


class PageMap:
    """page id -> placement and access metadata, plus fast-side accounting."""

    def __init__(self, fast_capacity: int):
        self.fast_capacity = fast_capacity
        self.fast_used = 0
        self.pages: dict[int, PageInfo] = {}
        self._fast_lru: OrderedDict[int, None] = OrderedDict()

    @property
    def fast_free(self) -> int:
        return self.fast_capacity - self.fast_used

    def info(self, page: int) -> PageInfo | None:
        return self.pages.get(page)

    def placement(self, page: int) -> str:
        info = self.pages.get(page)
        return info.device if info else "slow"  # unmapped data lives slow

    def assign(self, page: int, device: str) -> None:
        info = self.pages.get(page)
        if info is None:
            info = PageInfo(device=device)
            self.pages[page] = info
        else:
            if info.device == device:
                if device == "fast":
                    self._fast_lru.move_to_end(page)
                return
            if info.device == "fast":
                self.fast_used -= 1
                self._fast_lru.pop(page, None)
            info.device = device
        if device == "fast":
            self.fast_used += 1
            self._fast_lru[page] = None
            self._fast_lru.move_to_end(page)

    def touch(self, page: int, now: int) -> None:
        info = self.pages[page]
        info.access_count += 1
        info.last_access_ts = now
        if info.device == "fast":
            self._fast_lru.move_to_end(page)

    def lru_fast_pages(self, n: int) -> list[int]:
        it = iter(self._fast_lru)
        return [next(it) for _ in range(min(n, len(self._fast_lru)))]


@dataclass
class HssMetrics:
    requests: int = 0
    total_latency_us: float = 0.0
    fast_served: int = 0
    slow_served: int = 0
    evictions: int = 0
    evicted_pages: int = 0
    eviction_us: float = 0.0

    def mean_request_latency_us(self) -> float:
        return self.total_latency_us / self.requests if self.requests else 0.0


class HssSim:
    """Drives one placement policy over a storage trace."""

    def __init__(self, config: HssConfig | None = None):
        self.config = config or HssConfig()
        self.fast = Device(self.config.fast)
        self.slow = Device(self.config.slow)
        self.pagemap = PageMap(self.config.fast.capacity_pages)
        self.metrics = HssMetrics()
        self.now = 0

    def evict_victims(self, needed_pages: int, now: float,
                      victims: list[int] | None = None) -> tuple[list[int], float]:
        """Move fast pages to slow until needed_pages are free; returns the
        victim list and the eviction transfer time L_e (fast read + slow
        write of the moved pages, batched)."""
        if needed_pages <= 0:
            return [], 0.0
        if needed_pages > self.pagemap.fast_capacity:
            raise ValueError("request cannot fit the fast device at all")
        if victims is None:
            shortfall = needed_pages - self.pagemap.fast_free
            if shortfall <= 0:
                return [], 0.0
            victims = self.pagemap.lru_fast_pages(shortfall)
        if not victims:
            return [], 0.0
        for p in victims:
            self.pagemap.assign(p, "slow")
        n = len(victims)
        l_e = (self.fast.latency_us("read", n) +
               self.slow.latency_us("write", n))
        self.fast.reserve(now, self.fast.latency_us("read", n))
        self.slow.reserve(now, self.slow.latency_us("write", n))
        m = self.metrics
        m.evictions += 1
        m.evicted_pages += n
        m.eviction_us += l_e
        return victims, l_e

    def step(self, req, policy) -> float:
        """Serve one request under the policy; returns its latency L_t."""
        self.now = req.timestamp
        pages = range(req.page_id, req.page_id + req.size_pages)
        action = policy.place(req, self)

        evicted = False
        l_e = 0.0
        if action == "fast":
            needed = sum(1 for p in pages
                         if self.pagemap.placement(p) != "fast")
            if needed and getattr(policy, "enforce_capacity", True):
                victims = None
                if hasattr(policy, "choose_victims"):
                    victims = policy.choose_victims(self, needed)
                vs, l_e = self.evict_victims(needed, self.now, victims)
                evicted = bool(vs)

        for p in pages:
            self.pagemap.assign(p, action)
            self.pagemap.touch(p, req.timestamp)

        dev = self.fast if action == "fast" else self.slow
        l_t = dev.service(self.now, req.kind, req.size_pages)

        m = self.metrics
        m.requests += 1
        m.total_latency_us += l_t
        if action == "fast":
            m.fast_served += 1
        else:
            m.slow_served += 1

        if hasattr(policy, "notify"):
            policy.notify(req, action, l_t, evicted, l_e, self)
        return l_t


def run_hss(trace, policy, config: HssConfig | None = None) -> HssSim:
    sim = HssSim(config)
    for req in trace:
        sim.step(req, policy)
    if hasattr(policy, "finish"):
        policy.finish(sim)
    return sim


class SlowOnly:
    """Boundary policy: everything on the slow device."""

    enforce_capacity = False

    def place(self, req, sim):
        return "slow"


class FastOnly:
    """Idealized boundary policy: everything fast, capacity ignored."""

    enforce_capacity = False

    def place(self, req, sim):
        return "fast"


class RecencyHeuristic:
    """Writes go fast (LRU demotion under pressure); reads stay put."""

    enforce_capacity = True

    def place(self, req, sim):
        if req.kind == "write":
            return "fast"
        return sim.pagemap.placement(req.page_id)


class OracleOffline:
    """Two-pass planner with complete future knowledge, under capacity.

    Pass 1 records every head page's next access time. Pass 2 replays the
    trace against a simulated fast set: a request is planned fast iff its
    range fits after evicting only pages whose next use lies farther in
    the future (Belady-style); otherwise it is planned slow.
    """

    enforce_capacity = True

    def __init__(self, trace, fast_capacity: int):
        self._plan = self._build_plan(list(trace), fast_capacity)
        self._i = 0

    @staticmethod
    def _build_plan(trace, capacity):
        inf = float("inf")
        nxt = [inf] * len(trace)
        last_seen: dict[int, int] = {}
        for i in range(len(trace) - 1, -1, -1):
            p = trace[i].page_id
            nxt[i] = last_seen.get(p, inf)
            last_seen[p] = i

        plan = []
        fast: dict[int, tuple[float, int]] = {}  # head -> (next_use, size)
        heap: list[tuple[float, int]] = []       # (-next_use, head)
        free = capacity
        for i, req in enumerate(trace):
            p, n = req.page_id, req.size_pages
            if p in fast:
                fast[p] = (nxt[i], fast[p][1])
                heapq.heappush(heap, (-nxt[i], p))
                plan.append(("fast", []))
                continue
            if n > capacity:
                plan.append(("slow", []))
                continue
            victims = []
            popped = []
            freed = 0
            while free + freed < n and heap:
                neg, q = heapq.heappop(heap)
                if q not in fast or fast[q][0] != -neg:
                    continue  # stale heap entry
                if -neg <= nxt[i]:
                    popped.append((neg, q))
                    break  # nothing farther-future left to evict
                victims.append(q)
                freed += fast[q][1]
                popped.append((neg, q))
            if free + freed >= n:
                victim_pages = []
                for q in victims:
                    size = fast.pop(q)[1]
                    free += size
                    victim_pages.extend(range(q, q + size))
                for neg, q in popped:
                    if q in fast:
                        heapq.heappush(heap, (neg, q))
                fast[p] = (nxt[i], n)
                heapq.heappush(heap, (-nxt[i], p))
                free -= n
                plan.append(("fast", victim_pages))
            else:
                for neg, q in popped:  # roll back, keep the set intact
                    if q in fast:
                        heapq.heappush(heap, (neg, q))
                plan.append(("slow", []))
        return plan

    def place(self, req, sim):
        action, self._victims = self._plan[self._i]
        self._i += 1
        return action

    def choose_victims(self, sim, needed):
        return [p for p in self._victims
                if sim.pagemap.placement(p) == "fast"] or None
