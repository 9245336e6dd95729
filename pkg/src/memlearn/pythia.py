"""Pythia: an RL prefetcher driven by tabular SARSA.

Per triggering demand the agent builds a state vector from configured
program features, picks a prefetch offset in [-63, 63] epsilon-greedily
from the Q-value store (offset 0 means "don't prefetch"), and logs the
decision in a FIFO evaluation queue. Rewards are assigned per level:

  * accurate & timely  - the prefetched line is demanded after its fill
  * accurate but late  - demanded while the prefetch is still in flight
  * loss of coverage   - the chosen offset leaves the triggering 4 KiB page
    (no request is sent)
  * inaccurate         - never demanded while queued; split by low/high
    DRAM bandwidth usage at eviction time
  * no-prefetch        - offset 0; split by bandwidth usage at insertion

Q-values update lazily: when an entry leaves the queue, one SARSA step
runs with that entry's (state, action, reward) and, as the successor
pair, the entry inserted right after it in FIFO order.

Hardware-style budgets are enforced at construction: the Q-value store is
capped in (state, action) entries against a 24 KiB envelope at 2 B/entry,
and the evaluation queue against 1.5 KiB at 6 B/entry.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .memsim import PrefetchCommand
from .prng import MASK64, Rng64, mix64
from .rl import QTable, RlHyperparams, sarsa_update, select_action
from .trace import CACHELINE_BYTES, LINES_PER_PAGE

FEATURE_KINDS = (
    "load_pc",
    "pc_history_hash",
    "cacheline_addr",
    "page_number",
    "page_offset",
    "cacheline_delta",
    "delta_history_hash",
)

QVSTORE_BUDGET_BYTES = 24 * 1024
QVSTORE_BYTES_PER_ENTRY = 2   # one quantized Q-value cell
EQ_BUDGET_BYTES = 1536        # 1.5 KiB
EQ_BYTES_PER_ENTRY = 6
HISTORY_DEPTH = 4


class BudgetError(ValueError):
    """A configuration exceeds its hardware storage envelope."""


@dataclass(frozen=True)
class RewardLevels:
    # Magnitudes encode this simulator's latency accounting: a late merge
    # still hides most of the DRAM latency (r_al close to r_at), while a
    # cross-page choice forfeits a whole demand's coverage and is the most
    # expensive outcome of all.
    r_at: float = 20.0
    r_al: float = 18.0
    r_cl: float = -30.0
    r_in_low: float = -4.0
    r_in_high: float = -14.0
    r_np_low: float = -2.0
    r_np_high: float = 12.0

    def __post_init__(self):
        if not self.r_at > self.r_al:
            raise ValueError("timely reward must exceed the late reward")
        if not self.r_in_high < self.r_in_low:
            raise ValueError("inaccuracy must be punished more at high bandwidth")
        if not self.r_np_high > self.r_np_low:
            raise ValueError("no-prefetch must pay more at high bandwidth")


@dataclass(frozen=True)
class PythiaConfig:
    features: tuple = ("load_pc", "cacheline_delta")
    offsets: tuple = tuple(range(-63, 64))
    rewards: RewardLevels = field(default_factory=RewardLevels)
    # alpha large enough that a desk-scale run (~100k triggers) can both
    # escape an early exploration lock-in and settle on the best offset
    alpha: float = 0.1
    gamma: float = 0.55
    epsilon: float = 0.002
    epsilon_final: float | None = None   # set with decay_steps for linear decay
    epsilon_decay_steps: int | None = None
    eq_capacity: int = 256
    qvstore_max_entries: int = 12288
    fill_level: str = "L2"

    def __post_init__(self):
        validate_features(self.features)
        if 0 not in self.offsets:
            raise ValueError("offset list must contain 0 (no prefetch)")
        if len(set(self.offsets)) != len(self.offsets):
            raise ValueError("offset list must be unique")
        if any(not -63 <= o <= 63 for o in self.offsets):
            raise ValueError("offsets must lie in [-63, 63]")
        if self.eq_capacity < 1:
            raise ValueError("eq_capacity must be >= 1")
        if self.eq_capacity * EQ_BYTES_PER_ENTRY > EQ_BUDGET_BYTES:
            raise BudgetError(
                f"EQ capacity {self.eq_capacity} exceeds the "
                f"{EQ_BUDGET_BYTES} B envelope at {EQ_BYTES_PER_ENTRY} B/entry")
        if self.qvstore_max_entries * QVSTORE_BYTES_PER_ENTRY > QVSTORE_BUDGET_BYTES:
            raise BudgetError(
                f"QVStore cap {self.qvstore_max_entries} entries exceeds the "
                f"{QVSTORE_BUDGET_BYTES} B envelope at "
                f"{QVSTORE_BYTES_PER_ENTRY} B/entry")


def validate_features(kinds) -> None:
    if not kinds:
        raise ValueError("feature list must not be empty")
    unknown = [k for k in kinds if k not in FEATURE_KINDS]
    if unknown:
        raise ValueError(f"unknown feature kinds: {unknown}")


class EqEntry:
    __slots__ = ("state_id", "action_id", "line", "filled", "reward")

    def __init__(self, state_id, action_id, line):
        self.state_id = state_id
        self.action_id = action_id
        self.line = line        # None for no-prefetch / page-cross entries
        self.filled = False
        self.reward = None


@dataclass
class PythiaStats:
    triggers: int = 0
    no_prefetch: int = 0
    page_cross: int = 0
    issued: int = 0
    sarsa_updates: int = 0
    eq_evictions: int = 0
    rewards_assigned: dict = field(default_factory=lambda: {
        "at": 0, "al": 0, "cl": 0, "in_low": 0, "in_high": 0,
        "np_low": 0, "np_high": 0})
    action_hist: list = field(default_factory=list)

    def copy(self):
        return PythiaStats(
            triggers=self.triggers, no_prefetch=self.no_prefetch,
            page_cross=self.page_cross, issued=self.issued,
            sarsa_updates=self.sarsa_updates, eq_evictions=self.eq_evictions,
            rewards_assigned=dict(self.rewards_assigned),
            action_hist=list(self.action_hist))

    def no_prefetch_fraction(self) -> float:
        return self.no_prefetch / self.triggers if self.triggers else 0.0


def _fold(h: int, v: int) -> int:
    return mix64(h ^ (v & MASK64))


class PythiaPrefetcher:
    """The agent; plugs into memsim as a prefetcher hook."""

    def __init__(self, config: PythiaConfig | None = None, seed: int = 0):
        self.config = config or PythiaConfig()
        self.rewards = self.config.rewards
        self.offsets = tuple(self.config.offsets)
        self.fill_level = self.config.fill_level
        self.hp = RlHyperparams(alpha=self.config.alpha,
                                gamma=self.config.gamma,
                                epsilon=self.config.epsilon, seed=seed)
        self.rng = Rng64(seed)
        self.features = tuple(self.config.features)
        self._reset_learning_state()

    def _reset_learning_state(self):
        self.qtable = QTable(num_actions=len(self.offsets), default_q=0.0,
                             max_entries=self.config.qvstore_max_entries)
        self._eq = deque()
        self._eq_by_line: dict[int, deque] = {}
        self._pc_hist = deque(maxlen=HISTORY_DEPTH)
        self._delta_hist = deque(maxlen=HISTORY_DEPTH)
        self._prev_line = None
        self.stats = PythiaStats(action_hist=[0] * len(self.offsets))

    # -- feature extraction -------------------------------------------------

    def _build_state(self, acc, line) -> int:
        delta = 0 if self._prev_line is None else line - self._prev_line
        delta_q = min(63, max(-64, delta)) + 64  # 7-bit clamp
        self._prev_line = line
        self._pc_hist.append(acc.pc)
        self._delta_hist.append(delta_q)
        h = 0x9E3779B97F4A7C15
        for kind_idx, kind in enumerate(self.features):
            if kind == "load_pc":
                q = acc.pc & 0x3FFF
            elif kind == "pc_history_hash":
                v = 0
                for p in self._pc_hist:
                    v = _fold(v, p)
                q = v & 0x3FFF
            elif kind == "cacheline_addr":
                q = line & 0x3FFF
            elif kind == "page_number":
                q = (line // LINES_PER_PAGE) & 0x3FFF
            elif kind == "page_offset":
                q = line % LINES_PER_PAGE
            elif kind == "cacheline_delta":
                q = delta_q
            else:  # delta_history_hash
                v = 0
                for d in self._delta_hist:
                    v = _fold(v, d)
                q = v & 0x3FFF
            h = _fold(_fold(h, kind_idx), q)
        return h

    def _current_epsilon(self) -> float:
        cfg = self.config
        if cfg.epsilon_final is None or not cfg.epsilon_decay_steps:
            return cfg.epsilon
        t = min(1.0, self.stats.triggers / cfg.epsilon_decay_steps)
        return cfg.epsilon + (cfg.epsilon_final - cfg.epsilon) * t

    # -- reward plumbing -----------------------------------------------------

    def _write_reward(self, entry: EqEntry, value: float, label: str):
        if entry.reward is not None:
            raise RuntimeError("EQ entry rewarded twice")
        entry.reward = value
        self.stats.rewards_assigned[label] += 1

    def _evict_oldest(self, bw: str, incoming: EqEntry):
        old = self._eq.popleft()
        successor = self._eq[0] if self._eq else incoming
        if old.reward is None:
            if bw == "high":
                self._write_reward(old, self.rewards.r_in_high, "in_high")
            else:
                self._write_reward(old, self.rewards.r_in_low, "in_low")
        if old.line is not None:
            dq = self._eq_by_line.get(old.line)
            assert dq and dq[0] is old
            dq.popleft()
            if not dq:
                del self._eq_by_line[old.line]
        sarsa_update(self.qtable, old.state_id, old.action_id, old.reward,
                     successor.state_id, successor.action_id, self.hp)
        self.stats.sarsa_updates += 1
        self.stats.eq_evictions += 1

    def _insert(self, entry: EqEntry, bw: str):
        if len(self._eq) >= self.config.eq_capacity:
            self._evict_oldest(bw, entry)
        self._eq.append(entry)
        if entry.line is not None:
            self._eq_by_line.setdefault(entry.line, deque()).append(entry)

    # -- memsim hooks ---------------------------------------------------------

    def on_demand(self, acc, bw: str):
        """One trigger: reward EQ matches, pick an action, maybe prefetch."""
        st = self.stats
        st.triggers += 1
        line = acc.vaddr // CACHELINE_BYTES

        dq = self._eq_by_line.get(line)
        if dq:
            for e in dq:  # oldest first; exactly the first unrewarded match
                if e.reward is None:
                    if e.filled:
                        self._write_reward(e, self.rewards.r_at, "at")
                    else:
                        self._write_reward(e, self.rewards.r_al, "al")
                    break

        state_id = self._build_state(acc, line)
        action = select_action(self.qtable, state_id,
                               self._current_epsilon(), self.rng)
        st.action_hist[action] += 1
        offset = self.offsets[action]

        if offset == 0:
            entry = EqEntry(state_id, action, None)
            if bw == "high":
                self._write_reward(entry, self.rewards.r_np_high, "np_high")
            else:
                self._write_reward(entry, self.rewards.r_np_low, "np_low")
            self._insert(entry, bw)
            st.no_prefetch += 1
            return None

        target = line + offset
        if target // LINES_PER_PAGE != line // LINES_PER_PAGE:
            # crossing the triggering demand's 4 KiB page: drop the request
            entry = EqEntry(state_id, action, None)
            self._write_reward(entry, self.rewards.r_cl, "cl")
            self._insert(entry, bw)
            st.page_cross += 1
            return None

        entry = EqEntry(state_id, action, target)
        self._insert(entry, bw)
        st.issued += 1
        return PrefetchCommand(target, self.fill_level)

    def on_prefetch_fill(self, line: int):
        dq = self._eq_by_line.get(line)
        if not dq:
            return  # entry already evicted: documented no-op
        for e in dq:
            if not e.filled:
                e.filled = True
                break

    # -- configuration ---------------------------------------------------------

    def configure_features(self, kinds) -> None:
        """Swap the feature set; resets the Q-store, histories and queue."""
        validate_features(kinds)
        self.features = tuple(kinds)
        self._reset_learning_state()

    # -- reporting ----------------------------------------------------------------

    def modal_offset(self, hist=None) -> int:
        hist = self.stats.action_hist if hist is None else hist
        best = max(range(len(hist)), key=lambda i: (hist[i], -i))
        return self.offsets[best]

    def qvstore_bytes(self) -> int:
        return self.qtable.entry_count * QVSTORE_BYTES_PER_ENTRY

    def eq_bytes(self) -> int:
        return len(self._eq) * EQ_BYTES_PER_ENTRY
