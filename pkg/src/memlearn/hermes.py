"""Hermes: perceptron-based off-chip prediction plus the speculative
direct-to-DRAM request path.

POPET keeps one saturating weight table per program feature. At load
issue it hashes the feature values, sums the indexed weights into
w_sigma, and predicts "off-chip" when w_sigma >= tau_act; the indices and
sum ride along in load-queue metadata so the tables can be trained with
the true outcome when the load completes (only while w_sigma lies inside
the training window). When a load is predicted off-chip, the simulator
issues a Hermes request straight to DRAM in parallel with the cache walk;
a wrong prediction's request is discarded without touching any cache.

A tag-tracking predictor (bounded shadow of the hierarchy contents) and
an oracle that peeks at actual residency serve as comparison baselines.
"""

from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass, field, replace

from .perceptron import HashedPerceptron, PerceptronConfig
from .trace import CACHELINE_BYTES, LINES_PER_PAGE

POPET_BUDGET_BITS = int(3.2 * 1024 * 8)  # 3.2 KiB of weight storage

POPET_FEATURE_KINDS = (
    "pc",
    "pc_xor_offset",
    "page_number_hash",
    "cacheline_hash",
    "last_miss_distance",
    "pc_history_hash",
)

DEFAULT_POPET_FEATURES = (
    ("pc", 1024),
    ("pc_xor_offset", 1024),
    ("cacheline_hash", 512),
    ("last_miss_distance", 128),
)


class BudgetError(ValueError):
    pass


@dataclass(frozen=True)
class HermesConfig:
    features: tuple = DEFAULT_POPET_FEATURES
    tau_act: int = -18
    t_pos: int = 12
    t_neg: int = -35
    weight_bits: int = 5
    issue_latency: int = 6       # cycles from load issue to the DRAM request

    def __post_init__(self):
        unknown = [n for n, _ in self.features if n not in POPET_FEATURE_KINDS]
        if unknown:
            raise ValueError(f"unknown POPET features: {unknown}")
        bits = sum(size * self.weight_bits for _, size in self.features)
        if bits > POPET_BUDGET_BITS:
            raise BudgetError(
                f"POPET weight storage {bits} bits exceeds the "
                f"{POPET_BUDGET_BITS}-bit envelope")


@dataclass
class LoadQueueMeta:
    indices: tuple
    w_sigma: int
    predicted: bool


@dataclass
class PredictorStats:
    loads: int = 0
    predicted_pos: int = 0
    actual_pos: int = 0
    true_pos: int = 0

    def copy(self) -> "PredictorStats":
        return replace(self)

    def accuracy(self) -> tuple[float, bool]:
        """(value, zero_denominator_flag): fraction of predicted off-chip
        loads that actually went off-chip; flagged 1.0 with no predictions."""
        if self.predicted_pos == 0:
            return 1.0, True
        return self.true_pos / self.predicted_pos, False

    def coverage(self) -> tuple[float, bool]:
        """Fraction of actual off-chip loads that were predicted."""
        if self.actual_pos == 0:
            return 1.0, True
        return self.true_pos / self.actual_pos, False

    def update(self, predicted: bool, actual: bool):
        self.loads += 1
        self.predicted_pos += predicted
        self.actual_pos += actual
        self.true_pos += predicted and actual


def stats_delta(after: PredictorStats, before: PredictorStats) -> PredictorStats:
    return PredictorStats(
        loads=after.loads - before.loads,
        predicted_pos=after.predicted_pos - before.predicted_pos,
        actual_pos=after.actual_pos - before.actual_pos,
        true_pos=after.true_pos - before.true_pos)


class PopetPredictor:
    """Hashed-perceptron off-chip predictor with online training."""

    def __init__(self, config: HermesConfig | None = None):
        self.config = config or HermesConfig()
        self.perceptron = HashedPerceptron(PerceptronConfig(
            tau_act=self.config.tau_act, t_pos=self.config.t_pos,
            t_neg=self.config.t_neg, features=self.config.features,
            weight_bits=self.config.weight_bits))
        self.feature_names = [n for n, _ in self.config.features]
        self.stats = PredictorStats()
        self._pc_hist = deque(maxlen=4)
        self._loads_since_offchip = 255

    def storage_bits(self) -> int:
        return self.perceptron.storage_bits()

    def _raw_values(self, acc):
        line = acc.vaddr // CACHELINE_BYTES
        offset = line % LINES_PER_PAGE
        vals = []
        for name in self.feature_names:
            if name == "pc":
                vals.append(acc.pc)
            elif name == "pc_xor_offset":
                vals.append(acc.pc ^ offset)
            elif name == "page_number_hash":
                vals.append(line // LINES_PER_PAGE)
            elif name == "cacheline_hash":
                vals.append(line)
            elif name == "last_miss_distance":
                vals.append(min(self._loads_since_offchip, 255))
            else:  # pc_history_hash
                h = 0
                for p in self._pc_hist:
                    h = (h * 0x100000001B3 + p) & ((1 << 64) - 1)
                vals.append(h)
        return vals

    def predict(self, acc) -> tuple[bool, LoadQueueMeta]:
        self._pc_hist.append(acc.pc)
        p = self.perceptron.predict(self._raw_values(acc))
        return p.prediction, LoadQueueMeta(indices=p.indices,
                                           w_sigma=p.w_sigma,
                                           predicted=p.prediction)

    def on_complete(self, meta: LoadQueueMeta, went_off_chip: bool):
        self.stats.update(meta.predicted, went_off_chip)
        self.perceptron.train(meta.indices, meta.w_sigma, went_off_chip)
        if went_off_chip:
            self._loads_since_offchip = 0
        else:
            self._loads_since_offchip = min(self._loads_since_offchip + 1, 255)


class TtpPredictor:
    """Tag-tracking baseline: a bounded LRU shadow of hierarchy contents.

    Predicts off-chip iff the line's tag is absent from the shadow. With a
    shadow smaller than the hierarchy, capacity-evicted tags turn into
    false "off-chip" calls; that bounded drift is the point of the model.
    """

    def __init__(self, capacity_lines: int = 32768):
        if capacity_lines < 1:
            raise ValueError("shadow capacity must be >= 1")
        self.capacity = capacity_lines
        self.shadow: OrderedDict[int, None] = OrderedDict()
        self.stats = PredictorStats()

    def bind(self, hierarchy):
        hierarchy.fill_listeners.append(self._observe)

    def _observe(self, line: int):
        self.shadow[line] = None
        self.shadow.move_to_end(line)
        while len(self.shadow) > self.capacity:
            self.shadow.popitem(last=False)

    def predict(self, acc):
        line = acc.vaddr // CACHELINE_BYTES
        hit = line in self.shadow
        if hit:
            self.shadow.move_to_end(line)
        return not hit, LoadQueueMeta(indices=(), w_sigma=0, predicted=not hit)

    def on_complete(self, meta: LoadQueueMeta, went_off_chip: bool):
        self.stats.update(meta.predicted, went_off_chip)


class IdealPredictor:
    """Upper-bound predictor: inspects actual residency before the walk."""

    def __init__(self):
        self.hier = None
        self.stats = PredictorStats()

    def bind(self, hierarchy):
        self.hier = hierarchy

    def predict(self, acc):
        line = acc.vaddr // CACHELINE_BYTES
        off = not self.hier.resident_anywhere(line)
        return off, LoadQueueMeta(indices=(), w_sigma=0, predicted=off)

    def on_complete(self, meta: LoadQueueMeta, went_off_chip: bool):
        self.stats.update(meta.predicted, went_off_chip)


class NeverPredictor:
    """Baseline that never flags a load as off-chip."""

    def __init__(self):
        self.stats = PredictorStats()

    def predict(self, acc):
        return False, LoadQueueMeta(indices=(), w_sigma=0, predicted=False)

    def on_complete(self, meta: LoadQueueMeta, went_off_chip: bool):
        self.stats.update(meta.predicted, went_off_chip)
