"""Sibyl: RL data placement for hybrid storage.

The agent observes each request as a quantized six-feature tuple
(request size, read/write, access interval, access count, remaining fast
capacity, current placement), picks fast vs slow epsilon-greedily from a
small value network, and receives the reciprocal of the served request's
latency as reward, minus an eviction penalty of 0.001 * L_e (clamped at
zero) whenever the placement forced fast-to-slow eviction.

Two identical two-layer networks decouple decisions from learning: the
inference net only changes when the training net is copied into it every
sync_period decisions, while the training net takes one TD-regression
step per collected experience batch (target r + gamma * max_a Q(next)).
Gradients are exact analytic backprop over the ReLU hidden layer. The
canonical execution is deterministic: decisions and training interleave
in program order, standing in for the decision/training thread pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SIZE_BINS = 8
TYPE_BINS = 2
INTR_BINS = 64
CNT_BINS = 64
CAP_BINS = 8
CURR_BINS = 2

# packed-encoding bit widths per field, in tuple order
FIELD_BITS = (8, 4, 8, 8, 8, 4)
ACTIONS = ("fast", "slow")


@dataclass(frozen=True)
class Observation:
    """Quantized (size_t, type_t, intr_t, cnt_t, cap_t, curr_t)."""

    size_bin: int
    type_bin: int
    intr_bin: int
    cnt_bin: int
    cap_bin: int
    curr_bin: int

    def as_tuple(self):
        return (self.size_bin, self.type_bin, self.intr_bin,
                self.cnt_bin, self.cap_bin, self.curr_bin)

    def encode(self) -> int:
        """Pack into the documented 8/4/8/8/8/4-bit fields (40 bits)."""
        out = 0
        for value, bits in zip(self.as_tuple(), FIELD_BITS):
            out = (out << bits) | value
        return out

    @staticmethod
    def decode(word: int) -> "Observation":
        values = []
        for bits in reversed(FIELD_BITS):
            values.append(word & ((1 << bits) - 1))
            word >>= bits
        return Observation(*reversed(values))

    def normalized(self) -> np.ndarray:
        t = self.as_tuple()
        scale = (SIZE_BINS - 1, TYPE_BINS - 1, INTR_BINS - 1,
                 CNT_BINS - 1, CAP_BINS - 1, CURR_BINS - 1)
        return np.array([v / s for v, s in zip(t, scale)], dtype=np.float64)


def size_bin(size_pages: int) -> int:
    """Linear bins of width 8 over [1, 64] pages, clamped above."""
    return min(SIZE_BINS - 1, max(0, (size_pages - 1) // 8))


def log2_bin(value: int, bins: int) -> int:
    """floor(log2(value + 1)), clamped to the bin count."""
    return min(bins - 1, int(value + 1).bit_length() - 1)


def cap_bin(free_pages: int, capacity: int) -> int:
    """Linear bins of the free fraction; an empty device maps to the top."""
    frac = max(0.0, free_pages / capacity) if capacity else 0.0
    return min(CAP_BINS - 1, int(frac * CAP_BINS))


def observe(sim, req) -> Observation:
    """Build the observation for a request against pre-update map state.

    A page never seen before reads count bin 0 and the top interval bin
    (infinite-interval convention), and counts as currently slow.
    """
    info = sim.pagemap.info(req.page_id)
    if info is None or info.last_access_ts is None:
        intr = INTR_BINS - 1
        cnt = 0
        curr = 1
    else:
        intr = log2_bin(max(0, req.timestamp - info.last_access_ts), INTR_BINS)
        cnt = log2_bin(info.access_count, CNT_BINS)
        curr = 0 if info.device == "fast" else 1
    return Observation(
        size_bin=size_bin(req.size_pages),
        type_bin=0 if req.kind == "read" else 1,
        intr_bin=intr,
        cnt_bin=cnt,
        cap_bin=cap_bin(sim.pagemap.fast_free, sim.pagemap.fast_capacity),
        curr_bin=curr,
    )


def placement_reward(latency_us: float, evicted: bool, evict_us: float) -> float:
    """1/L_t, minus the 0.001*L_e eviction penalty clamped at zero."""
    if latency_us <= 0:
        raise ValueError("latency must be positive")
    r = 1.0 / latency_us
    if evicted:
        r = max(0.0, r - 0.001 * evict_us)
    return r


class ValueNet:
    """Input 6 -> ReLU hidden layer -> 2 action values; float64 throughout."""

    def __init__(self, hidden: int = 32, rng: np.random.Generator | None = None,
                 n_in: int = 6, n_out: int = 2):
        rng = rng or np.random.default_rng(0)
        a1 = np.sqrt(6.0 / (n_in + hidden))
        self.w1 = rng.uniform(-a1, a1, size=(hidden, n_in))
        self.b1 = np.zeros(hidden)
        # zero-init output layer: initial Q-values are exactly 0, so early
        # action preferences come from observed rewards, not init noise
        self.w2 = np.zeros((n_out, hidden))
        self.b2 = np.zeros(n_out)

    def params(self):
        return [self.w1, self.b1, self.w2, self.b2]

    def copy_from(self, other: "ValueNet") -> None:
        self.w1 = other.w1.copy()
        self.b1 = other.b1.copy()
        self.w2 = other.w2.copy()
        self.b2 = other.b2.copy()

    def forward(self, x: np.ndarray) -> np.ndarray:
        """x: (batch, 6) -> (batch, 2)."""
        z1 = x @ self.w1.T + self.b1
        h = np.maximum(z1, 0.0)
        return h @ self.w2.T + self.b2

    def q_values(self, obs_vec: np.ndarray) -> np.ndarray:
        return self.forward(obs_vec[None, :])[0]

    def loss_and_grads(self, x, actions, targets):
        """MSE over the chosen actions' Q-values against fixed targets."""
        n = x.shape[0]
        z1 = x @ self.w1.T + self.b1
        h = np.maximum(z1, 0.0)
        q = h @ self.w2.T + self.b2
        picked = q[np.arange(n), actions]
        err = picked - targets
        loss = float(np.mean(err ** 2))

        dq = np.zeros_like(q)
        dq[np.arange(n), actions] = 2.0 * err / n
        dw2 = dq.T @ h
        db2 = dq.sum(axis=0)
        dh = dq @ self.w2
        dz1 = dh * (z1 > 0.0)
        dw1 = dz1.T @ x
        db1 = dz1.sum(axis=0)
        return loss, [dw1, db1, dw2, db2]

    def sgd_step(self, grads, lr: float) -> None:
        for p, g in zip(self.params(), grads):
            p -= lr * g


class ReplayBuffer:
    """Bounded ring of (obs, action, reward, next_obs) transitions."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, 6))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, 6))
        self.size = 0
        self._head = 0

    def push(self, obs_vec, action, reward, next_obs_vec) -> None:
        i = self._head
        self.obs[i] = obs_vec
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs_vec
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=batch)
        return (self.obs[idx], self.actions[idx], self.rewards[idx],
                self.next_obs[idx])


@dataclass(frozen=True)
class SibylConfig:
    hidden: int = 32
    learning_rate: float = 5e-3
    gamma: float = 0.9
    epsilon: float = 0.05
    epsilon_final: float = 0.01
    epsilon_decay_steps: int = 10_000
    batch_size: int = 32
    buffer_capacity: int = 4096
    sync_period: int = 500
    train_freq: int = 1
    # training-side gain on the reward so microsecond-scale reciprocals
    # land in a range the regression resolves quickly; the reward function
    # itself is untouched
    reward_gain: float = 100.0

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.sync_period < 1 or self.train_freq < 0:
            raise ValueError("sync_period >= 1 and train_freq >= 0 required")
        if self.reward_gain <= 0:
            raise ValueError("reward_gain must be positive")


class SibylAgent:
    """Placement policy with decoupled inference/training networks."""

    enforce_capacity = True

    def __init__(self, config: SibylConfig | None = None, seed: int = 0):
        self.config = config or SibylConfig()
        self.rng = np.random.default_rng(seed)
        self.train_net = ValueNet(self.config.hidden, self.rng)
        self.infer_net = ValueNet(self.config.hidden)
        self.infer_net.copy_from(self.train_net)
        self.buffer = ReplayBuffer(self.config.buffer_capacity)
        self.decisions = 0
        self.train_steps = 0
        self.syncs = 0
        self._pending = None  # (obs_vec, action, reward) awaiting next obs

    def _epsilon(self) -> float:
        c = self.config
        if not c.epsilon_decay_steps:
            return c.epsilon
        t = min(1.0, self.decisions / c.epsilon_decay_steps)
        return c.epsilon + (c.epsilon_final - c.epsilon) * t

    def place(self, req, sim) -> str:
        obs = observe(sim, req)
        vec = obs.normalized()
        if self._pending is not None:
            pobs, pact, prew = self._pending
            self.buffer.push(pobs, pact, prew, vec)
            self._pending = None
            for _ in range(self.config.train_freq):
                self.train_step()
        if self.rng.random() < self._epsilon():
            action = int(self.rng.integers(len(ACTIONS)))
        else:
            action = int(np.argmax(self.infer_net.q_values(vec)))
        self.decisions += 1
        if self.decisions % self.config.sync_period == 0:
            self.sync_networks()
        self._pending = (vec, action, 0.0)
        return ACTIONS[action]

    def notify(self, req, action, latency_us, evicted, evict_us, sim) -> None:
        reward = placement_reward(latency_us, evicted, evict_us)
        if self._pending is not None:
            self._pending = (self._pending[0], self._pending[1],
                             reward * self.config.reward_gain)

    def train_step(self) -> float | None:
        """One TD-regression step on the training network; no-op while the
        buffer is empty. Returns the minibatch loss."""
        if self.buffer.size == 0:
            return None
        obs, actions, rewards, next_obs = self.buffer.sample(
            self.config.batch_size, self.rng)
        next_q = self.train_net.forward(next_obs)
        targets = rewards + self.config.gamma * next_q.max(axis=1)
        loss, grads = self.train_net.loss_and_grads(obs, actions, targets)
        self.train_net.sgd_step(grads, self.config.learning_rate)
        self.train_steps += 1
        return loss

    def sync_networks(self) -> None:
        self.infer_net.copy_from(self.train_net)
        self.syncs += 1
