"""Seedable, portable 64-bit PRNG used across trace generation and agents.

The stream is SplitMix64: the state advances by the golden-gamma constant
0x9E3779B97F4A7C15 and each output is finalized with the mix constants
0xBF58476D1CE4E5B9 and 0x94D049BB133111EB (xor-shifts by 30, 27, 31).
Reimplementing those constants in any language reproduces the stream bit
for bit, which is what keeps generated traces identical across platforms.
"""

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """One SplitMix64 finalization round. Also used to derive salts/seeds."""
    x &= MASK64
    x ^= x >> 30
    x = (x * _MIX1) & MASK64
    x ^= x >> 27
    x = (x * _MIX2) & MASK64
    x ^= x >> 31
    return x


def derive_seed(seed: int, index: int) -> int:
    """Deterministic child seed for run #index of an experiment seed."""
    return mix64((seed & MASK64) ^ mix64(index + 1))


class Rng64:
    """SplitMix64 generator with the small sampling surface we need."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & MASK64
        return mix64(self._state)

    def randrange(self, n: int) -> int:
        # Modulo reduction: bias is < n/2^64, irrelevant at our range sizes,
        # and the result is identical on every platform.
        if n <= 0:
            raise ValueError("randrange requires n >= 1")
        return self.next_u64() % n

    def random(self) -> float:
        """Float in [0, 1) built from the top 53 bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)

    def choice(self, seq):
        return seq[self.randrange(len(seq))]
