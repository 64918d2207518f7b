"""SplitMix64, shared bit-for-bit by the Python and compiled tree kernels."""

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, k: int) -> int:
        return self.next() % k


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic child seed for (seed, i, j, ...)."""
    r = SplitMix64(seed)
    s = r.next()
    for p in path:
        r = SplitMix64(s ^ ((p * GOLDEN) & MASK64))
        s = r.next()
    return s
