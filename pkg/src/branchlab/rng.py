"""Deterministic, platform-independent random number generation.

All randomness in the package flows through :class:`Rng`, a xoshiro256**
generator seeded via splitmix64.  Streams are derived, never shared: a
component that needs randomness asks for ``rng.child(label)`` (or
``child(label, index)``) and receives an independent generator whose state
is a pure function of the root seed and the label path.  This is what makes
seeded runs bit-reproducible across machines and across ``--jobs`` settings.

Stream discipline:
  * the CLI owns the root seed;
  * per-command streams are ``child("generate")``, ``child("collect")``, ...;
  * per-instance work uses ``child(label, instance_index)``;
  * forests use ``child("tree", tree_index)`` for per-tree growth.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


def _mix_label(seed: int, label: str, index: int | None) -> int:
    """Fold a label path into a 64-bit seed via repeated splitmix64 steps."""
    state = seed & _MASK
    for byte in label.encode("utf-8"):
        state, out = splitmix64(state ^ byte)
        state ^= out
    if index is not None:
        state, out = splitmix64(state ^ (index & _MASK))
        state ^= out
    _, out = splitmix64(state)
    return out


class Rng:
    """xoshiro256** with splitmix64 seeding and labeled child streams."""

    __slots__ = ("seed", "_s")

    def __init__(self, seed: int):
        self.seed = seed & _MASK
        state = self.seed
        s = []
        for _ in range(4):
            state, out = splitmix64(state)
            s.append(out)
        self._s = s

    def child(self, label: str, index: int | None = None) -> "Rng":
        """Independent generator for the given stream label."""
        return Rng(_mix_label(self.seed, label, index))

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Uniform double in [lo, hi); 53-bit resolution."""
        u = (self.next_u64() >> 11) * (2.0 ** -53)
        return lo + u * (hi - lo)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection sampling (unbiased)."""
        if n <= 0:
            raise ValueError("randint bound must be positive")
        limit = (_MASK + 1) - ((_MASK + 1) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), by partial Fisher-Yates."""
        if k > n:
            raise ValueError("cannot sample more indices than available")
        pool = list(range(n))
        for i in range(k):
            j = i + self.randint(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]
