"""Regenerates the sample_images golden files with a pure-Python MT19937-64.

Usage: python3 make_sample_golden.py [out_dir]
"""
import sys
from pathlib import Path

MASK = (1 << 64) - 1


class MT64:
    def __init__(self, seed):
        self.mt = [0] * 312
        self.mt[0] = seed & MASK
        for i in range(1, 312):
            prev = self.mt[i - 1]
            self.mt[i] = (6364136223846793005 * (prev ^ (prev >> 62)) + i) & MASK
        self.index = 312

    def _twist(self):
        upper, lower = 0xFFFFFFFF80000000, 0x7FFFFFFF
        for i in range(312):
            x = (self.mt[i] & upper) | (self.mt[(i + 1) % 312] & lower)
            xa = x >> 1
            if x & 1:
                xa ^= 0xB5026F5AA96619E9
            self.mt[i] = self.mt[(i + 156) % 312] ^ xa
        self.index = 0

    def next(self):
        if self.index >= 312:
            self._twist()
        y = self.mt[self.index]
        self.index += 1
        y ^= (y >> 29) & 0x5555555555555555
        y ^= (y << 17) & 0x71D67FFFEDA60000
        y ^= (y << 37) & 0xFFF7EEE000000000
        y ^= y >> 43
        return y & MASK


def uniform_int(rng, n):
    if n <= 1:
        return 0
    limit = MASK - (MASK % n + 1) % n
    draw = rng.next()
    while draw > limit:
        draw = rng.next()
    return draw % n


def sample(names, n, seed):
    items = sorted(names)
    rng = MT64(seed)
    for i in range(len(items), 1, -1):
        j = uniform_int(rng, i)
        items[i - 1], items[j] = items[j], items[i - 1]
    return items[:n]


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent
    names = [f"img_{i:03d}.png" for i in range(100)]
    for seed in (0, 1):
        (out / f"sample_seed{seed}.txt").write_text("\n".join(sample(names, 10, seed)) + "\n")
    # Engine self-check against the value fixed by the C++ standard.
    rng = MT64(5489)
    for _ in range(9999):
        rng.next()
    assert rng.next() == 9981545732273789042


if __name__ == "__main__":
    main()
