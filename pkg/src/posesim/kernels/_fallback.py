"""Pure-Python kernels.  Bit-for-bit identical to the compiled versions."""

MASK = (1 << 64) - 1


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)


def crash_trials(n: int, m: int, s: int, trials: int, seed: int) -> int:
    """Count trials whose uniformly drawn s-subset of n labels has only labels < m.

    Each trial is a partial Fisher-Yates shuffle that stops at the first
    label >= m (an honest enclave) and is undone afterwards.
    """
    if not (0 <= m <= n and 1 <= s <= n and trials >= 0):
        raise ValueError("need 0 <= m <= n, 1 <= s <= n, trials >= 0")
    rng = SplitMix64(seed)
    perm = list(range(n))
    swaps = [0] * s
    crashes = 0
    for _ in range(trials):
        k = 0
        crashed = True
        for i in range(s):
            j = i + rng.next() % (n - i)
            perm[i], perm[j] = perm[j], perm[i]
            swaps[k] = j
            k += 1
            if perm[i] >= m:
                crashed = False
                break
        if crashed:
            crashes += 1
        for i in range(k - 1, -1, -1):
            j = swaps[i]
            perm[i], perm[j] = perm[j], perm[i]
    return crashes


def quicksort_steps(values, seed: int):
    """Sort with random pivots; returns ``(sorted list, comparisons)``."""
    a = list(values)
    rng = SplitMix64(seed)
    comparisons = 0
    stack = [(0, len(a) - 1)]
    while stack:
        lo, hi = stack.pop()
        if lo >= hi:
            continue
        p = lo + rng.next() % (hi - lo + 1)
        a[p], a[hi] = a[hi], a[p]
        pivot = a[hi]
        i = lo
        for j in range(lo, hi):
            comparisons += 1
            if a[j] < pivot:
                a[i], a[j] = a[j], a[i]
                i += 1
        a[i], a[hi] = a[hi], a[i]
        stack.append((lo, i - 1))
        stack.append((i + 1, hi))
    return a, comparisons
