from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Tuple

from utils.errors import OrderLimitError

MAX_ORDER = 8


@dataclass(frozen=True)
class Permutation:
    """A bijection j -> mapping[j] on {0..N-1} with its sign.

    Stored 0-based; ``one_based`` gives the {1..N} view.
    """
    mapping: Tuple[int, ...]
    sign: int

    @property
    def order(self) -> int:
        return len(self.mapping)

    @property
    def one_based(self) -> Tuple[int, ...]:
        return tuple(m + 1 for m in self.mapping)

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.mapping)
        for j, target in enumerate(self.mapping):
            inv[target] = j
        return Permutation(tuple(inv), self.sign)


def parity_by_inversions(mapping) -> int:
    inversions = sum(
        1
        for a in range(len(mapping))
        for b in range(a + 1, len(mapping))
        if mapping[a] > mapping[b]
    )
    return -1 if inversions % 2 else 1


def heap_permutations(n: int) -> Iterator[Permutation]:
    """Iterative Heap's algorithm; every swap flips the running sign."""
    if n < 1:
        raise OrderLimitError(f"permutation order must be >= 1, got {n}", order=n)
    if n > MAX_ORDER:
        raise OrderLimitError(f"permutation order {n} exceeds the limit {MAX_ORDER}", order=n, limit=MAX_ORDER)

    items = list(range(n))
    counters = [0] * n
    sign = 1
    yield Permutation(tuple(items), sign)

    i = 1
    while i < n:
        if counters[i] < i:
            if i % 2 == 0:
                items[0], items[i] = items[i], items[0]
            else:
                items[counters[i]], items[i] = items[i], items[counters[i]]
            sign = -sign
            yield Permutation(tuple(items), sign)
            counters[i] += 1
            i = 1
        else:
            counters[i] = 0
            i += 1


@lru_cache(maxsize=None)
def all_permutations(n: int) -> Tuple[Permutation, ...]:
    return tuple(heap_permutations(n))
