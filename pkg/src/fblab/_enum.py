"""Mixed-radix enumeration of output words y^n.

Word ``y = (y_0, ..., y_{n-1})`` has index ``sum_j y_j * q**(n-1-j)``,
so the first letter is the most significant digit.
"""

import numpy as np

DEFAULT_GUARD = 2 ** 24
BLOCK = 2 ** 16


class GuardExceeded(ValueError):
    """Raised when an exhaustive enumeration would exceed the state guard."""


def space_size(q, n, guard=DEFAULT_GUARD):
    size = int(q) ** int(n)
    if guard is not None and size > guard:
        raise GuardExceeded(f"|Y|^n = {q}^{n} = {size} exceeds guard {guard}")
    return size


def digits(start, stop, q, n):
    """(stop-start, n) array of the letters of words start..stop-1."""
    idx = np.arange(start, stop, dtype=np.int64)
    out = np.empty((idx.size, n), dtype=np.int64)
    for j in range(n - 1, -1, -1):
        out[:, j] = idx % q
        idx //= q
    return out


def word_index(word, q):
    idx = 0
    for s in word:
        idx = idx * q + int(s)
    return idx


def block_ranges(total, block=BLOCK):
    return [(s, min(s + block, total)) for s in range(0, total, block)]


def cond_block(W, words, start, stop):
    """P(y | c_i) for every codeword row and every y in [start, stop).

    Returns an (M, stop-start) array.
    """
    W = np.asarray(W, dtype=float)
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    M, n = words.shape
    out = np.ones((M, stop - start))
    if n == 0:
        return out
    d = digits(start, stop, W.shape[1], n)
    for j in range(n):
        out *= W[words[:, j]][:, d[:, j]]
    return out


def product_block(base, n, start, stop):
    """Masses of the n-fold product of ``base`` on words [start, stop)."""
    base = np.asarray(base, dtype=float)
    out = np.ones(stop - start)
    if n == 0:
        return out
    d = digits(start, stop, base.size, n)
    for j in range(n):
        out *= base[d[:, j]]
    return out


def product_full(base, n, guard=DEFAULT_GUARD):
    """Full n-fold product vector via repeated outer products."""
    base = np.asarray(base, dtype=float)
    space_size(base.size, n, guard)
    out = np.ones(1)
    for _ in range(n):
        out = np.outer(out, base).ravel()
    return out
