"""Counter-based random streams keyed by (seed, stream, chain, purpose).

Each chain owns one independent stream per purpose tag. A draw for a subset
of chains advances only those chains' counters, so results never depend on
how chains are grouped into blocks or workers.

The generator is the SplitMix64 output function applied to
``key + counter * golden``; keys are hashed from the user seed with numpy's
``SeedSequence`` and mixed with the stream, chain and tag identifiers.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

TAGS = ("init", "noise", "refresh_clock", "refresh_velocity")

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


class ChainStreams:
    """Streams for chains ``first, first + 1, ..., first + n - 1``."""

    def __init__(self, seed: int, n_chains: int, first_chain: int = 0, stream: int = 0):
        base = np.random.SeedSequence([int(seed), int(stream)]).generate_state(1, dtype=np.uint64)[0]
        chains = np.arange(first_chain, first_chain + n_chains, dtype=np.uint64)
        self.seed, self.stream = int(seed), int(stream)
        self.first_chain, self.n_chains = int(first_chain), int(n_chains)
        with np.errstate(over="ignore"):
            chain_key = _mix(np.uint64(base) + chains * _GOLDEN)
            self._keys = np.stack(
                [_mix(chain_key ^ _mix(np.uint64(t + 1) * _GOLDEN + np.uint64(base)))
                 for t in range(len(TAGS))], axis=1)
        self._counters = np.zeros((n_chains, len(TAGS)), dtype=np.uint64)

    def _tag(self, tag: str) -> int:
        try:
            return TAGS.index(tag)
        except ValueError:
            raise ValueError(f"unknown stream tag {tag!r}") from None

    def _rows(self, rows):
        if rows is None:
            return np.arange(self.n_chains)
        return np.asarray(rows, dtype=np.intp)

    def bits(self, tag: str, rows=None, k: int = 1) -> np.ndarray:
        """``k`` raw 64-bit words for each selected chain, shape (len(rows), k)."""
        j = self._tag(tag)
        rows = slice(None) if rows is None else np.asarray(rows, dtype=np.intp)
        start = self._counters[rows, j]
        steps = np.arange(1, k + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            state = self._keys[rows, j][:, None] + (start[:, None] + steps) * _GOLDEN
        self._counters[rows, j] = start + np.uint64(k)
        return _mix(state)

    def uniform(self, tag: str, rows=None, k: int = 1) -> np.ndarray:
        """Uniforms in the open interval (0, 1)."""
        b = self.bits(tag, rows, k)
        return ((b >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53

    def normal(self, tag: str, rows=None, k: int = 1) -> np.ndarray:
        return ndtri(self.uniform(tag, rows, k))

    def exponential(self, tag: str, rate, rows=None) -> np.ndarray:
        return -np.log(self.uniform(tag, rows, 1)[:, 0]) / rate

    def subset(self, first: int, n: int) -> "ChainStreams":
        """Independent view on a contiguous block (fresh counters)."""
        return ChainStreams(self.seed, n, self.first_chain + first, self.stream)
