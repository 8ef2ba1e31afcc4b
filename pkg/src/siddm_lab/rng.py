"""Deterministic random streams: lane-parallel xoshiro256** with Box-Muller Gaussians.

The stream is fully specified so that any implementation (in any language)
can reproduce it bit-for-bit:

* Seeding: a single splitmix64 sequence started from the 64-bit master seed
  produces ``4 * LANES`` words; lane ``i`` gets state ``(s0, s1, s2, s3) =
  words[4i : 4i+4]``.
* Generation: one step advances every lane's xoshiro256** state once and
  emits ``LANES`` raw uint64 outputs ordered by lane index.  Draws consume
  this flat output sequence through a FIFO buffer, so the stream does not
  depend on how requests are batched.
* Uniforms: ``(raw >> 11) * 2**-53``, in [0, 1).
* Normals: Box-Muller on consecutive uniform pairs ``(u1, u2)``:
  ``r = sqrt(-2 ln max(u1, 2**-53))``, emitting ``r cos(2 pi u2)`` then
  ``r sin(2 pi u2)``.  An unconsumed second element is cached and served
  first on the next request.
"""

from __future__ import annotations

import numpy as np

_M64 = (1 << 64) - 1
_TINY = 2.0**-53


def _splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; return (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _M64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return state, z ^ (z >> 31)


def derive_seed(seed: int, *tags: int) -> int:
    """Derive a child seed from a master seed and integer tags.

    Used to give side streams (evaluation sampling, reference data) their
    own generators without disturbing the main training stream.
    """
    x = seed & _M64
    for tag in tags:
        _, x = _splitmix64(x ^ (tag & _M64))
    _, out = _splitmix64(x)
    return out


def _rotl(x: np.ndarray, k: int) -> np.ndarray:
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


class Xoshiro256(object):
    """Lane-parallel xoshiro256** generator (see module docstring)."""

    LANES = 64

    def __init__(self, seed: int):
        state = seed & _M64
        words = []
        for _ in range(4 * self.LANES):
            state, out = _splitmix64(state)
            words.append(out)
        w = np.array(words, dtype=np.uint64).reshape(self.LANES, 4)
        self._s = [w[:, i].copy() for i in range(4)]
        self._buf = np.empty(0, dtype=np.uint64)
        self._spare: float | None = None

    def _step(self) -> np.ndarray:
        s0, s1, s2, s3 = self._s
        out = _rotl(s1 * np.uint64(5), 7) * np.uint64(9)
        t = s1 << np.uint64(17)
        s2 = s2 ^ s0
        s3 = s3 ^ s1
        s1 = s1 ^ s2
        s0 = s0 ^ s3
        s2 = s2 ^ t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return out

    def _raw(self, n: int) -> np.ndarray:
        chunks = []
        if self._buf.size:
            take = min(n, self._buf.size)
            chunks.append(self._buf[:take])
            self._buf = self._buf[take:]
            n -= take
        while n > 0:
            block = self._step()
            if n >= block.size:
                chunks.append(block)
                n -= block.size
            else:
                chunks.append(block[:n])
                self._buf = block[n:]
                n = 0
        if not chunks:
            return np.empty(0, dtype=np.uint64)
        return np.concatenate(chunks)

    def uniform(self, shape=None) -> np.ndarray | float:
        """Uniform doubles in [0, 1)."""
        n = 1 if shape is None else int(np.prod(shape))
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * _TINY
        if shape is None:
            return float(u[0])
        return u.reshape(shape)

    def normal(self, shape=None) -> np.ndarray | float:
        """Standard normals via Box-Muller on the uniform stream."""
        n = 1 if shape is None else int(np.prod(shape))
        out = np.empty(n, dtype=np.float64)
        k = 0
        if self._spare is not None and n > 0:
            out[0] = self._spare
            self._spare = None
            k = 1
        m = n - k
        if m > 0:
            pairs = (m + 1) // 2
            u = self.uniform((2 * pairs,))
            u1 = np.maximum(u[0::2], _TINY)
            u2 = u[1::2]
            r = np.sqrt(-2.0 * np.log(u1))
            z = np.empty(2 * pairs, dtype=np.float64)
            z[0::2] = r * np.cos(2.0 * np.pi * u2)
            z[1::2] = r * np.sin(2.0 * np.pi * u2)
            out[k:] = z[:m]
            if m % 2 == 1:
                self._spare = float(z[m])
        if shape is None:
            return float(out[0])
        return out.reshape(shape)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray | int:
        """Uniform integers in [low, high)."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        n = 1 if shape is None else int(np.prod(shape))
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * _TINY
        vals = low + np.floor(u * (high - low)).astype(np.int64)
        if shape is None:
            return int(vals[0])
        return vals.reshape(shape)

    def get_state(self) -> dict:
        return {
            "s": [[int(x) for x in lane] for lane in self._s],
            "buf": [int(x) for x in self._buf],
            "spare": self._spare,
        }

    def set_state(self, state: dict) -> None:
        s = state["s"]
        if len(s) != 4 or any(len(lane) != self.LANES for lane in s):
            raise ValueError("rng state does not match lane layout")
        self._s = [np.array(lane, dtype=np.uint64) for lane in s]
        self._buf = np.array(state["buf"], dtype=np.uint64)
        self._spare = state["spare"]
