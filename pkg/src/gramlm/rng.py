"""Seeded pseudo-random numbers with identical streams on every platform.

The generator is splitmix64: all state updates are fixed-width 64-bit
integer arithmetic, so a seed produces the same stream regardless of OS,
architecture, or numpy build.  Doubles are formed from the top 53 bits.
"""

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix(z):
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return z ^ (z >> 31)


class SplitMix64:
    """splitmix64 stream seeded with a 64-bit integer."""

    def __init__(self, seed):
        self._seed = int(seed) & _MASK
        self._state = self._seed

    def u64(self):
        """Next raw 64-bit value."""
        self._state = (self._state + _GAMMA) & _MASK
        return _mix(self._state)

    def random(self):
        """Uniform double in [0, 1), 53-bit resolution."""
        return (self.u64() >> 11) * (2.0 ** -53)

    def uniform_open(self):
        """Uniform double in (0, 1); never returns an exact zero."""
        return ((self.u64() >> 11) + 0.5) * (2.0 ** -53)

    def derive(self, index):
        """Independent substream.

        Substream k is seeded with mix(seed xor mix(k+1)), so substreams
        of one seed never overlap the parent stream in practice and the
        rule is reproducible from the documented arithmetic alone.
        """
        return SplitMix64(_mix(self._seed ^ _mix((int(index) + 1) & _MASK)))
