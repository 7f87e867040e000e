"""Integer-delay FIFO channels for vector signals."""

import numpy as np

from .errors import DimensionError

PREFILL_POLICIES = ("zeros", "hold_initial")


class DelayLine:
    """Delivers the sample pushed ``delay`` ticks ago.

    Parameters
    ----------
    delay : int
        Number of ticks, >= 0. A zero delay is a pass-through.
    width : int
        Dimension of each sample.
    prefill : {"zeros", "hold_initial"}
        What is read before ``delay`` samples have been pushed: zeros, or
        the very first sample pushed.
    """

    def __init__(self, delay, width, prefill="zeros"):
        if delay < 0 or int(delay) != delay:
            raise ValueError(f"delay must be a nonnegative integer, got {delay}")
        if prefill not in PREFILL_POLICIES:
            raise ValueError(f"unknown prefill policy {prefill!r}")
        self.delay = int(delay)
        self.width = int(width)
        self.prefill = prefill
        self._buf = np.zeros((self.delay, self.width))
        self._head = 0
        self._pushed = 0

    def __len__(self):
        return self.delay

    def push_and_read(self, sample):
        sample = np.asarray(sample, dtype=float).reshape(-1)
        if sample.shape[0] != self.width:
            raise DimensionError(f"sample width {sample.shape[0]} != line width {self.width}")
        if self.delay == 0:
            return sample.copy()
        if self._pushed == 0 and self.prefill == "hold_initial":
            self._buf[:] = sample
        out = self._buf[self._head].copy()
        self._buf[self._head] = sample
        self._head = (self._head + 1) % self.delay
        self._pushed += 1
        return out
