"""Mini-batch schedules: which sub-potential feeds each integrator step.

Three modes:

- FULL: every step sees the full potential, gradient scale 1.
- PERMUTATION_SWEEP: steps consume batches in uniformly random permutations
  of {0..K-1}, one fresh independent permutation per sweep of K steps.
- IID_UNIFORM: each step draws a batch id uniformly and independently.

Mini-batch modes report gradient scale K: the simulated SDE replaces grad U
by K * grad U_i, which is unbiased for the full gradient under both random
modes (exactly so when averaged over one complete sweep).
"""

from __future__ import annotations

import enum

from .core import RngStream

__all__ = ["BatchMode", "BatchSchedule", "make_schedule"]


class BatchMode(str, enum.Enum):
    FULL = "full"
    PERMUTATION_SWEEP = "perm"
    IID_UNIFORM = "iid"


class BatchSchedule:
    """Deterministic-given-seed emitter of (batch id, gradient scale) pairs.

    Batch ids are 0-based; the full-batch marker is None. Owned by a single
    chain; `next` mutates the cursor.
    """

    def __init__(self, mode: BatchMode, n_batches: int, rng: RngStream):
        self.mode = BatchMode(mode)
        self.n_batches = int(n_batches)
        if self.n_batches < 1:
            raise ValueError("n_batches must be >= 1")
        self.rng = rng
        self._sweep = None
        self._cursor = 0

    def next(self) -> tuple[int | None, float]:
        if self.mode is BatchMode.FULL:
            return None, 1.0
        scale = float(self.n_batches)
        if self.mode is BatchMode.IID_UNIFORM:
            return self.rng.integers(self.n_batches), scale
        if self._sweep is None or self._cursor >= self.n_batches:
            self._sweep = self.rng.permutation(self.n_batches)
            self._cursor = 0
        batch = int(self._sweep[self._cursor])
        self._cursor += 1
        return batch, scale


def make_schedule(mode, n_batches: int, rng: RngStream) -> BatchSchedule:
    """Build a schedule; mode may be a BatchMode or its string value."""
    return BatchSchedule(BatchMode(mode), n_batches, rng)
