"""Seed-derived bootstrap resampling: row, block, and train/eval draws.

Every draw is a pure function of its arguments and a 64-bit seed, so any
bootstrap can be generated in isolation, in any order, on any worker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

__all__ = [
    "Phase",
    "BootstrapPlan",
    "SampleIndices",
    "derive_seed",
    "row_bootstrap",
    "block_bootstrap",
    "train_eval_split",
    "block_train_eval_split",
    "auto_block_len",
]

_M64 = (1 << 64) - 1


class Phase(Enum):
    SELECTION = "selection"
    ESTIMATION_TRAIN = "estimation-train"
    ESTIMATION_EVAL = "estimation-eval"


_PHASE_TAG = {
    Phase.SELECTION: 0x9E3779B97F4A7C15,
    Phase.ESTIMATION_TRAIN: 0x3C6EF372FE94F82A,
    Phase.ESTIMATION_EVAL: 0xDAA66D2C7DDF443F,
}


def _mix64(v: int) -> int:
    # splitmix64 finalizer; bijective on 64-bit words
    v &= _M64
    v ^= v >> 30
    v = (v * 0xBF58476D1CE4E5B9) & _M64
    v ^= v >> 27
    v = (v * 0x94D049BB133111EB) & _M64
    v ^= v >> 31
    return v


def derive_seed(master_seed: int, phase: Phase, k: int) -> int:
    """Derive the seed for bootstrap k of a phase from the master seed.

    Chained 64-bit mixing: each stage is a bijection, so seeds for distinct
    k under one (master, phase) never collide, and cross-phase collisions
    are vanishingly unlikely.
    """
    h = _mix64(master_seed)
    h = _mix64(h ^ _PHASE_TAG[phase])
    h = _mix64(h ^ (k & _M64))
    return h


@dataclass(frozen=True)
class BootstrapPlan:
    """Resampling configuration for one fit.

    b1 selection bootstraps, b2 estimation bootstraps.  block_len applies
    to time-series fits; None means ceil(sqrt(n_effective)) at draw time.
    """

    master_seed: int
    b1: int = 5
    b2: int = 5
    subsample_fraction: float = 0.8
    eval_fraction: float = 0.2
    block_len: Optional[int] = None

    def __post_init__(self):
        if self.b1 < 1 or self.b2 < 1:
            raise ValueError("b1 and b2 must be at least 1")
        if not (0.0 < self.subsample_fraction <= 1.0):
            raise ValueError("subsample_fraction must be in (0, 1]")
        if not (0.0 < self.eval_fraction < 1.0):
            raise ValueError("eval_fraction must be in (0, 1)")
        if self.block_len is not None and self.block_len < 1:
            raise ValueError("block_len must be positive or None")


@dataclass(frozen=True, eq=False)
class SampleIndices:
    """Row indices of one draw, tagged with its phase and bootstrap id."""

    indices: np.ndarray
    phase: Phase
    k: int


def auto_block_len(n_effective: int) -> int:
    """Default bootstrap block length, ceil(sqrt(n))."""
    return int(math.ceil(math.sqrt(n_effective)))


def row_bootstrap(
    n: int, fraction: float, seed: int, *, phase: Phase = Phase.SELECTION, k: int = 0
) -> SampleIndices:
    """Draw ceil(fraction * n) row indices i.i.d. uniform with replacement."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not (0.0 < fraction <= 1.0):
        raise ValueError("fraction must be in (0, 1]")
    m = math.ceil(fraction * n)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=m)
    return SampleIndices(idx.astype(np.intp), phase, k)


def block_bootstrap(
    n_effective: int,
    block_len: int,
    seed: int,
    fraction: float = 1.0,
    *,
    phase: Phase = Phase.SELECTION,
    k: int = 0,
) -> SampleIndices:
    """Draw whole consecutive blocks with replacement, preserving order inside.

    Rows are split into floor(n/block_len) non-overlapping blocks (a short
    tail is dropped); blocks are drawn until the total length reaches
    ceil(fraction * n_effective) and concatenated in draw order.
    """
    if block_len < 1:
        raise ValueError("block_len must be positive")
    if block_len > n_effective:
        raise ValueError(
            f"block_len {block_len} exceeds the {n_effective} available rows"
        )
    if not (0.0 < fraction <= 1.0):
        raise ValueError("fraction must be in (0, 1]")
    n_blocks = n_effective // block_len
    target = math.ceil(fraction * n_effective)
    n_draws = -(-target // block_len)
    rng = np.random.default_rng(seed)
    blocks = rng.integers(0, n_blocks, size=n_draws)
    offsets = np.arange(block_len, dtype=np.intp)
    idx = (blocks[:, None] * block_len + offsets[None, :]).reshape(-1)
    return SampleIndices(idx.astype(np.intp), phase, k)


def train_eval_split(
    n: int, eval_fraction: float, seed: int, *, k: int = 0
) -> tuple[SampleIndices, SampleIndices]:
    """Partition rows into a held-out set and a bootstrap of the rest.

    ceil(eval_fraction * n) distinct rows form the evaluation set; the
    training draw is a with-replacement bootstrap of the remaining rows, so
    no source row appears on both sides.
    """
    if n < 2:
        raise ValueError("n must be at least 2 to split")
    if not (0.0 < eval_fraction < 1.0):
        raise ValueError("eval_fraction must be in (0, 1)")
    m_eval = math.ceil(eval_fraction * n)
    if m_eval >= n:
        raise ValueError("eval_fraction leaves no training rows")
    rng = np.random.default_rng(seed)
    eval_rows = np.sort(rng.choice(n, size=m_eval, replace=False))
    remaining = np.setdiff1d(np.arange(n), eval_rows)
    draws = rng.integers(0, remaining.shape[0], size=remaining.shape[0])
    train = remaining[draws]
    return (
        SampleIndices(train.astype(np.intp), Phase.ESTIMATION_TRAIN, k),
        SampleIndices(eval_rows.astype(np.intp), Phase.ESTIMATION_EVAL, k),
    )


def block_train_eval_split(
    n_effective: int,
    block_len: int,
    eval_fraction: float,
    seed: int,
    *,
    k: int = 0,
) -> tuple[SampleIndices, SampleIndices]:
    """Block-level analog of train_eval_split for time-series rows.

    Whole blocks are held out for evaluation (kept in temporal order); the
    training draw bootstraps the remaining blocks.  With block_len = 1 this
    reproduces train_eval_split exactly, draw for draw.
    """
    if block_len < 1:
        raise ValueError("block_len must be positive")
    n_blocks = n_effective // block_len
    if n_blocks < 2:
        raise ValueError("need at least two whole blocks to split")
    if not (0.0 < eval_fraction < 1.0):
        raise ValueError("eval_fraction must be in (0, 1)")
    m_eval = math.ceil(eval_fraction * n_blocks)
    if m_eval >= n_blocks:
        raise ValueError("eval_fraction leaves no training blocks")
    rng = np.random.default_rng(seed)
    eval_blocks = np.sort(rng.choice(n_blocks, size=m_eval, replace=False))
    remaining = np.setdiff1d(np.arange(n_blocks), eval_blocks)
    draws = rng.integers(0, remaining.shape[0], size=remaining.shape[0])
    train_blocks = remaining[draws]
    offsets = np.arange(block_len, dtype=np.intp)
    train = (train_blocks[:, None] * block_len + offsets[None, :]).reshape(-1)
    ev = (eval_blocks[:, None] * block_len + offsets[None, :]).reshape(-1)
    return (
        SampleIndices(train.astype(np.intp), Phase.ESTIMATION_TRAIN, k),
        SampleIndices(ev.astype(np.intp), Phase.ESTIMATION_EVAL, k),
    )
