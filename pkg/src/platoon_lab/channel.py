"""Gilbert burst-noise model for per-link V2V packet loss.

Each directed link is a two-state (Good/Bad) Markov chain stepped once per
controller period.  In Good every packet arrives; in Bad only a fraction
``r_recv_bad`` does.  The long-run packet reception rate is

    gamma = 1 - p_gb * (1 - r_recv_bad) / (p_gb + q_bg)

The i.i.d. loss model is the special case of a chain stuck in Bad
(p_gb=1, q_bg=0), where gamma = r_recv_bad.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class ChannelMode(Enum):
    GOOD = "good"
    BAD = "bad"


@dataclass(frozen=True)
class GilbertParams:
    """Transition probabilities per step and Bad-state reception probability."""

    p_gb: float
    q_bg: float
    r_recv_bad: float

    def __post_init__(self):
        for name in ("p_gb", "q_bg", "r_recv_bad"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def stationary_bad_fraction(self) -> float:
        if self.p_gb + self.q_bg == 0.0:
            raise ValueError("p_gb + q_bg must be positive")
        return self.p_gb / (self.p_gb + self.q_bg)


@dataclass(frozen=True)
class LinkSample:
    """Outcome of one packet transmission attempt."""

    received: bool

    def weight(self) -> float:
        return 1.0 if self.received else 0.0


class ChannelState:
    """Mutable per-link channel: current mode plus a private random stream.

    Single-owner: step one link from one thread only.  Distinct links must be
    created with independent streams (see :func:`link_streams`).
    """

    def __init__(self, mode: ChannelMode, rng: np.random.Generator):
        self.mode = mode
        self.rng = rng

    @classmethod
    def stationary(cls, params: GilbertParams, rng: np.random.Generator) -> "ChannelState":
        """Draw the initial mode from the chain's stationary distribution.

        Consumes one uniform so the stream stays aligned with the per-step
        draws regardless of the outcome.
        """
        bad = rng.random() < params.stationary_bad_fraction()
        return cls(ChannelMode.BAD if bad else ChannelMode.GOOD, rng)

    @classmethod
    def in_mode(cls, mode: ChannelMode, rng: np.random.Generator) -> "ChannelState":
        return cls(mode, rng)


def gamma_of(params: GilbertParams) -> float:
    """Average packet reception rate of the Gilbert channel."""
    if params.p_gb + params.q_bg == 0.0:
        raise ValueError("reception rate undefined: p_gb + q_bg = 0")
    return 1.0 - params.p_gb * (1.0 - params.r_recv_bad) / (params.p_gb + params.q_bg)


def channel_step(state: ChannelState, params: GilbertParams) -> tuple[ChannelState, LinkSample]:
    """Advance the chain one step, then sample the reception outcome.

    Always consumes exactly two uniforms (transition, reception) so that
    pre-drawn vectorized streams stay aligned with step-by-step use; the
    reception draw is ignored while in Good.
    """
    u_trans = state.rng.random()
    if state.mode is ChannelMode.GOOD:
        if u_trans < params.p_gb:
            state.mode = ChannelMode.BAD
    else:
        if u_trans < params.q_bg:
            state.mode = ChannelMode.GOOD
    u_recv = state.rng.random()
    if state.mode is ChannelMode.GOOD:
        received = True
    else:
        received = u_recv < params.r_recv_bad
    return state, LinkSample(received)


def estimate_gamma(samples, window: int) -> float:
    """Trailing-window mean of reception flags, as a receiver would measure."""
    if window < 1:
        raise ValueError("window must be >= 1")
    seq = list(samples)
    if len(seq) < window:
        raise ValueError(f"need at least {window} samples, got {len(seq)}")
    tail = seq[-window:]
    return sum(1.0 if s.received else 0.0 for s in tail) / window


def platoon_gamma(link_estimates) -> float:
    """Platoon-level reception rate: the worst individual link."""
    vals = list(link_estimates)
    if not vals:
        raise ValueError("no link estimates")
    for g in vals:
        if not 0.0 <= g <= 1.0:
            raise ValueError(f"estimate {g} outside [0, 1]")
    return min(vals)


def link_streams(master_seed: int, n_links: int) -> list[np.random.Generator]:
    """Independent, reproducible per-link streams derived from one seed.

    Stream ``i`` depends only on (master_seed, i), so adding links never
    perturbs existing ones.
    """
    return [
        np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(i,)))
        for i in range(n_links)
    ]


def sample_table(params: GilbertParams, rng: np.random.Generator, n_steps: int,
                 start_mode: ChannelMode | None = None) -> np.ndarray:
    """Pre-draw a whole reception sequence for one link (floats in {0, 1}).

    Equivalent to ``channel_step`` applied ``n_steps`` times after stationary
    (or forced-mode) initialization: same stream consumption, same outcomes.
    """
    if start_mode is None:
        bad = rng.random() < params.stationary_bad_fraction()
    else:
        bad = start_mode is ChannelMode.BAD
    us = rng.random((n_steps, 2))
    out = np.empty(n_steps)
    p, q, r = params.p_gb, params.q_bg, params.r_recv_bad
    for k in range(n_steps):
        if bad:
            if us[k, 0] < q:
                bad = False
        else:
            if us[k, 0] < p:
                bad = True
        out[k] = 1.0 if not bad else (1.0 if us[k, 1] < r else 0.0)
    return out
