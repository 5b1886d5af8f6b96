"""Point-mass longitudinal vehicle model with a first-order actuation lag.

Every vehicle is a triple-integrator chain x -> v -> a where the achieved
acceleration follows the commanded one through ``tau * da/dt + a = u``.
Because the model is linear and the command is held constant over each
controller step, the exact zero-order-hold update has a closed form and no
integration error accumulates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class VehicleState:
    """Position (m), velocity (m/s) and achieved acceleration (m/s^2)."""

    x: float
    v: float
    a: float

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.v) and math.isfinite(self.a)


@dataclass(frozen=True)
class Maneuver:
    """Piecewise-constant commanded acceleration profile for the lead vehicle.

    ``segments`` is an ordered list of (start_time, acceleration) pairs; each
    acceleration holds until the next segment starts.  A finite sequence of
    bounded segments keeps the input square-integrable over any finite
    horizon, which the peak-error bounds require.
    """

    segments: tuple[tuple[float, float], ...]
    initial_velocity: float
    a_max: float = 10.0

    def __post_init__(self):
        segs = tuple((float(t), float(a)) for t, a in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("maneuver needs at least one segment")
        if segs[0][0] != 0.0:
            raise ValueError("first segment must start at t=0")
        for (t0, _), (t1, _) in zip(segs, segs[1:]):
            if t1 <= t0:
                raise ValueError("segment start times must be strictly increasing")
        for _, a in segs:
            if not math.isfinite(a) or abs(a) > self.a_max:
                raise ValueError(f"segment acceleration {a} exceeds bound {self.a_max}")
        if not math.isfinite(self.initial_velocity):
            raise ValueError("initial velocity must be finite")

    def accel_at(self, t: float) -> float:
        """Commanded acceleration at time ``t`` (left-continuous lookup)."""
        u = 0.0
        for start, a in self.segments:
            if t >= start:
                u = a
            else:
                break
        return u

    @staticmethod
    def constant_velocity(v0: float) -> "Maneuver":
        return Maneuver(segments=((0.0, 0.0),), initial_velocity=v0)


@dataclass(frozen=True)
class TimeGrid:
    """Fixed simulation grid; ``horizon`` must be an integer number of steps."""

    dt: float
    horizon: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        steps = self.horizon / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("horizon must be an integer multiple of dt")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def times(self):
        import numpy as np

        return np.arange(self.n_steps + 1) * self.dt


def step_lag(state: VehicleState, u: float, tau: float, dt: float) -> VehicleState:
    """Advance one vehicle by ``dt`` with the command ``u`` held constant.

    Exact discretization of x' = v, v' = a, a' = (u - a)/tau:

        a(t+dt) = u + (a - u) exp(-dt/tau)
        v(t+dt) = v + u dt + (a - u) tau (1 - exp(-dt/tau))
        x(t+dt) = x + v dt + u dt^2/2 + (a - u) tau (dt - tau (1 - exp(-dt/tau)))
    """
    if tau <= 0 or dt <= 0:
        raise ValueError("tau and dt must be positive")
    if not (state.is_finite() and math.isfinite(u)):
        raise ValueError("non-finite state or command")
    decay = math.exp(-dt / tau)
    rem = 1.0 - decay
    da = state.a - u
    a_new = u + da * decay
    v_new = state.v + u * dt + da * tau * rem
    x_new = state.x + state.v * dt + 0.5 * u * dt * dt + da * tau * (dt - tau * rem)
    return VehicleState(x_new, v_new, a_new)


def lead_trajectory(m: Maneuver, grid: TimeGrid, tau: float) -> list[VehicleState]:
    """Integrate the lead vehicle's own lag dynamics under the maneuver.

    The maneuver command is not clamped; target speeds are encoded by segment
    duration (the lag smears the transition but preserves the velocity change).
    Returns states at every grid point including t=0.
    """
    state = VehicleState(0.0, m.initial_velocity, 0.0)
    out = [state]
    t = 0.0
    for _ in range(grid.n_steps):
        state = step_lag(state, m.accel_at(t), tau, grid.dt)
        out.append(state)
        t += grid.dt
    return out
