"""Pedal-map longitudinal model: (pedal, velocity) -> acceleration surfaces.

A drive-by-wire vehicle exposes throttle/brake pedal fractions; measured maps
relate pedal and speed to the acceleration actually produced.  The platoon
controllers command accelerations, so an inverse lookup (monotone search
along the pedal axis at the current speed) converts the command to a pedal,
the forward map gives the achieved command, and the actuation lag from the
dynamics module is applied on top.

Measured surfaces are loaded from CSV (see ``PedalMap.from_csv``); the
``synthetic_*`` generators produce smooth saturating stand-ins with the same
qualitative shape for simulation studies.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import VehicleState, step_lag


class MapFormatError(ValueError):
    pass


class InversionError(ValueError):
    """Raised when a pedal slice is not monotone and cannot be inverted."""


@dataclass(frozen=True)
class PedalMap:
    """Acceleration grid over strictly ascending pedal and velocity axes."""

    pedal: tuple[float, ...]
    velocity: tuple[float, ...]
    accel: tuple[tuple[float, ...], ...]  # shape len(pedal) x len(velocity)

    def __post_init__(self):
        p = tuple(float(x) for x in self.pedal)
        v = tuple(float(x) for x in self.velocity)
        g = tuple(tuple(float(x) for x in row) for row in self.accel)
        object.__setattr__(self, "pedal", p)
        object.__setattr__(self, "velocity", v)
        object.__setattr__(self, "accel", g)
        if len(p) < 2 or len(v) < 2:
            raise MapFormatError("need at least two breakpoints per axis")
        if any(b <= a for a, b in zip(p, p[1:])) or any(b <= a for a, b in zip(v, v[1:])):
            raise MapFormatError("axes must be strictly ascending")
        if len(g) != len(p) or any(len(row) != len(v) for row in g):
            raise MapFormatError("grid shape does not match axes")

    def grid(self) -> np.ndarray:
        return np.asarray(self.accel, dtype=float)

    @classmethod
    def from_csv(cls, path) -> "PedalMap":
        """CSV layout: header 'pedal,v1,v2,...'; each row 'p,a(p,v1),...'."""
        with open(path, newline="", encoding="utf-8") as fh:
            return cls._parse(fh)

    @classmethod
    def from_csv_text(cls, text: str) -> "PedalMap":
        return cls._parse(io.StringIO(text))

    @classmethod
    def _parse(cls, fh) -> "PedalMap":
        rows = list(csv.reader(fh))
        if not rows or not rows[0] or rows[0][0].strip().lower() != "pedal":
            raise MapFormatError("first cell of the header must be 'pedal'")
        try:
            velocity = [float(x) for x in rows[0][1:]]
            pedal, grid = [], []
            for row in rows[1:]:
                if not row:
                    continue
                pedal.append(float(row[0]))
                grid.append([float(x) for x in row[1:]])
        except ValueError as exc:
            raise MapFormatError(f"non-numeric cell: {exc}") from exc
        return cls(tuple(pedal), tuple(velocity), tuple(tuple(r) for r in grid))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["pedal"] + [repr(v) for v in self.velocity])
            for p, row in zip(self.pedal, self.accel):
                w.writerow([repr(p)] + [repr(a) for a in row])


def _bracket(axis: tuple[float, ...], q: float) -> tuple[int, float]:
    """Clamped cell index and interpolation weight along one axis."""
    if q <= axis[0]:
        return 0, 0.0
    if q >= axis[-1]:
        return len(axis) - 2, 1.0
    idx = int(np.searchsorted(axis, q, side="right")) - 1
    idx = min(idx, len(axis) - 2)
    t = (q - axis[idx]) / (axis[idx + 1] - axis[idx])
    return idx, t


def interp(pmap: PedalMap, pedal: float, velocity: float) -> float:
    """Bilinear interpolation with edge clamping on both axes."""
    i, tp = _bracket(pmap.pedal, pedal)
    j, tv = _bracket(pmap.velocity, velocity)
    g = pmap.accel
    a00, a01 = g[i][j], g[i][j + 1]
    a10, a11 = g[i + 1][j], g[i + 1][j + 1]
    low = a00 + tv * (a01 - a00)
    high = a10 + tv * (a11 - a10)
    return low + tp * (high - low)


def _pedal_slice(pmap: PedalMap, velocity: float) -> np.ndarray:
    """Map values at every pedal breakpoint for a fixed velocity."""
    j, tv = _bracket(pmap.velocity, velocity)
    g = pmap.grid()
    return g[:, j] + tv * (g[:, j + 1] - g[:, j])


def invert(pmap: PedalMap, accel: float, velocity: float) -> float:
    """Pedal value achieving ``accel`` at ``velocity``; clamps outside range.

    The bilinear surface is piecewise linear along the pedal axis at fixed
    velocity, so the inversion is exact within the map's authority.  Raises
    :class:`InversionError` when the slice is not monotone.
    """
    s = _pedal_slice(pmap, velocity)
    d = np.diff(s)
    if np.all(d > 0):
        pass
    elif np.all(d < 0):
        s = -s
        accel = -accel
    else:
        raise InversionError(f"pedal slice at v={velocity} is not monotone")
    if accel <= s[0]:
        return pmap.pedal[0]
    if accel >= s[-1]:
        return pmap.pedal[-1]
    k = int(np.searchsorted(s, accel, side="right")) - 1
    k = min(k, len(s) - 2)
    frac = (accel - s[k]) / (s[k + 1] - s[k])
    return pmap.pedal[k] + frac * (pmap.pedal[k + 1] - pmap.pedal[k])


# Hysteresis band (m/s^2) around the coast line to prevent branch chattering.
COAST_HYSTERESIS = 0.05


@dataclass(frozen=True)
class EmpiricalVehicle:
    """Map-driven vehicle: throttle/brake surfaces plus the actuation lag."""

    throttle: PedalMap
    brake: PedalMap
    tau: float
    state: VehicleState
    braking: bool = False

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")


def coast_accel(veh: EmpiricalVehicle, velocity: float) -> float:
    """Zero-throttle acceleration at the given speed: the branch threshold."""
    return interp(veh.throttle, veh.throttle.pedal[0], velocity)


def step_empirical(veh: EmpiricalVehicle, u_desired: float, dt: float) -> EmpiricalVehicle:
    """Advance one map vehicle by dt under a desired-acceleration command.

    Commands above the coast line select the throttle map, below it the brake
    map, with a small hysteresis band holding the previous branch in between.
    The achieved command (inverse then forward map) feeds the first-order lag.
    """
    v = veh.state.v
    thr = coast_accel(veh, v)
    if u_desired >= thr + COAST_HYSTERESIS:
        braking = False
    elif u_desired < thr - COAST_HYSTERESIS:
        braking = True
    else:
        braking = veh.braking
    pmap = veh.brake if braking else veh.throttle
    pedal = invert(pmap, u_desired, v)
    achieved = interp(pmap, pedal, v)
    new_state = step_lag(veh.state, achieved, veh.tau, dt)
    return replace(veh, state=new_state, braking=braking)


def synthetic_throttle_map(pedal_points: int = 11, velocity_points: int = 8,
                           v_max: float = 35.0) -> PedalMap:
    """Smooth saturating throttle surface: strong at low speed, fading with v."""
    pedal = np.linspace(0.0, 1.0, pedal_points)
    vel = np.linspace(0.0, v_max, velocity_points)
    grid = []
    for p in pedal:
        row = [(1.0 - np.exp(-3.0 * p)) * (4.6 - 0.075 * v) - (0.12 + 0.0135 * v)
               for v in vel]
        grid.append(row)
    return PedalMap(tuple(pedal), tuple(vel), tuple(tuple(r) for r in grid))


def synthetic_brake_map(pedal_points: int = 11, velocity_points: int = 8,
                        v_max: float = 35.0, peak_decel: float = 10.8) -> PedalMap:
    """Smooth saturating brake surface (values <= 0, deceleration grows with p)."""
    pedal = np.linspace(0.0, 1.0, pedal_points)
    vel = np.linspace(0.0, v_max, velocity_points)
    norm = 1.0 - np.exp(-2.6)
    grid = []
    for p in pedal:
        row = [-(0.12 + 0.0135 * v) - peak_decel * (1.0 - np.exp(-2.6 * p)) / norm
               for v in vel]
        grid.append(row)
    return PedalMap(tuple(pedal), tuple(vel), tuple(tuple(r) for r in grid))


def affine_maps(slope: float = 8.0, offset: float = -4.0,
                v_max: float = 35.0) -> tuple[PedalMap, PedalMap]:
    """Identical affine throttle/brake pair a(p, v) = slope*p + offset.

    With these, the inverse-then-forward composition is exact and the map
    vehicle reproduces the plain lag model; used as a test identity.
    """
    pedal = (0.0, 0.5, 1.0)
    vel = (0.0, v_max / 2.0, v_max)
    grid = tuple(tuple(slope * p + offset for _ in vel) for p in pedal)
    m = PedalMap(pedal, vel, grid)
    return m, m
