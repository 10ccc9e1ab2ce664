"""Snap-limited (fourth-order) point-to-point references and the basis matrix."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq


class InfeasibleProfileError(ValueError):
    pass


@dataclass(frozen=True)
class ReferenceProfile:
    r: np.ndarray
    dr: np.ndarray
    ddr: np.ndarray
    dddr: np.ndarray
    ddddr: np.ndarray
    ts: float

    @property
    def N(self) -> int:
        return len(self.r)

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.N) * self.ts

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "t", "r", "dr", "ddr", "dddr", "ddddr"])
            for k in range(self.N):
                w.writerow([k] + [repr(float(x)) for x in (
                    self.t[k], self.r[k], self.dr[k], self.ddr[k], self.dddr[k], self.ddddr[k])])


@dataclass(frozen=True)
class BasisMatrix:
    columns: np.ndarray
    labels: tuple = ("acceleration", "jerk", "snap")

    @property
    def n_theta(self) -> int:
        return self.columns.shape[1]


def _phase_durations(x, v, a, j, s):
    """Continuous-time durations (t1, t2, t3, t4) of the symmetric profile.

    t1: constant snap, t2: constant jerk, t3: constant acceleration,
    t4: constant velocity. Each is the largest value compatible with all bounds
    given the ones already fixed.
    """
    t1 = min(j / s, math.sqrt(a / s), (v / (2 * s)) ** (1 / 3), (x / (8 * s)) ** 0.25)
    jp = s * t1

    def vel(t2):
        return jp * (t1 + t2) * (2 * t1 + t2)

    def pos(t2):
        return vel(t2) * (4 * t1 + 2 * t2)

    cands = [a / jp - t1]
    for fun, lim in ((vel, v), (pos, x)):
        if fun(0.0) >= lim:
            cands.append(0.0)
            continue
        hi = 1.0
        while fun(hi) < lim:
            hi *= 2
        cands.append(brentq(lambda t: fun(t) - lim, 0.0, hi, xtol=1e-15))
    t2 = max(0.0, min(cands))
    ap = jp * (t1 + t2)

    t3v = v / ap - (2 * t1 + t2)
    # x = ap (2t1 + t2 + t3)(4t1 + 2t2 + t3)
    b, c = 2 * t1 + t2, 4 * t1 + 2 * t2
    t3x = (-(b + c) + math.sqrt((b - c) ** 2 + 4 * x / ap)) / 2
    t3 = max(0.0, min(t3v, t3x))
    vp = ap * (2 * t1 + t2 + t3)
    t4 = max(0.0, (x - vp * (4 * t1 + 2 * t2 + t3)) / vp)
    return t1, t2, t3, t4


def snap_pattern(n1: int, n2: int, n3: int, n4: int) -> np.ndarray:
    """Unit-amplitude snap sequence, one leading and one trailing rest sample."""
    up, z2, z3 = np.ones(n1), np.zeros(n2), np.zeros(n3)
    accel = np.concatenate([up, z2, -up, z3, -up, z2, up])
    return np.concatenate([[0.0], accel, np.zeros(n4), -accel, [0.0]])


def integrate_snap(snap: np.ndarray, ts: float, r0: float = 0.0) -> ReferenceProfile:
    dddr = np.cumsum(snap) * ts
    ddr = np.cumsum(dddr) * ts
    dr = np.cumsum(ddr) * ts
    r = r0 + np.cumsum(dr) * ts
    return ReferenceProfile(r, dr, ddr, dddr, np.asarray(snap, dtype=float), ts)


def profile_from_samples(displacement: float, n1: int, n2: int, n3: int, n4: int, ts: float) -> ReferenceProfile:
    """Profile with the given phase lengths in samples, snap scaled to hit ``displacement``."""
    if n1 < 1 or min(n2, n3, n4) < 0:
        raise InfeasibleProfileError("phase lengths must satisfy n1 >= 1, n2, n3, n4 >= 0")
    unit = integrate_snap(snap_pattern(n1, n2, n3, n4), ts)
    gain = displacement / (unit.r[-1] - unit.r[0])
    return integrate_snap(gain * unit.ddddr, ts)


def fourth_order_reference(
    displacement: float,
    v_max: float,
    a_max: float,
    j_max: float,
    s_max: float,
    ts: float,
) -> ReferenceProfile:
    """Rest-to-rest snap-limited move.

    Phase durations come from the continuous-time bounds, are rounded up to
    whole samples, and the snap amplitude is then rescaled so the discrete
    profile travels exactly ``displacement``; rounding up only lowers the peaks,
    so every bound stays satisfied.
    """
    bounds = (v_max, a_max, j_max, s_max, ts)
    if not all(math.isfinite(b) and b > 0 for b in bounds):
        raise InfeasibleProfileError(f"bounds and sample time must be positive and finite, got {bounds}")
    if not (math.isfinite(displacement) and displacement >= 0):
        raise InfeasibleProfileError("displacement must be finite and nonnegative")
    if displacement == 0:
        z = np.zeros(1)
        return ReferenceProfile(z, z.copy(), z.copy(), z.copy(), z.copy(), ts)
    durations = _phase_durations(displacement, v_max, a_max, j_max, s_max)
    # guard against 1e-16 overshoot in t/ts before ceil
    n1, n2, n3, n4 = (int(math.ceil(t / ts - 1e-9)) for t in durations)
    return profile_from_samples(displacement, max(n1, 1), n2, n3, n4, ts)


def basis_matrix(profile: ReferenceProfile) -> BasisMatrix:
    """psi = [acceleration, jerk, snap] as an N x 3 matrix."""
    return BasisMatrix(np.column_stack([profile.ddr, profile.dddr, profile.ddddr]))


# Benchmark references: both yield N = 229 at 1 ms.
BENCHMARK_PROFILES = {
    "ref1": dict(displacement=0.01, v_max=0.062, a_max=1.5, j_max=150.0, s_max=2e4),
    "ref2": dict(displacement=0.008, v_max=0.0503, a_max=1.48, j_max=98.6, s_max=8580.0),
}


def benchmark_profile(name: str = "ref1", ts: float = 1e-3) -> ReferenceProfile:
    return fourth_order_reference(ts=ts, **BENCHMARK_PROFILES[name])
