"""Adaptive and fixed-step integration with dense output and event location."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import core
from .core import MassDistribution, PhaseState, as_masses

TIME_REACHED = "time reached"
COLLISION = "collision"
ESCAPE = "escape"
STEP_UNDERFLOW = "step underflow"
UNDERFLOW_COLLISION_FRACTION = 1e-3

# Dormand-Prince 5(4) tableau and the 4th-order continuous extension
# (Shampine's coefficients, the same ones used by MATLAB ode45).
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_E = np.array([-71 / 57600, 0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "dopri5"  # or "rk4" (fixed step)
    abs_tol: float = 1e-10
    rel_tol: float = 1e-10
    max_step: float = math.inf
    min_step: float = 1e-13
    collision_radius: float = 1e-6
    escape_factor: float = 1e6
    step: Optional[float] = None  # rk4 step; defaults to T/1000
    # "per_unit_step": local error <= tol * min(h, 1), keeps global drift near tol
    error_control: str = "per_unit_step"
    max_steps: int = 5_000_000

    def __post_init__(self):
        if self.method not in ("dopri5", "rk4"):
            raise ValueError(f"unknown method {self.method!r}")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.min_step <= self.max_step):
            raise ValueError("need 0 < min_step <= max_step")
        if self.error_control not in ("per_unit_step", "per_step"):
            raise ValueError(f"unknown error control {self.error_control!r}")
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be positive")


class DenseOutput:
    """Piecewise polynomial y(t0 + s h) = y0 + sum_k C[k] s^(k+1), s in [0, 1]."""

    def __init__(self, t0, h, y0, coeffs):
        self.t0 = np.asarray(t0, dtype=float)
        self.h = np.asarray(h, dtype=float)
        self.y0 = np.asarray(y0, dtype=float)
        self.coeffs = np.asarray(coeffs, dtype=float)  # (nseg, dim, order)

    @classmethod
    def hermite(cls, times, Y, F):
        """Cubic Hermite interpolant from node values and derivatives."""
        times, Y, F = np.asarray(times), np.asarray(Y), np.asarray(F)
        h = np.diff(times)[:, None]
        d = Y[1:] - Y[:-1]
        c1 = h * F[:-1]
        c2 = 3 * d - h * (2 * F[:-1] + F[1:])
        c3 = -2 * d + h * (F[:-1] + F[1:])
        return cls(times[:-1], h[:, 0], Y[:-1], np.stack([c1, c2, c3], axis=-1))

    @property
    def t_end(self):
        return self.t0[-1] + self.h[-1]

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        idx = np.clip(np.searchsorted(self.t0, t, side="right") - 1, 0, len(self.t0) - 1)
        s = (t - self.t0[idx]) / self.h[idx]
        order = self.coeffs.shape[-1]
        powers = s[:, None] ** np.arange(1, order + 1)[None, :]
        out = self.y0[idx] + np.einsum("ndk,nk->nd", self.coeffs[idx], powers)
        return out[0] if scalar else out


@dataclass(eq=False)
class Trajectory:
    """Time-stamped packed states; ``kind`` is "full" (12 reals) or "reduced" (6 reals)."""

    times: np.ndarray
    states: np.ndarray
    kind: str
    masses: MassDistribution
    termination: str = TIME_REACHED
    dense: Optional[DenseOutput] = None
    diagnostics: dict = field(default=None)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        dim = 12 if self.kind == "full" else 6
        self.states = np.asarray(self.states, dtype=float).reshape(-1, dim)
        self.masses = as_masses(self.masses)
        if self.kind not in ("full", "reduced"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if len(self.times) != len(self.states):
            raise ValueError("times and states differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.diagnostics is None:
            self.diagnostics = compute_diagnostics(self.kind, self.states, self.masses)

    def __len__(self):
        return len(self.times)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0]) if len(self.times) else 0.0

    @property
    def q(self):
        return self.states[:, 0:3] + 1j * self.states[:, 3:6]

    @property
    def v(self):
        return self.states[:, 6:9] + 1j * self.states[:, 9:12]

    @property
    def w(self):
        return self.states[:, 0:3]

    @property
    def wdot(self):
        return self.states[:, 3:6]

    def state(self, i):
        return unpack_state(self.kind, self.states[i])

    def vector_field(self):
        return rhs_for(self.kind, self.masses)

    def interpolant(self) -> DenseOutput:
        """The integrator's dense output, or a cubic Hermite rebuilt from the vector field."""
        if self.dense is None:
            f = self.vector_field()
            F = np.array([f(t, y) for t, y in zip(self.times, self.states)])
            self.dense = DenseOutput.hermite(self.times, self.states, F)
        return self.dense

    def sample(self, t):
        if len(self.times) < 2:
            return np.repeat(self.states, np.size(t), axis=0)
        return self.interpolant()(t)

    def resample(self, t) -> "Trajectory":
        """Same trajectory evaluated on the time grid ``t`` (dense output kept)."""
        t = np.asarray(t, dtype=float)
        return Trajectory(t, self.sample(t), self.kind, self.masses, self.termination,
                          self.interpolant(), meta=dict(self.meta))


def unpack_state(kind, y):
    if kind == "full":
        return PhaseState.unpack(y)
    from .reduced import ReducedState
    return ReducedState(y[0:3], y[3:6])


def rhs_for(kind, masses):
    if kind == "full":
        return core.full_rhs(masses)
    from .reduced import reduced_rhs
    return reduced_rhs(masses)


def compute_diagnostics(kind, states, masses) -> dict:
    """Per-sample H, J, P (complex) and I."""
    masses = as_masses(masses)
    n = len(states)
    if n == 0:
        return {k: np.zeros(0, dtype=complex if k == "P" else float) for k in "HJPI"}
    if kind == "full":
        q = states[:, 0:3] + 1j * states[:, 3:6]
        v = states[:, 6:9] + 1j * states[:, 9:12]
        m = masses.masses
        with np.errstate(divide="ignore", invalid="ignore"):
            r = core.pairwise_separations(q)
            V = -(m[0] * m[1] / r[:, 0] + m[1] * m[2] / r[:, 1] + m[2] * m[0] / r[:, 2])
        return {
            "H": core.kinetic_energy(v, masses) + V,
            "J": np.sum(m * core.wedge(q, v), axis=-1),
            "P": np.sum(m * v, axis=-1),
            "I": core.moment_of_inertia(q, masses),
        }
    from .reduced import reduced_energy_array
    w = states[:, 0:3]
    return {
        "H": reduced_energy_array(w, states[:, 3:6], masses),
        "J": np.zeros(n),
        "P": np.zeros(n, dtype=complex),
        "I": 2.0 * np.linalg.norm(w, axis=-1),
    }


def _error_norm(err, y0, y1, cfg):
    z = err / (cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y0), np.abs(y1)))
    return math.sqrt(float(z @ z) / z.size)


def solve(f, y0, T, cfg: IntegratorConfig, monitor: Optional[Callable] = None, t0: float = 0.0):
    """Integrate y' = f(t, y) on [t0, t0 + T].

    ``monitor(t, y)`` is called after every accepted step and may return a
    termination reason.  Returns (times, states, dense, reason).
    """
    if not T > 0:
        raise ValueError("integration time T must be positive")
    y = np.array(y0, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("initial state is not finite")
    if cfg.method == "rk4":
        return _solve_rk4(f, y, T, cfg, monitor, t0)
    return _solve_dopri(f, y, T, cfg, monitor, t0)


def _initial_step(f, t, y, fy, cfg, T):
    scale = cfg.abs_tol + np.abs(y) * cfg.rel_tol
    d0 = np.linalg.norm(y / scale) / np.sqrt(y.size)
    d1 = np.linalg.norm(fy / scale) / np.sqrt(y.size)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y + h0 * fy
    d2 = np.linalg.norm((f(t + h0, y1) - fy) / scale) / np.sqrt(y.size) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, T, cfg.max_step)


def _solve_dopri(f, y, T, cfg, monitor, t0):
    t_end = t0 + T
    t = t0
    times, states = [t], [y.copy()]
    seg_t, seg_h, seg_y, seg_c = [], [], [], []
    fy = f(t, y)
    h = _initial_step(f, t, y, fy, cfg, T)
    K = np.empty((7, y.size))
    per_unit = cfg.error_control == "per_unit_step"
    reason = TIME_REACHED
    nsteps = 0
    while t < t_end:
        if nsteps >= cfg.max_steps:
            reason = STEP_UNDERFLOW
            break
        h = min(h, cfg.max_step, t_end - t)
        last = h >= t_end - t
        while True:
            if h < cfg.min_step and not last:
                reason = STEP_UNDERFLOW
                break
            K[0] = fy
            ok = True
            with np.errstate(all="ignore"):
                for s in range(1, 6):
                    K[s] = f(t + _C[s] * h, y + h * (np.dot(_A[s], K[:s])))
                y_new = y + h * np.dot(_B[:6], K[:6])
                K[6] = f(t + h, y_new)
                err = h * np.dot(_E, K)
                if not (np.all(np.isfinite(K)) and np.all(np.isfinite(y_new))):
                    ok = False
                    err_norm = np.inf
                else:
                    err_norm = _error_norm(err, y, y_new, cfg)
                    if per_unit:
                        err_norm /= min(h, 1.0)
            if ok and err_norm <= 1.0:
                break
            factor = 0.2 if not np.isfinite(err_norm) else max(0.2, 0.9 * err_norm ** -0.2)
            h *= factor
            last = False
        if reason == STEP_UNDERFLOW:
            break
        seg_t.append(t)
        seg_h.append(h)
        seg_y.append(y)
        seg_c.append(h * (K.T @ _P))
        t = t_end if last else t + h
        y = y_new
        fy = K[6].copy()
        times.append(t)
        states.append(y)
        nsteps += 1
        factor = 10.0 if err_norm == 0 else min(10.0, 0.9 * err_norm ** -0.2)
        h *= factor
        if monitor is not None:
            r = monitor(t, y)
            if r:
                reason = r
                break
    dense = DenseOutput(seg_t, seg_h, seg_y, seg_c) if seg_t else None
    return np.array(times), np.array(states), dense, reason


def _solve_rk4(f, y, T, cfg, monitor, t0):
    h_nom = cfg.step if cfg.step is not None else T / 1000.0
    n = max(1, int(math.ceil(T / h_nom - 1e-9)))
    h = T / n
    times, states, derivs = [t0], [y.copy()], []
    fy = f(t0, y)
    derivs.append(fy)
    reason = TIME_REACHED
    for k in range(n):
        t = t0 + k * h
        with np.errstate(all="ignore"):
            k1 = fy
            k2 = f(t + h / 2, y + h / 2 * k1)
            k3 = f(t + h / 2, y + h / 2 * k2)
            k4 = f(t + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            fy = f(t + h, y)
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(fy))):
            reason = STEP_UNDERFLOW
            break
        times.append(t0 + (k + 1) * h)
        states.append(y)
        derivs.append(fy)
        if monitor is not None:
            r = monitor(times[-1], y)
            if r:
                reason = r
                break
    times, states = np.array(times), np.array(states)
    dense = DenseOutput.hermite(times, states, np.array(derivs)) if len(times) > 1 else None
    return times, states, dense, reason


def full_monitor(masses, cfg, y0):
    m = as_masses(masses)
    I0 = core.moment_of_inertia(core.centered(y0[0:3] + 1j * y0[3:6], m), m)
    m1, m2, m3 = (float(x) for x in m.masses)
    M = m1 + m2 + m3
    rc, I_max = cfg.collision_radius, cfg.escape_factor * I0

    def monitor(t, y):
        x1, x2, x3, y1, y2, y3 = y[:6].tolist()
        if min(math.hypot(x2 - x1, y2 - y1), math.hypot(x3 - x2, y3 - y2),
               math.hypot(x1 - x3, y1 - y3)) < rc:
            return COLLISION
        # centered moment of inertia via pair separations
        I = (m1 * m2 * ((x2 - x1) ** 2 + (y2 - y1) ** 2) + m2 * m3 * ((x3 - x2) ** 2 + (y3 - y2) ** 2)
             + m3 * m1 * ((x1 - x3) ** 2 + (y1 - y3) ** 2)) / M
        if I > I_max:
            return ESCAPE
        return None

    return monitor


def integrate(initial: PhaseState, masses, T: float, cfg: IntegratorConfig = None) -> Trajectory:
    """Integrate the Newton equations from ``initial`` for duration ``T``."""
    cfg = cfg or IntegratorConfig()
    masses = as_masses(masses)
    core.potential_V(initial.q, masses)  # raises on collision
    y0 = initial.pack()
    if np.min(core.pairwise_separations(initial.q)) < cfg.collision_radius:
        return Trajectory([0.0], [y0], "full", masses, COLLISION)
    times, states, dense, reason = solve(core.full_rhs(masses), y0, T, cfg, full_monitor(masses, cfg, y0))
    if reason == STEP_UNDERFLOW:
        # steps collapse before r reaches collision_radius on a deep approach; call it a collision
        size0 = np.sqrt(core.moment_of_inertia(core.centered(initial.q, masses), masses) / masses.M)
        q_end = states[-1, 0:3] + 1j * states[-1, 3:6]
        if np.min(core.pairwise_separations(q_end)) < UNDERFLOW_COLLISION_FRACTION * size0:
            reason = COLLISION
    return Trajectory(times, states, "full", masses, reason, dense)


@dataclass(frozen=True)
class Event:
    time: float
    state: object
    grazing: bool = False
    slope: float = float("nan")


def _bisect(g, a, b, ga, tol):
    while b - a > tol:
        mid = 0.5 * (a + b)
        if not a < mid < b:
            break
        gm = g(mid)
        if gm == 0:
            return mid
        if (gm > 0) == (ga > 0):
            a, ga = mid, gm
        else:
            b = mid
    return 0.5 * (a + b)


def _golden_min(g, a, b, tol):
    invphi = (math.sqrt(5) - 1) / 2
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    gc, gd = g(c), g(d)
    for _ in range(200):
        if b - a <= tol:
            break
        if gc < gd:
            b, d, gd = d, c, gc
            c = b - invphi * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + invphi * (b - a)
            gd = g(d)
    return 0.5 * (a + b)


def detect_events(trajectory: Trajectory, observable, time_tol: float = None,
                  grazing_tol: float = 1e-9) -> list:
    """Zeros of ``observable(state)`` along ``trajectory``.

    Every sign change between stored samples is refined by bisection on the
    dense output.  Crossings whose slope is tiny relative to the observable's
    range, and touch-downs without a sign change, come back with
    ``grazing=True``.
    """
    n = len(trajectory)
    if n < 2:
        return []
    T = trajectory.duration
    tol = time_tol if time_tol is not None else 4 * np.finfo(float).eps * max(T, abs(trajectory.times[-1]))
    dense = trajectory.interpolant()
    kind = trajectory.kind

    def g(t):
        return float(observable(unpack_state(kind, dense(t))))

    vals = np.array([float(observable(trajectory.state(i))) for i in range(n)])
    times = trajectory.times
    span = max(np.max(np.abs(vals)), 1e-300)
    events = []

    def slope_at(t):
        dt = max(1e-7 * T, 10 * tol)
        lo, hi = max(times[0], t - dt), min(times[-1], t + dt)
        return (g(hi) - g(lo)) / (hi - lo)

    def add(t, grazing=None):
        s = slope_at(t)
        if grazing is None:
            grazing = abs(s) * T < grazing_tol * span
        events.append(Event(t, unpack_state(kind, dense(t)), bool(grazing), s))

    k = 0
    while k < n - 1:
        a, b = vals[k], vals[k + 1]
        if a != 0 and b != 0 and (a > 0) != (b > 0):
            add(_bisect(g, times[k], times[k + 1], a, tol))
        elif b == 0 and a != 0 and k + 2 < n:
            c = vals[k + 2]
            if c != 0 and (a > 0) != (c > 0):
                add(times[k + 1])
            elif c != 0:
                add(times[k + 1], grazing=True)
            k += 1
        elif 0 < k and a != 0 and b != 0 and (a > 0) == (b > 0):
            # touch-down between samples without a sign change
            prev = vals[k - 1]
            same_side = prev != 0 and (prev > 0) == (a > 0)
            if same_side and abs(a) < abs(prev) and abs(a) < abs(b) and abs(a) < 1e-3 * span:
                tm = _golden_min(lambda t: abs(g(t)), times[k - 1], times[k + 1], tol)
                if abs(g(tm)) < grazing_tol * span:
                    add(tm, grazing=True)
        k += 1
    events.sort(key=lambda e: e.time)
    return events


def drift_report(trajectory: Trajectory) -> tuple:
    """Max absolute deviations of H, J and P from their initial values."""
    if len(trajectory) == 0:
        return (0.0, 0.0, 0.0)
    d = trajectory.diagnostics
    return tuple(float(np.max(np.abs(d[k] - d[k][0]))) for k in ("H", "J", "P"))
