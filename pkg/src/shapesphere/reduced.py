"""Zero-angular-momentum dynamics on shape space.

With rho = |w|, w_hat = w / rho, the shape Lagrangian is

    L = |w'|^2 / (4 rho) + U(w)

and its Euler-Lagrange equations solved for w'' read

    w'' = (rho'/rho) w' - |w'|^2 / (2 rho) w_hat + 2 rho grad U(w),

with rho' = w_hat . w'.  (From d/dt [w'/(2 rho)] = -|w'|^2/(4 rho^2) w_hat + grad U.)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core
from .core import PhaseState, as_masses
from .errors import SingularityError
from .geometry import ray_distances, shape_potential, shape_potential_grad
from .integrator import (COLLISION, ESCAPE, IntegratorConfig, Trajectory, solve)
from .projection import project, pushforward_velocity


@dataclass(frozen=True, eq=False)
class ReducedState:
    w: np.ndarray
    wdot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w", np.array(self.w, dtype=float))
        object.__setattr__(self, "wdot", np.array(self.wdot, dtype=float))

    def pack(self) -> np.ndarray:
        return np.concatenate([self.w, self.wdot])

    @classmethod
    def from_phase(cls, state: PhaseState, masses) -> "ReducedState":
        return cls(project(state.q, masses), pushforward_velocity(state, masses))


def saari_decomposition(state: PhaseState, masses):
    """Split kinetic energy into (K_trans, K_rot, K_shape).

    K_trans = |P|^2 / (2M), K_rot = J^2 / (2I), K_shape = |w'|^2 / (2I).
    """
    m = as_masses(masses)
    q = core.centered(state.q, m)
    I = core.moment_of_inertia(q, m)
    if I <= 0:
        raise SingularityError("cone point", "Saari decomposition undefined at triple collision")
    P = core.linear_momentum(state, m)
    J = core.angular_momentum(PhaseState(q, state.v), m)
    wdot = pushforward_velocity(PhaseState(q, state.v), m)
    return 0.5 * abs(P) ** 2 / m.M, 0.5 * J**2 / I, 0.5 * float(wdot @ wdot) / I


def shape_kinetic(w, wdot) -> float:
    return float(np.dot(wdot, wdot)) / (4.0 * np.linalg.norm(w))


def shape_lagrangian(rstate: ReducedState, masses) -> float:
    rho = np.linalg.norm(rstate.w)
    if rho == 0:
        raise SingularityError("cone point")
    return shape_kinetic(rstate.w, rstate.wdot) + float(shape_potential(rstate.w, masses))


def reduced_energy(rstate: ReducedState, masses) -> float:
    """E = K_shape - U_shape; equals H of any horizontal lift."""
    return shape_kinetic(rstate.w, rstate.wdot) - float(shape_potential(rstate.w, masses))


def reduced_energy_array(w, wdot, masses) -> np.ndarray:
    rho = np.linalg.norm(w, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        m = as_masses(masses)
        c = np.array([m.c_ij[p] for p in core.PAIRS])
        U = np.sum(c / ray_distances(w, m), axis=-1)
        return np.sum(wdot**2, axis=-1) / (4.0 * rho) - U


def _accel(w, wd, gradU):
    rho = np.sqrt(w @ w)
    what = w / rho
    rhodot = what @ wd
    return (rhodot / rho) * wd - (wd @ wd) / (2.0 * rho) * what + 2.0 * rho * gradU


def reduced_accelerations(rstate: ReducedState, masses, potential: bool = True) -> np.ndarray:
    """w'' from the Euler-Lagrange equations; ``potential=False`` gives geodesic flow."""
    w, wd = rstate.w, rstate.wdot
    if np.linalg.norm(w) == 0:
        raise SingularityError("cone point")
    g = shape_potential_grad(w, masses) if potential else np.zeros(3)
    return _accel(w, wd, g)


def reduced_rhs(masses, potential: bool = True):
    m = as_masses(masses)

    def f(t, y):
        w, wd = y[0:3], y[3:6]
        g = shape_potential_grad(w, m) if potential else np.zeros(3)
        return np.concatenate([wd, _accel(w, wd, g)])

    return f


def reduced_monitor(masses, cfg: IntegratorConfig, y0):
    m = as_masses(masses)
    mu = np.sqrt(np.array([m.mu_ij[p] for p in core.PAIRS]))
    I0 = 2 * np.linalg.norm(y0[0:3])

    def monitor(t, y):
        w = y[0:3]
        rho = np.linalg.norm(w)
        if np.sqrt(2 * rho) < cfg.collision_radius:
            return COLLISION
        if np.min(ray_distances(w, m) / mu) < cfg.collision_radius:
            return COLLISION
        if 2 * rho > cfg.escape_factor * I0:
            return ESCAPE
        return None

    return monitor


def integrate_reduced(rstate: ReducedState, masses, T: float, cfg: IntegratorConfig = None,
                      potential: bool = True) -> Trajectory:
    cfg = cfg or IntegratorConfig()
    m = as_masses(masses)
    if potential:
        shape_potential(rstate.w, m)  # raises on a ray
    elif np.linalg.norm(rstate.w) == 0:
        raise SingularityError("cone point")
    y0 = rstate.pack()
    f = reduced_rhs(m, potential)
    times, states, dense, reason = solve(f, y0, T, cfg, reduced_monitor(m, cfg, y0) if potential else None)
    traj = Trajectory(times, states, "reduced", m, reason, dense)
    if not potential:
        traj.meta["potential"] = False
    return traj


def momentum_orthogonality_check(state: PhaseState, masses, tol: float = 1e-10):
    """(P, J, is_horizontal): horizontal iff both momenta vanish to ``tol``.

    A horizontal velocity is orthogonal (mass metric) to the translation and
    rotation directions 1, i1, iq; only then does the shape velocity carry
    all the kinetic energy.
    """
    m = as_masses(masses)
    q = core.centered(state.q, m)
    P = core.linear_momentum(state, m)
    J = core.angular_momentum(PhaseState(q, state.v), m)
    scale = max(1.0, np.sqrt(core.moment_of_inertia(q, m) * 2 * core.kinetic_energy(state.v, m)))
    return P, J, bool(abs(P) <= tol * scale and abs(J) <= tol * scale)
