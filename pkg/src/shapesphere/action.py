"""Discrete least action on shape space and the figure-eight construction.

A path is N+1 nodes at uniform times; the discrete action sums, over each
segment, the midpoint-rule value of L = |w'|^2/(4|w|) + U(w).  Minimizing
from the Euler ray EUL_1 to the isosceles plane ISOSC_2 in time T, then
continuing the arc by the equal-mass reflections and half-twists, gives the
figure eight in shape space (period 12 T).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares, minimize, minimize_scalar

from . import core
from .core import EQUAL_MASSES, PhaseState, as_masses
from .errors import ConvergenceError, SingularityError, UnsupportedMassesError
from .geometry import (equal_mass_symmetries, ray_directions, special_points)
from .integrator import TIME_REACHED, IntegratorConfig, Trajectory, integrate, solve
from .projection import (JacobiCoordinates, config_from_jacobi, gauge_jacobi,
                         horizontal_lift_velocity, jacobian_rot, project)

log = logging.getLogger(__name__)

MIN_NODES = 16


@dataclass(eq=False)
class DiscretePath:
    nodes: np.ndarray
    T: float
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.array(self.nodes, dtype=float).reshape(-1, 3)
        if self.N < 1:
            raise ValueError("a path needs at least two nodes")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def N(self) -> int:
        return len(self.nodes) - 1

    @property
    def h(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    def endpoint_momenta(self, masses=EQUAL_MASSES, potential=True):
        """Discrete Legendre transforms (p_start, p_end) of the first and last segments."""
        m = as_masses(masses)
        W, h = self.nodes, self.h
        p_start = -_segment_grad(W[0], W[1], h, m, potential)[0]
        p_end = _segment_grad(W[-2], W[-1], h, m, potential)[1]
        return p_start, p_end

    def endpoint_velocities(self, masses=EQUAL_MASSES, potential=True):
        """Shape velocities w' = 2|w| p at both ends."""
        p0, p1 = self.endpoint_momenta(masses, potential)
        return 2 * np.linalg.norm(self.nodes[0]) * p0, 2 * np.linalg.norm(self.nodes[-1]) * p1


def _potential_terms(M, m, potential):
    if not potential:
        return np.zeros(len(M)), np.zeros_like(M)
    B = ray_directions(m)
    c = np.array([m.c_ij[p] for p in core.PAIRS])
    rho = np.linalg.norm(M, axis=1)
    d = np.sqrt(np.maximum(rho[:, None] - M @ B.T, 0.0))
    if np.any(d <= 1e-14 * np.sqrt(2 * rho)[:, None]):
        k, j = np.argwhere(d <= 1e-14 * np.sqrt(2 * rho)[:, None])[0]
        raise SingularityError(core.PAIRS[j], f"segment {k} midpoint on binary ray {core.PAIRS[j]}")
    coef = -c / (2 * d**3)
    grad = coef.sum(axis=1)[:, None] * (M / rho[:, None]) - coef @ B
    return np.sum(c / d, axis=1), grad


def _segment_grad(a, b, h, m, potential):
    """(dL/da, dL/db) for one segment."""
    A, B = np.atleast_2d(a), np.atleast_2d(b)
    D = B - A
    M = 0.5 * (A + B)
    rho = np.linalg.norm(M, axis=1)
    D2 = np.sum(D * D, axis=1)
    dD = D / (2 * rho * h)[:, None]
    dM = -(D2 / (4 * rho**2 * h))[:, None] * (M / rho[:, None])
    _, gU = _potential_terms(M, m, potential)
    dM = dM + h * gU
    return (-dD + 0.5 * dM)[0], (dD + 0.5 * dM)[0]


def _barrier(M, m, weight, h):
    """weight * h * sum -log(d_ij / sqrt(2|w|)) over midpoints, and its gradient."""
    B = ray_directions(m)
    rho = np.linalg.norm(M, axis=1)
    d2 = np.maximum(rho[:, None] - M @ B.T, 1e-300)
    what = M / rho[:, None]
    value = -0.5 * np.sum(np.log(d2 / (2 * rho[:, None])))
    # d/dM of -0.5 log(d^2) + 0.5 log(2 rho), summed over pairs
    g = -0.5 * (np.sum(1 / d2, axis=1)[:, None] * what - (1 / d2) @ B) + 1.5 * what / rho[:, None]
    return weight * h * value, weight * h * g


def _check_nodes(W, m, potential):
    rho = np.linalg.norm(W, axis=1)
    if np.any(rho == 0):
        raise SingularityError("cone point", f"node {int(np.argmin(rho))} at triple collision")
    if potential:
        B = ray_directions(m)
        d = np.sqrt(np.maximum(rho[:, None] - W @ B.T, 0.0))
        bad = d <= 1e-14 * np.sqrt(2 * rho)[:, None]
        if np.any(bad):
            k, j = np.argwhere(bad)[0]
            raise SingularityError(core.PAIRS[j], f"node {k} on binary ray {core.PAIRS[j]}")


def _action(W, T, m, potential=True, barrier=0.0):
    N = len(W) - 1
    h = T / N
    D = W[1:] - W[:-1]
    M = 0.5 * (W[1:] + W[:-1])
    rho = np.linalg.norm(M, axis=1)
    if np.any(rho == 0):
        raise SingularityError("cone point", f"segment {int(np.argmin(rho))} midpoint at triple collision")
    D2 = np.sum(D * D, axis=1)
    value = np.sum(D2 / (4 * rho * h))
    dD = D / (2 * rho * h)[:, None]
    dM = -(D2 / (4 * rho**2 * h))[:, None] * (M / rho[:, None])
    U, gU = _potential_terms(M, m, potential)
    value += h * np.sum(U)
    dM = dM + h * gU
    if barrier:
        bv, bg = _barrier(M, m, barrier, h)
        value += bv
        dM = dM + bg
    G = np.zeros_like(W)
    G[1:] += dD + 0.5 * dM
    G[:-1] += -dD + 0.5 * dM
    return value, G


def discrete_action(path: DiscretePath, masses=EQUAL_MASSES, potential: bool = True):
    """(value, gradient) of the midpoint-rule action; the gradient is (N+1, 3)."""
    m = as_masses(masses)
    _check_nodes(path.nodes, m, potential)
    return _action(path.nodes, path.T, m, potential)


@dataclass(frozen=True)
class BoundaryCondition:
    """start: ("point", w) or ("ray", direction); end: ("point", w) or ("plane", normal)."""

    start_kind: str
    start: np.ndarray
    end_kind: str
    end: np.ndarray

    def __post_init__(self):
        if self.start_kind not in ("point", "ray") or self.end_kind not in ("point", "plane"):
            raise ValueError("start must be 'point' or 'ray', end 'point' or 'plane'")
        s = np.asarray(self.start, dtype=float)
        e = np.asarray(self.end, dtype=float)
        if self.start_kind == "ray":
            s = s / np.linalg.norm(s)
        if self.end_kind == "plane":
            e = e / np.linalg.norm(e)
        object.__setattr__(self, "start", s)
        object.__setattr__(self, "end", e)

    @classmethod
    def figure_eight(cls, masses=EQUAL_MASSES):
        sp = special_points(masses)
        if sp.isosc_normals is None:
            raise UnsupportedMassesError("figure-eight boundary sets need equal masses")
        return cls("ray", sp.euler[0], "plane", sp.isosc_normals[1])

    def plane_basis(self):
        n = self.end
        e3 = np.array([0.0, 0.0, 1.0])
        a = e3 - (e3 @ n) * n
        if np.linalg.norm(a) < 1e-8:
            a = np.cross(n, [1.0, 0.0, 0.0])
        a /= np.linalg.norm(a)
        b = np.cross(n, a)
        return b, a  # b horizontal when the plane is vertical, a toward +w3


class _Param:
    """Maps the free unknowns to path nodes for a boundary condition."""

    def __init__(self, bc: BoundaryCondition, N: int):
        self.bc, self.N = bc, N
        self.ns = 1 if bc.start_kind == "ray" else 0
        self.ne = 2 if bc.end_kind == "plane" else 0
        if self.ne:
            self.basis = np.array(self.bc.plane_basis())
        self.size = self.ns + 3 * (N - 1) + self.ne
        # parameter index table (node, component) -> index or -1
        table = -np.ones((N + 1, 3), dtype=int)
        if self.ns:
            table[0, 0] = 0
        table[1:N] = (self.ns + np.arange(3 * (N - 1))).reshape(N - 1, 3)
        if self.ne:
            table[N, :2] = self.ns + 3 * (N - 1) + np.arange(2)
        self.table = table

    def nodes(self, x):
        N, bc = self.N, self.bc
        W = np.empty((N + 1, 3))
        W[0] = x[0] * bc.start if self.ns else bc.start
        W[1:N] = x[self.ns:self.ns + 3 * (N - 1)].reshape(N - 1, 3)
        W[N] = x[-2:] @ self.basis if self.ne else bc.end
        return W

    def params(self, W):
        parts = []
        if self.ns:
            parts.append([W[0] @ self.bc.start])
        parts.append(W[1:-1].ravel())
        if self.ne:
            parts.append(self.basis @ W[-1])
        return np.concatenate(parts)

    def grad(self, G):
        parts = []
        if self.ns:
            parts.append([G[0] @ self.bc.start])
        parts.append(G[1:-1].ravel())
        if self.ne:
            parts.append(self.basis @ G[-1])
        return np.concatenate(parts)

    def scaled(self, g, h):
        """Interior gradient entries scale like h; rescale them to force units."""
        s = g.copy()
        s[self.ns:self.ns + 3 * (self.N - 1)] /= h
        return s

    def project_nodes(self, W):
        W = W.copy()
        if self.ns:
            W[0] = (W[0] @ self.bc.start) * self.bc.start
        else:
            W[0] = self.bc.start
        if self.ne:
            W[-1] = (self.basis @ W[-1]) @ self.basis
        else:
            W[-1] = self.bc.end
        return W


def _objective(param, T, m, potential, barrier):
    def f(x):
        W = param.nodes(x)
        try:
            val, G = _action(W, T, m, potential, barrier)
        except SingularityError:
            return np.inf, np.zeros_like(x)
        if not np.isfinite(val):
            return np.inf, np.zeros_like(x)
        return val, param.grad(G)
    return f


def _fd_hessian(f, x, param, eps=1e-6):
    """Sparse Hessian from central differences of the gradient (9-color pattern)."""
    table = param.table
    Nn = table.shape[0]
    n = x.size
    rows, cols, vals = [], [], []
    node_of = np.empty(n, dtype=int)
    comp_of = np.empty(n, dtype=int)
    valid = table >= 0
    node_of[table[valid]] = np.nonzero(valid)[0]
    comp_of[table[valid]] = np.nonzero(valid)[1]
    for r in range(3):
        for j in range(3):
            sel = (node_of % 3 == r) & (comp_of == j)
            if not np.any(sel):
                continue
            dx = np.zeros(n)
            dx[sel] = eps * np.maximum(1.0, np.abs(x[sel]))
            gp = f(x + dx)[1]
            gm = f(x - dx)[1]
            diff = gp - gm
            kr = node_of
            kc = kr + ((r - kr + 1) % 3) - 1
            ok = (kc >= 0) & (kc < Nn)
            col = np.full(n, -1)
            col[ok] = table[kc[ok], j]
            ok &= col >= 0
            ri = np.nonzero(ok)[0]
            ci = col[ok]
            rows.append(ri)
            cols.append(ci)
            vals.append(diff[ri] / (2 * dx[ci]))
    H = sps.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return 0.5 * (H + H.T)


def _newton(f, x, param, tol, maxit=40):
    val, g = f(x)
    for it in range(maxit):
        gn = np.max(np.abs(g))
        if gn < tol:
            return x, g, it
        H = _fd_hessian(f, x, param)
        try:
            p = spla.spsolve(H.tocsc(), -g)
        except RuntimeError:
            p = -g
        if not np.all(np.isfinite(p)) or g @ p >= 0:
            p = -g
        a = 1.0
        while a > 1e-10:
            v2, g2 = f(x + a * p)
            if np.isfinite(v2) and (v2 <= val + 1e-4 * a * (g @ p) or np.max(np.abs(g2)) < gn):
                break
            a *= 0.5
        else:
            break
        x, val, g = x + a * p, v2, g2
    return x, g, maxit


def _initial_guess(bc, N, m, seed, T, potential):
    rng = np.random.default_rng(seed)
    if bc.start_kind == "ray":
        start = 0.5 * bc.start
    else:
        start = bc.start
    if bc.end_kind == "plane":
        b, a = bc.plane_basis()
        u = start - (start @ bc.end) * bc.end
        u = u / np.linalg.norm(u) if np.linalg.norm(u) > 1e-12 else b
        up = a if abs(a[2]) > 1e-12 else np.zeros(3)
        target = u + up
        end = np.linalg.norm(start) * target / np.linalg.norm(target)
    else:
        end = bc.end
    r0, r1 = np.linalg.norm(start), np.linalg.norm(end)
    s = np.linspace(0, 1, N + 1)
    if r0 > 0 and r1 > 0 and np.linalg.norm(np.cross(start, end)) > 1e-12:
        e0 = start / r0
        e1 = end / r1
        ang = np.arccos(np.clip(e0 @ e1, -1, 1))
        perp = e1 - (e0 @ e1) * e0
        perp /= np.linalg.norm(perp)
        W = ((1 - s) * r0 + s * r1)[:, None] * (np.cos(s * ang)[:, None] * e0 + np.sin(s * ang)[:, None] * perp)
    else:
        W = (1 - s)[:, None] * start + s[:, None] * end
    scale = np.linalg.norm(W, axis=1).max()
    W[1:-1] += 1e-3 * scale * rng.standard_normal((N - 1, 3))
    if potential and bc.start_kind == "ray":
        # free size: A(lam W) = lam K + lam^(-1/2) U is minimized at lam = (U / 2K)^(2/3)
        K = _action(W, T, m, potential=False)[0]
        total = _action(W, T, m, potential=True)[0]
        lam = ((total - K) / (2 * K)) ** (2 / 3)
        W *= lam
    return W


def _min_ray_fraction(W, m):
    B = ray_directions(m)
    rho = np.linalg.norm(W, axis=1)
    d = np.sqrt(np.maximum(rho[:, None] - W @ B.T, 0.0))
    return float(np.min(d / np.sqrt(2 * rho)[:, None]))


def _refine(W, N2, param2):
    N = len(W) - 1
    cs = CubicSpline(np.linspace(0, 1, N + 1), W)
    return param2.project_nodes(cs(np.linspace(0, 1, N2 + 1)))


def minimize_arc(bc: BoundaryCondition, T: float = 1.0, N: int = 512, seed: int = 0,
                 masses=EQUAL_MASSES, potential: bool = True, tol: float = 1e-10,
                 barrier: float = 1e-3, coarse_N: int = 64, min_clearance: float = 0.1) -> DiscretePath:
    """Minimize the discrete action subject to ``bc`` in time ``T`` with N segments.

    Quasi-Newton (L-BFGS) on a coarse grid with a log barrier on the ray
    distances, then barrier-free Newton polish with a finite-difference
    sparse Hessian on successively doubled grids.  Converged when the
    gradient with respect to the free unknowns is below ``tol`` in max norm;
    ``info['force_residual']`` reports the interior part divided by h.
    """
    m = as_masses(masses)
    if N < MIN_NODES:
        raise ValueError(f"N must be at least {MIN_NODES}")
    if not T > 0:
        raise ValueError("T must be positive")
    levels = [N]
    while levels[0] > coarse_N and levels[0] % 2 == 0:
        levels.insert(0, levels[0] // 2)
    restarts = []
    weight = barrier if potential else 0.0
    for attempt in range(4):
        N0 = levels[0]
        param = _Param(bc, N0)
        W = _initial_guess(bc, N0, m, seed, T, potential)
        x = param.params(W)
        if weight:
            res = minimize(_objective(param, T, m, potential, weight), x, jac=True, method="L-BFGS-B",
                           options=dict(maxiter=20000, gtol=1e-9, ftol=1e-14, maxcor=30))
            x = res.x
        res = minimize(_objective(param, T, m, potential, 0.0), x, jac=True, method="L-BFGS-B",
                       options=dict(maxiter=20000, gtol=1e-12, ftol=1e-15, maxcor=30))
        x = res.x
        W = param.nodes(x)
        gn = np.inf
        for k, Nk in enumerate(levels):
            if k > 0:
                param = _Param(bc, Nk)
                W = _refine(W, Nk, param)
            f = _objective(param, T, m, potential, 0.0)
            x, g, its = _newton(f, param.params(W), param, tol)
            W = param.nodes(x)
            gn = float(np.max(np.abs(g)))
            log.debug("level N=%d newton its=%d grad=%.3e", Nk, its, gn)
        clearance = _min_ray_fraction(W, m) if potential else np.inf
        if potential and clearance < min_clearance:
            restarts.append({"attempt": attempt, "clearance": clearance, "barrier": weight})
            log.warning("arc approached a collision ray (clearance %.3g); restarting with barrier %.3g",
                        clearance, weight * 10)
            weight = max(weight, 1e-4) * 10
            continue
        break
    else:
        raise ConvergenceError("minimizer kept approaching a binary collision", best=DiscretePath(W, T))
    path = DiscretePath(W, T)
    value = _action(W, T, m, potential)[0]
    scaled = float(np.max(np.abs(param.scaled(g, T / levels[-1]))))
    path.info.update(action=float(value), gradient_norm=gn, force_residual=scaled, converged=bool(gn < tol),
                     size_at_start=float(np.linalg.norm(W[0])), clearance=clearance, restarts=restarts)
    if gn >= tol:
        raise ConvergenceError(f"gradient {gn:.3e} above tolerance {tol:.1e}", best=path, residual=gn)
    return path


def transversality(path: DiscretePath, bc: BoundaryCondition, masses=EQUAL_MASSES):
    """Cosines between the end velocities and the boundary sets.

    Returns (start velocity . ray direction, end velocity projected on the
    plane), both normalized by the speed; zero for a natural extremal.
    """
    v0, v1 = path.endpoint_velocities(masses)
    out0 = float(v0 @ bc.start / np.linalg.norm(v0)) if bc.start_kind == "ray" else 0.0
    if bc.end_kind == "plane":
        tang = v1 - (v1 @ bc.end) * bc.end
        out1 = float(np.linalg.norm(tang) / np.linalg.norm(v1))
    else:
        out1 = 0.0
    return out0, out1


@dataclass(eq=False)
class ClosedCurve:
    nodes: np.ndarray
    times: np.ndarray
    symmetries: list
    junction_mismatch: list
    start_velocity: np.ndarray

    @property
    def period(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def closure_error(self) -> float:
        return float(np.linalg.norm(self.nodes[-1] - self.nodes[0]))


def extend_by_symmetry(arc: DiscretePath, masses=EQUAL_MASSES, tol: float = 1e-8, arcs: int = 12) -> ClosedCurve:
    """Continue the arc 11 times, each time by the symmetry that fixes the
    current endpoint and reverses its velocity."""
    m = as_masses(masses)
    syms = equal_mass_symmetries(m)
    v_start, v_end = arc.endpoint_velocities(m)
    pieces = [arc.nodes]
    names = []
    mismatch = []
    cur, cur_v0, cur_v1 = arc.nodes, v_start, v_end
    for _ in range(arcs - 1):
        p = cur[-1]
        v = cur_v1
        scores = [np.linalg.norm(s(p) - p) / np.linalg.norm(p) + np.linalg.norm(s(v) + v) / np.linalg.norm(v)
                  for s in syms]
        best = int(np.argmin(scores))
        S = syms[best]
        pos_err = float(np.linalg.norm(S(p) - p))
        vel_err = float(np.linalg.norm(S(v) + v))
        if pos_err > tol * max(1.0, np.linalg.norm(p)) or vel_err > tol * max(1.0, np.linalg.norm(v)):
            raise ConvergenceError(
                f"no symmetry continues the arc smoothly (position {pos_err:.2e}, velocity {vel_err:.2e});"
                " the arc is not converged", residual=max(pos_err, vel_err))
        nxt = S(cur[::-1])
        nxt[0] = p
        cur, cur_v0, cur_v1 = nxt, v, -S(cur_v0)
        pieces.append(nxt)
        names.append(S.name)
        mismatch.append(max(pos_err, vel_err))
    nodes = np.vstack([pieces[0]] + [pc[1:] for pc in pieces[1:]])
    times = np.linspace(0.0, arcs * arc.T, len(nodes))
    closed = ClosedCurve(nodes, times, names, mismatch, v_start)
    vel_close = float(np.linalg.norm(cur_v1 - v_start))
    closed.velocity_closure_error = vel_close
    return closed


def _lift_rhs(spline, m):
    d = spline.derivative()

    def f(t, y):
        Z = JacobiCoordinates(complex(y[0], y[1]), complex(y[2], y[3]))
        I = y @ y
        return jacobian_rot(Z).T @ (d(t) / I)

    return f


def reconstruct_planar_orbit(curve: ClosedCurve, masses=EQUAL_MASSES, cfg: IntegratorConfig = None) -> Trajectory:
    """Horizontal lift (P = 0, J = 0) of a closed shape curve, sampled at its nodes.

    The lift solves Z' = L(Z)^T w'(t) / |Z|^2 along a periodic cubic spline
    of the nodes; ``meta['holonomy']`` is the rotation angle between the
    lift's end and start.
    """
    m = as_masses(masses)
    cfg = cfg or IntegratorConfig(abs_tol=1e-12, rel_tol=1e-12)
    nodes = curve.nodes.copy()
    nodes[-1] = nodes[0]
    spline = CubicSpline(curve.times, nodes, bc_type="periodic")
    Z0 = gauge_jacobi(nodes[0])
    y0 = np.array([Z0[0].real, Z0[0].imag, Z0[1].real, Z0[1].imag])
    f = _lift_rhs(spline, m)
    times, Y, dense, reason = solve(f, y0, curve.period, cfg)
    Ys = dense(curve.times)
    Ys[0] = y0
    Z1 = Ys[:, 0] + 1j * Ys[:, 1]
    Z2 = Ys[:, 2] + 1j * Ys[:, 3]
    q = config_from_jacobi(JacobiCoordinates(Z1, Z2), m)
    dW = spline.derivative()(curve.times)
    v = np.array([horizontal_lift_velocity(qk, wd, m) for qk, wd in zip(q, dW)])
    states = np.hstack([q.real, q.imag, v.real, v.imag])
    traj = Trajectory(curve.times, states, "full", m, reason)
    Zend = np.array([Z1[-1], Z2[-1]])
    Zstart = np.array([Z1[0], Z2[0]])
    traj.meta["holonomy"] = float(np.angle(np.vdot(Zstart, Zend)))
    return traj


@dataclass(eq=False)
class ShootingResult:
    state: PhaseState
    period: float
    residual: float
    iterations: int
    middle_body: int


def _euler_ansatz(params, k):
    """Collinear state with body k at the origin, the others at -/+ a on the real
    axis moving with velocity -V/2 each (P = 0, J = 0 by construction)."""
    a, vr, vi = params
    i, j = [x for x in range(3) if x != k]
    q = np.zeros(3, dtype=complex)
    v = np.zeros(3, dtype=complex)
    q[i], q[j] = -a, a
    V = complex(vr, vi)
    v[k] = V
    v[i] = v[j] = -V / 2
    return PhaseState(q, v)


def refine_by_shooting(guess: PhaseState, period: float, masses=EQUAL_MASSES,
                       cfg: IntegratorConfig = None, tol: float = 1e-10) -> ShootingResult:
    """Single shooting for an equal-mass periodic orbit starting at an Euler configuration.

    The guess is rotated so the collinear line is the real axis and reduced
    to (a, V): outer bodies at -/+ a, middle body velocity V, outer bodies
    -V/2.  Gauss-Newton drives |phi_period(y0) - y0| to zero.
    """
    m = as_masses(masses)
    if not m.is_equal:
        raise UnsupportedMassesError("figure-eight shooting needs equal masses")
    cfg = cfg or IntegratorConfig(abs_tol=1e-13, rel_tol=1e-13)
    q = core.centered(guess.q, m)
    v = guess.v - core.linear_momentum(guess, m) / m.M
    r = core.pairwise_separations(q)
    longest = int(np.argmax(r))
    i, j = core.PAIR_INDEX[core.PAIRS[longest]]
    k = 3 - i - j
    lo, hi = sorted((i, j))
    rot = np.exp(-1j * np.angle(q[hi] - q[lo]))
    q, v = q * rot, v * rot
    x0 = np.array([0.5 * abs(q[hi] - q[lo]), v[k].real, v[k].imag])
    f = core.full_rhs(m)
    count = [0]

    def resid(x):
        count[0] += 1
        y0 = _euler_ansatz(x, k).pack()
        _, Y, _, reason = solve(f, y0, period, cfg)
        if reason != TIME_REACHED:
            return np.full(12, 1e3)
        return Y[-1] - y0

    sol = least_squares(resid, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400)
    res = float(np.max(np.abs(sol.fun)))
    state = _euler_ansatz(sol.x, k)
    if not res < 1e-6:
        raise ConvergenceError(f"shooting did not converge (residual {res:.2e})", best=state, residual=res)
    return ShootingResult(state, period, res, count[0], k + 1)


def choreography_error(traj: Trajectory, period: float, samples: int = 600) -> float:
    """max |q2(t) - q1(t - P/3)|, |q3(t) - q1(t - 2P/3)| over one period (traj must span 2 periods)."""
    t = np.linspace(traj.times[0] + period, traj.times[0] + 2 * period, samples)
    Y = traj.sample(t)
    Y1 = traj.sample(t - period / 3)
    Y2 = traj.sample(t - 2 * period / 3)
    q = Y[:, 0:3] + 1j * Y[:, 3:6]
    q1a = Y1[:, 0] + 1j * Y1[:, 3]
    q1b = Y2[:, 0] + 1j * Y2[:, 3]
    return float(max(np.max(np.abs(q[:, 1] - q1a)), np.max(np.abs(q[:, 2] - q1b))))


def point_symmetry_error(traj: Trajectory, body: int = 0, samples: int = 2000) -> float:
    """Max distance from the reflected curve -q_body(t) to the traced curve."""
    t = np.linspace(traj.times[0], traj.times[-1], samples)
    Y = traj.sample(t)
    c = Y[:, body] + 1j * Y[:, 3 + body]
    tt = np.linspace(traj.times[0], traj.times[-1], 40 * samples)
    Yd = traj.sample(tt)
    cd = Yd[:, body] + 1j * Yd[:, 3 + body]
    err = 0.0
    for z in -c:
        k = int(np.argmin(np.abs(cd - z)))
        lo, hi = tt[max(k - 1, 0)], tt[min(k + 1, len(tt) - 1)]
        res = minimize_scalar(lambda s: abs(_body(traj, s, body) - z), bounds=(lo, hi), method="bounded",
                              options=dict(xatol=1e-13))
        err = max(err, res.fun)
    return float(err)


def _body(traj, t, body):
    y = traj.sample(t)
    return y[body] + 1j * y[3 + body]


@dataclass(eq=False)
class FigureEight:
    arc: DiscretePath
    curve: ClosedCurve
    lift: Trajectory
    shooting: ShootingResult
    orbit: Trajectory
    checks: dict


def find_figure_eight(N: int = 512, T: float = 1.0, seed: int = 0, cfg: IntegratorConfig = None) -> FigureEight:
    """Minimize, extend, lift, shoot and verify the equal-mass figure eight."""
    m = EQUAL_MASSES
    bc = BoundaryCondition.figure_eight(m)
    arc = minimize_arc(bc, T=T, N=N, seed=seed, masses=m)
    curve = extend_by_symmetry(arc, m)
    lift = reconstruct_planar_orbit(curve, m)
    period = curve.period
    guess = lift.state(0)
    shot = refine_by_shooting(guess, period, m)
    cfg = cfg or IntegratorConfig(abs_tol=1e-13, rel_tol=1e-13)
    state = shot.state
    orbit = integrate(state, m, 2 * period, cfg)
    if choreography_error(orbit, period) > choreography_error(_reverse_orbit(state, m, period, cfg), period):
        state = PhaseState(state.q, -state.v)
        orbit = integrate(state, m, 2 * period, cfg)
        shot = ShootingResult(state, period, shot.residual, shot.iterations, shot.middle_body)
    checks = verify_periodic_orbit(orbit, state, period, m)
    return FigureEight(arc, curve, lift, shot, orbit, checks)


def _reverse_orbit(state, m, period, cfg):
    return integrate(PhaseState(state.q, -state.v), m, 2 * period, cfg)


def verify_periodic_orbit(orbit: Trajectory, state: PhaseState, period: float, masses=EQUAL_MASSES) -> dict:
    from .syzygy import detect_syzygies, syzygy_sequence

    m = as_masses(masses)
    y_p = orbit.sample(orbit.times[0] + period)
    y0 = state.pack()
    one = orbit.resample(orbit.times[(orbit.times <= period + 1e-12)])
    window = orbit.resample(np.linspace(period / 24, period + period / 24, 4001))
    events = detect_syzygies(window, m).counted
    word = syzygy_sequence(events)
    return {
        "period": period,
        "periodicity_error": float(np.max(np.abs(y_p - y0))),
        "J": float(core.angular_momentum(state, m)),
        "P": float(abs(core.linear_momentum(state, m))),
        "energy": float(core.total_energy(state, m)),
        "choreography_error": choreography_error(orbit, period),
        "syzygy_count": len(events),
        "syzygy_word": word,
        "point_symmetry_error": point_symmetry_error(one),
    }


def reduced_el_residual(path: DiscretePath, masses=EQUAL_MASSES) -> float:
    """Max over interior nodes of |second difference - reduced_accelerations(central velocity)|."""
    from .reduced import ReducedState, reduced_accelerations

    W, h = path.nodes, path.h
    wd = (W[2:] - W[:-2]) / (2 * h)
    wdd = (W[2:] - 2 * W[1:-1] + W[:-2]) / h**2
    acc = np.array([reduced_accelerations(ReducedState(w, v), masses) for w, v in zip(W[1:-1], wd)])
    return float(np.max(np.linalg.norm(acc - wdd, axis=1)))


def symmetry_group(masses=EQUAL_MASSES) -> list:
    """All shape-space matrices generated by the equal-mass reflections and half-twists."""
    gens = [s.matrix for s in equal_mass_symmetries(masses)]
    group = [np.eye(3)]
    frontier = [np.eye(3)]
    while frontier:
        new = []
        for g in frontier:
            for s in gens:
                h = s @ g
                if not any(np.allclose(h, k, atol=1e-12) for k in group):
                    group.append(h)
                    new.append(h)
        frontier = new
    return group


def curve_self_map_error(curve: ClosedCurve, masses=EQUAL_MASSES) -> float:
    """Largest distance from a mapped node to the nearest curve node, over the symmetry group."""
    from scipy.spatial import cKDTree

    tree = cKDTree(curve.nodes)
    return float(max(tree.query(curve.nodes @ g.T)[0].max() for g in symmetry_group(masses)))


def collinear_crossings(curve: ClosedCurve, tol: float = 1e-12) -> int:
    """Number of times the closed curve passes through w3 = 0 in one period."""
    w3 = curve.nodes[:-1, 2] / np.linalg.norm(curve.nodes[:-1], axis=1)
    sign = np.where(np.abs(w3) <= tol, 0, np.sign(w3))
    count = 0
    n = len(sign)
    for k in range(n):
        a, b = sign[k], sign[(k + 1) % n]
        if a == 0:
            prev = sign[(k - 1) % n]
            if prev != 0 and b != 0 and prev != b:
                count += 1
        elif b != 0 and a != b:
            count += 1
    return count
