"""Syzygies: instants where the three bodies are collinear (w3 = 0)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import core
from .core import PhaseState, as_masses
from .geometry import side_lengths_from_shape
from .integrator import Trajectory, detect_events
from .projection import project

COLLISION_GRAZE = "collision-graze"
GRAZE_FRACTION = 1e-6  # min side below this fraction of the size -> collision graze


@dataclass(frozen=True, eq=False)
class SyzygyEvent:
    time: float
    w: np.ndarray
    type: object  # 1, 2, 3 (middle body) or COLLISION_GRAZE
    grazing: bool = False

    @property
    def counted(self) -> bool:
        return self.type in (1, 2, 3) and not self.grazing


class SyzygyList(list):
    """List of SyzygyEvent; ``identically_collinear`` marks orbits with w3 = 0 throughout."""

    identically_collinear: bool = False

    @property
    def counted(self) -> list:
        return [e for e in self if e.counted]


def _shape_of(kind, masses):
    if kind == "full":
        return lambda s: project(s.q, masses)
    return lambda s: s.w


def classify(w, masses):
    """Middle body of a collinear shape: the one not in the longest pair."""
    r = side_lengths_from_shape(w, masses)
    size = np.sqrt(2 * np.linalg.norm(w) / as_masses(masses).M)
    if np.min(r) <= GRAZE_FRACTION * size:
        return COLLISION_GRAZE
    longest = core.PAIRS[int(np.argmax(r))]
    i, j = core.PAIR_INDEX[longest]
    return 3 - i - j + 1


def detect_syzygies(trajectory: Trajectory, masses=None, collinear_tol: float = 1e-12) -> SyzygyList:
    """Transversal zeros of w3 along a full or reduced trajectory, typed by middle body."""
    m = as_masses(masses if masses is not None else trajectory.masses)
    shape = _shape_of(trajectory.kind, m)
    out = SyzygyList()
    if len(trajectory) == 0:
        return out
    W = project(trajectory.q, m) if trajectory.kind == "full" else trajectory.w
    size = np.linalg.norm(W, axis=-1)
    if np.all(np.abs(W[:, 2]) <= collinear_tol * np.maximum(size, 1e-300)):
        out.identically_collinear = True
        return out
    for ev in detect_events(trajectory, lambda s: shape(s)[2]):
        w = shape(ev.state)
        out.append(SyzygyEvent(ev.time, w, classify(w, m), ev.grazing))
    return out


def syzygy_sequence(events) -> str:
    """Word over {1, 2, 3} from the counted events, in time order, unreduced."""
    return "".join(str(e.type) for e in sorted(events, key=lambda e: e.time) if e.counted)


@dataclass(frozen=True)
class HypothesisReport:
    negative_energy: bool
    zero_angular_momentum: bool

    @property
    def applies(self) -> bool:
        return self.negative_energy and self.zero_angular_momentum

    def __iter__(self):
        return iter((self.negative_energy, self.zero_angular_momentum, self.applies))


def hypothesis_check(state: PhaseState, masses, j_tol: float = 1e-10) -> HypothesisReport:
    """Does the state have H < 0 and J = 0 (to ``j_tol``)?"""
    m = as_masses(masses)
    H = core.total_energy(state, m)
    J = core.angular_momentum(PhaseState(core.centered(state.q, m), state.v), m)
    return HypothesisReport(bool(H < 0), bool(abs(J) <= j_tol))
