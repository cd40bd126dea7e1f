"""Static figures written next to the data files (Agg backend, no display)."""
from __future__ import annotations

import os
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import OutputError  # noqa: E402

COLORS = ("tab:red", "tab:blue", "tab:green")


def _save(fig, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.stem}.", suffix=path.suffix)
        os.close(fd)
        fig.savefig(tmp, dpi=120, bbox_inches="tight")
        os.replace(tmp, path)
    except OSError as e:
        raise OutputError(path, e.strerror or str(e)) from e
    finally:
        plt.close(fig)
    return path


def plot_bodies(traj, path, title=None):
    """Planar paths of the three bodies."""
    fig, ax = plt.subplots(figsize=(5, 5))
    q = traj.q
    for i in range(3):
        ax.plot(q[:, i].real, q[:, i].imag, color=COLORS[i], lw=1, label=f"body {i + 1}")
        ax.plot(q[0, i].real, q[0, i].imag, "o", color=COLORS[i], ms=4)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.legend(loc="best", fontsize=8)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def _sphere_axes(special=None):
    fig = plt.figure(figsize=(5.5, 5))
    ax = fig.add_subplot(projection="3d")
    u, v = np.mgrid[0:2 * np.pi:40j, 0:np.pi:20j]
    ax.plot_wireframe(np.cos(u) * np.sin(v), np.sin(u) * np.sin(v), np.cos(v), color="0.85", lw=0.4)
    t = np.linspace(0, 2 * np.pi, 200)
    ax.plot(np.cos(t), np.sin(t), 0 * t, color="0.5", lw=0.8)
    if special:
        for name, p in special.items():
            p = np.asarray(p) / np.linalg.norm(p)
            ax.scatter(*p, s=18, color="k")
            ax.text(*(1.1 * p), name, fontsize=7)
    ax.set_box_aspect((1, 1, 1))
    ax.set_xlabel("w1")
    ax.set_ylabel("w2")
    ax.set_zlabel("w3")
    return fig, ax


def plot_shape_sphere(W, path, special=None, title=None):
    """Shape curve normalized onto the unit sphere, with labeled special points."""
    W = np.asarray(W, dtype=float)
    fig, ax = _sphere_axes(special)
    if len(W):
        U = W / np.linalg.norm(W, axis=1)[:, None]
        ax.plot(U[:, 0], U[:, 1], U[:, 2], color="tab:purple", lw=1.2)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_series(t, series: dict, path, ylabel="", logy=False, title=None):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for name, y in series.items():
        y = np.asarray(y, dtype=float)
        if logy:
            ax.semilogy(t, np.maximum(np.abs(y), 1e-300), lw=1, label=name)
        else:
            ax.plot(t, y, lw=1, label=name)
    ax.set_xlabel("t")
    ax.set_ylabel(ylabel)
    if len(series) > 1:
        ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_syzygies(t, w3, events, path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(t, w3, lw=1, color="0.3")
    ax.axhline(0, color="0.7", lw=0.6)
    for e in events:
        marker = "x" if not e.counted else "o"
        ax.plot(e.time, 0, marker, color=COLORS[e.type - 1] if e.type in (1, 2, 3) else "k", ms=5)
    ax.set_xlabel("t")
    ax.set_ylabel("w3")
    return _save(fig, path)
