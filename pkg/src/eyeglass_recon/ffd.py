"""Trivariate Bernstein free-form deformation.

Control points are stored in lattice-grid order with the w index fastest:
flat index = (i * (m + 1) + j) * (n + 1) + k.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from math import comb

import numpy as np

from .mesh import Mesh

DEFAULT_DIMS = (9, 7, 4)
DEFAULT_PADDING = 0.05


def bernstein(i: int, n: int, x):
    """C(n, i) x^i (1 - x)^(n - i)."""
    if not 0 <= i <= n:
        raise ValueError(f"Bernstein index {i} outside [0, {n}]")
    x = np.asarray(x, dtype=np.float64)
    return comb(n, i) * x ** i * (1.0 - x) ** (n - i)


def bernstein_all(n: int, x) -> np.ndarray:
    """All degree-n Bernstein values, shape (len(x), n + 1)."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    i = np.arange(n + 1)
    c = np.array([comb(n, k) for k in i], dtype=np.float64)
    return c * x[:, None] ** i * (1.0 - x[:, None]) ** (n - i)


@dataclass(frozen=True, eq=False)
class FfdLattice:
    """Axis-aligned FFD lattice with a precomputed dense basis ``B``."""

    dims: tuple
    origin: np.ndarray
    axes: np.ndarray          # rows u, v, w (full edge vectors)
    padding: float
    control_points: np.ndarray
    basis: np.ndarray

    @property
    def n_control(self) -> int:
        l, m, n = self.dims
        return (l + 1) * (m + 1) * (n + 1)

    def local_coords(self, points) -> np.ndarray:
        """Lattice coordinates (s, t, u) of world points (orthogonal axes)."""
        rel = np.asarray(points, dtype=np.float64) - self.origin
        return rel @ self.axes.T / np.sum(self.axes ** 2, axis=1)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "origin": self.origin.tolist(),
                "axes": self.axes.tolist(), "padding": self.padding}

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _basis(dims, coords) -> np.ndarray:
    l, m, n = dims
    bu = bernstein_all(l, coords[:, 0])
    bv = bernstein_all(m, coords[:, 1])
    bw = bernstein_all(n, coords[:, 2])
    return np.einsum("pi,pj,pk->pijk", bu, bv, bw).reshape(len(coords), -1)


def _grid(dims, origin, axes) -> np.ndarray:
    l, m, n = dims
    s, t, u = np.meshgrid(np.arange(l + 1) / l, np.arange(m + 1) / m, np.arange(n + 1) / n,
                          indexing="ij")
    st = np.stack([s.ravel(), t.ravel(), u.ravel()], axis=1)
    return origin + st @ axes


def lattice_from_box(vertices, dims, origin, axes, padding) -> FfdLattice:
    dims = tuple(int(d) for d in dims)
    origin = np.asarray(origin, dtype=np.float64)
    axes = np.asarray(axes, dtype=np.float64)
    gram = axes @ axes.T
    if np.max(np.abs(gram - np.diag(np.diag(gram)))) > 1e-9 * np.max(np.diag(gram)):
        raise ValueError("lattice axes must be orthogonal")
    lat = FfdLattice(dims, origin, axes, float(padding), _grid(dims, origin, axes),
                     np.zeros((0, 0)))
    coords = lat.local_coords(vertices)
    if coords.size and (coords.min() < -1e-9 or coords.max() > 1 + 1e-9):
        raise ValueError("vertices fall outside the lattice")
    basis = _basis(dims, np.clip(coords, 0.0, 1.0))
    object.__setattr__(lat, "basis", basis)
    return lat


def build_lattice(mesh: Mesh, dims=DEFAULT_DIMS, padding: float = DEFAULT_PADDING) -> FfdLattice:
    """Lattice around the bounding box of ``mesh`` inflated by ``padding`` per side."""
    if any(int(d) < 1 for d in dims):
        raise ValueError("lattice dims must each be >= 1")
    v = mesh.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    ext = hi - lo
    if np.any(ext <= 0.0):
        raise ValueError("degenerate bounding box")
    lo = lo - padding * ext
    ext = ext * (1.0 + 2.0 * padding)
    return lattice_from_box(v, dims, lo, np.diag(ext), padding)


def load_lattice(path, mesh: Mesh) -> FfdLattice:
    """Rebuild a lattice from its JSON description around ``mesh``."""
    with open(path) as fh:
        d = json.load(fh)
    return lattice_from_box(mesh.vertices, d["dims"], d["origin"], d["axes"], d.get("padding", 0.0))


def _check_delta(lattice, delta) -> np.ndarray:
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != (lattice.n_control, 3):
        raise ValueError(f"delta shape {delta.shape} != ({lattice.n_control}, 3)")
    if not np.all(np.isfinite(delta)):
        raise ValueError("delta must be finite")
    return delta


def deform(lattice: FfdLattice, delta) -> np.ndarray:
    """Deformed vertices B (P + delta)."""
    delta = _check_delta(lattice, delta)
    return lattice.basis @ (lattice.control_points + delta)


def backprop_delta(lattice: FfdLattice, grad_vertices) -> np.ndarray:
    """Gradient w.r.t. delta of a loss whose vertex gradient is ``grad_vertices``."""
    g = np.asarray(grad_vertices, dtype=np.float64)
    if g.shape != (lattice.basis.shape[0], 3):
        raise ValueError(f"gradient shape {g.shape} != ({lattice.basis.shape[0]}, 3)")
    return lattice.basis.T @ g


def delta_to_list(delta) -> list:
    """Flat list of 3 * n_c numbers in lattice-grid order."""
    return [float(x) for x in np.asarray(delta, dtype=np.float64).ravel()]


def delta_from_list(values, n_control: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size != 3 * n_control:
        raise ValueError(f"expected {3 * n_control} values, got {arr.size}")
    return arr.reshape(n_control, 3)
