"""Triangle mesh container, Wavefront OBJ I/O and vertex adjacency."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Raised for malformed meshes or OBJ files."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangle mesh.

    Parameters
    ----------
    vertices : (n_v, 3) float array, millimetres.
    faces : (n_f, 3) int array of 0-based vertex indices.
    """

    vertices: np.ndarray
    faces: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise MeshError("face index out of range")
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise MeshError("degenerate face repeats a vertex index")
        v.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices) -> "Mesh":
        """Same topology, new vertex positions."""
        vertices = np.asarray(vertices, dtype=np.float64)
        if vertices.shape != self.vertices.shape:
            raise MeshError(f"vertex shape {vertices.shape} != {self.vertices.shape}")
        return Mesh(vertices, self.faces)

    def same_topology(self, other: "Mesh") -> bool:
        return (self.n_vertices == other.n_vertices
                and np.array_equal(self.faces, other.faces))


def load_obj(path) -> Mesh:
    """Read ``v`` and triangular ``f`` records from an OBJ file.

    Normals, texture coordinates and groups are ignored. Face tokens of the
    form ``i/j/k`` use only the position index; negative (relative) indices
    are resolved against the vertices read so far.
    """
    verts, faces = [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshError(f"{path}:{lineno}: vertex needs 3 coordinates")
                try:
                    verts.append([float(t) for t in parts[1:4]])
                except ValueError as exc:
                    raise MeshError(f"{path}:{lineno}: {exc}") from None
            elif tag == "f":
                if len(parts) != 4:
                    raise MeshError(f"{path}:{lineno}: only triangular faces are supported")
                tri = []
                for tok in parts[1:]:
                    try:
                        idx = int(tok.split("/")[0])
                    except ValueError:
                        raise MeshError(f"{path}:{lineno}: bad face token {tok!r}") from None
                    if idx < 0:
                        idx = len(verts) + idx + 1
                    if idx < 1 or idx > len(verts):
                        raise MeshError(f"{path}:{lineno}: face index {tok} out of range")
                    tri.append(idx - 1)
                faces.append(tri)
    return Mesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_obj(mesh: Mesh, path) -> None:
    """Write ``mesh`` as ASCII OBJ. Output is byte-deterministic."""
    lines = [f"v {x:.9f} {y:.9f} {z:.9f}\n" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}\n" for a, b, c in mesh.faces]
    Path(path).write_text("".join(lines), encoding="ascii")


def bbox_diagonal(mesh_or_vertices) -> float:
    """Length of the axis-aligned bounding box diagonal."""
    v = mesh_or_vertices.vertices if isinstance(mesh_or_vertices, Mesh) else np.asarray(mesh_or_vertices)
    if len(v) == 0:
        raise MeshError("bounding box of an empty mesh")
    return float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))


@dataclass(frozen=True, eq=False)
class AdjacencyTable:
    """CSR-style neighbour lists; ``neighbors(i)`` is sorted ascending."""

    offsets: np.ndarray
    indices: np.ndarray

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.offsets[i]:self.offsets[i + 1]]

    @property
    def valence(self) -> np.ndarray:
        return np.diff(self.offsets)

    def __len__(self):
        return len(self.offsets) - 1

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Directed edge list (row, col), both directions present."""
        rows = np.repeat(np.arange(len(self)), self.valence)
        return rows, self.indices


def vertex_adjacency(mesh: Mesh) -> AdjacencyTable:
    """Neighbour table built from the face list (deduplicated, symmetric)."""
    f = mesh.faces
    n = mesh.n_vertices
    if len(f) == 0:
        return AdjacencyTable(np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64))
    a = np.concatenate([f[:, 0], f[:, 1], f[:, 2], f[:, 1], f[:, 2], f[:, 0]])
    b = np.concatenate([f[:, 1], f[:, 2], f[:, 0], f[:, 0], f[:, 1], f[:, 2]])
    pairs = np.unique(a * n + b)
    rows, cols = pairs // n, pairs % n
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.add.at(offsets, rows + 1, 1)
    offsets = np.cumsum(offsets)
    return AdjacencyTable(offsets, cols.astype(np.int64))
