"""Class template as the geometric median of a topology-consistent dataset.

Each mesh is treated as a single point in R^(3 n_v); the median is found with
Weiszfeld's iteratively re-weighted averaging, started from the arithmetic
mean.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, MeshError, bbox_diagonal
from .synth import KeypointSpec

log = logging.getLogger(__name__)

EPS_GUARD = 1e-9


class CoincidenceError(RuntimeError):
    """The iterate coincides with a dataset member; it is the answer."""

    def __init__(self, index: int, distance: float):
        super().__init__(f"iterate coincides with dataset member {index} (distance {distance:.3g})")
        self.index = index
        self.distance = distance


@dataclass(frozen=True, eq=False)
class TemplateModel:
    mesh: Mesh
    keypoints: KeypointSpec
    dataset_hash: str = ""
    iterations: int = 0

    @property
    def keypoint_vertices(self) -> np.ndarray:
        return self.mesh.vertices[list(self.keypoints.indices)]


def _check_topology(dataset) -> None:
    if len(dataset) == 0:
        raise MeshError("empty dataset")
    first = dataset[0]
    for k, m in enumerate(dataset[1:], 1):
        if not first.same_topology(m):
            raise MeshError(f"dataset member {k} has a different topology")


def mesh_dist(a: Mesh, b: Mesh) -> float:
    """Euclidean norm of the stacked vertex difference."""
    if not a.same_topology(b):
        raise MeshError("meshes have different topology")
    return float(np.linalg.norm((a.vertices - b.vertices).ravel()))


def objective(current: Mesh, dataset) -> float:
    """Mean distance from ``current`` to the dataset members."""
    return float(np.mean([mesh_dist(current, d) for d in dataset]))


def arithmetic_mean(dataset) -> Mesh:
    _check_topology(dataset)
    acc = np.zeros_like(dataset[0].vertices)
    for d in dataset:
        acc = acc + d.vertices
    return dataset[0].with_vertices(acc / len(dataset))


def weiszfeld_step(current: Mesh, dataset, eps_guard: float = EPS_GUARD) -> Mesh:
    """One inverse-distance-weighted average of the dataset.

    Raises :class:`CoincidenceError` when ``current`` lies within
    ``eps_guard`` of a member.
    """
    _check_topology(dataset)
    dists = np.array([mesh_dist(current, d) for d in dataset])
    k = int(np.argmin(dists))
    if dists[k] <= eps_guard:
        raise CoincidenceError(k, float(dists[k]))
    w = 1.0 / dists
    acc = np.zeros_like(current.vertices)
    for wi, d in zip(w, dataset):
        acc = acc + wi * d.vertices
    return current.with_vertices(acc / w.sum())


def dataset_hash(dataset) -> str:
    h = hashlib.sha256()
    for d in dataset:
        h.update(np.ascontiguousarray(d.vertices).tobytes())
        h.update(np.ascontiguousarray(d.faces).tobytes())
    return h.hexdigest()[:16]


def build_template(dataset, spec: KeypointSpec, tol: float | None = None,
                   max_iter: int = 200, history: list | None = None) -> TemplateModel:
    """Geometric-median template.

    Stops when successive iterates are closer than ``tol`` (default
    1e-6 times the bounding-box diagonal of the mean) or after ``max_iter``
    steps. ``history``, if given, receives the objective after every step,
    starting with the mean.
    """
    current = arithmetic_mean(dataset)
    if tol is None:
        tol = 1e-6 * bbox_diagonal(current)
    if history is not None:
        history.append(objective(current, dataset))
    it = 0
    while it < max_iter:
        try:
            nxt = weiszfeld_step(current, dataset)
        except CoincidenceError as exc:
            log.debug("weiszfeld stopped: %s", exc)
            current = dataset[exc.index]
            it += 1
            break
        it += 1
        step = mesh_dist(nxt, current)
        current = nxt
        if history is not None:
            history.append(objective(current, dataset))
        if step < tol:
            break
    log.info("template converged after %d Weiszfeld iterations", it)
    return TemplateModel(current, spec, dataset_hash(dataset), it)
