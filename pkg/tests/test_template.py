import numpy as np
import pytest
from scipy.optimize import minimize

from eyeglass_recon.losses import sym_plane
from eyeglass_recon.mesh import Mesh, MeshError, bbox_diagonal
from eyeglass_recon.synth import KEYPOINTS, synth_frame
from eyeglass_recon.template import (CoincidenceError, arithmetic_mean, build_template,
                                     dataset_hash, mesh_dist, objective, weiszfeld_step)

TRI = np.array([[0, 1, 2]])


def _points_as_meshes(points):
    """Each row of 9 numbers becomes a single-triangle mesh."""
    return [Mesh(np.asarray(p, dtype=float).reshape(-1, 3), TRI) for p in points]


def test_weiszfeld_objective_is_monotone(template_history):
    tm, history = template_history
    assert np.all(np.diff(history) <= 1e-9 * history[0])
    assert 10 <= tm.iterations <= 100
    assert len(tm.dataset_hash) == 16


def test_template_keypoints_centered(template):
    # every dataset member is mirror-symmetric, so the median is as well
    assert abs(sym_plane(template.keypoint_vertices)) < 1e-9


def test_planted_symmetric_median_is_recovered():
    # pairs m0 + r u and m0 - r' u: unit vectors cancel, so m0 is the median
    # although the arithmetic mean is pulled toward the longer arms
    rng = np.random.default_rng(5)
    m0 = rng.normal(size=9)
    pts = []
    for _ in range(4):
        u = rng.normal(size=9)
        u /= np.linalg.norm(u)
        pts += [m0 + rng.uniform(1, 3) * u, m0 - rng.uniform(4, 6) * u]
    data = _points_as_meshes(pts)
    mean = arithmetic_mean(data).vertices.ravel()
    assert np.linalg.norm(mean - m0) > 0.1
    tm = build_template(data, KEYPOINTS_STUB, tol=1e-10, max_iter=5000)
    assert np.linalg.norm(tm.mesh.vertices.ravel() - m0) < 1e-6


def test_matches_generic_minimizer():
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(7, 9)) * [1, 2, 3, 1, 1, 1, 5, 1, 1]
    data = _points_as_meshes(pts)
    tm = build_template(data, KEYPOINTS_STUB, tol=1e-12, max_iter=10000)
    f = lambda x: np.sum(np.linalg.norm(pts - x, axis=1))
    ref = minimize(f, pts.mean(axis=0), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 200000, "maxfev": 200000})
    assert f(tm.mesh.vertices.ravel()) <= ref.fun + 1e-9
    assert np.allclose(tm.mesh.vertices.ravel(), ref.x, atol=1e-4)


def test_coincidence_returns_member():
    pts = np.array([[0.0] * 9, [1.0] * 9, [-1.0] * 9])
    data = _points_as_meshes(pts)
    with pytest.raises(CoincidenceError) as exc:
        weiszfeld_step(data[0], data)
    assert exc.value.index == 0
    tm = build_template(data, KEYPOINTS_STUB)
    assert np.array_equal(tm.mesh.vertices, data[0].vertices)


def test_distances_and_objective():
    a, b = _points_as_meshes([[0.0] * 9, [0, 0, 0, 3, 4, 0, 0, 0, 0]])
    assert mesh_dist(a, b) == 5.0
    assert objective(a, [a, b]) == 2.5


def test_topology_errors():
    a = synth_frame()[0]
    b = _points_as_meshes([[0.0] * 9])[0]
    with pytest.raises(MeshError):
        build_template([a, b], KEYPOINTS)
    with pytest.raises(MeshError):
        build_template([], KEYPOINTS)
    with pytest.raises(MeshError):
        mesh_dist(a, b)


def test_dataset_hash_changes_with_content(dataset):
    assert dataset_hash(dataset) == dataset_hash(list(dataset))
    assert dataset_hash(dataset) != dataset_hash(dataset[:-1])


def test_template_within_dataset_hull(dataset, template):
    lo = np.min([d.vertices for d in dataset], axis=0)
    hi = np.max([d.vertices for d in dataset], axis=0)
    v = template.mesh.vertices
    assert np.all(v >= lo - 1e-9) and np.all(v <= hi + 1e-9)
    assert 150 < bbox_diagonal(template.mesh) < 250


class _Stub:
    """Keypoint spec placeholder for point-cloud tests (not inspected)."""


KEYPOINTS_STUB = _Stub()
