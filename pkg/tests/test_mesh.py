import numpy as np
import pytest

from conftest import cube_mesh, icosphere_mesh, unit_square_mesh
from oracles import ray_triangle_hits_oracle
from vcsfm.errors import InvalidCoordinateError, ParseError
from vcsfm.geometry import Ray
from vcsfm.mesh import (
    SurfaceCoordinate,
    TriangleMesh,
    batch_all_hits,
    batch_first_hits,
    first_hit,
    load_mesh_text,
    ray_mesh_all_hits,
    save_mesh_text,
    surface_distance,
    surface_point,
    surface_points,
)


def test_square_single_hit_depth_one():
    mesh = unit_square_mesh()
    hits = ray_mesh_all_hits(mesh, Ray([0.5, 0.25, -1.0], [0.0, 0.0, 1.0]))
    assert len(hits) == 1
    assert hits[0].depth == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(hits[0].point, [0.5, 0.25, 0.0], atol=1e-12)


def test_square_ray_pointing_away_misses():
    mesh = unit_square_mesh()
    assert ray_mesh_all_hits(mesh, Ray([0.5, 0.25, -1.0], [0.0, 0.0, -1.0])) == []


def test_cube_interior_ray_two_hits_vs_oracle():
    mesh = cube_mesh()
    ray = Ray([0.1, -0.2, -5.0], [0.0, 0.0, 1.0])
    hits = ray_mesh_all_hits(mesh, ray)
    assert len(hits) == 2
    assert hits[0].depth < hits[1].depth
    assert hits[0].point[2] == pytest.approx(-0.5, abs=1e-12)
    assert hits[1].point[2] == pytest.approx(0.5, abs=1e-12)
    oracle = ray_triangle_hits_oracle(mesh.vertices, mesh.faces, ray.origin, ray.direction)
    assert len(oracle) == 2
    for h, (t, _, _) in zip(hits, oracle):
        assert h.depth == pytest.approx(t, abs=1e-12)


def test_first_hit_is_head_of_all_hits():
    mesh = cube_mesh()
    ray = Ray([0.1, -0.2, -5.0], [0.0, 0.0, 1.0])
    fh = first_hit(mesh, ray)
    assert fh.depth == ray_mesh_all_hits(mesh, ray)[0].depth
    assert first_hit(mesh, Ray([0.0, 0.0, -5.0], [0.0, 0.0, -1.0])) is None
    assert first_hit(unit_square_mesh(), Ray([0.5, 0.25, -1.0], [0, 0, 1])).depth == 1.0


def test_surface_point_vertices_and_centroid():
    mesh = unit_square_mesh()
    assert np.allclose(surface_point(mesh, SurfaceCoordinate(0, (1.0, 0.0, 0.0))), [0, 0, 0])
    c = surface_point(mesh, SurfaceCoordinate(0, (1 / 3, 1 / 3, 1 / 3)))
    assert np.allclose(c, mesh.vertices[mesh.faces[0]].mean(axis=0), atol=1e-12)


def test_surface_point_roundtrip_from_hits(rng):
    mesh = icosphere_mesh(2)
    for _ in range(50):
        origin = rng.normal(size=3)
        origin = origin / np.linalg.norm(origin) * 3.0
        ray = Ray(origin, -origin)
        for hit in ray_mesh_all_hits(mesh, ray):
            assert np.linalg.norm(surface_point(mesh, hit.coord) - hit.point) < 1e-9
            assert np.linalg.norm(ray.point_at(hit.depth) - hit.point) < 1e-9


def test_surface_point_invalid_face():
    with pytest.raises(InvalidCoordinateError):
        surface_point(unit_square_mesh(), SurfaceCoordinate(5, (1.0, 0.0, 0.0)))


def test_surface_coordinate_validation():
    with pytest.raises(InvalidCoordinateError):
        SurfaceCoordinate(0, (0.5, 0.5, 0.5))
    with pytest.raises(InvalidCoordinateError):
        SurfaceCoordinate(0, (-0.2, 0.6, 0.6))


def test_surface_distance_basics():
    mesh = unit_square_mesh()
    a = SurfaceCoordinate(0, (1.0, 0.0, 0.0))
    b = SurfaceCoordinate(0, (0.0, 1.0, 0.0))  # vertex (1,0,0): unit edge
    assert surface_distance(mesh, a, a) == 0.0
    assert surface_distance(mesh, a, b) == pytest.approx(1.0, abs=1e-12)
    assert surface_distance(mesh, a, b) == surface_distance(mesh, b, a)


def test_surface_points_vectorized(rng):
    mesh = icosphere_mesh(1)
    faces = rng.integers(0, mesh.num_faces, size=20)
    b = rng.random((20, 3))
    b /= b.sum(axis=1, keepdims=True)
    batch = surface_points(mesh, faces, b)
    for i in range(20):
        single = surface_point(mesh, SurfaceCoordinate(faces[i], tuple(b[i])))
        assert np.allclose(batch[i], single, atol=1e-12)


@pytest.mark.parametrize("maker", [cube_mesh, lambda: icosphere_mesh(2)])
def test_watertight_hit_parity(maker, rng):
    mesh = maker()
    for _ in range(100):
        origin = rng.normal(size=3)
        origin = origin / np.linalg.norm(origin) * 4.0
        target = rng.normal(size=3) * 0.3
        ray = Ray(origin, target - origin)
        assert len(ray_mesh_all_hits(mesh, ray)) % 2 == 0


def test_hit_ordering_strictly_increasing(rng):
    mesh = icosphere_mesh(2)
    for _ in range(50):
        origin = rng.normal(size=3)
        origin = origin / np.linalg.norm(origin) * 4.0
        ray = Ray(origin, rng.normal(size=3) * 0.2 - origin)
        depths = [h.depth for h in ray_mesh_all_hits(mesh, ray)]
        assert all(b - a > 1e-12 for a, b in zip(depths, depths[1:]))


def test_shared_edge_grazing_single_hit_smallest_face():
    mesh = unit_square_mesh()
    # the diagonal (0,0)-(1,1) is shared by faces 0 and 1
    hits = ray_mesh_all_hits(mesh, Ray([0.5, 0.5, -2.0], [0.0, 0.0, 1.0]))
    assert len(hits) == 1
    assert hits[0].coord.face == 0


def test_bvh_matches_brute_force_on_large_mesh(rng):
    mesh = icosphere_mesh(3)  # 1280 faces: above the index threshold
    assert mesh.num_faces > 1000
    for _ in range(100):
        origin = rng.normal(size=3)
        origin = origin / np.linalg.norm(origin) * 3.0
        ray = Ray(origin, rng.normal(size=3) * 0.4 - origin)
        via_bvh = ray_mesh_all_hits(mesh, ray, accel="bvh")
        brute = ray_mesh_all_hits(mesh, ray, accel="brute")
        assert len(via_bvh) == len(brute)
        for a, b in zip(via_bvh, brute):
            assert abs(a.depth - b.depth) < 1e-9
            assert a.coord.face == b.coord.face
            assert np.linalg.norm(a.point - b.point) < 1e-9


def test_batch_first_hits_matches_single(rng):
    mesh = icosphere_mesh(2)
    origins = rng.normal(size=(40, 3))
    origins = origins / np.linalg.norm(origins, axis=1, keepdims=True) * 3.0
    dirs = rng.normal(size=(40, 3)) * 0.3 - origins
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    depth, face, bary, ok = batch_first_hits(mesh, origins, dirs, chunk=7)
    for i in range(40):
        single = first_hit(mesh, Ray(origins[i], dirs[i]))
        if single is None:
            assert not ok[i]
        else:
            assert ok[i]
            assert depth[i] == pytest.approx(single.depth, abs=1e-9)
            assert face[i] == single.coord.face


def test_batch_all_hits_matches_single(rng):
    mesh = cube_mesh()
    origins = np.tile([[0.0, 0.0, -4.0]], (9, 1)) + rng.normal(size=(9, 3)) * 0.1
    dirs = np.tile([[0.0, 0.0, 1.0]], (9, 1))
    per_ray = batch_all_hits(mesh, origins, dirs, chunk=4)
    for i, (depths, faces, barys) in enumerate(per_ray):
        singles = ray_mesh_all_hits(mesh, Ray(origins[i], dirs[i]))
        assert len(depths) == len(singles)
        for j, h in enumerate(singles):
            assert depths[j] == pytest.approx(h.depth, abs=1e-12)
            assert faces[j] == h.coord.face
            assert np.allclose(barys[j], h.coord.bary, atol=1e-9)


def test_batch_all_hits_respects_cap():
    mesh = cube_mesh()
    inner = cube_mesh(side=0.5)
    both = TriangleMesh(
        np.vstack([mesh.vertices, inner.vertices]),
        np.vstack([mesh.faces, inner.faces + len(mesh.vertices)]),
    )
    (hits,) = batch_all_hits(both, [[0.05, 0.04, -4.0]], [[0.0, 0.0, 1.0]], max_hits=3)
    assert len(hits[0]) == 3


def test_mesh_validation():
    with pytest.raises(ValueError):
        TriangleMesh([[0, 0, 0], [1, 0, 0]], [[0, 1, 2]])
    with pytest.raises(ValueError):  # zero-area face
        TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])


def test_mesh_text_roundtrip(tmp_path):
    mesh = icosphere_mesh(1)
    path = tmp_path / "sphere.mesh"
    save_mesh_text(mesh, path)
    back = load_mesh_text(path)
    assert np.array_equal(back.faces, mesh.faces)
    assert np.allclose(back.vertices, mesh.vertices, atol=0.0)


def test_mesh_loader_ignores_other_lines(tmp_path):
    path = tmp_path / "noisy.mesh"
    path.write_text(
        "# comment\nv 0 0 0\nvn 0 0 1\nv 1 0 0\nv 0 1 0\nusemtl foo\nf 1 2 3\n"
    )
    mesh = load_mesh_text(path)
    assert mesh.num_faces == 1
    assert len(mesh.vertices) == 3


def test_mesh_loader_rejects_malformed(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("v 0 0\n")
    with pytest.raises(ParseError):
        load_mesh_text(path)
    path.write_text("v 0 0 zero\n")
    with pytest.raises(ParseError):
        load_mesh_text(path)
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2\n")
    with pytest.raises(ParseError):
        load_mesh_text(path)
