"""Synthetic reconstruction chain: placement rules, derived-value oracles."""

from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import checkerboard, gray_rgb
from surveyflow.images import asset_from_rgb
from surveyflow.reconstruction import (
    ReconstructionError,
    SyntheticEngine,
    align,
    build_depth_maps,
    build_mesh,
    build_point_cloud,
    build_tiled_model,
    footprint_axis,
    lattice_point_cloud,
    texture_mesh,
)

ENGINE = SyntheticEngine()


def make_assets(n: int, w: int = 9, h: int = 9):
    return [
        asset_from_rgb(f"im_{i:02d}.png", gray_rgb(checkerboard(w, h, 100, 150)))
        for i in range(n)
    ]


def oracle_height(x: float, y: float) -> float:
    return 0.1 * math.sin(2 * math.pi * x) * math.cos(2 * math.pi * y)


# -- alignment -------------------------------------------------------------------


def test_four_cameras_at_unit_square_corners():
    alignment = align(make_assets(4), ENGINE)
    positions = [tuple(cam.position) for cam in alignment.cameras]
    assert positions == [(0, 0, 1), (1, 0, 1), (0, 1, 1), (1, 1, 1)]
    refs = [cam.image_ref for cam in alignment.cameras]
    assert refs == [f"im_{i:02d}.png" for i in range(4)]  # path order


def test_single_image_rejected():
    with pytest.raises(ReconstructionError, match="at least 2"):
        align(make_assets(1), ENGINE)


def test_tie_point_count_rule():
    assert align(make_assets(2), ENGINE).tie_point_count == 200


def test_orientations_orthonormal():
    alignment = align(make_assets(5), ENGINE)
    for cam in alignment.cameras:
        r = cam.orientation
        assert np.allclose(r @ r.T, np.eye(3), atol=1e-6)
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-6)


# -- depth maps ----------------------------------------------------------------------


def test_center_pixel_depth_over_origin_camera():
    # odd dims put a sample exactly under the camera, where sin(0) kills h
    alignment = align(make_assets(4, w=9, h=9), ENGINE)
    depth = build_depth_maps(alignment, ENGINE)[0].depth
    assert depth[4, 4] == pytest.approx(1.0, abs=1e-12)


def test_quarter_unit_offset_depth_value():
    # at (x=0.25, y=0): 1 - 0.1*sin(pi/2)*cos(0) = 0.9
    assert 1.0 - oracle_height(0.25, 0.0) == pytest.approx(0.9, abs=1e-12)
    alignment = align(make_assets(4, w=9, h=9), ENGINE)
    depth = build_depth_maps(alignment, ENGINE)[0].depth
    # camera 0 at (0,0): column at world x=0.25 is c where -0.5 + c/8 = 0.25 -> c=6
    assert depth[4, 6] == pytest.approx(0.9, abs=1e-12)


def test_full_depth_map_matches_independent_heightfield_eval():
    alignment = align(make_assets(3, w=7, h=5), ENGINE)
    for cam, depth_map in zip(alignment.cameras, build_depth_maps(alignment, ENGINE)):
        xs = footprint_axis(cam.position[0], cam.image_width)
        ys = footprint_axis(cam.position[1], cam.image_height)
        for r in range(cam.image_height):
            for c in range(cam.image_width):
                expected = 1.0 - oracle_height(xs[c], ys[r])
                assert depth_map.depth[r, c] == pytest.approx(expected, abs=1e-9)


def test_one_depth_map_per_camera_same_dims_as_source():
    assets = make_assets(3, w=12, h=8)
    alignment = align(assets, ENGINE)
    maps = build_depth_maps(alignment, ENGINE)
    assert len(maps) == 3
    assert all(m.depth.shape == (8, 12) for m in maps)
    assert all(np.isfinite(m.depth).all() for m in maps)


# -- point cloud --------------------------------------------------------------------------


def test_cloud_has_grid_resolution_squared_points():
    cloud = lattice_point_cloud(100)
    assert len(cloud) == 10_000


def test_two_by_two_cloud_sits_at_corners_with_heightfield_z():
    cloud = lattice_point_cloud(2)
    expected = [(x, y, oracle_height(x, y)) for y in (0.0, 1.0) for x in (0.0, 1.0)]
    assert len(cloud) == 4
    for point, (x, y, z) in zip(cloud.positions, expected):
        assert point[0] == pytest.approx(x, abs=1e-12)
        assert point[1] == pytest.approx(y, abs=1e-12)
        assert point[2] == pytest.approx(z, abs=1e-12)


def test_cloud_z_amplitude_bounded():
    cloud = lattice_point_cloud(50)
    assert cloud.positions[:, 2].min() >= -0.1 - 1e-12
    assert cloud.positions[:, 2].max() <= 0.1 + 1e-12


def test_variant_equivalence_same_positions():
    assets = make_assets(4)
    alignment = align(assets, ENGINE)
    depth_maps = build_depth_maps(alignment, ENGINE)
    from_depth = build_point_cloud(ENGINE, 17, depth_maps=depth_maps)
    cloud_first = build_point_cloud(ENGINE, 17, alignment=alignment)
    assert np.array_equal(from_depth.positions, cloud_first.positions)
    assert np.array_equal(from_depth.colors, cloud_first.colors)


def test_point_cloud_requires_a_source():
    with pytest.raises(ReconstructionError, match="source"):
        build_point_cloud(ENGINE, 4)


# -- tiled model ---------------------------------------------------------------------------


def expand_ranges(tile) -> list[int]:
    out: list[int] = []
    for start, stop in tile.point_ranges:
        out.extend(range(start, stop))
    return out


def test_single_level_single_tile_holds_everything():
    cloud = lattice_point_cloud(6)
    tiled = build_tiled_model(cloud, levels=1)
    assert len(tiled.tiles) == 1
    assert sorted(expand_ranges(tiled.tiles[0])) == list(range(len(cloud)))


def test_leaf_partition_counts_by_brute_force():
    cloud = lattice_point_cloud(9)
    tiled = build_tiled_model(cloud, levels=3)
    assert len(tiled.tiles) == 16  # 4^(3-1)
    seen: list[int] = []
    for tile in tiled.tiles:
        members = expand_ranges(tile)
        seen.extend(members)
        x0, y0, x1, y1 = tile.bounds
        for idx in members:  # membership is honest
            px, py = cloud.positions[idx, 0], cloud.positions[idx, 1]
            assert x0 - 1e-12 <= px <= x1 + 1e-12
            assert y0 - 1e-12 <= py <= y1 + 1e-12
    assert sorted(seen) == list(range(len(cloud)))  # exactly-once cover


def test_tiling_empty_cloud_rejected():
    import numpy as np

    from surveyflow.reconstruction import PointCloud

    empty = PointCloud(positions=np.zeros((0, 3)), colors=np.zeros((0, 3), dtype=np.uint8))
    with pytest.raises(ReconstructionError):
        build_tiled_model(empty, levels=1)


# -- mesh ----------------------------------------------------------------------------------------


def test_lattice_triangle_count_rule():
    mesh = build_mesh(ENGINE, 3, source="depth_maps")
    assert mesh.faces.shape[0] == 8  # 2*(3-1)^2


@pytest.mark.parametrize("g", [2, 4, 7])
def test_mesh_counts_scale_with_lattice(g):
    mesh = build_mesh(ENGINE, g, source="point_cloud")
    assert mesh.vertices.shape[0] == g * g
    assert mesh.faces.shape[0] == 2 * (g - 1) ** 2
    assert mesh.faces.min() >= 0
    assert mesh.faces.max() < g * g
    for a, b, c in mesh.faces:  # no degenerate faces
        assert len({int(a), int(b), int(c)}) == 3


def test_texture_attaches_mean_color_and_uvs():
    assets = [
        asset_from_rgb("a.png", np.full((4, 4, 3), 10, dtype=np.uint8)),
        asset_from_rgb("b.png", np.full((4, 4, 3), 21, dtype=np.uint8)),
    ]
    mesh = build_mesh(ENGINE, 3, source="point_cloud")
    textured = texture_mesh(mesh, assets)
    assert textured.texture is not None
    assert textured.texture.shape == (1, 1, 3)
    assert textured.texture[0, 0].tolist() == [16, 16, 16]  # mean 15.5 rounds half up
    assert textured.uvs is not None
    assert textured.uvs.shape == (9, 2)
    assert textured.uvs.min() >= 0.0
    assert textured.uvs.max() <= 1.0


def test_texture_requires_images():
    mesh = build_mesh(ENGINE, 2, source="point_cloud")
    with pytest.raises(ReconstructionError):
        texture_mesh(mesh, [])
