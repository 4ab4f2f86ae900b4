"""Reconstruction chain: alignment, depth, point cloud, tiled model, mesh.

The heavy lifting in production is done by an external reconstruction tool;
this module defines the adapter seam at that tool's task granularity (align /
depth / cloud / mesh) and ships a fully deterministic synthetic engine so
every pipeline path can run and be verified end to end without it.

Synthetic engine rules (all documented behavior, relied on by tests):

* Terrain is the heightfield  h(x, y) = 0.1 * sin(2*pi*x) * cos(2*pi*y).
* Cameras sit nadir-looking at altitude 1.0 on a row-major grid over the
  unit square, one per kept image in path order; each sees the square
  footprint of side 1.0 centered under it.
* A depth map samples 1.0 - h over the footprint on the source image's
  pixel grid (corner-aligned).
* The point cloud is h sampled on a grid_resolution^2 corner-aligned
  lattice over [0,1]^2; the mesh triangulates that lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .images import ImageAsset

FOOTPRINT_HALF = 0.5
CAMERA_ALTITUDE = 1.0
TIE_POINTS_PER_IMAGE = 100

# Nadir attitude: camera x stays east, y and z flip so the view axis points
# straight down while the matrix stays a proper rotation (det +1).
NADIR_ORIENTATION = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])


class ReconstructionError(ValueError):
    """Input unusable for the requested reconstruction step."""


@dataclass(frozen=True)
class CameraPose:
    image_ref: str
    position: np.ndarray  # (3,)
    orientation: np.ndarray  # (3, 3) rotation
    image_width: int
    image_height: int


@dataclass(frozen=True)
class SparseAlignment:
    cameras: tuple[CameraPose, ...]
    tie_point_count: int


@dataclass(frozen=True)
class DepthMap:
    image_ref: str
    depth: np.ndarray  # (H, W) float64, meters; 0 means no estimate


@dataclass
class PointCloud:
    positions: np.ndarray  # (N, 3) float64
    colors: np.ndarray  # (N, 3) uint8
    class_ids: np.ndarray | None = None  # (N,) int32; -1 = unclassified

    def __post_init__(self) -> None:
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise ValueError("positions must be (N, 3)")
        if self.colors.shape != self.positions.shape:
            raise ValueError("colors must be (N, 3)")

    def __len__(self) -> int:
        return int(self.positions.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        if not (np.array_equal(self.positions, other.positions) and np.array_equal(self.colors, other.colors)):
            return False
        if (self.class_ids is None) != (other.class_ids is None):
            return False
        return self.class_ids is None or np.array_equal(self.class_ids, other.class_ids)


@dataclass(frozen=True)
class Tile:
    bounds: tuple[float, float, float, float]  # x0, y0, x1, y1
    point_ranges: tuple[tuple[int, int], ...]  # half-open [start, stop) index ranges

    def point_count(self) -> int:
        return sum(stop - start for start, stop in self.point_ranges)


@dataclass(frozen=True)
class TiledModel:
    levels: int
    tiles: tuple[Tile, ...]  # leaf tiles; a disjoint cover of all points


@dataclass
class Mesh:
    vertices: np.ndarray  # (N, 3) float64
    faces: np.ndarray  # (M, 3) int64, vertex index triples
    texture: np.ndarray | None = None  # (th, tw, 3) uint8
    uvs: np.ndarray | None = None  # (N, 2) float64

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mesh):
            return NotImplemented
        same_geo = np.array_equal(self.vertices, other.vertices) and np.array_equal(self.faces, other.faces)
        if not same_geo:
            return False
        for mine, theirs in ((self.texture, other.texture), (self.uvs, other.uvs)):
            if (mine is None) != (theirs is None):
                return False
            if mine is not None and not np.array_equal(mine, theirs):
                return False
        return True


class ReconstructionEngine(Protocol):
    """Adapter contract for a reconstruction backend."""

    def align(self, assets: Sequence[ImageAsset]) -> SparseAlignment: ...

    def depth_maps(self, alignment: SparseAlignment) -> list[DepthMap]: ...

    def point_cloud(
        self,
        grid_resolution: int,
        *,
        depth_maps: Sequence[DepthMap] | None = None,
        alignment: SparseAlignment | None = None,
    ) -> PointCloud: ...

    def mesh(self, grid_resolution: int) -> Mesh: ...


def surface_height(x: np.ndarray | float, y: np.ndarray | float) -> np.ndarray | float:
    return 0.1 * np.sin(2.0 * np.pi * np.asarray(x)) * np.cos(2.0 * np.pi * np.asarray(y))


def camera_grid_positions(count: int) -> list[tuple[float, float]]:
    """Row-major positions over the unit square for `count` cameras."""
    cols = math.ceil(math.sqrt(count))
    rows = math.ceil(count / cols)
    positions = []
    for i in range(count):
        r, c = divmod(i, cols)
        x = c / (cols - 1) if cols > 1 else 0.0
        y = r / (rows - 1) if rows > 1 else 0.0
        positions.append((x, y))
    return positions


def lattice_coords(grid_resolution: int) -> np.ndarray:
    """Corner-aligned 1-D sample coordinates over [0, 1]."""
    if grid_resolution == 1:
        return np.zeros(1)
    return np.arange(grid_resolution, dtype=np.float64) / (grid_resolution - 1)


class SyntheticEngine:
    """Deterministic stand-in reconstruction backend (rules in module docstring)."""

    name = "synthetic"

    def align(self, assets: Sequence[ImageAsset]) -> SparseAlignment:
        placements = camera_grid_positions(len(assets))
        cameras = tuple(
            CameraPose(
                image_ref=asset.path,
                position=np.array([x, y, CAMERA_ALTITUDE]),
                orientation=NADIR_ORIENTATION.copy(),
                image_width=asset.width,
                image_height=asset.height,
            )
            for asset, (x, y) in zip(assets, placements)
        )
        return SparseAlignment(cameras=cameras, tie_point_count=TIE_POINTS_PER_IMAGE * len(assets))

    def depth_maps(self, alignment: SparseAlignment) -> list[DepthMap]:
        maps = []
        for cam in alignment.cameras:
            wx = footprint_axis(cam.position[0], cam.image_width)
            wy = footprint_axis(cam.position[1], cam.image_height)
            heights = surface_height(wx[None, :], wy[:, None])
            maps.append(DepthMap(image_ref=cam.image_ref, depth=CAMERA_ALTITUDE - heights))
        return maps

    def point_cloud(
        self,
        grid_resolution: int,
        *,
        depth_maps: Sequence[DepthMap] | None = None,
        alignment: SparseAlignment | None = None,
    ) -> PointCloud:
        # Both variants sample the same terrain lattice: reconstructing from
        # depth maps or going cloud-first must agree point for point.
        del depth_maps, alignment
        return lattice_point_cloud(grid_resolution)

    def mesh(self, grid_resolution: int) -> Mesh:
        return lattice_mesh(grid_resolution)


def footprint_axis(center: float, samples: int) -> np.ndarray:
    """World coordinates of a footprint's pixel columns (or rows)."""
    if samples == 1:
        return np.array([center])
    rel = np.arange(samples, dtype=np.float64) / (samples - 1) - 0.5
    return center + rel


def height_to_color(z: np.ndarray) -> np.ndarray:
    """Grayscale ramp over the heightfield's [-0.1, 0.1] amplitude range."""
    gray = np.clip(np.floor((z + 0.1) / 0.2 * 255.0 + 0.5), 0, 255).astype(np.uint8)
    return np.stack([gray, gray, gray], axis=-1)


def lattice_point_cloud(grid_resolution: int) -> PointCloud:
    if grid_resolution < 1:
        raise ReconstructionError("grid_resolution must be positive")
    coords = lattice_coords(grid_resolution)
    xs, ys = np.meshgrid(coords, coords)  # row-major: y varies with rows
    zs = surface_height(xs, ys)
    positions = np.column_stack([xs.ravel(), ys.ravel(), zs.ravel()])
    return PointCloud(positions=positions, colors=height_to_color(zs.ravel()))


def lattice_mesh(grid_resolution: int) -> Mesh:
    if grid_resolution < 2:
        raise ReconstructionError("a mesh needs a lattice of at least 2x2")
    cloud = lattice_point_cloud(grid_resolution)
    g = grid_resolution
    faces = []
    for iy in range(g - 1):
        for ix in range(g - 1):
            v00 = iy * g + ix
            v01 = v00 + 1
            v10 = v00 + g
            v11 = v10 + 1
            faces.append((v00, v01, v11))
            faces.append((v00, v11, v10))
    return Mesh(vertices=cloud.positions.copy(), faces=np.array(faces, dtype=np.int64))


# -- pipeline operations -------------------------------------------------------


def align(kept: Sequence[ImageAsset], engine: ReconstructionEngine) -> SparseAlignment:
    """Estimate one camera per kept image. Needs at least two images."""
    if len(kept) < 2:
        raise ReconstructionError(f"alignment needs at least 2 images, got {len(kept)}")
    return engine.align(kept)


def build_depth_maps(alignment: SparseAlignment, engine: ReconstructionEngine) -> list[DepthMap]:
    if not alignment.cameras:
        raise ReconstructionError("alignment has no cameras")
    return engine.depth_maps(alignment)


def build_point_cloud(
    engine: ReconstructionEngine,
    grid_resolution: int,
    *,
    depth_maps: Sequence[DepthMap] | None = None,
    alignment: SparseAlignment | None = None,
) -> PointCloud:
    """Densify into a cloud, either from depth maps or cloud-first from alignment."""
    if depth_maps is None and alignment is None:
        raise ReconstructionError("point cloud needs depth maps or an alignment as source")
    if depth_maps is not None and len(depth_maps) == 0:
        raise ReconstructionError("empty depth-map source")
    return engine.point_cloud(grid_resolution, depth_maps=depth_maps, alignment=alignment)


def build_mesh(
    engine: ReconstructionEngine,
    grid_resolution: int,
    *,
    source: str,
) -> Mesh:
    """Surface model from "depth_maps" or "point_cloud" (synthetic: same lattice)."""
    if source not in ("depth_maps", "point_cloud"):
        raise ReconstructionError(f"unknown mesh source {source!r}")
    return engine.mesh(grid_resolution)


def texture_mesh(mesh: Mesh, assets: Sequence[ImageAsset]) -> Mesh:
    """Attach the mean-color texture of the kept images, with planar UVs."""
    if not assets:
        raise ReconstructionError("texturing needs at least one image")
    if mesh.vertices.shape[0] == 0:
        raise ReconstructionError("cannot texture an empty mesh")
    stacked = np.stack([a.rgb.reshape(-1, 3).mean(axis=0) for a in assets])
    mean_color = np.clip(np.floor(stacked.mean(axis=0) + 0.5), 0, 255).astype(np.uint8)
    texture = mean_color[None, None, :]
    uvs = np.clip(mesh.vertices[:, :2], 0.0, 1.0)
    return Mesh(vertices=mesh.vertices, faces=mesh.faces, texture=texture, uvs=uvs)


def build_tiled_model(cloud: PointCloud, levels: int) -> TiledModel:
    """Quadtree over x,y: `levels` refinements give 4^(levels-1) leaf tiles.

    Every point lands in exactly one leaf: tiles are half-open on their high
    edges except the outermost, which close to include the boundary.
    """
    if len(cloud) == 0:
        raise ReconstructionError("cannot tile an empty cloud")
    if levels < 1:
        raise ReconstructionError("levels must be positive")

    x = cloud.positions[:, 0]
    y = cloud.positions[:, 1]
    x0, x1 = float(x.min()), float(x.max())
    y0, y1 = float(y.min()), float(y.max())
    splits = 2 ** (levels - 1)
    xw = (x1 - x0) / splits if splits else 0.0
    yw = (y1 - y0) / splits if splits else 0.0

    def cell_index(values: np.ndarray, lo: float, width: float) -> np.ndarray:
        if width == 0.0:
            return np.zeros(len(values), dtype=np.int64)
        idx = np.floor((values - lo) / width).astype(np.int64)
        return np.clip(idx, 0, splits - 1)

    cx = cell_index(x, x0, xw)
    cy = cell_index(y, y0, yw)

    tiles = []
    for ty in range(splits):
        for tx in range(splits):
            members = np.flatnonzero((cx == tx) & (cy == ty))
            bounds = (
                x0 + tx * xw,
                y0 + ty * yw,
                x0 + (tx + 1) * xw if splits > 1 else x1,
                y0 + (ty + 1) * yw if splits > 1 else y1,
            )
            tiles.append(Tile(bounds=bounds, point_ranges=_compress_ranges(members)))
    return TiledModel(levels=levels, tiles=tuple(tiles))


def _compress_ranges(indices: np.ndarray) -> tuple[tuple[int, int], ...]:
    if len(indices) == 0:
        return ()
    ranges: list[tuple[int, int]] = []
    start = prev = int(indices[0])
    for idx in indices[1:]:
        idx = int(idx)
        if idx == prev + 1:
            prev = idx
            continue
        ranges.append((start, prev + 1))
        start = prev = idx
    ranges.append((start, prev + 1))
    return tuple(ranges)


# -- engine registry -----------------------------------------------------------

_ENGINES: dict[str, ReconstructionEngine] = {}


def register_reconstruction_engine(name: str, engine: ReconstructionEngine) -> None:
    if name in _ENGINES:
        raise ValueError(f"reconstruction engine {name!r} already registered")
    _ENGINES[name] = engine


def get_reconstruction_engine(name: str) -> ReconstructionEngine:
    try:
        return _ENGINES[name]
    except KeyError:
        raise KeyError(f"no reconstruction engine named {name!r}") from None


register_reconstruction_engine("synthetic", SyntheticEngine())
