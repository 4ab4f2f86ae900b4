"""Deterministic artifact writers: ASCII PLY, OBJ(+MTL), tiled-model manifest.

Floats are formatted with 9 significant digits, records are emitted in a
fixed order, and newlines are always ``\\n``, so exporting the same inputs
twice yields byte-identical files. Georeferencing is carried as a constant
offset + scale comment; full datum handling is out of scope.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .config import RunConfig
from .reconstruction import Mesh, PointCloud, TiledModel

GEOREF_COMMENT = "georef offset 0 0 0 scale 1"
UNCLASSIFIED = -1


class ExportError(ValueError):
    """Nothing to export, or an artifact that cannot be written faithfully."""


def _fmt(value: float) -> str:
    return format(float(value), ".9g")


# -- point cloud (ASCII PLY) ---------------------------------------------------


def write_point_cloud_ply(cloud: PointCloud, path: str | Path) -> Path:
    """ASCII PLY with x,y,z as doubles, colors as uchar, optional class_id.

    When the cloud carries classifications, every vertex gets a class_id
    column; -1 marks points no camera saw.
    """
    path = Path(path)
    n = len(cloud)
    header = [
        "ply",
        "format ascii 1.0",
        f"comment {GEOREF_COMMENT}",
    ]
    if cloud.class_ids is not None:
        header.append("comment class_id -1 means unclassified")
    header += [
        f"element vertex {n}",
        "property double x",
        "property double y",
        "property double z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
    ]
    if cloud.class_ids is not None:
        header.append("property int class_id")
    header.append("end_header")

    lines = header
    for i in range(n):
        x, y, z = cloud.positions[i]
        r, g, b = cloud.colors[i]
        row = f"{_fmt(x)} {_fmt(y)} {_fmt(z)} {int(r)} {int(g)} {int(b)}"
        if cloud.class_ids is not None:
            row += f" {int(cloud.class_ids[i])}"
        lines.append(row)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


def read_point_cloud_ply(path: str | Path) -> PointCloud:
    """Parse the subset of ASCII PLY this package writes."""
    text = Path(path).read_text(encoding="ascii")
    lines = text.splitlines()
    if not lines or lines[0] != "ply":
        raise ExportError(f"{path}: not a PLY file")

    vertex_count = 0
    properties: list[str] = []
    body_start = 0
    for idx, line in enumerate(lines[1:], start=1):
        if line.startswith("comment"):
            continue
        if line == "format ascii 1.0":
            continue
        if line.startswith("element vertex "):
            vertex_count = int(line.split()[-1])
            continue
        if line.startswith("element "):
            raise ExportError(f"{path}: unsupported element {line!r}")
        if line.startswith("property "):
            properties.append(line.split()[-1])
            continue
        if line == "end_header":
            body_start = idx + 1
            break
    else:
        raise ExportError(f"{path}: missing end_header")

    expected = ["x", "y", "z", "red", "green", "blue"]
    has_class = properties == expected + ["class_id"]
    if not has_class and properties != expected:
        raise ExportError(f"{path}: unexpected property layout {properties}")

    rows = lines[body_start : body_start + vertex_count]
    if len(rows) != vertex_count:
        raise ExportError(f"{path}: expected {vertex_count} vertex rows, found {len(rows)}")

    positions = np.zeros((vertex_count, 3), dtype=np.float64)
    colors = np.zeros((vertex_count, 3), dtype=np.uint8)
    class_ids = np.zeros(vertex_count, dtype=np.int32) if has_class else None
    for i, row in enumerate(rows):
        parts = row.split()
        positions[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
        colors[i] = [int(parts[3]), int(parts[4]), int(parts[5])]
        if class_ids is not None:
            class_ids[i] = int(parts[6])
    return PointCloud(positions=positions, colors=colors, class_ids=class_ids)


# -- mesh (OBJ + MTL) ------------------------------------------------------------


def write_mesh_obj(mesh: Mesh, path: str | Path) -> list[Path]:
    """OBJ with v records, optional vt + sidecar MTL/texture, f triples (1-based)."""
    path = Path(path)
    if mesh.vertices.shape[0] == 0 or mesh.faces.shape[0] == 0:
        raise ExportError("cannot export an empty mesh")

    written = [path]
    lines = [f"# {GEOREF_COMMENT}"]
    textured = mesh.texture is not None and mesh.uvs is not None
    if textured:
        mtl_path = path.with_suffix(".mtl")
        texture_path = path.with_name(path.stem + "_texture.png")
        lines.append(f"mtllib {mtl_path.name}")

    for vx, vy, vz in mesh.vertices:
        lines.append(f"v {_fmt(vx)} {_fmt(vy)} {_fmt(vz)}")
    if textured:
        for u, v in mesh.uvs:
            lines.append(f"vt {_fmt(u)} {_fmt(v)}")
        lines.append("usemtl survey_material")
    for a, b, c in mesh.faces:
        if textured:
            lines.append(f"f {a + 1}/{a + 1} {b + 1}/{b + 1} {c + 1}/{c + 1}")
        else:
            lines.append(f"f {a + 1} {b + 1} {c + 1}")
    path.write_text("\n".join(lines) + "\n", encoding="ascii")

    if textured:
        mtl_lines = [
            "newmtl survey_material",
            "Ka 1 1 1",
            "Kd 1 1 1",
            f"map_Kd {texture_path.name}",
        ]
        mtl_path.write_text("\n".join(mtl_lines) + "\n", encoding="ascii")
        Image.fromarray(mesh.texture).save(texture_path)
        written += [mtl_path, texture_path]
    return written


# -- tiled model manifest --------------------------------------------------------


def write_tiled_manifest(tiled: TiledModel, path: str | Path) -> Path:
    """Structured text listing every leaf tile's bounds and point index ranges."""
    path = Path(path)
    lines = [
        "tiled_model",
        f"levels = {tiled.levels}",
        f"tiles = {len(tiled.tiles)}",
    ]
    for idx, tile in enumerate(tiled.tiles):
        x0, y0, x1, y1 = tile.bounds
        ranges = ",".join(f"{start}-{stop}" for start, stop in tile.point_ranges)
        lines.append(f"tile {idx}")
        lines.append(f"  bounds = {_fmt(x0)} {_fmt(y0)} {_fmt(x1)} {_fmt(y1)}")
        lines.append(f"  points = {ranges}")
        lines.append("end")
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


# -- bundle export ----------------------------------------------------------------


def export_artifacts(
    *,
    cloud: PointCloud | None,
    tiled: TiledModel | None,
    mesh: Mesh | None,
    config: RunConfig,
    out_dir: str | Path,
) -> list[Path]:
    """Write every present artifact into out_dir; returns the files created.

    Formats follow the run configuration (currently ASCII PLY / OBJ / text
    manifest). Identical inputs produce byte-identical files.
    """
    if cloud is None and tiled is None and mesh is None:
        raise ExportError("nothing to export")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    written: list[Path] = []
    if cloud is not None:
        written.append(write_point_cloud_ply(cloud, out / "point_cloud.ply"))
    if tiled is not None:
        written.append(write_tiled_manifest(tiled, out / "tiled_model.txt"))
    if mesh is not None:
        written.extend(write_mesh_obj(mesh, out / "model.obj"))
    return written
