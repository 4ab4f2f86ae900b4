"""Task bodies: what each task kind actually does when the engine starts it.

Task bodies communicate exclusively through files under the run's working
directory (`<output_dir>/<run_id>/work`) and, for the segmentation chain, a
temporary workspace — never through shared in-process state. Each body takes
a :class:`TaskContext` and either returns (SUCCESS) or raises (FAILED).

Stage files are small, explicit serializations (JSON indexes plus .npz
arrays), which is what makes crash recovery and executor equivalence exact:
a re-run of a task regenerates the same bytes from the same inputs.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from PIL import Image

from . import exporters, images, masks, reconstruction, workspace
from .config import RunConfig, Variant, serialize_config
from .dag import TaskSpec
from .images import ImageAsset
from .reconstruction import CameraPose, Mesh, PointCloud, SparseAlignment, TiledModel
from .utils import sha256_text


class TaskFailure(RuntimeError):
    """A task body reporting controlled failure (FAILED, retriable)."""


@dataclass
class TaskContext:
    run_id: str
    task: TaskSpec
    config: RunConfig
    attempt: int
    workdir: Path
    output_dir: Path
    log: Callable[[str], None]

    def param(self, key: str, default: str | None = None) -> str:
        value = self.task.params.get(key, default)
        if value is None:
            raise TaskFailure(f"task {self.task.task_id} missing required param {key!r}")
        return value


TaskBody = Callable[[TaskContext], None]

_TASK_KINDS: dict[str, TaskBody] = {}


def register_task_kind(name: str, body: TaskBody) -> None:
    if name in _TASK_KINDS:
        raise ValueError(f"task kind {name!r} already registered")
    _TASK_KINDS[name] = body


def get_task_kind(name: str) -> TaskBody:
    try:
        return _TASK_KINDS[name]
    except KeyError:
        raise KeyError(f"no task kind named {name!r}") from None


def task_kind(name: str) -> Callable[[TaskBody], TaskBody]:
    def wrap(body: TaskBody) -> TaskBody:
        register_task_kind(name, body)
        return body

    return wrap


# -- generic kinds -----------------------------------------------------------------


@task_kind("shell")
def run_shell(ctx: TaskContext) -> None:
    """Exit status 0 means SUCCESS, anything else FAILED."""
    command = ctx.param("command")
    proc = subprocess.run(
        command, shell=True, capture_output=True, text=True, cwd=ctx.workdir
    )
    if proc.stdout:
        ctx.log(proc.stdout)
    if proc.stderr:
        ctx.log(proc.stderr)
    if proc.returncode != 0:
        raise TaskFailure(f"command exited with status {proc.returncode}")


@task_kind("compute")
def run_compute(ctx: TaskContext) -> None:
    """Deterministic pure function of params and upstream outputs.

    Writes its value to work/values/<task_id>.txt; used by tests and demos to
    check executor equivalence and recovery without touching the pipelines.
    """
    values_dir = ctx.workdir / "values"
    values_dir.mkdir(parents=True, exist_ok=True)
    upstream_values = []
    for dep in sorted(ctx.task.upstream):
        dep_file = values_dir / f"{dep}.txt"
        upstream_values.append(dep_file.read_text(encoding="utf-8") if dep_file.exists() else "")
    seed = json.dumps(
        {"task": ctx.task.task_id, "params": dict(sorted(ctx.task.params.items())), "upstream": upstream_values},
        sort_keys=True,
    )
    value = sha256_text(seed)
    (values_dir / f"{ctx.task.task_id}.txt").write_text(value, encoding="utf-8")
    ctx.log(f"computed {value[:16]}\n")


@task_kind("flaky")
def run_flaky(ctx: TaskContext) -> None:
    """Fails on the first `fail_attempts` starts, then behaves like compute."""
    fail_attempts = int(ctx.param("fail_attempts", "1"))
    if ctx.attempt <= fail_attempts:
        raise TaskFailure(f"planned failure on attempt {ctx.attempt}")
    run_compute(ctx)


@task_kind("sleep")
def run_sleep(ctx: TaskContext) -> None:
    seconds = float(ctx.param("seconds", "0.1"))
    time.sleep(seconds)
    ctx.log(f"slept {seconds}s\n")


# -- photogrammetry chain -------------------------------------------------------------


@task_kind("project_setup")
def run_project_setup(ctx: TaskContext) -> None:
    ctx.output_dir.mkdir(parents=True, exist_ok=True)
    ctx.workdir.mkdir(parents=True, exist_ok=True)
    snapshot = ctx.workdir / "config.cfg"
    snapshot.write_text(serialize_config(ctx.config), encoding="utf-8")
    ctx.log(f"project {ctx.config.project.name}: run {ctx.run_id} initialized\n")


@task_kind("import_images")
def run_import_images(ctx: TaskContext) -> None:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assets = images.import_images(ctx.config.project.input_dir)
    for warning in caught:
        ctx.log(f"warning: {warning.message}\n")
    _save_assets(ctx.workdir / "assets.npz", ctx.workdir / "assets_index.json", assets)
    ctx.log(f"imported {len(assets)} image(s)\n")


@task_kind("quality_filter")
def run_quality_filter(ctx: TaskContext) -> None:
    assets = _load_assets(ctx.workdir / "assets.npz", ctx.workdir / "assets_index.json")
    result = images.quality_filter(list(assets), ctx.config, max_workers=ctx.config.resources.cpus)
    report = {
        "kept": [a.path for a in result.kept],
        "rejected": [
            {
                "path": a.path,
                "verdict": r.verdict.value,
                "blur_variance": r.blur_variance,
                "overexposed_fraction": r.overexposed_fraction,
                "underexposed_fraction": r.underexposed_fraction,
            }
            for a, r in result.rejected
        ],
    }
    (ctx.workdir / "quality.json").write_text(json.dumps(report, indent=1), encoding="utf-8")
    for entry in report["rejected"]:
        ctx.log(f"rejected {Path(entry['path']).name}: {entry['verdict']}\n")
    ctx.log(f"kept {len(result.kept)} of {len(assets)} image(s)\n")


@task_kind("align_cameras")
def run_align_cameras(ctx: TaskContext) -> None:
    kept = _load_kept_assets(ctx)
    engine = reconstruction.get_reconstruction_engine(ctx.param("engine", "synthetic"))
    alignment = reconstruction.align(kept, engine)
    _save_alignment(ctx.workdir / "alignment.json", alignment)
    ctx.log(f"aligned {len(alignment.cameras)} camera(s), {alignment.tie_point_count} tie points\n")


@task_kind("build_depth_maps")
def run_build_depth_maps(ctx: TaskContext) -> None:
    alignment = _load_alignment(ctx.workdir / "alignment.json")
    engine = reconstruction.get_reconstruction_engine(ctx.param("engine", "synthetic"))
    depth_maps = reconstruction.build_depth_maps(alignment, engine)
    arrays = {f"depth_{i}": dm.depth for i, dm in enumerate(depth_maps)}
    np.savez(ctx.workdir / "depth_maps.npz", **arrays)
    (ctx.workdir / "depth_index.json").write_text(
        json.dumps([dm.image_ref for dm in depth_maps]), encoding="utf-8"
    )
    ctx.log(f"built {len(depth_maps)} depth map(s)\n")


@task_kind("build_point_cloud")
def run_build_point_cloud(ctx: TaskContext) -> None:
    engine = reconstruction.get_reconstruction_engine(ctx.param("engine", "synthetic"))
    grid = ctx.config.photogrammetry.grid_resolution
    if ctx.param("source", "depth_maps") == "depth_maps":
        cloud = reconstruction.build_point_cloud(engine, grid, depth_maps=_load_depth_maps(ctx))
    else:
        cloud = reconstruction.build_point_cloud(
            engine, grid, alignment=_load_alignment(ctx.workdir / "alignment.json")
        )
    _save_cloud(ctx.workdir / "cloud.npz", cloud)
    ctx.log(f"point cloud: {len(cloud)} points\n")


@task_kind("build_tiled_model")
def run_build_tiled_model(ctx: TaskContext) -> None:
    cloud = _load_cloud(ctx.workdir / "cloud.npz")
    tiled = reconstruction.build_tiled_model(cloud, levels=int(ctx.param("levels", "2")))
    payload = {
        "levels": tiled.levels,
        "tiles": [
            {"bounds": list(t.bounds), "ranges": [list(r) for r in t.point_ranges]}
            for t in tiled.tiles
        ],
    }
    (ctx.workdir / "tiled.json").write_text(json.dumps(payload), encoding="utf-8")
    ctx.log(f"tiled model: {len(tiled.tiles)} leaf tile(s), {tiled.levels} level(s)\n")


@task_kind("build_mesh")
def run_build_mesh(ctx: TaskContext) -> None:
    engine = reconstruction.get_reconstruction_engine(ctx.param("engine", "synthetic"))
    mesh = reconstruction.build_mesh(
        engine, ctx.config.photogrammetry.grid_resolution, source=ctx.param("source")
    )
    _save_mesh(ctx.workdir / "mesh.npz", mesh)
    ctx.log(f"mesh: {mesh.vertices.shape[0]} vertices, {mesh.faces.shape[0]} faces\n")


@task_kind("texture_mesh")
def run_texture_mesh(ctx: TaskContext) -> None:
    mesh = _load_mesh(ctx.workdir / "mesh.npz")
    kept = _load_kept_assets(ctx)
    textured = reconstruction.texture_mesh(mesh, kept)
    _save_mesh(ctx.workdir / "mesh_textured.npz", textured)
    ctx.log("texture attached\n")


@task_kind("export_artifacts")
def run_export_artifacts(ctx: TaskContext) -> None:
    cloud = _load_cloud(ctx.workdir / "cloud.npz")
    tiled_path = ctx.workdir / "tiled.json"
    tiled = _load_tiled(tiled_path) if tiled_path.exists() else None
    textured_path = ctx.workdir / "mesh_textured.npz"
    mesh_path = textured_path if textured_path.exists() else ctx.workdir / "mesh.npz"
    mesh = _load_mesh(mesh_path) if mesh_path.exists() else None
    written = exporters.export_artifacts(
        cloud=cloud, tiled=tiled, mesh=mesh, config=ctx.config, out_dir=ctx.output_dir
    )
    for path in written:
        ctx.log(f"exported {path.name}\n")


# -- segmentation chain ------------------------------------------------------------------


@task_kind("ml_workspace_create")
def run_ml_workspace_create(ctx: TaskContext) -> None:
    ws = workspace.workspace_create(ctx.run_id)
    (ctx.workdir / "ml_workspace.json").write_text(
        json.dumps({"root": str(ws.root)}), encoding="utf-8"
    )
    ctx.log(f"workspace at {ws.root}\n")


@task_kind("ml_downscale")
def run_ml_downscale(ctx: TaskContext) -> None:
    ws = _open_workspace(ctx)
    kept = _load_kept_assets(ctx)
    target = ctx.config.ml.target_long_side_px
    downscaled = masks.downscale_batch(kept, target, max_workers=ctx.config.resources.cpus)
    meta = []
    for index, (original, small) in enumerate(zip(kept, downscaled)):
        key = f"{index:03d}_{original.stem}"
        images_path = ws.stage("downscaled") / f"{key}.png"
        _save_rgb_png(small.rgb, images_path)
        meta.append(
            {
                "key": key,
                "source_path": original.path,
                "original_width": original.width,
                "original_height": original.height,
                "width": small.width,
                "height": small.height,
            }
        )
    (ws.root / "images_meta.json").write_text(json.dumps(meta, indent=1), encoding="utf-8")
    ws.refresh_manifest()
    ctx.log(f"downscaled {len(meta)} image(s) to long side <= {target}\n")


@task_kind("ml_infer")
def run_ml_infer(ctx: TaskContext) -> None:
    ws = _open_workspace(ctx)
    meta = _load_meta(ws)
    adapter = masks.get_inference_adapter(ctx.param("adapter", "stub"))
    batch: list[ImageAsset] = [
        images.load_image(ws.stage("downscaled") / f"{entry['key']}.png") for entry in meta
    ]
    class_count = ctx.config.ml.class_count
    try:
        results = masks.run_inference(batch, adapter, class_count, ctx.config.ml.batch_size)
    except masks.InferenceError as exc:
        for ref in exc.failed_refs:
            ctx.log(f"inference failed for {Path(ref).name}\n")
        raise TaskFailure(str(exc)) from exc
    for entry, mask in zip(meta, results):
        masks.save_mask_png(mask.labels, ws.stage("masks_raw") / f"{entry['key']}.png")
    ws.refresh_manifest()
    ctx.log(f"inferred {len(results)} mask(s) in batches of {ctx.config.ml.batch_size}\n")


@task_kind("ml_validate")
def run_ml_validate(ctx: TaskContext) -> None:
    ws = _open_workspace(ctx)
    meta = _load_meta(ws)
    class_count = ctx.config.ml.class_count
    failures = []
    for entry in meta:
        mask = masks.load_mask_png(ws.stage("masks_raw") / f"{entry['key']}.png", class_count)
        verdict = masks.validate_mask(mask, (entry["width"], entry["height"]), class_count)
        if not verdict.ok:
            failures.append((entry["key"], verdict))
            ctx.log(f"invalid mask {entry['key']}: {'; '.join(verdict.problems)}\n")
    (ws.root / "validation.json").write_text(
        json.dumps({"checked": len(meta), "failures": [k for k, _ in failures]}), encoding="utf-8"
    )
    ws.refresh_manifest()
    if failures:
        raise TaskFailure(f"{len(failures)} mask(s) failed validation")
    ctx.log(f"validated {len(meta)} mask(s)\n")


@task_kind("ml_upscale")
def run_ml_upscale(ctx: TaskContext) -> None:
    ws = _open_workspace(ctx)
    meta = _load_meta(ws)
    class_count = ctx.config.ml.class_count

    def upscale(entry: dict) -> None:
        mask = masks.load_mask_png(ws.stage("masks_raw") / f"{entry['key']}.png", class_count)
        full = masks.upscale_mask_nearest(mask, entry["original_width"], entry["original_height"])
        masks.save_mask_png(full.labels, ws.stage("masks_full") / f"{entry['key']}.png")

    for entry in meta:
        upscale(entry)
    ws.refresh_manifest()
    ctx.log(f"upscaled {len(meta)} mask(s) to original resolution\n")


@task_kind("ml_split_masks")
def run_ml_split_masks(ctx: TaskContext) -> None:
    ws = _open_workspace(ctx)
    meta = _load_meta(ws)
    class_names = ctx.config.ml.class_names
    for entry in meta:
        mask = masks.load_mask_png(ws.stage("masks_full") / f"{entry['key']}.png", ctx.config.ml.class_count)
        mask_set = masks.split_binary_masks(mask, class_names)
        masks.save_binary_masks(mask_set, entry["key"], ws.stage("masks_binary"))
    ws.refresh_manifest()
    ctx.log(f"split {len(meta)} mask(s) into {len(class_names)} class plane(s) each\n")


@task_kind("ml_classify_cloud")
def run_ml_classify_cloud(ctx: TaskContext) -> None:
    ws = _open_workspace(ctx)
    meta = _load_meta(ws)
    cloud = _load_cloud(ctx.workdir / "cloud.npz")
    alignment = _load_alignment(ctx.workdir / "alignment.json")
    class_names = ctx.config.ml.class_names

    masks_by_image: dict[str, masks.BinaryMaskSet] = {}
    for entry in meta:
        grids = tuple(
            np.asarray(
                masks.load_mask_png(
                    ws.stage("masks_binary") / masks.binary_mask_filename(entry["key"], name),
                    ctx.config.ml.class_count,
                ).labels,
                dtype=np.uint8,
            )
            for name in class_names
        )
        masks_by_image[entry["source_path"]] = masks.BinaryMaskSet(class_names=class_names, grids=grids)

    classified = masks.classify_point_cloud(cloud, masks_by_image, alignment, ctx.config.ml.class_count)
    _save_cloud(ctx.workdir / "cloud_classified.npz", classified)
    covered = int(np.count_nonzero(classified.class_ids >= 0)) if classified.class_ids is not None else 0
    ctx.log(f"classified {covered} of {len(classified)} point(s)\n")


@task_kind("ml_export")
def run_ml_export(ctx: TaskContext) -> None:
    ws = _open_workspace(ctx)
    masks_out = ctx.output_dir / "masks"
    masks_out.mkdir(parents=True, exist_ok=True)
    count = 0
    for path in sorted(ws.stage("masks_binary").glob("*.png")):
        shutil.copyfile(path, masks_out / path.name)
        count += 1
    classified = _load_cloud(ctx.workdir / "cloud_classified.npz")
    exporters.write_point_cloud_ply(classified, ctx.output_dir / "point_cloud_classified.ply")
    ctx.log(f"exported {count} binary mask(s) and the classified cloud\n")


@task_kind("ml_workspace_cleanup")
def run_ml_workspace_cleanup(ctx: TaskContext) -> None:
    ws = _open_workspace(ctx)
    report = workspace.workspace_cleanup(ws, run_succeeded=True)
    ctx.log(f"cleanup: {report.note}\n")


# -- stage file helpers ---------------------------------------------------------------------


def _save_assets(npz_path: Path, index_path: Path, assets: list[ImageAsset]) -> None:
    arrays = {}
    for i, asset in enumerate(assets):
        arrays[f"luma_{i}"] = asset.luma
        arrays[f"rgb_{i}"] = asset.rgb
    np.savez(npz_path, **arrays)
    index_path.write_text(
        json.dumps([{"path": a.path, "width": a.width, "height": a.height} for a in assets]),
        encoding="utf-8",
    )


def _load_assets(npz_path: Path, index_path: Path) -> list[ImageAsset]:
    index = json.loads(index_path.read_text(encoding="utf-8"))
    assets = []
    with np.load(npz_path) as data:
        for i, entry in enumerate(index):
            assets.append(
                ImageAsset(
                    path=entry["path"],
                    width=entry["width"],
                    height=entry["height"],
                    luma=data[f"luma_{i}"],
                    rgb=data[f"rgb_{i}"],
                )
            )
    return assets


def _load_kept_assets(ctx: TaskContext) -> list[ImageAsset]:
    quality = json.loads((ctx.workdir / "quality.json").read_text(encoding="utf-8"))
    kept_paths = set(quality["kept"])
    assets = _load_assets(ctx.workdir / "assets.npz", ctx.workdir / "assets_index.json")
    return [a for a in assets if a.path in kept_paths]


def _save_alignment(path: Path, alignment: SparseAlignment) -> None:
    payload = {
        "tie_point_count": alignment.tie_point_count,
        "cameras": [
            {
                "image_ref": cam.image_ref,
                "position": list(map(float, cam.position)),
                "orientation": [list(map(float, row)) for row in cam.orientation],
                "image_width": cam.image_width,
                "image_height": cam.image_height,
            }
            for cam in alignment.cameras
        ],
    }
    path.write_text(json.dumps(payload), encoding="utf-8")


def _load_alignment(path: Path) -> SparseAlignment:
    payload = json.loads(path.read_text(encoding="utf-8"))
    cameras = tuple(
        CameraPose(
            image_ref=c["image_ref"],
            position=np.array(c["position"], dtype=np.float64),
            orientation=np.array(c["orientation"], dtype=np.float64),
            image_width=c["image_width"],
            image_height=c["image_height"],
        )
        for c in payload["cameras"]
    )
    return SparseAlignment(cameras=cameras, tie_point_count=payload["tie_point_count"])


def _load_depth_maps(ctx: TaskContext) -> list[reconstruction.DepthMap]:
    refs = json.loads((ctx.workdir / "depth_index.json").read_text(encoding="utf-8"))
    with np.load(ctx.workdir / "depth_maps.npz") as data:
        return [
            reconstruction.DepthMap(image_ref=ref, depth=data[f"depth_{i}"])
            for i, ref in enumerate(refs)
        ]


def _save_cloud(path: Path, cloud: PointCloud) -> None:
    arrays = {"positions": cloud.positions, "colors": cloud.colors}
    if cloud.class_ids is not None:
        arrays["class_ids"] = cloud.class_ids
    np.savez(path, **arrays)


def _load_cloud(path: Path) -> PointCloud:
    with np.load(path) as data:
        return PointCloud(
            positions=data["positions"],
            colors=data["colors"],
            class_ids=data["class_ids"] if "class_ids" in data else None,
        )


def _save_mesh(path: Path, mesh: Mesh) -> None:
    arrays = {"vertices": mesh.vertices, "faces": mesh.faces}
    if mesh.texture is not None:
        arrays["texture"] = mesh.texture
    if mesh.uvs is not None:
        arrays["uvs"] = mesh.uvs
    np.savez(path, **arrays)


def _load_mesh(path: Path) -> Mesh:
    with np.load(path) as data:
        return Mesh(
            vertices=data["vertices"],
            faces=data["faces"],
            texture=data["texture"] if "texture" in data else None,
            uvs=data["uvs"] if "uvs" in data else None,
        )


def _load_tiled(path: Path) -> TiledModel:
    payload = json.loads(path.read_text(encoding="utf-8"))
    tiles = tuple(
        reconstruction.Tile(
            bounds=tuple(t["bounds"]),
            point_ranges=tuple(tuple(r) for r in t["ranges"]),
        )
        for t in payload["tiles"]
    )
    return TiledModel(levels=payload["levels"], tiles=tiles)


def _open_workspace(ctx: TaskContext) -> workspace.Workspace:
    marker = ctx.workdir / "ml_workspace.json"
    root = json.loads(marker.read_text(encoding="utf-8"))["root"]
    return workspace.workspace_open(root, ctx.run_id)


def _load_meta(ws: workspace.Workspace) -> list[dict]:
    return json.loads((ws.root / "images_meta.json").read_text(encoding="utf-8"))


def _save_rgb_png(rgb: np.ndarray, path: Path) -> None:
    Image.fromarray(rgb).save(path)
