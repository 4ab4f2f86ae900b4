"""Segmentation-mask ETL: downscale, batched inference, validation, upscale,
per-class binary masks, and label transfer onto the point cloud.

Inference runs behind an adapter so a real model server can plug in; the
bundled stub labels each pixel by its luma band (label = floor(luma *
class_count / 256)), which makes every downstream stage fully checkable.

Downscaling uses box/area averaging computed in exact integer arithmetic:
per-axis overlap weights are integers once scaled by the destination size,
so results are reproducible bit for bit and independently verifiable.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np
from PIL import Image

from .images import ImageAsset, asset_from_rgb
from .reconstruction import FOOTPRINT_HALF, PointCloud, SparseAlignment
from .utils import parallel_map, round_half_up_ratio


class MaskError(ValueError):
    """Mask content that violates its stage contract."""


@dataclass(frozen=True)
class SegmentationMask:
    """Per-pixel class labels for one image at one stage's resolution."""

    labels: np.ndarray  # (H, W) integer grid
    class_count: int

    def __post_init__(self) -> None:
        if self.labels.ndim != 2:
            raise ValueError("labels must be a 2-D grid")
        if self.class_count < 1:
            raise ValueError("class_count must be positive")

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SegmentationMask):
            return NotImplemented
        return self.class_count == other.class_count and np.array_equal(self.labels, other.labels)


@dataclass(frozen=True)
class BinaryMaskSet:
    """One 0/255 grid per class; exactly one grid holds 255 at each pixel."""

    class_names: tuple[str, ...]
    grids: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.class_names) != len(self.grids):
            raise ValueError("one grid per class name required")

    def labels(self) -> np.ndarray:
        """Recover the label grid (argmax over the per-class planes)."""
        return np.argmax(np.stack(self.grids), axis=0).astype(np.int64)


# -- downscale -------------------------------------------------------------------


def box_overlap_weights(src: int, dst: int) -> np.ndarray:
    """Integer overlap lengths (scaled by dst) between src pixels and dst cells.

    Row j holds, for destination cell j, the length of its overlap with each
    source pixel, measured in units of 1/dst so everything stays integral.
    Each row sums to exactly src.
    """
    weights = np.zeros((dst, src), dtype=np.int64)
    for j in range(dst):
        lo, hi = j * src, (j + 1) * src  # dst cell j in units of 1/dst
        i0, i1 = lo // dst, (hi + dst - 1) // dst
        for i in range(i0, min(i1, src)):
            overlap = min(hi, (i + 1) * dst) - max(lo, i * dst)
            if overlap > 0:
                weights[j, i] = overlap
    return weights


def box_downscale_channel(channel: np.ndarray, dst_w: int, dst_h: int) -> np.ndarray:
    """Area-average one 8-bit channel to (dst_h, dst_w), rounding half up."""
    src_h, src_w = channel.shape
    wy = box_overlap_weights(src_h, dst_h)
    wx = box_overlap_weights(src_w, dst_w)
    num = wy @ channel.astype(np.int64) @ wx.T
    den = src_h * src_w
    return ((2 * num + den) // (2 * den)).astype(np.uint8)


def downscale_dims(width: int, height: int, target_long_side: int) -> tuple[int, int]:
    """New (width, height): long side pinned to target, short side scaled, min 1."""
    long_side = max(width, height)
    short_side = min(width, height)
    new_short = max(1, round_half_up_ratio(short_side * target_long_side, long_side))
    if width >= height:
        return target_long_side, new_short
    return new_short, target_long_side


def downscale_image(asset: ImageAsset, target_long_side_px: int) -> ImageAsset:
    """Shrink so the long side equals the target; smaller images pass through."""
    if target_long_side_px < 1:
        raise ValueError("target_long_side_px must be positive")
    if max(asset.width, asset.height) <= target_long_side_px:
        return asset
    new_w, new_h = downscale_dims(asset.width, asset.height, target_long_side_px)
    rgb = np.stack(
        [box_downscale_channel(asset.rgb[:, :, c], new_w, new_h) for c in range(3)],
        axis=-1,
    )
    return asset_from_rgb(asset.path, rgb)


# -- inference -------------------------------------------------------------------


class InferenceAdapter(Protocol):
    """Batch of images in, one mask per image out (same dimensions)."""

    def infer_batch(self, images: Sequence[ImageAsset], class_count: int) -> list[SegmentationMask]: ...


class LumaBandInferenceStub:
    """Deterministic stand-in model: label = floor(luma * class_count / 256)."""

    name = "stub"

    def infer_batch(self, images: Sequence[ImageAsset], class_count: int) -> list[SegmentationMask]:
        masks = []
        for image in images:
            labels = (image.luma.astype(np.int64) * class_count) // 256
            masks.append(SegmentationMask(labels=labels, class_count=class_count))
        return masks


class InferenceError(RuntimeError):
    """One or more batches failed; completed batches are preserved."""

    def __init__(self, failed_refs: list[str], completed: dict[str, SegmentationMask], cause: str) -> None:
        super().__init__(f"inference failed for {len(failed_refs)} image(s): {cause}")
        self.failed_refs = failed_refs
        self.completed = completed


def run_inference(
    images: Sequence[ImageAsset],
    adapter: InferenceAdapter,
    class_count: int,
    batch_size: int,
) -> list[SegmentationMask]:
    """Run the adapter over fixed-size batches.

    Batching is semantically transparent: outputs are identical for any
    batch_size. A failing batch does not stop the others; the error carries
    both the failed refs and every completed mask.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    results: dict[str, SegmentationMask] = {}
    failed: list[str] = []
    first_cause = ""
    for start in range(0, len(images), batch_size):
        batch = images[start : start + batch_size]
        try:
            masks = adapter.infer_batch(batch, class_count)
            if len(masks) != len(batch):
                raise MaskError(f"adapter returned {len(masks)} masks for {len(batch)} images")
            for image, mask in zip(batch, masks):
                if (mask.height, mask.width) != (image.height, image.width):
                    raise MaskError(f"mask dims {mask.width}x{mask.height} do not match image {image.path}")
                results[image.path] = mask
        except Exception as exc:  # noqa: BLE001 - adapter boundary
            failed.extend(image.path for image in batch)
            first_cause = first_cause or str(exc)
    if failed:
        raise InferenceError(failed, results, first_cause)
    return [results[image.path] for image in images]


_ADAPTERS: dict[str, InferenceAdapter] = {}


def register_inference_adapter(name: str, adapter: InferenceAdapter) -> None:
    if name in _ADAPTERS:
        raise ValueError(f"inference adapter {name!r} already registered")
    _ADAPTERS[name] = adapter


def get_inference_adapter(name: str) -> InferenceAdapter:
    try:
        return _ADAPTERS[name]
    except KeyError:
        raise KeyError(f"no inference adapter named {name!r}") from None


register_inference_adapter("stub", LumaBandInferenceStub())


# -- validation --------------------------------------------------------------------


@dataclass(frozen=True)
class MaskValidation:
    ok: bool
    problems: tuple[str, ...] = ()
    first_bad_pixel: tuple[int, int] | None = None  # (x, y)


def validate_mask(mask: SegmentationMask, expected_dims: tuple[int, int], class_count: int) -> MaskValidation:
    """Formal checks: dimensions, label range, 8-bit representability.

    Never raises; failures carry the first offending pixel coordinate where
    one exists.
    """
    problems: list[str] = []
    first_bad: tuple[int, int] | None = None

    expected_w, expected_h = expected_dims
    if (mask.width, mask.height) != (expected_w, expected_h):
        problems.append(
            f"dimensions {mask.width}x{mask.height} do not match expected {expected_w}x{expected_h}"
        )

    out_of_range = (mask.labels < 0) | (mask.labels >= class_count)
    if out_of_range.any():
        y, x = np.argwhere(out_of_range)[0]
        first_bad = (int(x), int(y))
        problems.append(
            f"label {int(mask.labels[y, x])} out of range [0, {class_count}) at pixel ({int(x)}, {int(y)})"
        )

    if class_count > 256:
        problems.append(f"class_count {class_count} exceeds 8-bit mask representability")
    elif mask.labels.size and int(mask.labels.max()) > 255:
        y, x = np.argwhere(mask.labels > 255)[0]
        first_bad = first_bad or (int(x), int(y))
        problems.append(f"label {int(mask.labels[y, x])} not representable in 8 bits")

    return MaskValidation(ok=not problems, problems=tuple(problems), first_bad_pixel=first_bad)


# -- upscale and split --------------------------------------------------------------


def upscale_mask_nearest(mask: SegmentationMask, original_width: int, original_height: int) -> SegmentationMask:
    """Nearest-neighbor resize: src_index = floor(dst_index * src_dim / dst_dim).

    Introduces no new label values; a same-size call is the identity mapping.
    """
    if original_width < 1 or original_height < 1:
        raise ValueError("target dimensions must be positive")
    rows = (np.arange(original_height, dtype=np.int64) * mask.height) // original_height
    cols = (np.arange(original_width, dtype=np.int64) * mask.width) // original_width
    return SegmentationMask(labels=mask.labels[rows[:, None], cols[None, :]], class_count=mask.class_count)


def split_binary_masks(mask: SegmentationMask, class_names: Sequence[str]) -> BinaryMaskSet:
    """One black-and-white plane per class, in class_names order."""
    if len(class_names) != mask.class_count:
        raise MaskError(f"{len(class_names)} names for {mask.class_count} classes")
    grids = tuple(
        np.where(mask.labels == class_id, 255, 0).astype(np.uint8)
        for class_id in range(mask.class_count)
    )
    return BinaryMaskSet(class_names=tuple(class_names), grids=grids)


# -- label transfer onto the cloud ----------------------------------------------------


def classify_point_cloud(
    cloud: PointCloud,
    masks_by_image: Mapping[str, BinaryMaskSet],
    alignment: SparseAlignment,
    class_count: int,
) -> PointCloud:
    """Vote each point's class from every camera whose footprint covers it.

    A point projects into a covering camera's mask at the nearest pixel; the
    majority class wins, ties break toward the lowest class id, and points
    outside every footprint stay unclassified (-1).
    """
    n = len(cloud)
    votes = np.zeros((n, class_count), dtype=np.int64)
    px = cloud.positions[:, 0]
    py = cloud.positions[:, 1]

    for cam in alignment.cameras:
        mask_set = masks_by_image.get(cam.image_ref)
        if mask_set is None:
            raise MaskError(f"no mask set for image {cam.image_ref!r}")
        labels = mask_set.labels()
        h, w = labels.shape
        cx, cy = float(cam.position[0]), float(cam.position[1])
        covered = (np.abs(px - cx) <= FOOTPRINT_HALF) & (np.abs(py - cy) <= FOOTPRINT_HALF)
        if not covered.any():
            continue
        # inverse of the footprint sampling used for depth maps
        col = _to_pixel(px[covered] - cx, w)
        row = _to_pixel(py[covered] - cy, h)
        point_labels = labels[row, col]
        votes[np.flatnonzero(covered), point_labels] += 1

    class_ids = np.where(votes.sum(axis=1) > 0, votes.argmax(axis=1), -1).astype(np.int32)
    return PointCloud(positions=cloud.positions, colors=cloud.colors, class_ids=class_ids)


def _to_pixel(relative: np.ndarray, samples: int) -> np.ndarray:
    if samples == 1:
        return np.zeros(len(relative), dtype=np.int64)
    idx = np.floor((relative + FOOTPRINT_HALF) * (samples - 1) + 0.5).astype(np.int64)
    return np.clip(idx, 0, samples - 1)


# -- PNG I/O ---------------------------------------------------------------------------


def save_mask_png(labels: np.ndarray, path: str | Path) -> Path:
    """8-bit single-channel PNG; pixel value = class id (or 0/255 for binary)."""
    path = Path(path)
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise MaskError("labels outside 8-bit range cannot be written as PNG8")
    Image.fromarray(labels.astype(np.uint8), mode="L").save(path)
    return path


def load_mask_png(path: str | Path, class_count: int) -> SegmentationMask:
    with Image.open(path) as img:
        labels = np.asarray(img.convert("L"), dtype=np.int64)
    return SegmentationMask(labels=labels, class_count=class_count)


def binary_mask_filename(image_stem: str, class_name: str) -> str:
    return f"{image_stem}__{class_name}.png"


def save_binary_masks(mask_set: BinaryMaskSet, image_stem: str, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for class_name, grid in zip(mask_set.class_names, mask_set.grids):
        paths.append(save_mask_png(grid, out / binary_mask_filename(image_stem, class_name)))
    return paths


def downscale_batch(assets: Sequence[ImageAsset], target_long_side_px: int, *, max_workers: int | None = None) -> list[ImageAsset]:
    return parallel_map(lambda a: downscale_image(a, target_long_side_px), assets, max_workers=max_workers)
