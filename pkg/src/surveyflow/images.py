"""Image intake and quality screening for the reconstruction pipeline.

Survey images enter as PNG/JPEG rasters; each becomes an :class:`ImageAsset`
carrying an 8-bit luma plane (Rec.601 weights, rounded half up) used by the
sharpness and exposure metrics. Screening keeps only images that pass, in
order, the blur, overexposure, and underexposure checks — the first failing
check names the verdict.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .config import PhotogrammetrySettings, RunConfig
from .utils import parallel_map

LAPLACIAN_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)


class ImageImportWarning(UserWarning):
    """A file in the input directory could not be decoded as a raster."""


class PipelineInputError(ValueError):
    """Nothing usable to reconstruct from."""


class Verdict(str, Enum):
    KEEP = "KEEP"
    REJECT_BLURRY = "REJECT_BLURRY"
    REJECT_OVEREXPOSED = "REJECT_OVEREXPOSED"
    REJECT_UNDEREXPOSED = "REJECT_UNDEREXPOSED"


@dataclass(frozen=True)
class QualityReport:
    blur_variance: float
    overexposed_fraction: float
    underexposed_fraction: float
    verdict: Verdict


@dataclass(frozen=True)
class ImageAsset:
    """A decoded raster plus the planes the pipelines work on."""

    path: str
    width: int
    height: int
    luma: np.ndarray  # uint8, (height, width)
    rgb: np.ndarray  # uint8, (height, width, 3)
    quality: QualityReport | None = None

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if self.luma.shape != (self.height, self.width):
            raise ValueError("luma dimensions must match width/height")

    @property
    def stem(self) -> str:
        return Path(self.path).stem


def rec601_luma(rgb: np.ndarray) -> np.ndarray:
    """8-bit luma from RGB: 0.299 R + 0.587 G + 0.114 B, rounded half up."""
    channels = rgb.astype(np.float64)
    luma = 0.299 * channels[..., 0] + 0.587 * channels[..., 1] + 0.114 * channels[..., 2]
    return np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)


def asset_from_rgb(path: str, rgb: np.ndarray) -> ImageAsset:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    height, width = rgb.shape[:2]
    return ImageAsset(path=str(path), width=width, height=height, luma=rec601_luma(rgb), rgb=rgb)


def load_image(path: str | Path) -> ImageAsset:
    with Image.open(path) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return asset_from_rgb(str(path), rgb)


def import_images(input_dir: str | Path) -> list[ImageAsset]:
    """Load every decodable raster in the directory, ascending path order.

    Undecodable files raise :class:`ImageImportWarning` and are skipped. An
    empty directory — or one with nothing decodable — is a pipeline failure.
    """
    directory = Path(input_dir)
    if not directory.is_dir():
        raise PipelineInputError(f"input directory {directory} does not exist")

    assets: list[ImageAsset] = []
    for path in sorted(p for p in directory.iterdir() if p.is_file()):
        try:
            assets.append(load_image(path))
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            warnings.warn(f"skipping {path.name}: {exc}", ImageImportWarning, stacklevel=2)
    if not assets:
        raise PipelineInputError(f"no decodable images in {directory}")
    return assets


def laplacian_variance(luma: np.ndarray) -> float:
    """Variance of the 3x3 Laplacian response over interior pixels.

    Border pixels are excluded (the kernel needs a full neighborhood).
    Images too small to have an interior score 0.0 — maximally blurry.
    """
    if luma.shape[0] < 3 or luma.shape[1] < 3:
        return 0.0
    plane = luma.astype(np.float64)
    response = (
        plane[:-2, 1:-1] + plane[2:, 1:-1] + plane[1:-1, :-2] + plane[1:-1, 2:] - 4.0 * plane[1:-1, 1:-1]
    )
    return float(response.var())


def assess_quality(asset: ImageAsset, settings: PhotogrammetrySettings) -> QualityReport:
    """Metrics plus verdict; check order is blurry, overexposed, underexposed."""
    blur = laplacian_variance(asset.luma)
    over = float(np.mean(asset.luma >= settings.overexposed_pixel_value))
    under = float(np.mean(asset.luma <= settings.underexposed_pixel_value))

    if blur < settings.blur_variance_min:
        verdict = Verdict.REJECT_BLURRY
    elif over > settings.exposure_fraction_max:
        verdict = Verdict.REJECT_OVEREXPOSED
    elif under > settings.exposure_fraction_max:
        verdict = Verdict.REJECT_UNDEREXPOSED
    else:
        verdict = Verdict.KEEP
    return QualityReport(
        blur_variance=blur,
        overexposed_fraction=over,
        underexposed_fraction=under,
        verdict=verdict,
    )


@dataclass(frozen=True)
class FilterResult:
    kept: tuple[ImageAsset, ...]
    rejected: tuple[tuple[ImageAsset, QualityReport], ...]


def quality_filter(assets: list[ImageAsset], config: RunConfig, *, max_workers: int | None = None) -> FilterResult:
    """Screen every asset; keep the ones whose verdict is KEEP.

    Per-image metric computation is independent and fans out across cores.
    Verdicts depend only on each image's own pixels, so input order can
    neither change them nor the kept-set membership.
    """
    if not assets:
        raise PipelineInputError("quality_filter needs at least one asset")
    settings = config.photogrammetry
    reports = parallel_map(lambda a: assess_quality(a, settings), assets, max_workers=max_workers)

    kept: list[ImageAsset] = []
    rejected: list[tuple[ImageAsset, QualityReport]] = []
    for asset, report in zip(assets, reports):
        graded = replace(asset, quality=report)
        if report.verdict is Verdict.KEEP:
            kept.append(graded)
        else:
            rejected.append((graded, report))
    return FilterResult(kept=tuple(kept), rejected=tuple(rejected))
