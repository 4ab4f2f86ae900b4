"""Shared fixtures: synthetic survey images, configs, stores."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from surveyflow import MetadataStore, parse_config


def checkerboard(width: int, height: int, low: int, high: int) -> np.ndarray:
    """1-pixel-period checkerboard; sharp and exposure-safe for mid tones."""
    xx, yy = np.meshgrid(np.arange(width), np.arange(height))
    return np.where((xx + yy) % 2 == 0, low, high).astype(np.uint8)


def gray_rgb(plane: np.ndarray) -> np.ndarray:
    return np.stack([plane, plane, plane], axis=-1)


def write_png(path: Path, rgb: np.ndarray) -> Path:
    Image.fromarray(rgb).save(path)
    return path


@pytest.fixture
def survey_dir(tmp_path: Path) -> Path:
    """Four sharp mid-tone survey frames."""
    input_dir = tmp_path / "frames"
    input_dir.mkdir()
    for i in range(4):
        write_png(input_dir / f"frame_{i:02d}.png", gray_rgb(checkerboard(64, 64, 100, 150)))
    return input_dir


@pytest.fixture
def base_config(tmp_path: Path, survey_dir: Path):
    return parse_config(
        f"""
[project]
name = testrun
input_dir = {survey_dir}
output_dir = {tmp_path / "out"}

[photogrammetry]
grid_resolution = 10

[ml]
target_long_side_px = 32
batch_size = 2
"""
    )


@pytest.fixture
def store(tmp_path: Path) -> MetadataStore:
    with MetadataStore(tmp_path / "data") as s:
        yield s
