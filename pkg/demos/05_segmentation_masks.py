"""
Segmentation-mask ETL, stage by stage
=====================================

The operations behind the machine-learning chain, called directly: downscale
with exact box averaging, batched inference through the deterministic stub
adapter, formal validation, nearest-neighbor upscale, per-class binary
decomposition, and label transfer onto the reconstructed point cloud.
"""

import numpy as np

from surveyflow.images import asset_from_rgb
from surveyflow.masks import (
    LumaBandInferenceStub,
    downscale_image,
    run_inference,
    split_binary_masks,
    upscale_mask_nearest,
    validate_mask,
    classify_point_cloud,
)
from surveyflow.reconstruction import SyntheticEngine, align

CLASS_NAMES = ("ground", "road", "building", "water")

# a 64x48 frame with horizontal luma bands: each band maps to one stub class
rows = np.repeat(np.array([10, 80, 150, 230], dtype=np.uint8), 12)[:, None]
frame = asset_from_rgb("bands.png", np.broadcast_to(rows, (48, 64))[..., None].repeat(3, axis=-1).copy())

# 1. downscale to the model's working resolution (aspect preserved)
small = downscale_image(frame, 32)
print(f"downscaled {frame.width}x{frame.height} -> {small.width}x{small.height}")

# 2. batched inference through the stub: label = floor(luma * classes / 256)
(mask,) = run_inference([small], LumaBandInferenceStub(), class_count=4, batch_size=8)
print("mask labels present:", sorted(np.unique(mask.labels).tolist()))

# 3. formal validation before anything downstream consumes the mask
verdict = validate_mask(mask, (small.width, small.height), class_count=4)
print("validation:", "ok" if verdict.ok else verdict.problems)

# 4. nearest-neighbor upscale back to the original resolution
full = upscale_mask_nearest(mask, frame.width, frame.height)
print(f"upscaled back to {full.width}x{full.height}; label set unchanged:",
      set(np.unique(full.labels)) <= set(np.unique(mask.labels)))

# 5. one black-and-white plane per class; exactly one plane is lit per pixel
planes = split_binary_masks(full, CLASS_NAMES)
coverage = {name: int((grid == 255).sum()) for name, grid in zip(planes.class_names, planes.grids)}
print("per-class pixel coverage:", coverage)
partition = np.stack(planes.grids).astype(int).sum(axis=0)
print("partition holds everywhere:", bool((partition == 255).all()))

# 6. project the masks onto a reconstructed cloud: majority vote per point,
#    ties to the lowest class id, unseen points stay unclassified (-1)
second = asset_from_rgb("bands2.png", frame.rgb)
alignment = align([frame, second], SyntheticEngine())
cloud = SyntheticEngine().point_cloud(24)
classified = classify_point_cloud(
    cloud,
    {"bands.png": planes, "bands2.png": planes},
    alignment,
    class_count=4,
)
ids, counts = np.unique(classified.class_ids, return_counts=True)
print("point votes:", dict(zip(ids.tolist(), counts.tolist())))
