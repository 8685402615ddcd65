"""Raster primitives walkthrough
================================

Thresholding, component labeling, the constrained resize, edge-replication
padding, and rotation with canvas expansion — the building blocks every
pipeline stage shares.
"""

import numpy as np

from karyopipe.imaging import (
    connected_components,
    otsu_threshold,
    pad_edge_replicate,
    resize_constrained,
    rotate_expand,
    mask_iou,
)

# a toy image: light background, two dark blobs
img = np.full((400, 500), 230, dtype=np.uint8)
img[60:160, 80:140] = 70
img[250:330, 300:420] = 95

t = otsu_threshold(img)
print(f"otsu threshold: {t} (foreground = intensity <= t)")

labeled = connected_components(img <= t, connectivity=8)
for comp in labeled.components:
    print(f"component {comp.id}: area {comp.area}, bbox {comp.bbox}")

# the semantic stage wants a fixed canvas: short side to 512 capped at 992,
# then edge replication up to 992x992
resized, scale = resize_constrained(img, 512, 992)
print(f"resized to {resized.shape} at scale {scale:.4f}")
canvas = pad_edge_replicate(resized, 992, 992)
print(f"padded canvas: {canvas.shape}, bottom-right pixel replicates source:",
      canvas[-1, -1] == resized[-1, -1])

# rotation expands the canvas so nothing is cut off; the returned transform
# maps source coordinates into the rotated frame exactly
rotated, transform = rotate_expand(img, 45.0)
print(f"rotated canvas: {rotated.shape}")
corner = transform.apply([[0, 0]])[0]
back = transform.invert().apply([corner])[0]
print(f"corner round trip: (0,0) -> {corner.round(2)} -> {back.round(6)}")

mask_a = img <= t
mask_b = np.roll(mask_a, 3, axis=1)
print(f"IoU of mask vs 3px-shifted self: {mask_iou(mask_a, mask_b):.3f}")
