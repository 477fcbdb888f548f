"""Calibrating a camera pair from scratch.

Two cameras watch the same planar scene from different spots. Starting
from nothing but keypoints with descriptors, we match them, reject the
ambiguous pairs, fit a homography robustly, and then use it: projecting
detections across views and measuring who overlaps whom.

Run: python demos/01_calibration_and_geometry.py
"""

import numpy as np

from meshcount import (
    Correspondence,
    Point2,
    Polygon,
    RansacParams,
    default_max_dist,
    distance_filter,
    iou,
    project_point,
    project_polygon,
    ransac_homography,
    ratio_match,
    symmetric_transfer_error,
    to_correspondences,
)
from meshcount.matching import Feature

rng = np.random.default_rng(0)

# ---------------------------------------------------------------------------
# A synthetic planar scene: landmarks on a ground plane, each with a
# distinctive 32-dimensional descriptor. Camera B sees the same plane
# shifted 180 px to the left and slightly rotated.
# ---------------------------------------------------------------------------
angle = 0.03
true_h = np.array(
    [
        [np.cos(angle), -np.sin(angle), -180.0],
        [np.sin(angle), np.cos(angle), 12.0],
        [0.0, 0.0, 1.0],
    ]
)

world = np.column_stack([rng.uniform(0, 900, 140), rng.uniform(0, 480, 140)])
descriptors = rng.normal(0, 1, (140, 32))

def observe(points, matrix, noise):
    hom = np.hstack([points, np.ones((len(points), 1))]) @ matrix.T
    return hom[:, :2] / hom[:, 2:3] + rng.normal(0, noise, (len(points), 2))

feats_a = [
    Feature(Point2(*p), d + rng.normal(0, 0.05, 32))
    for p, d in zip(observe(world, np.eye(3), 0.0), descriptors)
]
feats_b = [
    Feature(Point2(*p), d + rng.normal(0, 0.05, 32))
    for p, d in zip(observe(world, true_h, 0.3), descriptors)
]

print(f"camera A sees {len(feats_a)} features, camera B {len(feats_b)}")

# ---------------------------------------------------------------------------
# Step 1: nearest-neighbor matching with the ratio test, then an absolute
# distance cutoff. With clean descriptors nearly everything survives.
# ---------------------------------------------------------------------------
matches = ratio_match(feats_a, feats_b, ratio=0.75)
matches = distance_filter(matches, default_max_dist(matches))
print(f"ratio test + distance filter keep {len(matches)} matches")

# ---------------------------------------------------------------------------
# Step 2: robust estimation. A quarter of the matches are replaced by
# garbage to show RANSAC shrugging them off.
# ---------------------------------------------------------------------------
corrs = to_correspondences(feats_a, feats_b, matches)
n_bad = len(corrs) // 4
spoiled = corrs[:-n_bad] + [
    Correspondence(c.src, Point2(c.dst.x + rng.uniform(40, 90), c.dst.y - 35.0))
    for c in corrs[-n_bad:]
]
h, inlier_mask = ransac_homography(spoiled, RansacParams(seed=7))
print(f"RANSAC kept {sum(inlier_mask)} of {len(spoiled)} correspondences as inliers")

residual = symmetric_transfer_error(h, [c for c, m in zip(spoiled, inlier_mask) if m])
print(f"mean symmetric transfer error on inliers: {residual.mean():.4f} px")

# ---------------------------------------------------------------------------
# Step 3: use the calibration. Project a detection mask from camera A into
# camera B and compare it with what camera B actually detected.
# ---------------------------------------------------------------------------
mask_a = Polygon.box(400, 200, 430, 216)
mask_b_truth = project_polygon(
    ransac_homography(corrs, RansacParams(seed=0))[0], mask_a
)
projected = project_polygon(h, mask_a)
print(f"IoU between the projected mask and camera B's own detection: "
      f"{iou(projected, mask_b_truth):.4f}")

# Round trip: h^-1(h(p)) returns the original point.
p = Point2(123.4, 56.7)
q = project_point(h.inverse(), project_point(h, p))
print(f"round trip (123.4, 56.7) -> ({q.x:.9f}, {q.y:.9f})")
