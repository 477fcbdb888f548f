"""Bounding-box sanitization for skeleton-derived labels.

Skeleton boxes undersize the full body; the height padding follows an
inverse-distance model h = h_s + alpha / z fitted by least squares, the
width keeps the original aspect ratio, and far objects are pruned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateSamples

DEFAULT_MAX_Z = 40.0  # meters; the human-annotator horizon


@dataclass(frozen=True)
class SkeletonBox:
    h_s: float  # skeleton height, px
    w_s: float  # skeleton width, px
    z: float    # distance of the center of mass from the camera, m

    def __post_init__(self):
        if not (self.h_s > 0 and self.w_s > 0 and self.z > 0):
            raise ValueError("skeleton box fields must be positive")

    @property
    def aspect(self) -> float:
        return self.w_s / self.h_s


@dataclass(frozen=True)
class CalibrationFit:
    alpha: float
    residual_rmse: float
    n_samples: int

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError("alpha must be positive and finite")
        if self.residual_rmse < 0 or self.n_samples < 1:
            raise ValueError("invalid fit statistics")


def fit_alpha(samples) -> CalibrationFit:
    """Least-squares alpha from (h_s, z, measured h_m) triples.

    The model is linear in alpha, so the minimizer of
    sum((h_m - h_s - alpha/z)^2) has the closed form
    alpha = sum((h_m - h_s)/z) / sum(1/z^2).
    """
    samples = [(float(h_s), float(z), float(h_m)) for h_s, z, h_m in samples]
    if len(samples) < 2 or len({z for _, z, _ in samples}) < 2:
        raise DegenerateSamples("need at least 2 samples with distinct distances")
    for h_s, z, _ in samples:
        if not (h_s > 0 and z > 0):
            raise ValueError("heights and distances must be positive")
    num = sum((h_m - h_s) / z for h_s, z, h_m in samples)
    den = sum(1.0 / (z * z) for _, z, _ in samples)
    alpha = num / den
    sq = [(h_m - h_s - alpha / z) ** 2 for h_s, z, h_m in samples]
    return CalibrationFit(
        alpha=alpha,
        residual_rmse=math.sqrt(sum(sq) / len(sq)),
        n_samples=len(samples),
    )


def sanitize_box(skel: SkeletonBox, alpha: float):
    """Padded (h_m, w_m): height by alpha/z, width keeping the aspect ratio."""
    h_m = skel.h_s + alpha / skel.z
    return h_m, h_m * skel.aspect


def prune_far(annotations, max_z: float = DEFAULT_MAX_Z):
    """Keep (item, z) entries with z <= max_z, preserving order."""
    if not max_z > 0:
        raise ValueError("max_z must be positive")
    return [(item, z) for item, z in annotations if z <= max_z]
