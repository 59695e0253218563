"""Integral images and the annular part descriptor.

Images are ``(H, W, 3)`` float64 arrays in [0, 1].  For every colour plane we
keep three maps (intensity, |d/du|, |d/dv|) and one integral image per map,
stacked in a ``(9, H + 1, W + 1)`` array whose first row and column are zero.
Channel ``3 * plane + kind`` holds plane ``plane`` and map ``kind``.

The descriptor around a centre is built from ``m`` nested rectangles.  Ring
``i`` is the set difference between rectangle ``i`` and rectangle ``i - 1``;
its pixel sum costs two rectangle lookups on the integral image, and it is
divided by its pixel area.  Rings are clipped at the image border and the
area shrinks accordingly; a ring with no pixels left contributes 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, ZeroSizeImage

N_PLANES = 3
N_KINDS = 3  # intensity, |horizontal gradient|, |vertical gradient|
N_CHANNELS = N_PLANES * N_KINDS


def as_image(array) -> np.ndarray:
    """Coerce to an ``(H, W, 3)`` float64 image.

    Grayscale input is replicated across the three planes; integer input is
    scaled by the dtype maximum.
    """
    arr = np.asarray(array)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"expected a 2-D or 3-D array, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ZeroSizeImage(f"image has shape {arr.shape}")
    if np.issubdtype(arr.dtype, np.integer):
        arr = arr.astype(np.float64) / np.iinfo(arr.dtype).max
    else:
        arr = arr.astype(np.float64, copy=False)
    if arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    elif arr.shape[2] == 4:
        arr = arr[:, :, :3]
    elif arr.shape[2] != 3:
        raise ValueError(f"unsupported channel count {arr.shape[2]}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    return arr


def integral_image(plane: np.ndarray) -> np.ndarray:
    """Prefix sums with a zero first row and column.

    ``out[r, c]`` is the sum of ``plane[:r, :c]``.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.size == 0:
        raise ZeroSizeImage(f"plane has shape {plane.shape}")
    h, w = plane.shape
    out = np.zeros((h + 1, w + 1), dtype=np.float64)
    # row-wise running sum, then accumulate rows
    np.cumsum(plane, axis=1, out=out[1:, 1:])
    np.cumsum(out[1:, 1:], axis=0, out=out[1:, 1:])
    return out


def gradient_maps(image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Absolute central differences ``[-1, 0, 1]`` with replicated borders.

    Returns ``(|d/du|, |d/dv|)``, each shaped like the input.
    """
    img = np.asarray(image, dtype=np.float64)
    pad = [(0, 0)] * img.ndim
    pad[0] = (1, 1)
    pad[1] = (1, 1)
    p = np.pad(img, pad, mode="edge")
    du = np.abs(p[1:-1, 2:] - p[1:-1, :-2])
    dv = np.abs(p[2:, 1:-1] - p[:-2, 1:-1])
    return du, dv


def feature_maps(image: np.ndarray) -> np.ndarray:
    """The nine maps as a ``(9, H, W)`` array."""
    img = as_image(image)
    du, dv = gradient_maps(img)
    maps = np.empty((N_CHANNELS,) + img.shape[:2], dtype=np.float64)
    for p in range(N_PLANES):
        maps[3 * p] = img[:, :, p]
        maps[3 * p + 1] = du[:, :, p]
        maps[3 * p + 2] = dv[:, :, p]
    return maps


def build_integral(image: np.ndarray) -> np.ndarray:
    """Integral images of all nine feature maps, shape ``(9, H + 1, W + 1)``."""
    maps = feature_maps(image)
    return np.stack([integral_image(m) for m in maps])


def clip_rect(rect, shape) -> tuple[int, int, int, int] | None:
    """Clip an inclusive ``(top, left, bottom, right)`` rectangle to an image.

    ``shape`` is ``(H, W)``.  Returns None when nothing is left.
    """
    top, left, bottom, right = (int(x) for x in rect)
    h, w = shape[:2]
    top, left = max(top, 0), max(left, 0)
    bottom, right = min(bottom, h - 1), min(right, w - 1)
    if top > bottom or left > right:
        return None
    return top, left, bottom, right


def rect_area(rect, shape) -> int:
    c = clip_rect(rect, shape)
    if c is None:
        return 0
    return (c[2] - c[0] + 1) * (c[3] - c[1] + 1)


def rect_sum(integral: np.ndarray, rect) -> float:
    """Sum of the pixels in an inclusive rectangle, after clipping.

    ``integral`` is one ``(H + 1, W + 1)`` table.  An empty clipped rectangle
    sums to 0 (see :func:`rect_area`).
    """
    h, w = integral.shape[0] - 1, integral.shape[1] - 1
    c = clip_rect(rect, (h, w))
    if c is None:
        return 0.0
    top, left, bottom, right = c
    return float(
        integral[bottom + 1, right + 1]
        + integral[top, left]
        - integral[top, right + 1]
        - integral[bottom + 1, left]
    )


@dataclass(frozen=True)
class AnnulusGeometry:
    """Half extents of the ``m`` nested rectangles, innermost first."""

    half_widths: tuple[int, ...]
    half_heights: tuple[int, ...]

    def __post_init__(self):
        hw = tuple(int(x) for x in self.half_widths)
        hh = tuple(int(x) for x in self.half_heights)
        object.__setattr__(self, "half_widths", hw)
        object.__setattr__(self, "half_heights", hh)
        if len(hw) == 0 or len(hw) != len(hh):
            raise ValueError("need m >= 1 matching half widths and heights")
        if hw[0] < 0 or hh[0] < 0:
            raise ValueError("half extents must be non-negative")
        if any(b <= a for a, b in zip(hw, hw[1:])) or any(b <= a for a, b in zip(hh, hh[1:])):
            raise ValueError("rectangle extents must be strictly ascending")

    @classmethod
    def square(cls, m: int = 10, stride: int = 2) -> "AnnulusGeometry":
        """Square rings; ring ``i`` (1-based) has half extent ``i * stride``."""
        if m < 1 or stride < 1:
            raise ValueError("m and stride must be >= 1")
        ext = tuple(i * stride for i in range(1, m + 1))
        return cls(ext, ext)

    @property
    def m(self) -> int:
        return len(self.half_widths)

    @property
    def length(self) -> int:
        return N_CHANNELS * self.m

    @property
    def reach(self) -> tuple[int, int]:
        """Outer half extent ``(u, v)``."""
        return self.half_widths[-1], self.half_heights[-1]


def extract_descriptors(integrals: np.ndarray, centers, geometry: AnnulusGeometry) -> np.ndarray:
    """Descriptors at many integer centres at once.

    ``centers`` is ``(K, 2)`` of ``(u, v)``.  Returns ``(K, 9 * m)``; entry
    ``channel * m + ring`` is the mean of that channel's map over the ring.
    Cost is two table lookups of four corners per ring and channel, whatever
    the ring size.
    """
    centers = np.asarray(centers)
    if centers.ndim == 1:
        centers = centers[None]
    cu = np.rint(centers[:, 0]).astype(np.int64)[:, None]
    cv = np.rint(centers[:, 1]).astype(np.int64)[:, None]
    h, w = integrals.shape[1] - 1, integrals.shape[2] - 1
    hw = np.asarray(geometry.half_widths, dtype=np.int64)[None, :]
    hh = np.asarray(geometry.half_heights, dtype=np.int64)[None, :]

    # exclusive-end table coordinates of every clipped rectangle, (K, m)
    top = np.clip(cv - hh, 0, h)
    bottom = np.clip(cv + hh + 1, 0, h)
    left = np.clip(cu - hw, 0, w)
    right = np.clip(cu + hw + 1, 0, w)
    bottom = np.maximum(bottom, top)
    right = np.maximum(right, left)

    sums = (
        integrals[:, bottom, right]
        + integrals[:, top, left]
        - integrals[:, top, right]
        - integrals[:, bottom, left]
    )  # (9, K, m)
    areas = (bottom - top) * (right - left)  # (K, m)

    ring_sums = sums.copy()
    ring_sums[:, :, 1:] -= sums[:, :, :-1]
    ring_areas = areas.copy()
    ring_areas[:, 1:] -= areas[:, :-1]

    out = np.zeros_like(ring_sums)
    np.divide(ring_sums, ring_areas[None], out=out, where=ring_areas[None] > 0)
    # tiny negative round-off from the subtraction of nearly equal sums
    np.maximum(out, 0.0, out=out)
    return out.transpose(1, 0, 2).reshape(len(centers), -1)


def extract_descriptor(integrals: np.ndarray, center, geometry: AnnulusGeometry) -> np.ndarray:
    """Descriptor of length ``9 * m`` at one ``(u, v)`` centre."""
    return extract_descriptors(integrals, np.asarray(center)[None], geometry)[0]


def ring_labels(shape, center, geometry: AnnulusGeometry) -> np.ndarray:
    """Ring index (0-based) of every pixel, ``-1`` outside the outer rectangle."""
    h, w = shape[:2]
    u, v = int(round(center[0])), int(round(center[1]))
    rows = np.abs(np.arange(h) - v)[:, None]
    cols = np.abs(np.arange(w) - u)[None, :]
    labels = np.full((h, w), -1, dtype=np.int64)
    for i in range(geometry.m - 1, -1, -1):
        inside = (rows <= geometry.half_heights[i]) & (cols <= geometry.half_widths[i])
        labels[inside] = i
    return labels


def naive_descriptors(maps: np.ndarray, centers, geometry: AnnulusGeometry) -> np.ndarray:
    """Per-pixel reference path: visit every pixel of every ring directly.

    ``maps`` is the ``(9, H, W)`` output of :func:`feature_maps`.  Work grows
    with ring area, which is what the integral path avoids.
    """
    centers = np.asarray(centers)
    if centers.ndim == 1:
        centers = centers[None]
    _, h, w = maps.shape
    m = geometry.m
    ru, rv = geometry.reach
    out = np.zeros((len(centers), N_CHANNELS, m))
    for k, (cu, cv) in enumerate(centers):
        u, v = int(round(cu)), int(round(cv))
        r0, r1 = max(v - rv, 0), min(v + rv, h - 1)
        c0, c1 = max(u - ru, 0), min(u + ru, w - 1)
        if r0 > r1 or c0 > c1:
            continue
        dr = np.abs(np.arange(r0, r1 + 1) - v)[:, None]
        dc = np.abs(np.arange(c0, c1 + 1) - u)[None, :]
        labels = np.full(dr.shape[0:1] + dc.shape[1:], m, dtype=np.int64)
        for i in range(m - 1, -1, -1):
            labels[(dr <= geometry.half_heights[i]) & (dc <= geometry.half_widths[i])] = i
        flat = labels.ravel()
        area = np.bincount(flat, minlength=m + 1)[:m]
        patch = maps[:, r0:r1 + 1, c0:c1 + 1].reshape(N_CHANNELS, -1)
        for ch in range(N_CHANNELS):
            s = np.bincount(flat, weights=patch[ch], minlength=m + 1)[:m]
            out[k, ch] = np.divide(s, area, out=np.zeros(m), where=area > 0)
    return out.reshape(len(centers), -1)


def likeliness(feature, template) -> float:
    """Euclidean distance between a candidate descriptor and the template."""
    f = np.asarray(feature, dtype=np.float64)
    t = np.asarray(template, dtype=np.float64)
    if f.shape[-1] != t.shape[-1]:
        raise LengthMismatch(f"descriptor lengths {f.shape[-1]} and {t.shape[-1]}")
    return np.linalg.norm(f - t, axis=-1)


def update_template(template, feature, l: float) -> np.ndarray:
    """Blend towards the new feature with weight ``exp(-l)``.

    A perfect match (``l = 0``) replaces the template outright; a very poor
    one leaves it untouched.
    """
    t = np.asarray(template, dtype=np.float64)
    f = np.asarray(feature, dtype=np.float64)
    if t.shape != f.shape:
        raise LengthMismatch(f"template shape {t.shape} vs feature shape {f.shape}")
    if l < 0:
        raise ValueError("likeliness must be non-negative")
    alpha = np.exp(-l)
    if alpha == 1.0:
        return f.copy()
    return alpha * f + (1.0 - alpha) * t
