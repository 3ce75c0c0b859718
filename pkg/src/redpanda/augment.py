"""Photometric and crop augmentations for positive contrastive pairs.

No flips or rotations: orientation can be a relevant attribute.
"""
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class AugmentPolicy:
    blur: bool = True
    blur_kernel: int = 5
    blur_sigma: float = 1.0
    contrast: tuple = (1.8, 3.0)
    saturation: tuple = (1.8, 3.0)
    crop_scale: tuple = (0.8, 1.0)

    def __post_init__(self):
        if not (self.blur or self.contrast or self.saturation or self.crop_scale):
            raise ValueError("augmentation policy enables no transform")
        if self.blur and (self.blur_kernel < 1 or self.blur_kernel % 2 == 0 or self.blur_sigma <= 0):
            raise ValueError(f"blur needs an odd kernel and sigma > 0, got {self.blur_kernel}, {self.blur_sigma}")
        for name in ("contrast", "saturation"):
            rng = getattr(self, name)
            if rng and not 0 < rng[0] <= rng[1]:
                raise ValueError(f"{name} range must satisfy 0 < low <= high, got {rng}")
        if self.crop_scale and not 0 < self.crop_scale[0] <= self.crop_scale[1] <= 1:
            raise ValueError(f"crop_scale must lie in (0, 1], got {self.crop_scale}")

    @classmethod
    def blur_only(cls):
        """Blur-only policy used for sketch/photo style datasets."""
        return cls(contrast=None, saturation=None, crop_scale=None)


def gaussian_kernel1d(size=5, sigma=1.0):
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_kernel2d(size=5, sigma=1.0):
    k = gaussian_kernel1d(size, sigma)
    return np.outer(k, k)


def gaussian_blur(images, size=5, sigma=1.0):
    """Separable Gaussian blur of an (..., H, W, C) array with mirrored borders."""
    k = gaussian_kernel1d(size, sigma)
    out = ndimage.convolve1d(np.asarray(images, dtype=np.float64), k, axis=-3, mode="reflect")
    return ndimage.convolve1d(out, k, axis=-2, mode="reflect")


def adjust_contrast(images, factor):
    """mean + factor * (pixel - mean), mean = per-image grayscale mean."""
    images = np.asarray(images, dtype=np.float64)
    factor = np.asarray(factor, dtype=np.float64).reshape((-1,) + (1,) * 3) if images.ndim == 4 else factor
    gray_mean = (images @ LUMA).mean(axis=(-2, -1), keepdims=True)[..., None]
    return np.clip(gray_mean + factor * (images - gray_mean), 0.0, 1.0)


def adjust_saturation(images, factor):
    """Blend between grayscale and colour: gray + factor * (pixel - gray)."""
    images = np.asarray(images, dtype=np.float64)
    factor = np.asarray(factor, dtype=np.float64).reshape((-1,) + (1,) * 3) if images.ndim == 4 else factor
    gray = (images @ LUMA)[..., None]
    return np.clip(gray + factor * (images - gray), 0.0, 1.0)


def crop_resize(images, boxes):
    """Bilinear crop-and-resize back to the input size.

    ``boxes`` holds one (top, left, side) square per image in pixel units.
    """
    n, h, w, _ = images.shape
    top, left, side = (np.asarray(b, dtype=np.float64)[:, None] for b in np.asarray(boxes).T)
    grid_y = top + (np.arange(h)[None, :] + 0.5) * side / h - 0.5
    grid_x = left + (np.arange(w)[None, :] + 0.5) * side / w - 0.5
    grid_y = np.clip(grid_y, 0, h - 1)
    grid_x = np.clip(grid_x, 0, w - 1)
    y0 = np.floor(grid_y).astype(int)
    x0 = np.floor(grid_x).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (grid_y - y0)[:, :, None, None]
    wx = (grid_x - x0)[:, None, :, None]
    idx = np.arange(n)[:, None, None]

    def gather(ys, xs):
        return images[idx, ys[:, :, None], xs[:, None, :]]

    top_row = gather(y0, x0) * (1 - wx) + gather(y0, x1) * wx
    bottom_row = gather(y1, x0) * (1 - wx) + gather(y1, x1) * wx
    return top_row * (1 - wy) + bottom_row * wy


def apply_batch(policy, images, rng):
    """Augment an (N, H, W, C) batch, drawing per-image parameters from ``rng``.

    Order: crop, blur, contrast, saturation. Output is float32 in [0, 1].
    """
    images = np.asarray(images, dtype=np.float64)
    n, h, w, _ = images.shape
    if policy.crop_scale:
        scale = rng.uniform(policy.crop_scale[0], policy.crop_scale[1], size=n)
        side = scale * min(h, w)
        top = rng.uniform(0, 1, size=n) * (h - side)
        left = rng.uniform(0, 1, size=n) * (w - side)
        images = crop_resize(images, np.stack([top, left, side], axis=1))
    if policy.blur:
        images = gaussian_blur(images, policy.blur_kernel, policy.blur_sigma)
    if policy.contrast:
        images = adjust_contrast(images, rng.uniform(*policy.contrast, size=n))
    if policy.saturation:
        images = adjust_saturation(images, rng.uniform(*policy.saturation, size=n))
    return np.clip(images, 0.0, 1.0).astype(np.float32)


def apply(policy, image, seed):
    """Augment a single H x W x C image; a pure function of its arguments."""
    rng = np.random.default_rng(seed)
    return apply_batch(policy, np.asarray(image)[None], rng)[0]
