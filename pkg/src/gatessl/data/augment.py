"""Two-view stochastic augmentation.

Each view is random-resized-crop, colour jitter, grayscale, Gaussian blur and
horizontal flip, in that order, applied to a float image [3, S, S] in [0, 1].
All randomness comes from the generator passed in, so a view pair is a pure
function of (image, config, seed).
"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence, Tuple

import numpy as np

from ..models.config import AugmentationConfig

LUMA = np.array([0.299, 0.587, 0.114])
CROP_ATTEMPTS = 10


def _luma(img: np.ndarray) -> np.ndarray:
    return np.tensordot(LUMA.astype(img.dtype), img, axes=([0], [0]))


def crop_box(
    height: int, width: int, scale: Tuple[float, float], ratio: Tuple[float, float], rng: np.random.Generator
) -> Tuple[int, int, int, int]:
    """Top, left, height, width of a random crop covering ``scale`` of the area."""
    area = height * width
    log_ratio = (math.log(ratio[0]), math.log(ratio[1]))
    for _ in range(CROP_ATTEMPTS):
        target = area * rng.uniform(scale[0], scale[1])
        aspect = math.exp(rng.uniform(log_ratio[0], log_ratio[1]))
        w = int(round(math.sqrt(target * aspect)))
        h = int(round(math.sqrt(target / aspect)))
        if 0 < w <= width and 0 < h <= height:
            top = int(rng.integers(0, height - h + 1))
            left = int(rng.integers(0, width - w + 1))
            return top, left, h, w

    # Fallback: centre crop clamped to the ratio range
    in_ratio = width / height
    if in_ratio < ratio[0]:
        w, h = width, int(round(width / ratio[0]))
    elif in_ratio > ratio[1]:
        h, w = height, int(round(height * ratio[1]))
    else:
        w, h = width, height
    return (height - h) // 2, (width - w) // 2, h, w


def resize_bilinear(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of [C, H, W] with half-pixel centres and edge clamping."""
    _, h, w = img.shape
    if (h, w) == (out_h, out_w):
        return img.copy()

    def axis_weights(size_in: int, size_out: int):
        src = (np.arange(size_out) + 0.5) * (size_in / size_out) - 0.5
        src = np.clip(src, 0.0, size_in - 1)
        lo = np.floor(src).astype(np.int64)
        hi = np.minimum(lo + 1, size_in - 1)
        frac = (src - lo).astype(img.dtype)
        return lo, hi, frac

    y0, y1, fy = axis_weights(h, out_h)
    x0, x1, fx = axis_weights(w, out_w)
    top = img[:, y0, :] * (1 - fy)[None, :, None] + img[:, y1, :] * fy[None, :, None]
    return top[:, :, x0] * (1 - fx)[None, None, :] + top[:, :, x1] * fx[None, None, :]


def random_resized_crop(img: np.ndarray, cfg: AugmentationConfig, rng: np.random.Generator) -> np.ndarray:
    _, h, w = img.shape
    top, left, ch, cw = crop_box(h, w, cfg.crop_scale, cfg.crop_ratio, rng)
    return resize_bilinear(img[:, top:top + ch, left:left + cw], h, w)


def _rgb_to_hsv(img: np.ndarray) -> np.ndarray:
    r, g, b = img
    maxc = img.max(axis=0)
    minc = img.min(axis=0)
    delta = maxc - minc
    safe = np.where(delta > 0, delta, 1)
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1), 0)
    rc, gc, bc = (maxc - r) / safe, (maxc - g) / safe, (maxc - b) / safe
    hue = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    hue = np.where(delta > 0, (hue / 6.0) % 1.0, 0.0)
    return np.stack([hue, s, maxc])


def _hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    h, s, v = hsv
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p, q, t = v * (1 - s), v * (1 - s * f), v * (1 - s * (1 - f))
    i = i.astype(np.int64) % 6
    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return np.stack([r, g, b])


def _jitter_factor(strength: float, rng: np.random.Generator) -> float:
    return float(rng.uniform(max(0.0, 1.0 - strength), 1.0 + strength))


def color_jitter(img: np.ndarray, strengths: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    """Brightness, contrast, saturation and hue adjustments in a random order."""
    brightness, contrast, saturation, hue = strengths
    out = img
    for op in rng.permutation(4):
        if op == 0 and brightness > 0:
            out = np.clip(out * _jitter_factor(brightness, rng), 0.0, 1.0)
        elif op == 1 and contrast > 0:
            factor = _jitter_factor(contrast, rng)
            m = _luma(out).mean()
            out = np.clip((out - m) * factor + m, 0.0, 1.0)
        elif op == 2 and saturation > 0:
            factor = _jitter_factor(saturation, rng)
            gray = _luma(out)[None]
            out = np.clip((out - gray) * factor + gray, 0.0, 1.0)
        elif op == 3 and hue > 0:
            shift = rng.uniform(-hue, hue)
            hsv = _rgb_to_hsv(out)
            hsv[0] = (hsv[0] + shift) % 1.0
            out = np.clip(_hsv_to_rgb(hsv), 0.0, 1.0)
    return out.astype(img.dtype, copy=False)


def grayscale(img: np.ndarray) -> np.ndarray:
    gray = _luma(img)
    return np.broadcast_to(gray, img.shape).copy()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable blur, odd kernel of about a tenth of the side, reflect padding."""
    side = img.shape[-1]
    size = max(3, int(0.1 * side) // 2 * 2 + 1)
    radius = size // 2
    offsets = np.arange(-radius, radius + 1)
    kernel = np.exp(-(offsets ** 2) / (2.0 * sigma ** 2))
    kernel = (kernel / kernel.sum()).astype(img.dtype)

    padded = np.pad(img, ((0, 0), (radius, radius), (0, 0)), mode="reflect")
    rows = sum(kernel[i] * padded[:, i:i + img.shape[1], :] for i in range(size))
    padded = np.pad(rows, ((0, 0), (0, 0), (radius, radius)), mode="reflect")
    return sum(kernel[i] * padded[:, :, i:i + img.shape[2]] for i in range(size))


def augment_view(img: np.ndarray, cfg: AugmentationConfig, rng: np.random.Generator) -> np.ndarray:
    side = img.shape[-1]
    out = random_resized_crop(img, cfg, rng)
    if rng.random() < cfg.jitter_prob:
        out = color_jitter(out, cfg.jitter, rng)
    if rng.random() < cfg.grayscale_prob:
        out = grayscale(out)
    if rng.random() < cfg.resolved_blur_prob(side):
        out = gaussian_blur(out, float(rng.uniform(*cfg.blur_sigma)))
    if rng.random() < cfg.flip_prob:
        out = out[:, :, ::-1]
    return np.ascontiguousarray(np.clip(out, 0.0, 1.0), dtype=img.dtype)


def two_views(img: np.ndarray, cfg: AugmentationConfig, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Two independently augmented views of one anchor image."""
    first = augment_view(img, cfg, rng)
    second = augment_view(img, cfg, rng)
    return first, second


class TwoViewAugmenter:
    """Augments a batch with one RNG stream per (seed, epoch, image index)."""

    def __init__(self, cfg: AugmentationConfig, seed: int, threads: int = 1):
        self.cfg = cfg
        self.seed = seed
        self.threads = max(1, threads)

    def _pair(self, args: Tuple[np.ndarray, int, int]) -> Tuple[np.ndarray, np.ndarray]:
        img, index, epoch = args
        return two_views(img, self.cfg, np.random.default_rng([self.seed, epoch, index]))

    def __call__(self, images: np.ndarray, indices: Sequence[int], epoch: int) -> Tuple[np.ndarray, np.ndarray]:
        jobs = [(images[i], int(index), int(epoch)) for i, index in enumerate(indices)]
        if self.threads == 1:
            pairs = [self._pair(job) for job in jobs]
        else:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                pairs = list(pool.map(self._pair, jobs))
        return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])
