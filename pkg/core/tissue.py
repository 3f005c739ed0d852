"""Otsu thresholding and tissue/background separation."""

import numpy as np

from core.errors import DegenerateHistogramError, DataError


def grayscale(image):
    """Channel mean rounded to 8-bit levels."""
    image = np.asarray(image)
    if image.ndim != 3:
        raise DataError(f"expected an RGB image, got shape {image.shape}")
    return np.clip(np.rint(image.astype(np.float64).mean(axis=2)), 0, 255).astype(np.uint8)


def otsu_threshold(hist):
    """Level t maximising between-class variance, class 0 being levels <= t.

    Ties resolve to the floor of the mean of the maximising levels.
    """
    counts = np.asarray(hist, dtype=np.float64)
    if counts.ndim != 1 or np.any(counts < 0):
        raise DataError("histogram must be a 1-D array of non-negative counts")
    if np.count_nonzero(counts) < 2:
        raise DegenerateHistogramError("histogram has fewer than two occupied levels")
    levels = np.arange(counts.size, dtype=np.float64)
    n0 = np.cumsum(counts)
    s0 = np.cumsum(counts * levels)
    total, total_sum = n0[-1], s0[-1]
    # proportional to w0 * w1 * (mu1 - mu0)^2; identical splits give identical values
    denom = n0 * (total - n0)
    numer = (n0 * total_sum - s0 * total) ** 2
    variance = np.divide(numer, denom, out=np.zeros_like(numer), where=denom > 0)
    best = np.flatnonzero(variance == variance.max())
    return int(np.floor(best.mean()))


def tissue_mask(image):
    """True where a pixel is tissue: grayscale level at or below the Otsu threshold."""
    gray = grayscale(image)
    threshold = otsu_threshold(np.bincount(gray.ravel(), minlength=256))
    return gray <= threshold
