"""Training-time augmentation: right-angle rotation, translation, brightness."""

import numpy as np

from config import TRANSLATION_FRACTION, BRIGHTNESS_RANGE


def apply_transform(pixels, rotation=0, shift=(0, 0), brightness=1.0):
    """Rotate by ``rotation`` quarter turns, translate with reflect padding, scale brightness.

    Integer images stay in [0, 255]; float images in [0, 1].
    """
    out = np.rot90(pixels, k=int(rotation) % 4, axes=(0, 1))
    dy, dx = int(shift[0]), int(shift[1])
    if dy or dx:
        pad = [(abs(dy), abs(dy)), (abs(dx), abs(dx))] + [(0, 0)] * (out.ndim - 2)
        padded = np.pad(out, pad, mode="reflect")
        r0, c0 = abs(dy) - dy, abs(dx) - dx
        out = padded[r0:r0 + out.shape[0], c0:c0 + out.shape[1]]
    if brightness != 1.0:
        if np.issubdtype(out.dtype, np.integer):
            out = np.clip(np.rint(out.astype(np.float64) * brightness), 0, 255).astype(out.dtype)
        else:
            out = np.clip(out * out.dtype.type(brightness), 0.0, 1.0)
    return np.ascontiguousarray(out)


def random_transform(rng, side, include_brightness=False):
    limit = int(TRANSLATION_FRACTION * side)
    return {
        "rotation": int(rng.integers(4)),
        "shift": tuple(int(v) for v in rng.integers(-limit, limit + 1, size=2)),
        "brightness": float(rng.uniform(*BRIGHTNESS_RANGE)) if include_brightness else 1.0,
    }


def augment(pixels, rng, include_brightness=False):
    return apply_transform(pixels, **random_transform(rng, pixels.shape[0], include_brightness))


def augment_batch(batch, rng, include_brightness=False):
    return np.stack([augment(x, rng, include_brightness) for x in batch])
