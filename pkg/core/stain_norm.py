"""Per-channel histogram matching for stain normalisation."""

import numpy as np

from core.errors import DataError


def match_channel(source, reference):
    """Map each source level to the lowest reference level whose CDF reaches it."""
    src_counts = np.bincount(source.ravel(), minlength=256).astype(np.int64)
    ref_counts = np.bincount(reference.ravel(), minlength=256).astype(np.int64)
    src_cdf = np.cumsum(src_counts)
    ref_cdf = np.cumsum(ref_counts)
    # integer cross-multiplication keeps the comparison exact: cdf_r[u] / N_r >= cdf_s[v] / N_s
    lookup = np.searchsorted(ref_cdf * src_cdf[-1], src_cdf * ref_cdf[-1], side="left")
    lookup = np.minimum(lookup, 255).astype(np.uint8)
    return lookup[source]


def histogram_match(source, reference):
    """Match every channel of ``source`` to the corresponding channel of ``reference``."""
    source = np.asarray(source)
    reference = np.asarray(reference)
    if source.dtype != np.uint8 or reference.dtype != np.uint8:
        raise DataError("histogram matching expects 8-bit images")
    if source.ndim != reference.ndim or source.shape[2:] != reference.shape[2:]:
        raise DataError(f"channel layout differs: {source.shape} vs {reference.shape}")
    if source.ndim == 2:
        return match_channel(source, reference)
    return np.stack([match_channel(source[..., c], reference[..., c]) for c in range(source.shape[2])], axis=-1)
