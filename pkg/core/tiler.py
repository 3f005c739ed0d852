"""Patch extraction from annotated slides."""

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from config import (PATCH_SIZE, PATCH_OVERLAP, MIN_TISSUE_FRACTION, UNANNOTATED,
                    CRIBRIFORM_MIN_FRACTION, NUM_CLASSES)
from core.errors import DataError
from core.grades import Grade
from core.tissue import tissue_mask as compute_tissue_mask

MANIFEST_FILE = "manifest.jsonl"
PIXELS_FILE = "pixels.npy"


@dataclass
class Patch:
    pixels: np.ndarray
    center: tuple
    tissue_fraction: float
    label: Grade
    cribriform: bool
    slide_id: str
    patient_id: str
    fold: int = None
    index: int = field(default=None, compare=False)

    def record(self):
        return {
            "index": self.index,
            "slide_id": self.slide_id,
            "patient_id": self.patient_id,
            "center": [int(self.center[0]), int(self.center[1])],
            "tissue_fraction": round(float(self.tissue_fraction), 6),
            "label": self.label.name if self.label is not None else None,
            "cribriform": bool(self.cribriform),
            "fold": self.fold,
        }


def resize_patch(pixels, side):
    if pixels.shape[0] == side and pixels.shape[1] == side:
        return pixels
    return cv2.resize(pixels, (side, side), interpolation=cv2.INTER_LINEAR)


def grid_starts(length, patch_size, stride):
    return list(range(0, length - patch_size + 1, stride))


def _window_sums(mask, patch_size, rows, cols):
    integral = np.zeros((mask.shape[0] + 1, mask.shape[1] + 1), dtype=np.int64)
    integral[1:, 1:] = np.cumsum(np.cumsum(mask.astype(np.int64), axis=0), axis=1)
    r = np.asarray(rows)[:, None]
    c = np.asarray(cols)[None, :]
    p = patch_size
    return integral[r + p, c + p] - integral[r, c + p] - integral[r + p, c] + integral[r, c]


def assign_label(annotation_window, slide_is_cancerous, cribriform_window=None):
    """Patch label from its annotation window.

    Majority grade among cancer pixels, ties to the higher grade. Without
    cancer pixels the patch is NC on a benign slide and discarded (None) on a
    cancerous one. The cribriform flag needs a GG4 label and cribriform
    pixels covering at least 5% of the annotated pixels.
    """
    annotation_window = np.asarray(annotation_window)
    counts = np.bincount(annotation_window[annotation_window < NUM_CLASSES].ravel(), minlength=NUM_CLASSES)
    cancer = counts[1:]
    if cancer.sum() == 0:
        return (None, False) if slide_is_cancerous else (Grade.NC, False)
    label = Grade(NUM_CLASSES - 1 - int(np.argmax(cancer[::-1])))
    cribriform = False
    if label is Grade.GG4 and cribriform_window is not None:
        annotated = int(counts.sum())
        crib_pixels = int(np.count_nonzero(np.asarray(cribriform_window) & (annotation_window != UNANNOTATED)))
        cribriform = annotated > 0 and crib_pixels >= CRIBRIFORM_MIN_FRACTION * annotated
    return label, bool(cribriform)


def _pad_to(array, height, width, value):
    pad_h = max(height - array.shape[0], 0)
    pad_w = max(width - array.shape[1], 0)
    if not pad_h and not pad_w:
        return array, (0, 0)
    top, left = pad_h // 2, pad_w // 2
    widths = [(top, pad_h - top), (left, pad_w - left)] + [(0, 0)] * (array.ndim - 2)
    return np.pad(array, widths, constant_values=value), (top, left)


def tile_slide(slide, patch_size=PATCH_SIZE, overlap=PATCH_OVERLAP, min_tissue=MIN_TISSUE_FRACTION,
               output_side=None, tissue=None, keep_all=False):
    """Cut ``slide`` into square patches on a regular grid.

    Training mode (default) keeps windows with enough tissue and a label;
    ``keep_all`` keeps every grid window so predictions can be reconstructed.
    """
    if not 0 <= overlap < 1:
        raise DataError(f"overlap must lie in [0, 1), got {overlap}")
    stride = max(1, int(round(patch_size * (1 - overlap))))
    if tissue is None:
        tissue = compute_tissue_mask(slide.image)

    height, width = slide.shape
    image, (top, left) = _pad_to(slide.image, patch_size, patch_size, 0)
    annotation, _ = _pad_to(slide.annotation, patch_size, patch_size, UNANNOTATED)
    cribriform, _ = _pad_to(slide.cribriform_mask, patch_size, patch_size, False)
    tissue, _ = _pad_to(tissue, patch_size, patch_size, False)

    rows = grid_starts(image.shape[0], patch_size, stride)
    cols = grid_starts(image.shape[1], patch_size, stride)
    fractions = _window_sums(tissue, patch_size, rows, cols) / float(patch_size * patch_size)
    cancerous = slide.is_cancerous

    patches = []
    for i, r0 in enumerate(rows):
        for j, c0 in enumerate(cols):
            fraction = float(fractions[i, j])
            if not keep_all and fraction < min_tissue:
                continue
            window = (slice(r0, r0 + patch_size), slice(c0, c0 + patch_size))
            label, crib = assign_label(annotation[window], cancerous, cribriform[window])
            if not keep_all and label is None:
                continue
            pixels = image[window]
            if output_side:
                pixels = resize_patch(pixels, output_side)
            patches.append(Patch(
                pixels=np.ascontiguousarray(pixels),
                center=(r0 + patch_size // 2 - top, c0 + patch_size // 2 - left),
                tissue_fraction=fraction,
                label=label,
                cribriform=crib,
                slide_id=slide.slide_id,
                patient_id=slide.patient_id,
            ))
    return patches


def save_patches(patches, out_dir):
    """Write pixels as one stacked array plus a JSON-lines manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not patches:
        raise DataError("no patches to save")
    np.save(out_dir / PIXELS_FILE, np.stack([p.pixels for p in patches]))
    with open(out_dir / MANIFEST_FILE, "w") as f:
        for i, patch in enumerate(patches):
            patch.index = i
            f.write(json.dumps(patch.record()) + "\n")
    return out_dir


def load_patches(out_dir):
    out_dir = Path(out_dir)
    pixels = np.load(out_dir / PIXELS_FILE)
    patches = []
    with open(out_dir / MANIFEST_FILE) as f:
        for line in f:
            if not line.strip():
                continue
            rec = json.loads(line)
            patches.append(Patch(
                pixels=pixels[rec["index"]],
                center=tuple(rec["center"]),
                tissue_fraction=rec["tissue_fraction"],
                label=Grade[rec["label"]] if rec["label"] else None,
                cribriform=rec["cribriform"],
                slide_id=rec["slide_id"],
                patient_id=rec["patient_id"],
                fold=rec.get("fold"),
                index=rec["index"],
            ))
    if len(patches) != len(pixels):
        raise DataError(f"patch manifest lists {len(patches)} patches but {len(pixels)} pixel arrays exist")
    return patches
