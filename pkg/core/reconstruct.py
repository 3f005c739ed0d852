"""Slide-level probability maps rebuilt from per-patch predictions."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from config import NUM_CLASSES, UNANNOTATED
from core.errors import DataError
from core.grades import Grade, CANCER_GRADES


@dataclass
class PatchPrediction:
    center: tuple
    probabilities: np.ndarray


@dataclass
class ProbabilityMap:
    probabilities: np.ndarray  # (classes, height, width)
    tissue: np.ndarray

    @property
    def shape(self):
        return self.probabilities.shape[1:]


@dataclass
class GradePercentages:
    nc: float
    gg3: float
    gg4: float
    gg5: float

    def as_array(self):
        return np.array([self.nc, self.gg3, self.gg4, self.gg5], dtype=np.float64)

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (NUM_CLASSES,):
            raise DataError(f"expected {NUM_CLASSES} grade fractions, got shape {values.shape}")
        return cls(*(float(v) for v in values))

    def fraction(self, grade):
        return float(self.as_array()[int(grade)])

    def cancer_fractions(self):
        return [(grade, self.fraction(grade)) for grade in CANCER_GRADES]

    def to_dict(self):
        return {g.name: self.fraction(g) for g in Grade}

    @classmethod
    def from_dict(cls, data):
        return cls.from_array([data[g.name] for g in Grade])


def _axis_weights(nodes, length):
    """Lower node index and interpolation weight per pixel, clamped beyond the outer nodes."""
    if len(nodes) == 1:
        return np.zeros(length, dtype=np.int64), np.zeros(length, dtype=np.int64), np.zeros(length)
    position = np.interp(np.arange(length), nodes, np.arange(len(nodes), dtype=np.float64))
    lower = np.minimum(np.floor(position).astype(np.int64), len(nodes) - 2)
    return lower, lower + 1, position - lower


def probability_map(predictions, slide_shape, tissue=None):
    """Bilinear interpolation of patch-centre probabilities over every slide pixel.

    Outside the hull of patch centres the nearest grid edge is held constant;
    every pixel's vector is renormalised to sum to 1.
    """
    if not predictions:
        raise DataError("cannot build a probability map from an empty prediction list")
    height, width = slide_shape
    rows = np.unique([p.center[0] for p in predictions])
    cols = np.unique([p.center[1] for p in predictions])
    num_classes = len(predictions[0].probabilities)
    grid = np.full((rows.size, cols.size, num_classes), np.nan)
    row_index = {int(r): i for i, r in enumerate(rows)}
    col_index = {int(c): j for j, c in enumerate(cols)}
    for p in predictions:
        grid[row_index[int(p.center[0])], col_index[int(p.center[1])]] = p.probabilities
    if np.isnan(grid).any():
        raise DataError("patch predictions do not cover a regular grid")

    r0, r1, tr = _axis_weights(rows, height)
    c0, c1, tc = _axis_weights(cols, width)
    along_rows = (1.0 - tr)[:, None, None] * grid[r0] + tr[:, None, None] * grid[r1]
    full = (1.0 - tc)[None, :, None] * along_rows[:, c0] + tc[None, :, None] * along_rows[:, c1]
    full /= full.sum(axis=2, keepdims=True)
    if tissue is None:
        tissue = np.ones((height, width), dtype=bool)
    return ProbabilityMap(np.ascontiguousarray(full.transpose(2, 0, 1)), np.asarray(tissue, dtype=bool))


def argmax_map(pmap):
    """Most probable class per pixel; ties go to the higher grade."""
    probabilities = pmap.probabilities if isinstance(pmap, ProbabilityMap) else np.asarray(pmap)
    return (probabilities.shape[0] - 1 - np.argmax(probabilities[::-1], axis=0)).astype(np.uint8)


def grade_percentages(class_raster, tissue):
    tissue = np.asarray(tissue, dtype=bool)
    if not tissue.any():
        raise DataError("tissue mask is empty")
    counts = np.bincount(np.asarray(class_raster)[tissue].ravel(), minlength=NUM_CLASSES)[:NUM_CLASSES]
    return GradePercentages.from_array(counts / tissue.sum())


def class_raster_image(class_raster, tissue):
    """Class indices with pixels outside tissue set to 255."""
    out = np.asarray(class_raster, dtype=np.uint8).copy()
    out[~np.asarray(tissue, dtype=bool)] = UNANNOTATED
    return out


def save_percentages(percentages, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(percentages.to_dict(), indent=2))
    return path


def load_percentages(path):
    return GradePercentages.from_dict(json.loads(Path(path).read_text()))
