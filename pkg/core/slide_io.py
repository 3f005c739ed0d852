"""Slide bundles on disk: RGB image, annotation raster, cribriform mask and metadata."""

import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from core.errors import DataError
from core.grades import CANCER_GRADES, GleasonScore

IMAGE_FILE = "image.png"
ANNOTATION_FILE = "annotation.png"
CRIBRIFORM_FILE = "cribriform.png"
META_FILE = "meta.json"


@dataclass
class Slide:
    image: np.ndarray
    annotation: np.ndarray
    slide_id: str
    patient_id: str
    score: GleasonScore = None
    cribriform_mask: np.ndarray = None

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise DataError(f"{self.slide_id}: image must be RGB, got shape {self.image.shape}")
        if self.annotation.shape != self.image.shape[:2]:
            raise DataError(f"{self.slide_id}: annotation shape {self.annotation.shape} "
                            f"does not match image {self.image.shape[:2]}")
        if self.cribriform_mask is None:
            self.cribriform_mask = np.zeros(self.annotation.shape, dtype=bool)
        elif self.cribriform_mask.shape != self.annotation.shape:
            raise DataError(f"{self.slide_id}: cribriform mask shape does not match the annotation")
        self.cribriform_mask = self.cribriform_mask.astype(bool)

    @property
    def shape(self):
        return self.image.shape[:2]

    @property
    def is_cancerous(self):
        if self.score is not None:
            return self.score.is_cancerous
        return bool(np.isin(self.annotation, [g.value for g in CANCER_GRADES]).any())


def read_rgb(path):
    image = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if image is None:
        raise DataError(f"could not read image: {path}")
    return cv2.cvtColor(image, cv2.COLOR_BGR2RGB)


def write_rgb(path, image):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), cv2.cvtColor(np.ascontiguousarray(image, dtype=np.uint8), cv2.COLOR_RGB2BGR)):
        raise DataError(f"could not write image: {path}")


def read_mask(path):
    mask = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if mask is None:
        raise DataError(f"could not read mask: {path}")
    return mask


def write_mask(path, mask):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), np.ascontiguousarray(mask, dtype=np.uint8)):
        raise DataError(f"could not write mask: {path}")


def read_slide(bundle_dir):
    bundle_dir = Path(bundle_dir)
    meta_path = bundle_dir / META_FILE
    if not meta_path.exists():
        raise DataError(f"slide bundle {bundle_dir} has no {META_FILE}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{meta_path}: {exc}") from exc
    cribriform = None
    if (bundle_dir / CRIBRIFORM_FILE).exists():
        cribriform = read_mask(bundle_dir / CRIBRIFORM_FILE) > 0
    score = GleasonScore.from_dict(meta["score"]) if meta.get("score") else None
    return Slide(
        image=read_rgb(bundle_dir / IMAGE_FILE),
        annotation=read_mask(bundle_dir / ANNOTATION_FILE),
        slide_id=meta.get("slide_id", bundle_dir.name),
        patient_id=str(meta.get("patient_id", bundle_dir.name)),
        score=score,
        cribriform_mask=cribriform,
    )


def write_slide(slide, root, extra_meta=None):
    bundle_dir = Path(root) / slide.slide_id
    write_rgb(bundle_dir / IMAGE_FILE, slide.image)
    write_mask(bundle_dir / ANNOTATION_FILE, slide.annotation)
    write_mask(bundle_dir / CRIBRIFORM_FILE, slide.cribriform_mask.astype(np.uint8) * 255)
    meta = {"slide_id": slide.slide_id, "patient_id": slide.patient_id,
            "score": slide.score.to_dict() if slide.score else None}
    meta.update(extra_meta or {})
    (bundle_dir / META_FILE).write_text(json.dumps(meta, indent=2))
    return bundle_dir


class SlideLoader:
    """Iterates the slide bundles below ``root`` in sorted order."""

    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            raise DataError(f"slides directory not found: {self.root}")
        self.slide_ids = sorted(p.name for p in self.root.iterdir() if (p / META_FILE).exists())
        if not self.slide_ids:
            raise DataError(f"no slide bundles found in {self.root}")

    def __len__(self):
        return len(self.slide_ids)

    def __iter__(self):
        for slide_id in self.slide_ids:
            yield self.load(slide_id)

    def load(self, slide_id):
        return read_slide(self.root / slide_id)