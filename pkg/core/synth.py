"""Synthetic annotated slides with one procedural texture per grade."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from config import DESK_SLIDE_SIDE, UNANNOTATED
from core.errors import ConfigError
from core.grades import Grade, GleasonScore
from core.slide_io import Slide, write_slide

BACKGROUND = (244, 242, 246)


@dataclass(frozen=True)
class Texture:
    color: tuple
    period: float
    contrast: float
    noise: float


# distinct colour and dominant period per class; products of sines look alike under right-angle rotation
TEXTURES = {
    "NC": Texture((226, 168, 200), 32.0, 0.25, 4.0),
    "GG3": Texture((186, 112, 172), 16.0, 0.35, 5.0),
    "GG4": Texture((146, 84, 162), 8.0, 0.40, 6.0),
    "GG5": Texture((104, 52, 134), 4.0, 0.45, 8.0),
}
LUMEN_COLOR = (250, 246, 250)
LUMEN_SPACING = 12
LUMEN_RADIUS = 3

DEFAULT_SCORES = ((0, 0), (3, 3), (3, 4), (4, 3), (4, 4), (4, 5), (5, 4), (5, 5))


@dataclass
class SynthSpec:
    slides_per_score: int = 2
    slide_side: int = DESK_SLIDE_SIDE
    scores: tuple = DEFAULT_SCORES
    primary_share: float = 0.6
    margin_fraction: float = 0.08
    # NC windows touching cancer are dropped at tiling, so a benign strip is under-counted
    benign_fraction: float = 0.0
    seed: int = 0
    textures: dict = field(default_factory=lambda: dict(TEXTURES))

    def __post_init__(self):
        if self.slides_per_score < 1 or not self.scores:
            raise ConfigError("synthetic spec generates no slides")
        if self.slide_side < 32:
            raise ConfigError(f"slide side {self.slide_side} is too small")
        if not 0.5 <= self.primary_share < 1.0:
            raise ConfigError("primary share must lie in [0.5, 1)")
        if not 0.0 <= self.benign_fraction < 1.0:
            raise ConfigError("benign fraction must lie in [0, 1)")


def paint_texture(texture, shape, rng):
    """RGB float image of ``texture`` filling ``shape`` (rows, cols)."""
    rows, cols = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    phase = rng.uniform(0, 2 * np.pi, size=2)
    wave = np.sin(2 * np.pi * rows / texture.period + phase[0]) * np.sin(2 * np.pi * cols / texture.period + phase[1])
    shade = 1.0 - texture.contrast * 0.5 * (1.0 + wave)
    image = shade[..., None] * np.asarray(texture.color, dtype=np.float64)
    return image + rng.normal(0.0, texture.noise, size=image.shape)


def add_lumina(image, region, rng):
    """Punch a lattice of bright round lumina into ``image`` inside ``region``."""
    rows, cols = np.mgrid[0:image.shape[0], 0:image.shape[1]]
    offset = rng.integers(0, LUMEN_SPACING, size=2)
    dr = (rows - offset[0]) % LUMEN_SPACING - LUMEN_SPACING // 2
    dc = (cols - offset[1]) % LUMEN_SPACING - LUMEN_SPACING // 2
    holes = (dr ** 2 + dc ** 2 <= LUMEN_RADIUS ** 2) & region
    image[holes] = LUMEN_COLOR
    return image


def tissue_region(side, margin_fraction, rng):
    """Rounded, slightly irregular tissue blob inside the slide margins."""
    margin = int(side * margin_fraction)
    region = np.zeros((side, side))
    region[margin:side - margin, margin:side - margin] = 1.0
    wobble = gaussian_filter(rng.normal(0.0, 1.0, size=(side, side)), sigma=side / 16)
    wobble /= max(np.abs(wobble).max(), 1e-9)
    return gaussian_filter(region, sigma=side / 64) + 0.15 * wobble > 0.5


def generate_slide(score, index, spec):
    """One slide with vertical grade bands: optional benign strip, primary band, secondary band."""
    primary, secondary = (Grade.from_number(n) if n else Grade.NC for n in score)
    gleason = GleasonScore.from_grades(primary, secondary)
    rng = np.random.default_rng([spec.seed, index])
    side = spec.slide_side
    tissue = tissue_region(side, spec.margin_fraction, rng)

    labels = np.zeros((side, side), dtype=np.uint8)
    cribriform = np.zeros((side, side), dtype=bool)
    if gleason.is_cancerous:
        margin = int(side * spec.margin_fraction)
        benign_end = margin + int((side - 2 * margin) * spec.benign_fraction) if spec.benign_fraction else 0
        start = max(benign_end, margin)
        width = side - margin - start
        split = start + int(round(width * (spec.primary_share if secondary != primary else 1.0)))
        labels[:, benign_end:split] = gleason.primary.value
        labels[:, split:] = gleason.secondary.value
        gg4_cols = np.flatnonzero((labels == Grade.GG4.value).any(axis=0))
        if gg4_cols.size:
            cribriform[:side // 2, gg4_cols.min():gg4_cols.max() + 1] = True
    cribriform &= tissue

    image = np.empty((side, side, 3))
    image[:] = BACKGROUND
    image += rng.normal(0.0, 2.0, size=image.shape)
    for grade in Grade:
        region = tissue & (labels == grade.value)
        if region.any():
            image[region] = paint_texture(spec.textures[grade.name], (side, side), rng)[region]
    if cribriform.any():
        image = add_lumina(image, cribriform, rng)

    annotation = np.where(tissue, labels, UNANNOTATED).astype(np.uint8)
    slide_id = f"slide_{index:03d}_{score[0]}{score[1]}"
    slide = Slide(image=np.clip(np.rint(image), 0, 255).astype(np.uint8), annotation=annotation,
                  slide_id=slide_id, patient_id=f"patient_{index:03d}", score=gleason, cribriform_mask=cribriform)
    areas = {g.name: int(np.count_nonzero(annotation == g.value)) for g in Grade}
    areas["cribriform"] = int(np.count_nonzero(cribriform))
    return slide, areas


def synth(spec, out_dir):
    """Write ``spec.slides_per_score`` bundles for every score in ``spec.scores``; returns their ids."""
    out_dir = Path(out_dir)
    slide_ids = []
    index = 0
    for score in spec.scores:
        for _ in range(spec.slides_per_score):
            slide, areas = generate_slide(tuple(score), index, spec)
            write_slide(slide, out_dir, {"declared_areas": areas, "synthetic_seed": spec.seed})
            slide_ids.append(slide.slide_id)
            index += 1
    return slide_ids
