import numpy as np
import pytest

from core.fsconv import build_fsconv
from core.grades import Grade, GleasonScore
from core.slide_io import Slide
from core.synth import TEXTURES, add_lumina, paint_texture
from core.tiler import Patch

SMALL_FILTERS = (4, 8, 8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_grader():
    return build_fsconv("GMP", input_side=16, filters=SMALL_FILTERS, seed=3)


@pytest.fixture
def texture_patches():
    """Factory: ``n`` labelled texture patches per grade, spread over ``patients`` patients."""
    def make(n=6, side=16, patients=2, seed=0, grades=tuple(Grade)):
        rng = np.random.default_rng(seed)
        patches = []
        for grade in grades:
            for i in range(n):
                image = paint_texture(TEXTURES[grade.name], (side, side), rng)
                pixels = np.clip(np.rint(image), 0, 255).astype(np.uint8)
                pid = f"p{i % patients}"
                patches.append(Patch(pixels=pixels, center=(side // 2, side // 2), tissue_fraction=1.0,
                                     label=grade, cribriform=bool(grade is Grade.GG4 and i % 2 == 0),
                                     slide_id=f"s{i % patients}", patient_id=pid, fold=i % patients))
        return patches
    return make


@pytest.fixture
def striped_slide():
    """64x96 slide: white background band, then GG3 and GG4 annotated tissue."""
    image = np.full((64, 96, 3), 240, dtype=np.uint8)
    image[:, 32:] = 90
    annotation = np.full((64, 96), 255, dtype=np.uint8)
    annotation[:, 32:64] = Grade.GG3.value
    annotation[:, 64:] = Grade.GG4.value
    cribriform = np.zeros((64, 96), dtype=bool)
    cribriform[:32, 64:] = True
    return Slide(image=image, annotation=annotation, slide_id="striped", patient_id="pt",
                 score=GleasonScore.from_grades(Grade.GG3, Grade.GG4), cribriform_mask=cribriform)


@pytest.fixture
def cribriform_patches():
    """Factory: GG4 texture patches, every other one per patient carrying a lumina lattice."""
    def make(n=8, side=16, patients=2, seed=0):
        rng = np.random.default_rng(seed)
        patches = []
        for i in range(n):
            cribriform = (i // patients) % 2 == 0
            image = paint_texture(TEXTURES["GG4"], (side, side), rng)
            if cribriform:
                image = add_lumina(image, np.ones((side, side), dtype=bool), rng)
            pixels = np.clip(np.rint(image), 0, 255).astype(np.uint8)
            patches.append(Patch(pixels=pixels, center=(side // 2, side // 2), tissue_fraction=1.0,
                                 label=Grade.GG4, cribriform=cribriform, slide_id=f"s{i % patients}",
                                 patient_id=f"p{i % patients}", fold=i % patients))
        return patches
    return make
