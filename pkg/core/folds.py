"""Patient-level cross-validation folds with balanced class counts."""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from config import N_FOLDS, NUM_CLASSES
from core.errors import DataError


@dataclass
class FoldAssignment:
    folds: dict
    n_folds: int

    def __getitem__(self, patient_id):
        return self.folds[patient_id]

    def patients_in(self, fold):
        return sorted(pid for pid, f in self.folds.items() if f == fold)

    def apply(self, patches):
        for patch in patches:
            patch.fold = self.folds[patch.patient_id]
        return patches

    def save(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({"n_folds": self.n_folds, "folds": self.folds}, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path):
        data = json.loads(Path(path).read_text())
        return cls({str(k): int(v) for k, v in data["folds"].items()}, int(data["n_folds"]))


def _patient_counts(patches):
    counts = {}
    for patch in patches:
        row = counts.setdefault(patch.patient_id, np.zeros(NUM_CLASSES, dtype=np.int64))
        if patch.label is not None:
            row[int(patch.label)] += 1
    return counts


def make_folds(patches, n_folds=N_FOLDS, seed=0):
    """Assign whole patients to folds, greedily balancing per-class patch counts.

    Patients are visited largest first (seeded shuffle breaks size ties) and
    each goes to the fold whose worst per-class load, relative to its even
    share, stays lowest.
    """
    counts = _patient_counts(patches)
    if len(counts) < n_folds:
        raise DataError(f"{len(counts)} patients cannot fill {n_folds} folds")
    rng = np.random.default_rng(seed)
    patients = [sorted(counts)[i] for i in rng.permutation(len(counts))]
    patients.sort(key=lambda pid: -int(counts[pid].sum()))

    share = np.maximum(sum(counts.values()) / n_folds, 1e-9)
    loads = np.zeros((n_folds, NUM_CLASSES), dtype=np.int64)
    assignment = {}
    for pid in patients:
        best = min(range(n_folds),
                   key=lambda f: (float(((loads[f] + counts[pid]) / share).max()), int(loads[f].sum()), f))
        loads[best] += counts[pid]
        assignment[pid] = best
    return FoldAssignment(assignment, n_folds)


def split_patches(patches, train_folds, holdout_folds=()):
    """Partition patches by fold and refuse any patient appearing on both sides."""
    train_folds, holdout_folds = set(train_folds), set(holdout_folds)
    if train_folds & holdout_folds:
        raise DataError(f"folds {sorted(train_folds & holdout_folds)} are both training and held out")
    train = [p for p in patches if p.fold in train_folds]
    holdout = [p for p in patches if p.fold in holdout_folds]
    shared = {p.patient_id for p in train} & {p.patient_id for p in holdout}
    if shared:
        raise DataError(f"patients {sorted(shared)} appear in both training and held-out patches")
    return train, holdout
