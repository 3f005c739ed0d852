"""Stage-by-stage orchestration of the grading pipeline over a run directory.

Every stage reads its inputs from disk and writes its outputs back, so any
stage can be rerun on its own once its prerequisites exist.
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd

from core.errors import StageDependencyError, DataError
from core.event_logger import RunLogger
from core.explain import cam, cam_postprocess, activation_maximization
from core.folds import FoldAssignment, make_folds, split_patches
from core.fsconv import (build_fsconv, train_grader, build_cribriform, train_cribriform, predict_patches,
                         predict_cribriform, freeze_depth_sweep, compare_top_models, cross_validate_freeze)
from core.grades import Grade, GleasonScore, SCORE_CATEGORIES
from core.metrics import (classification_report, quadratic_kappa, kappa_from_labels, confusion_matrix, roc_auc,
                          mann_whitney_auc, binary_report, write_metrics, write_confusion)
from core.reconstruct import (PatchPrediction, probability_map, argmax_map, grade_percentages, class_raster_image,
                              save_percentages, load_percentages)
from core.scorer import ScorerModel, ScorerSample, threshold_score, train_scorer, mlp_score, leave_one_out
from core.serialization import save_model, load_model
from core.slide_io import SlideLoader, read_mask, read_rgb, write_mask, write_rgb
from core.stain_norm import histogram_match
from core.synth import synth
from core.tiler import tile_slide, save_patches, load_patches, MANIFEST_FILE
from core.tissue import tissue_mask
from ui.overlay import Overlay
from utils.stage_timer import StageTimer

STAGE_VERSIONS = {
    "tile": 1,
    "train-grader": 1,
    "train-cribriform": 1,
    "predict": 1,
    "reconstruct": 1,
    "percentages": 1,
    "train-scorer": 1,
    "score": 1,
    "evaluate": 1,
    "explain-cam": 1,
    "explain-am": 1,
    "cross-validate": 1,
}

PIPELINE_ORDER = ("tile", "train-grader", "train-cribriform", "predict", "reconstruct", "percentages",
                  "train-scorer", "score", "evaluate", "explain-cam", "explain-am")
# run on demand, outside run-all
EXTRA_STAGES = ("cross-validate",)

GRADE_NAMES = [g.name for g in Grade]


def _write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True))
    return path


def _read_json(path):
    return json.loads(Path(path).read_text())


class Pipeline:
    def __init__(self, config, echo=True):
        self.config = config
        self.run_dir = Path(config["run_dir"])
        self.slides_dir = Path(config["slides_dir"])
        self.logger = RunLogger(str(self.run_dir), echo=echo)
        self.timer = StageTimer()
        self.overlay = Overlay()

    # ---- paths ----

    @property
    def patches_dir(self):
        return self.run_dir / "patches"

    @property
    def models_dir(self):
        return self.run_dir / "models"

    @property
    def predictions_dir(self):
        return self.run_dir / "predictions"

    @property
    def slide_outputs_dir(self):
        return self.run_dir / "slides"

    @property
    def scores_dir(self):
        return self.run_dir / "scores"

    @property
    def explain_dir(self):
        return self.run_dir / "explain"

    def _require(self, stage, *paths):
        for path in paths:
            if not Path(path).exists():
                raise StageDependencyError(stage, str(path))

    def _slides(self, stage):
        self._require(stage, self.slides_dir)
        return SlideLoader(self.slides_dir)

    def _record(self, stage, outputs):
        manifest_path = self.run_dir / "manifest.json"
        manifest = _read_json(manifest_path) if manifest_path.exists() else {"stages": {}}
        manifest["stages"][stage] = {"version": STAGE_VERSIONS[stage], "seed": self.config["seed"],
                                     "outputs": sorted(str(Path(p).relative_to(self.run_dir)) for p in outputs)}
        _write_json(manifest_path, manifest)
        _write_json(self.run_dir / "config.json", self.config.config)

    def run_stage(self, stage):
        handlers = {
            "tile": self.tile,
            "train-grader": self.train_grader,
            "train-cribriform": self.train_cribriform,
            "predict": self.predict,
            "reconstruct": self.reconstruct,
            "percentages": self.percentages,
            "train-scorer": self.train_scorer,
            "score": self.score,
            "evaluate": self.evaluate,
            "explain-cam": self.explain_cam,
            "explain-am": self.explain_am,
            "cross-validate": self.cross_validate,
        }
        if stage not in handlers:
            raise DataError(f"unknown stage {stage!r}")
        with self.timer.measure(stage):
            outputs = handlers[stage]()
        self._record(stage, outputs)
        self.logger.log_event(stage, "done", f"done in {self.timer.elapsed(stage):.1f}s",
                              seconds=round(self.timer.elapsed(stage), 3))
        return outputs

    def run_all(self):
        for stage in PIPELINE_ORDER:
            self.run_stage(stage)
        return self.run_dir / "metrics.json"

    # ---- stages ----

    def synth(self):
        spec = self.config.synth_spec()
        slide_ids = synth(spec, self.slides_dir)
        self.logger.log_event("synth", "slides", f"{len(slide_ids)} slides written to {self.slides_dir}",
                              count=len(slide_ids))
        return slide_ids

    def tile(self):
        c = self.config
        patches = []
        for slide in self._slides("tile"):
            patches += tile_slide(slide, c["patch_size"], c["overlap"], c["min_tissue"], output_side=c["input_side"])
        if not patches:
            raise DataError("tiling produced no labelled patches")
        folds = make_folds(patches, c["n_folds"], c["seed"])
        folds.apply(patches)
        save_patches(patches, self.patches_dir)
        folds.save(self.patches_dir / "folds.json")
        counts = {g.name: sum(1 for p in patches if p.label is g) for g in Grade}
        self.logger.log_event("tile", "patches", f"{len(patches)} patches {counts}", counts=counts)
        return [self.patches_dir / MANIFEST_FILE, self.patches_dir / "pixels.npy", self.patches_dir / "folds.json"]

    def _load_split(self, stage):
        self._require(stage, self.patches_dir / MANIFEST_FILE, self.patches_dir / "folds.json")
        patches = load_patches(self.patches_dir)
        folds = FoldAssignment.load(self.patches_dir / "folds.json")
        folds.apply(patches)
        test_fold = self.config["test_fold"]
        train_folds = [f for f in range(folds.n_folds) if f != test_fold]
        train, test = split_patches(patches, train_folds, [test_fold])
        return train, test

    def _grader(self, stage):
        path = self.models_dir / "grader.fscv"
        self._require(stage, path)
        return load_model(path)

    def train_grader(self):
        c = self.config
        train, _ = self._load_split("train-grader")
        net = build_fsconv(c["top_model"], input_side=c["input_side"], filters=tuple(c["filters"]),
                           fc_units=c["fc_units"], dropout=c["dropout"], seed=c["seed"])
        result = train_grader(net, train, None, c.grader_train_config(),
                              progress=self.logger.epoch_callback("train-grader", c["log_every"]))
        model_path = save_model(result.network, self.models_dir / "grader.fscv")
        history_path = self.models_dir / "grader_history.csv"
        result.history_frame().to_csv(history_path, index=False)
        self.logger.log_event("train-grader", "trained", f"final loss {result.final_loss:.4f}",
                              class_weights=result.class_weights.tolist(), patches=len(train))
        return [model_path, history_path]

    def train_cribriform(self):
        c = self.config
        train, test = self._load_split("train-cribriform")
        grader = self._grader("train-cribriform")
        train_gg4 = [p for p in train if p.label is Grade.GG4]
        net = build_cribriform(grader, c["cribriform_freeze"])
        result = train_cribriform(net, train_gg4, c.cribriform_train_config(),
                                  progress=self.logger.epoch_callback("train-cribriform", c["log_every"]))
        model_path = save_model(result.network, self.models_dir / "cribriform.fscv")
        history_path = self.models_dir / "cribriform_history.csv"
        result.history_frame().to_csv(history_path, index=False)
        outputs = [model_path, history_path]
        test_gg4 = [p for p in test if p.label is Grade.GG4]
        if c["freeze_sweep"] and len({p.cribriform for p in test_gg4}) == 2:
            sweep = freeze_depth_sweep(grader, train_gg4, test_gg4, c.cribriform_train_config())
            outputs.append(_write_json(self.models_dir / "freeze_sweep.json", sweep))
        self.logger.log_event("train-cribriform", "trained", f"final loss {result.final_loss:.4f}",
                              patches=len(train_gg4))
        return outputs

    def predict(self):
        c = self.config
        grader = self._grader("predict")
        cribriform_path = self.models_dir / "cribriform.fscv"
        detector = load_model(cribriform_path) if cribriform_path.exists() else None
        outputs = []
        for slide in self._slides("predict"):
            tissue = tissue_mask(slide.image)
            windows = tile_slide(slide, c["patch_size"], c["overlap"], c["min_tissue"],
                                 output_side=c["input_side"], tissue=tissue, keep_all=True)
            pixels = np.stack([w.pixels for w in windows])
            probabilities = predict_patches(grader, pixels)
            cribriform = [None] * len(windows)
            if detector is not None:
                gg4 = np.flatnonzero(probabilities.argmax(axis=1) == Grade.GG4)
                if gg4.size:
                    for i, p in zip(gg4, predict_cribriform(detector, pixels[gg4])):
                        cribriform[i] = round(float(p), 8)
            record = {
                "slide_id": slide.slide_id,
                "shape": list(slide.shape),
                "centers": [list(map(int, w.center)) for w in windows],
                "tissue_fraction": [round(w.tissue_fraction, 6) for w in windows],
                "probabilities": np.round(probabilities, 8).tolist(),
                "cribriform": cribriform,
            }
            outputs.append(_write_json(self.predictions_dir / f"{slide.slide_id}.json", record))
        self.logger.log_event("predict", "slides", f"predicted {len(outputs)} slides")
        return outputs

    def reconstruct(self):
        self._require("reconstruct", self.predictions_dir)
        outputs = []
        for slide in self._slides("reconstruct"):
            pred_path = self.predictions_dir / f"{slide.slide_id}.json"
            self._require("reconstruct", pred_path)
            record = _read_json(pred_path)
            predictions = [PatchPrediction(tuple(center), np.asarray(probs))
                           for center, probs in zip(record["centers"], record["probabilities"])]
            tissue = tissue_mask(slide.image)
            pmap = probability_map(predictions, slide.shape, tissue)
            classes = argmax_map(pmap)
            out_dir = self.slide_outputs_dir / slide.slide_id
            for grade in Grade:
                path = out_dir / f"probmap_{grade.name}.png"
                write_mask(path, np.rint(pmap.probabilities[grade.value] * 255))
                heat_path = out_dir / f"probmap_overlay_{grade.name}.png"
                write_rgb(heat_path, self.overlay.draw_probability(slide.image, pmap.probabilities[grade.value], tissue))
                outputs += [path, heat_path]
            classmap_path = out_dir / "classmap.png"
            write_mask(classmap_path, class_raster_image(classes, tissue))
            overlay_path = out_dir / "classmap_overlay.png"
            write_rgb(overlay_path, self.overlay.draw_classmap(slide.image, classes, tissue))
            outputs += [classmap_path, overlay_path]
        self.logger.log_event("reconstruct", "maps", f"reconstructed {len(outputs) // 10} slides")
        return outputs

    def percentages(self):
        outputs = []
        for slide_id in self._slides("percentages").slide_ids:
            classmap_path = self.slide_outputs_dir / slide_id / "classmap.png"
            self._require("percentages", classmap_path)
            classmap = read_mask(classmap_path)
            result = grade_percentages(classmap, classmap != 255)
            outputs.append(save_percentages(result, self.slide_outputs_dir / slide_id / "percentages.json"))
        self.logger.log_event("percentages", "slides", f"grade percentages for {len(outputs)} slides")
        return outputs

    def _samples(self, stage):
        samples, slide_ids = [], []
        for slide in self._slides(stage):
            path = self.slide_outputs_dir / slide.slide_id / "percentages.json"
            self._require(stage, path)
            if slide.score is None:
                continue
            samples.append(ScorerSample(load_percentages(path), slide.score))
            slide_ids.append(slide.slide_id)
        return slide_ids, samples

    def train_scorer(self):
        slide_ids, samples = self._samples("train-scorer")
        scorer_config = self.config.scorer_config()
        model = train_scorer(samples, scorer_config)
        model.save(self.models_dir)
        loo = leave_one_out(samples, scorer_config)
        loo_path = _write_json(self.models_dir / "scorer_loo.json",
                               {sid: score.to_dict() for sid, score in zip(slide_ids, loo)})
        self.logger.log_event("train-scorer", "trained", f"scorer trained on {len(samples)} slides")
        return [self.models_dir / name for name in ScorerModel.FILES.values()] + [loo_path]

    def score(self):
        for name in ScorerModel.FILES.values():
            self._require("score", self.models_dir / name)
        model = ScorerModel.load(self.models_dir)
        outputs = []
        for slide_id in self._slides("score").slide_ids:
            path = self.slide_outputs_dir / slide_id / "percentages.json"
            self._require("score", path)
            percentages = load_percentages(path)
            for method, result in (("threshold", threshold_score(percentages, self.config["score_threshold"])),
                                   ("mlp", mlp_score(model, percentages))):
                report = {"slide_id": slide_id, "method": method, **result.to_dict(),
                          "percentages": percentages.to_dict()}
                outputs.append(_write_json(self.scores_dir / f"{slide_id}_{method}.json", report))
        self.logger.log_event("score", "slides", f"{len(outputs)} score reports")
        return outputs

    def evaluate(self):
        _, test = self._load_split("evaluate")
        grader = self._grader("evaluate")
        metrics = {}
        outputs = []

        labelled = [p for p in test if p.label is not None]
        if not labelled:
            raise DataError(f"test fold {self.config['test_fold']} holds no labelled patches")
        probabilities = predict_patches(grader, np.stack([p.pixels for p in labelled]))
        references = [int(p.label) for p in labelled]
        predictions = probabilities.argmax(axis=1).tolist()
        report = classification_report(references, predictions, len(Grade), GRADE_NAMES)
        metrics["patch"] = {
            "accuracy": report["accuracy"],
            "macro_f1": report["macro_f1"],
            "kappa": quadratic_kappa(report["confusion"]),
            "per_class": report["per_class"],
            "patches": len(labelled),
        }
        outputs.append(write_confusion(report["confusion"], GRADE_NAMES, self.run_dir / "confusion.csv"))

        cribriform_path = self.models_dir / "cribriform.fscv"
        test_gg4 = [p for p in labelled if p.label is Grade.GG4]
        if cribriform_path.exists() and len({p.cribriform for p in test_gg4}) == 2:
            detector = load_model(cribriform_path)
            scores = predict_cribriform(detector, np.stack([p.pixels for p in test_gg4]))
            labels = np.array([p.cribriform for p in test_gg4])
            curve = roc_auc(scores, labels)
            curve.frame().to_csv(self.run_dir / "roc.csv", index=False)
            outputs.append(self.run_dir / "roc.csv")
            metrics["cribriform"] = {"auc": curve.auc, "auc_rank": mann_whitney_auc(scores, labels),
                                     **binary_report(scores, labels, self.config["decision_threshold"]),
                                     "patches": len(test_gg4)}
        else:
            self.logger.log_event("evaluate", "skip", "cribriform evaluation skipped: needs a detector and "
                                                      "both classes among test-fold GG4 patches")

        metrics["slide"] = self._slide_metrics()
        outputs.append(write_metrics(metrics, self.run_dir / "metrics.json"))
        self.logger.log_event("evaluate", "metrics", f"patch accuracy {metrics['patch']['accuracy']:.3f} "
                                                     f"kappa {metrics['patch']['kappa']:.3f}")
        return outputs

    def _slide_metrics(self):
        loo_path = self.models_dir / "scorer_loo.json"
        self._require("evaluate", loo_path)
        loo = _read_json(loo_path)
        truth, by_method = [], {"threshold": [], "mlp_loo": []}
        for slide in self._slides("evaluate"):
            if slide.score is None or slide.slide_id not in loo:
                continue
            report_path = self.scores_dir / f"{slide.slide_id}_threshold.json"
            self._require("evaluate", report_path)
            truth.append(slide.score.combined)
            by_method["threshold"].append(_read_json(report_path)["combined"])
            by_method["mlp_loo"].append(GleasonScore.from_dict(loo[slide.slide_id]).combined)
        results = {"slides": len(truth)}
        categories = list(SCORE_CATEGORIES)
        for method, predicted in by_method.items():
            cm = confusion_matrix([categories.index(v) for v in truth], [categories.index(v) for v in predicted],
                                  len(categories))
            frame_path = self.run_dir / f"slide_confusion_{method}.csv"
            write_confusion(cm, [str(v) for v in categories], frame_path)
            results[method] = {"kappa": kappa_from_labels(truth, predicted, categories),
                               "accuracy": float(np.mean(np.asarray(truth) == np.asarray(predicted)))}
        return results

    def explain_cam(self):
        train, test = self._load_split("explain-cam")
        grader = self._grader("explain-cam")
        outputs = []
        for grade in Grade:
            candidates = [p for p in test if p.label is grade] or [p for p in train if p.label is grade]
            if not candidates:
                continue
            patch = candidates[0]
            heat = cam_postprocess(cam(grader, patch.pixels, grade.value), patch.pixels.shape)
            heat_path = self.explain_dir / f"cam_{grade.name}.png"
            mask_path = self.explain_dir / f"cam_mask_{grade.name}.png"
            overlay_path = self.explain_dir / f"cam_overlay_{grade.name}.png"
            write_rgb(heat_path, self.overlay.heatmap(heat.heatmap))
            write_mask(mask_path, heat.mask.astype(np.uint8) * 255)
            write_rgb(overlay_path, self.overlay.draw_cam(patch.pixels, heat.heatmap, heat.mask))
            outputs += [heat_path, mask_path, overlay_path]
        self.logger.log_event("explain-cam", "maps", f"{len(outputs) // 3} class activation maps",
                              top=grader.metadata.get("top"))
        return outputs

    def explain_am(self):
        c = self.config
        grader = self._grader("explain-am")
        layer = c["am_layer"]
        try:
            index = grader.index_of(layer)
        except KeyError as exc:
            raise DataError(str(exc)) from None
        channels = grader.output_shapes()[index][-1]
        rows, outputs = [], []
        for filter_index in [f for f in c["am_filters"] if f < channels]:
            result = activation_maximization(grader, index, filter_index, c["am_steps"], c["am_step_size"], c["seed"])
            path = self.explain_dir / f"am_layer{index}_filter{filter_index}.png"
            write_rgb(path, np.rint(result.image * 255))
            outputs.append(path)
            rows.append({"layer": layer, "filter": filter_index, "step": 0, "loss": result.initial_loss})
            rows += [{"layer": layer, "filter": filter_index, "step": k + 1, "loss": v}
                     for k, v in enumerate(result.trace)]
        trace_path = self.explain_dir / "am_trace.csv"
        trace_path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(rows, columns=["layer", "filter", "step", "loss"]).to_csv(trace_path, index=False)
        outputs.append(trace_path)
        self.logger.log_event("explain-am", "images", f"{len(outputs) - 1} activation maximisation images")
        return outputs

    def cross_validate(self):
        c = self.config
        self._require("cross-validate", self.patches_dir / MANIFEST_FILE, self.patches_dir / "folds.json")
        grader = self._grader("cross-validate") if c["cv_freeze"] else None
        patches = load_patches(self.patches_dir)
        folds = FoldAssignment.load(self.patches_dir / "folds.json")
        frame = compare_top_models(patches, folds, c.grader_train_config(), c["cv_tops"], c["test_fold"], c["seed"],
                                   filters=tuple(c["filters"]), fc_units=c["fc_units"], dropout=c["dropout"])
        self.models_dir.mkdir(parents=True, exist_ok=True)
        grader_path = self.models_dir / "cv_grader.csv"
        frame.to_csv(grader_path, index=False)
        outputs = [grader_path]
        for _, row in frame[frame["fold"] == "mean"].iterrows():
            self.logger.log_event("cross-validate", "top", f"{row['top']} accuracy {row['accuracy']:.3f} "
                                                           f"kappa {row['kappa']:.3f}")

        if grader is not None:
            gg4 = [p for p in patches if p.label is Grade.GG4 and p.fold != c["test_fold"]]
            sweep = cross_validate_freeze(grader, gg4, folds, c.cribriform_train_config(), test_fold=c["test_fold"])
            freeze_path = self.models_dir / "cv_freeze.csv"
            sweep.to_csv(freeze_path, index=False)
            outputs.append(freeze_path)
            for _, row in sweep[sweep["fold"] == "mean"].iterrows():
                self.logger.log_event("cross-validate", "freeze", f"{row['freeze']} auc {row['auc']:.3f}")
        return outputs


def stain_normalize(source_path, reference_path, output_path):
    """Histogram-match an external RGB image to a reference image."""
    for path in (source_path, reference_path):
        if not Path(path).exists():
            raise StageDependencyError("stain-norm", str(path))
    result = histogram_match(read_rgb(source_path), read_rgb(reference_path))
    write_rgb(output_path, result)
    return Path(output_path)
