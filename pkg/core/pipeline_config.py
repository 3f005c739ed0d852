"""Pipeline configuration: defaults, JSON file, environment lookup and flag overrides."""

import json
import os

from config import (CONFIG_ENV_VAR, DEFAULT_CONFIG_FILE, DEFAULT_SLIDES_DIR, DEFAULT_RUN_DIR,
                    DESK_PATCH_SIZE, DESK_INPUT_SIDE, DESK_SLIDE_SIDE, PATCH_OVERLAP, MIN_TISSUE_FRACTION,
                    FSCONV_FILTERS, FC_UNITS, DROPOUT_RATE, N_FOLDS, TEST_FOLD,
                    GRADER_LEARNING_RATE, GRADER_BATCH_SIZE, GRADER_EPOCHS,
                    CRIBRIFORM_LEARNING_RATE, CRIBRIFORM_BATCH_SIZE, CRIBRIFORM_EPOCHS, CRIBRIFORM_FREEZE,
                    SCORER_LEARNING_RATE, SCORER_BATCH_SIZE, SCORER_EPOCHS, SCORE_THRESHOLD, DECISION_THRESHOLD,
                    AM_STEPS, AM_STEP_SIZE)
from core.errors import ConfigError
from core.fsconv import TopModel, FreezeDepth, cribriform_config
from core.scorer import ScorerConfig
from core.synth import SynthSpec
from core.trainer import TrainConfig


class PipelineConfig:
    DEFAULT_CONFIG = {
        "slides_dir": DEFAULT_SLIDES_DIR,
        "run_dir": DEFAULT_RUN_DIR,
        "seed": 0,
        "log_every": 10,
        # tiling
        "patch_size": DESK_PATCH_SIZE,
        "overlap": PATCH_OVERLAP,
        "min_tissue": MIN_TISSUE_FRACTION,
        "input_side": DESK_INPUT_SIDE,
        "n_folds": N_FOLDS,
        "test_fold": TEST_FOLD,
        # grader
        "top_model": TopModel.GMP.value,
        "filters": list(FSCONV_FILTERS),
        "fc_units": FC_UNITS,
        "dropout": DROPOUT_RATE,
        "grader_learning_rate": GRADER_LEARNING_RATE,
        "grader_batch_size": GRADER_BATCH_SIZE,
        "grader_epochs": GRADER_EPOCHS,
        "grader_class_weighting": True,
        "augment": True,
        # cribriform
        "cribriform_learning_rate": CRIBRIFORM_LEARNING_RATE,
        "cribriform_batch_size": CRIBRIFORM_BATCH_SIZE,
        "cribriform_epochs": CRIBRIFORM_EPOCHS,
        "cribriform_freeze": CRIBRIFORM_FREEZE,
        "freeze_sweep": False,
        "cv_tops": [TopModel.GMP.value],
        "cv_freeze": False,
        "decision_threshold": DECISION_THRESHOLD,
        # scorer
        "scorer_learning_rate": SCORER_LEARNING_RATE,
        "scorer_batch_size": SCORER_BATCH_SIZE,
        "scorer_epochs": SCORER_EPOCHS,
        "score_threshold": SCORE_THRESHOLD,
        # explain
        "am_layer": "Conv_3",
        "am_filters": [0, 1, 2, 3],
        "am_steps": AM_STEPS,
        "am_step_size": AM_STEP_SIZE,
        # synthetic slides
        "synth_slides_per_score": 2,
        "synth_slide_side": DESK_SLIDE_SIDE,
    }

    def __init__(self, config_path=None, overrides=None):
        self.config_path = config_path
        self.config = self._load_config()
        for key, value in (overrides or {}).items():
            if value is not None:
                self.config[key] = value
        self.validate()

    @classmethod
    def resolve(cls, flag_path=None, overrides=None):
        """--config flag, then the environment variable, then the bundled default file."""
        path = flag_path or os.environ.get(CONFIG_ENV_VAR)
        if path and not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        if not path and os.path.exists(DEFAULT_CONFIG_FILE):
            path = DEFAULT_CONFIG_FILE
        return cls(path, overrides)

    def _load_config(self):
        if not self.config_path:
            return dict(self.DEFAULT_CONFIG)
        try:
            with open(self.config_path, "r") as f:
                loaded = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{self.config_path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{self.config_path}: top level must be an object")
        unknown = sorted(set(loaded) - set(self.DEFAULT_CONFIG))
        if unknown:
            raise ConfigError(f"{self.config_path}: unknown keys {', '.join(unknown)}")
        return {**self.DEFAULT_CONFIG, **loaded}

    def validate(self):
        c = self.config
        try:
            TopModel(c["top_model"])
            for top in c["cv_tops"]:
                TopModel(top)
            FreezeDepth(c["cribriform_freeze"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if len(c["filters"]) != 3 or min(c["filters"]) < 1:
            raise ConfigError("filters must list three positive conv widths")
        if not 0 <= c["test_fold"] < c["n_folds"]:
            raise ConfigError(f"test_fold {c['test_fold']} outside 0..{c['n_folds'] - 1}")
        if c["patch_size"] < 1 or c["input_side"] < 8:
            raise ConfigError("patch_size and input_side must be positive (input_side at least 8)")
        if not 0 <= c["overlap"] < 1 or not 0 <= c["min_tissue"] <= 1:
            raise ConfigError("overlap must lie in [0, 1) and min_tissue in [0, 1]")
        # typed configs raise ConfigError on bad hyperparameters
        self.grader_train_config()
        self.cribriform_train_config()
        self.scorer_config()
        return self

    def save(self, path=None):
        path = path or self.config_path
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.config, f, indent=2, sort_keys=True)

    def get(self, key, default=None):
        return self.config.get(key, default)

    def set(self, key, value):
        if key not in self.DEFAULT_CONFIG:
            raise ConfigError(f"unknown config key {key!r}")
        self.config[key] = value
        self.validate()

    def __getitem__(self, key):
        return self.config[key]

    # ---- typed views ----

    def grader_train_config(self):
        c = self.config
        return TrainConfig(learning_rate=c["grader_learning_rate"], batch_size=c["grader_batch_size"],
                           epochs=c["grader_epochs"], augment=c["augment"],
                           class_weighting=c["grader_class_weighting"], seed=c["seed"])

    def cribriform_train_config(self):
        c = self.config
        return cribriform_config(learning_rate=c["cribriform_learning_rate"], batch_size=c["cribriform_batch_size"],
                                 epochs=c["cribriform_epochs"], augment=c["augment"], seed=c["seed"])

    def scorer_config(self):
        c = self.config
        return ScorerConfig(learning_rate=c["scorer_learning_rate"], batch_size=c["scorer_batch_size"],
                            epochs=c["scorer_epochs"], seed=c["seed"])

    def synth_spec(self):
        return SynthSpec(slides_per_score=self.config["synth_slides_per_score"],
                         slide_side=self.config["synth_slide_side"], seed=self.config["seed"])
