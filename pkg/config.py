"""Configuration constants for the Gleason grading pipeline."""

# Slide geometry (working resolution is the 10x equivalent)
PATCH_SIZE = 512
PATCH_OVERLAP = 0.5
MIN_TISSUE_FRACTION = 0.2
INPUT_SIDE = 224

# Desk-scale geometry used by the synthetic path
DESK_PATCH_SIZE = 128
DESK_INPUT_SIDE = 64
DESK_SLIDE_SIDE = 512

# Labels
NUM_CLASSES = 4
UNANNOTATED = 255
CRIBRIFORM_MIN_FRACTION = 0.05

# FSConv base model widths. 128 on Conv_2 gives 630,276 trainable
# parameters with the GMP top; the 124-wide variant is kept selectable.
FSCONV_FILTERS = (32, 128, 512)
FSCONV_NARROW_FILTERS = (32, 124, 512)
FC_UNITS = 256
DROPOUT_RATE = 0.5

# Grader training
GRADER_LEARNING_RATE = 0.01
GRADER_BATCH_SIZE = 32
GRADER_EPOCHS = 200

# Cribriform fine-tuning
CRIBRIFORM_LEARNING_RATE = 0.001
CRIBRIFORM_BATCH_SIZE = 32
CRIBRIFORM_EPOCHS = 200
CRIBRIFORM_FREEZE = "conv2"
DECISION_THRESHOLD = 0.5

# Slide scorer
SCORER_HIDDEN = (16, 8)
SCORER_LEARNING_RATE = 0.01
SCORER_EPOCHS = 2000
SCORER_BATCH_SIZE = 32
SCORE_THRESHOLD = 0.10

# Augmentation
TRANSLATION_FRACTION = 0.10
BRIGHTNESS_RANGE = (0.9, 1.1)

# Optimisers
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# Numerics
LOG_FLOOR = 1e-12
GRADCHECK_EPSILON = 1e-6
GRADCHECK_SAMPLES = 100
GRADCHECK_THRESHOLD = 1e-4
GRADCHECK_FLOOR = 1e-5

# Explainability
CAM_MASK_LEVEL = 0.75
AM_INIT_MEAN = 0.5
AM_INIT_STD = 0.15
AM_STEP_SIZE = 0.1
AM_STEPS = 100

# Cross-validation
N_FOLDS = 5
TEST_FOLD = 0
FOLD_BALANCE_TOLERANCE = 0.25

# Files
MODEL_MAGIC = b"FSCV"
MODEL_VERSION = 1
CONFIG_ENV_VAR = "GLEASON_CONFIG"
DEFAULT_CONFIG_FILE = "data/pipeline_config.json"
DEFAULT_SLIDES_DIR = "data/slides"
DEFAULT_RUN_DIR = "data/runs/default"
