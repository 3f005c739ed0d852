"""Exception hierarchy shared by the grading pipeline."""


class GleasonError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(GleasonError, ValueError):
    """Configuration could not be parsed or holds invalid values."""


class ShapeError(GleasonError, ValueError):
    def __init__(self, layer_name, message):
        self.layer_name = layer_name
        super().__init__(f"{layer_name}: {message}")


class ModelFormatError(GleasonError, ValueError):
    """Model file is corrupt, truncated or not a model file."""


class UnsupportedVersionError(ModelFormatError):
    def __init__(self, found, supported):
        self.found = found
        self.supported = supported
        super().__init__(f"unsupported model version {found} (supported: {supported})")


class DataError(GleasonError, ValueError):
    """Input data violates a precondition."""


class DegenerateHistogramError(DataError):
    def __init__(self, message="degenerate histogram"):
        super().__init__(message)


class EmptyClassError(DataError):
    def __init__(self, class_name, split="training"):
        self.class_name = class_name
        super().__init__(f"class {class_name} has no samples in the {split} split")


class StageDependencyError(DataError):
    def __init__(self, stage, missing):
        self.stage = stage
        self.missing = missing
        super().__init__(f"stage '{stage}' requires {missing}, which does not exist; run the producing stage first")


class NumericError(GleasonError, ArithmeticError):
    def __init__(self, layer_name, message):
        self.layer_name = layer_name
        super().__init__(f"{layer_name}: {message}")
