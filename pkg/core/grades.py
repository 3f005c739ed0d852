"""Grade classes and slide-level Gleason scores."""

from dataclasses import dataclass
from enum import IntEnum

from core.errors import DataError


class Grade(IntEnum):
    NC = 0
    GG3 = 1
    GG4 = 2
    GG5 = 3

    @property
    def number(self):
        """Gleason pattern number; 0 for non-cancerous."""
        return 0 if self is Grade.NC else self.value + 2

    @classmethod
    def from_number(cls, number):
        for grade in cls:
            if grade.number == int(number):
                return grade
        raise DataError(f"no grade with Gleason number {number}")

    @classmethod
    def parse(cls, value):
        if isinstance(value, Grade):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise DataError(f"unknown grade {value!r}") from None
        return cls(int(value))


CANCER_GRADES = (Grade.GG3, Grade.GG4, Grade.GG5)

# categories used for slide-level agreement
SCORE_CATEGORIES = (0, 6, 7, 8, 9, 10)


def combine(primary, secondary):
    """Combined Gleason score; 0 marks a non-cancerous slide."""
    primary, secondary = Grade.parse(primary), Grade.parse(secondary)
    if primary is Grade.NC:
        return 0
    if secondary is Grade.NC:
        secondary = primary
    return primary.number + secondary.number


@dataclass(frozen=True)
class GleasonScore:
    primary: Grade
    secondary: Grade
    combined: int

    @classmethod
    def from_grades(cls, primary, secondary=None):
        primary = Grade.parse(primary)
        secondary = primary if secondary is None else Grade.parse(secondary)
        if primary is Grade.NC:
            secondary = Grade.NC
        elif secondary is Grade.NC:
            secondary = primary
        return cls(primary, secondary, combine(primary, secondary))

    @property
    def is_cancerous(self):
        return self.primary is not Grade.NC

    def label(self):
        if not self.is_cancerous:
            return "NC"
        return f"{self.primary.number}+{self.secondary.number}={self.combined}"

    def to_dict(self):
        return {"primary": self.primary.name, "secondary": self.secondary.name, "combined": self.combined}

    @classmethod
    def from_dict(cls, data):
        return cls.from_grades(data["primary"], data.get("secondary"))
