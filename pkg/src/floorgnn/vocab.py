from dataclasses import dataclass, field
from pathlib import Path
import json

from .errors import BadConfigError, IOFailure, UnknownCategoryError

DEFAULT_LABELS = (
    "living_room",
    "kitchen",
    "bedroom",
    "bathroom",
    "balcony",
    "closet",
    "corridor",
    "dining_room",
)


@dataclass(frozen=True)
class CategoryVocab:
    labels: tuple = DEFAULT_LABELS
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        if not labels:
            raise BadConfigError("vocabulary is empty")
        if len(set(labels)) != len(labels):
            raise BadConfigError("vocabulary has duplicate labels")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "index", {lab: i for i, lab in enumerate(labels)})

    def __len__(self):
        return len(self.labels)

    def __contains__(self, label):
        return label in self.index

    def encode(self, label):
        try:
            return self.index[label]
        except KeyError:
            raise UnknownCategoryError(f"category {label!r} not in vocabulary") from None

    @classmethod
    def infer(cls, categories):
        return cls(tuple(sorted(set(categories))))

    @classmethod
    def from_file(cls, path):
        """Read a vocabulary from a JSON array or a one-label-per-line text file."""
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise IOFailure(f"cannot read vocabulary {path}: {exc}") from exc
        stripped = text.strip()
        if stripped.startswith("["):
            labels = json.loads(stripped)
        else:
            labels = [line.strip() for line in stripped.splitlines() if line.strip()]
        return cls(tuple(labels))
