"""Plain key=value configuration files.

Lines look like `strain.base_individual = 2.0`; blank lines and #
comments are ignored.  Keys are namespaced by the dataclass they
override (strain, selector, classifier, corpus, placement), and unknown
keys are an error so typos surface immediately.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

from .cnn import ClassifierConfig
from .corpus import CorpusConfig
from .difficulty import StrainConfig
from .errors import DataError
from .selector import TrainConfig

_SECTIONS = {
    "strain": StrainConfig,
    "selector": TrainConfig,
    "classifier": ClassifierConfig,
    "corpus": CorpusConfig,
}
_EXTRA_KEYS = {"placement.scratch_to_turntable"}


def _known_keys() -> set[str]:
    keys = set(_EXTRA_KEYS)
    for section, cls in _SECTIONS.items():
        for field in dataclasses.fields(cls):
            keys.add(f"{section}.{field.name}")
    return keys


class Config:
    """Parsed key=value settings with typed dataclass overlays."""

    def __init__(self, values: dict[str, str] | None = None):
        self.values = dict(values or {})
        unknown = set(self.values) - _known_keys()
        if unknown:
            raise DataError(f"unknown config keys: {', '.join(sorted(unknown))}")

    @classmethod
    def from_file(cls, path: str | Path) -> "Config":
        values: dict[str, str] = {}
        for lineno, raw in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            if key in values:
                raise DataError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value.strip()
        return cls(values)

    def _convert(self, key: str, text: str, kind):
        if kind not in (int, float, bool, str):
            raise DataError(f"config key {key} is not settable from a file")
        try:
            if kind is bool:
                lowered = text.lower()
                if lowered in ("1", "true", "yes", "on"):
                    return True
                if lowered in ("0", "false", "no", "off"):
                    return False
                raise ValueError(text)
            return kind(text)
        except (ValueError, TypeError):
            raise DataError(f"config key {key}: cannot parse {text!r} as {kind.__name__}") from None

    def overlay(self, section: str, base):
        """A copy of a config dataclass with this file's overrides applied."""
        updates = {}
        for field in dataclasses.fields(base):
            key = f"{section}.{field.name}"
            if key in self.values:
                kind = type(getattr(base, field.name))
                updates[key.split(".", 1)[1]] = self._convert(key, self.values[key], kind)
        return dataclasses.replace(base, **updates) if updates else base

    def strain(self, base: StrainConfig = StrainConfig()) -> StrainConfig:
        return self.overlay("strain", base)

    def selector(self, base: TrainConfig = TrainConfig()) -> TrainConfig:
        return self.overlay("selector", base)

    def classifier(self, base: ClassifierConfig = ClassifierConfig()) -> ClassifierConfig:
        return self.overlay("classifier", base)

    def corpus(self, base: CorpusConfig = CorpusConfig()) -> CorpusConfig:
        return self.overlay("corpus", base)

    def flag(self, key: str, default: bool) -> bool:
        if key not in self.values:
            return default
        return self._convert(key, self.values[key], bool)
