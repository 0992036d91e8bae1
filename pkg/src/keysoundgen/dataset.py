"""Turning charts into labeled, featurized training examples.

Instrument labels resolve in priority order: an explicit manifest entry
(e.g. classifier predictions) wins, then a filename synonym match, then
the "other" category.  Features and playability flags stay aligned with
the chart's canonical object order throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import InstrumentLabel, Taxonomy, label_from_filename
from .bms import Chart, load_bms
from .corpus import CorpusEntry
from .difficulty import DifficultyCurve, StrainConfig, DEFAULT_STRAIN, difficulty_curve
from .errors import DataError
from .features import build_features
from .timing import TimeGrid


@dataclass
class ChartExample:
    """One chart ready for selector training or scoring."""

    song: str
    chart: Chart
    labels: list[InstrumentLabel]
    features: np.ndarray
    playable: np.ndarray
    curve: DifficultyCurve

    @property
    def difficulty(self) -> float:
        return self.curve.overall


def resolve_labels(
    chart: Chart, taxonomy: Taxonomy, manifest: dict[str, str] | None = None
) -> list[InstrumentLabel]:
    """One label per object: manifest, then filename synonyms, then "other"."""
    by_sample: dict[int, InstrumentLabel] = {}
    for sid, name in chart.sample_table.items():
        if manifest and name in manifest:
            by_sample[sid] = taxonomy.label(manifest[name])
        else:
            by_sample[sid] = label_from_filename(name, taxonomy) or taxonomy.label("other")
    return [by_sample[obj.sample.id] for obj in chart.objects]


def scratch_sample_ids(chart: Chart, labels) -> set[int]:
    """Sample ids whose objects are labeled "scratch" (turntable preference)."""
    out = set()
    for obj, label in zip(chart.objects, labels):
        if label.name == "scratch":
            out.add(obj.sample.id)
    return out


def featurize_chart(
    song: str,
    chart: Chart,
    taxonomy: Taxonomy,
    manifest: dict[str, str] | None = None,
    strain: StrainConfig = DEFAULT_STRAIN,
) -> ChartExample:
    grid = TimeGrid(chart)
    curve = difficulty_curve(chart, grid, None, strain)
    labels = resolve_labels(chart, taxonomy, manifest)
    features = build_features(chart, grid, curve, labels, "truth")
    playable = np.asarray([obj.playable for obj in chart.objects], dtype=bool)
    return ChartExample(song, chart, labels, features, playable, curve)


def featurize_corpus(
    entries,
    taxonomy: Taxonomy,
    manifest: dict[str, str] | None = None,
    strain: StrainConfig = DEFAULT_STRAIN,
) -> list[ChartExample]:
    return [
        featurize_chart(entry.song, entry.chart, taxonomy, manifest, strain)
        for entry in entries
    ]


def load_chart_dir(directory: str | Path) -> list[CorpusEntry]:
    """Parse every .bms file under a directory; the title groups charts
    into songs (file stem when untitled)."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.bms"))
    if not paths:
        raise DataError(f"{directory}: no .bms files found")
    entries = []
    for path in paths:
        chart = load_bms(path)
        entries.append(CorpusEntry(chart.metadata.title or path.stem, chart))
    return entries
