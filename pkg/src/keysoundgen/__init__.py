"""Keysound chart toolkit.

Parses and emits BMS charts, classifies keysound samples, models chart
difficulty, and generates playable charts from background-only material.
"""

from .bms import (
    BpmEvent,
    Chart,
    Lane,
    Metadata,
    SampleRef,
    TimedObject,
    emit_bms,
    emit_bms_bytes,
    load_bms,
    make_chart,
    parse_bms,
    parse_bms_bytes,
    save_bms,
)
from .errors import (
    BmsParseError,
    ConstraintError,
    DataError,
    KeysoundError,
    PlacementOverflowError,
)
from .timing import TimeGrid

__version__ = "0.1.0"

__all__ = [
    "BpmEvent",
    "Chart",
    "Lane",
    "Metadata",
    "SampleRef",
    "TimedObject",
    "TimeGrid",
    "emit_bms",
    "emit_bms_bytes",
    "load_bms",
    "make_chart",
    "parse_bms",
    "parse_bms_bytes",
    "save_bms",
    "KeysoundError",
    "DataError",
    "BmsParseError",
    "ConstraintError",
    "PlacementOverflowError",
    "__version__",
]
