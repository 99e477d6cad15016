"""Journey files and preprocessing.

A journey file is newline-delimited JSON.  The first non-blank line is the
manifest, which fixes the channel vocabulary (and so the channel ids, in
listed order) and the time unit::

    {"manifest": {"channels": ["email", "display"], "time_unit": "days"}}
    {"customer_id": "c1", "outcome": 1, "touches": [{"channel": "email", "time": 0.0}]}

``eval_time`` is optional per record and defaults to the last touch time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Channel, InvalidInputError, Journey, Touch, make_channels

TIME_UNIT = "days"


class JourneyFileError(ValueError):
    """Malformed journey file; the message carries the line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyDatasetError(ValueError):
    pass


@dataclass
class JourneyFile:
    channels: list[Channel]
    journeys: list[Journey]
    time_unit: str = TIME_UNIT

    @property
    def channel_names(self) -> list[str]:
        return [c.name for c in self.channels]


def _number(value, line: int, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise JourneyFileError(line, f"field {field!r} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise JourneyFileError(line, f"field {field!r} must be finite")
    return value


def _parse_manifest(obj, line: int) -> tuple[list[Channel], str]:
    if not isinstance(obj, dict) or "manifest" not in obj:
        raise JourneyFileError(line, "first record must be a manifest: {\"manifest\": {...}}")
    manifest = obj["manifest"]
    names = manifest.get("channels") if isinstance(manifest, dict) else None
    if not isinstance(names, list) or not names or not all(isinstance(n, str) for n in names):
        raise JourneyFileError(line, "manifest field 'channels' must be a non-empty list of strings")
    unit = manifest.get("time_unit", TIME_UNIT)
    if unit != TIME_UNIT:
        raise JourneyFileError(line, f"manifest field 'time_unit' must be {TIME_UNIT!r}, got {unit!r}")
    try:
        return make_channels(names), unit
    except InvalidInputError as exc:
        raise JourneyFileError(line, str(exc)) from None


def _parse_record(obj, line: int, ids: dict[str, int]) -> Journey:
    if not isinstance(obj, dict):
        raise JourneyFileError(line, "record must be a JSON object")
    for key in ("customer_id", "outcome", "touches"):
        if key not in obj:
            raise JourneyFileError(line, f"missing field {key!r}")
    customer = obj["customer_id"]
    if not isinstance(customer, str):
        raise JourneyFileError(line, "field 'customer_id' must be a string")
    outcome = _number(obj["outcome"], line, "outcome")
    touches_raw = obj["touches"]
    if not isinstance(touches_raw, list) or not touches_raw:
        raise JourneyFileError(line, "field 'touches' must be a non-empty list")
    touches = []
    for k, t in enumerate(touches_raw):
        if not isinstance(t, dict) or "channel" not in t or "time" not in t:
            raise JourneyFileError(line, f"touches[{k}] needs 'channel' and 'time'")
        name = t["channel"]
        if name not in ids:
            raise JourneyFileError(line, f"touches[{k}].channel: unknown channel {name!r}")
        time = _number(t["time"], line, f"touches[{k}].time")
        if time < 0:
            raise JourneyFileError(line, f"touches[{k}].time is negative ({time})")
        touches.append(Touch(ids[name], time))
    eval_time = obj.get("eval_time")
    if eval_time is not None:
        eval_time = _number(eval_time, line, "eval_time")
    try:
        return Journey(customer, tuple(touches), outcome, eval_time)
    except InvalidInputError as exc:
        raise JourneyFileError(line, str(exc)) from None


def read_journey_file(path: str | Path) -> JourneyFile:
    channels, unit, ids = None, TIME_UNIT, {}
    journeys = []
    with open(path, encoding="utf-8") as fh:
        for line_no, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise JourneyFileError(line_no, f"invalid JSON ({exc.msg})") from None
            if channels is None:
                channels, unit = _parse_manifest(obj, line_no)
                ids = {c.name: c.id for c in channels}
                continue
            journeys.append(_parse_record(obj, line_no, ids))
    if channels is None:
        raise JourneyFileError(1, "file has no manifest")
    return JourneyFile(channels, journeys, unit)


def parse(path: str | Path) -> list[Journey]:
    return read_journey_file(path).journeys


def journey_record(journey: Journey, channel_names: Sequence[str]) -> dict:
    return {
        "customer_id": journey.customer_id,
        "outcome": journey.outcome,
        "eval_time": journey.eval_time,
        "touches": [{"channel": channel_names[t.channel], "time": t.time} for t in journey.touches],
    }


def write_journey_file(path: str | Path, journeys: Iterable[Journey], channel_names: Sequence[str]):
    with open(path, "w", encoding="utf-8") as fh:
        manifest = {"manifest": {"channels": list(channel_names), "time_unit": TIME_UNIT}}
        fh.write(json.dumps(manifest) + "\n")
        for j in journeys:
            fh.write(json.dumps(journey_record(j, channel_names)) + "\n")


@dataclass(frozen=True)
class PreprocessConfig:
    max_touches: int = 5
    target_positive_ratio: float = 0.7
    subsample_seed: int = 0
    max_customers: int | None = None

    def __post_init__(self):
        if self.max_touches < 1:
            raise InvalidInputError("max_touches must be >= 1")
        if not 0 < self.target_positive_ratio < 1:
            raise InvalidInputError("target_positive_ratio must lie in (0, 1)")
        if self.max_customers is not None and self.max_customers < 1:
            raise InvalidInputError("max_customers must be >= 1")


def preprocess(journeys: Sequence[Journey], config: PreprocessConfig = PreprocessConfig()) -> list[Journey]:
    """Touch cap, then down-sample non-converters toward the target ratio.

    All converting journeys are kept unless ``max_customers`` forces a cap,
    which subsamples uniformly.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.subsample_seed)))
    kept = [j for j in journeys if len(j.touches) <= config.max_touches]
    positive = [i for i, j in enumerate(kept) if j.outcome != 0]
    negative = [i for i, j in enumerate(kept) if j.outcome == 0]
    r = config.target_positive_ratio
    if kept and negative and len(positive) / len(kept) < r:
        n_neg = min(len(negative), int(math.floor(len(positive) * (1.0 - r) / r)))
        chosen = rng.choice(len(negative), size=n_neg, replace=False) if n_neg else []
        keep_idx = sorted(positive + [negative[i] for i in chosen])
        kept = [kept[i] for i in keep_idx]
    if config.max_customers is not None and len(kept) > config.max_customers:
        chosen = np.sort(rng.choice(len(kept), size=config.max_customers, replace=False))
        kept = [kept[i] for i in chosen]
    if not kept:
        raise EmptyDatasetError("no journeys left after preprocessing")
    return kept
