"""Skeleton keypoint frames, NDJSON ingestion and the EMA + jump-rejection point filter."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

import numpy as np

KEYPOINTS = (
    "pelvis",
    "l_shoulder",
    "r_shoulder",
    "l_elbow",
    "r_elbow",
    "l_wrist",
    "r_wrist",
    "l_hip",
    "r_hip",
    "l_knee",
    "r_knee",
)
KEYPOINT_INDEX = {name: i for i, name in enumerate(KEYPOINTS)}


class StreamError(ValueError):
    """Base class for skeleton stream ingestion errors."""


class StreamParseError(StreamError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class StreamSchemaError(StreamError):
    def __init__(self, line: int, keypoint: str, message: str | None = None):
        super().__init__(f"line {line}: {message or f'missing keypoint {keypoint!r}'}")
        self.line = line
        self.keypoint = keypoint


class StreamSequenceError(StreamError):
    def __init__(self, line: int, previous: float, current: float):
        super().__init__(
            f"line {line}: timestamp {current!r} does not increase (previous {previous!r})"
        )
        self.line = line


@dataclass(frozen=True)
class SkeletonFrame:
    """One timestamped skeleton in the camera frame (+z up), positions in meters.

    ``positions`` is an (11, 3) array ordered as :data:`KEYPOINTS`.
    """

    t: float
    positions: np.ndarray

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float).reshape(len(KEYPOINTS), 3)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        if not math.isfinite(self.t):
            raise ValueError("frame timestamp must be finite")
        if not np.all(np.isfinite(pos)):
            raise ValueError("keypoint coordinates must be finite")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.positions[KEYPOINT_INDEX[name]]

    @classmethod
    def from_dict(cls, t: float, keypoints: dict) -> "SkeletonFrame":
        return cls(t, np.array([keypoints[name] for name in KEYPOINTS], dtype=float))

    def to_dict(self) -> dict:
        return {
            "t": float(self.t),
            "kp": {name: [float(v) for v in self.positions[i]] for i, name in enumerate(KEYPOINTS)},
        }

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> "SkeletonFrame":
        return SkeletonFrame(self.t, self.positions @ np.asarray(rotation).T + translation)


def _parse_record(lineno: int, text: str) -> SkeletonFrame:
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StreamParseError(lineno, f"invalid JSON ({exc.msg})") from None
    if not isinstance(record, dict) or "t" not in record or "kp" not in record:
        raise StreamParseError(lineno, 'record must be an object with "t" and "kp"')
    t = record["t"]
    if isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t):
        raise StreamParseError(lineno, f"bad timestamp {t!r}")
    kp = record["kp"]
    if not isinstance(kp, dict):
        raise StreamParseError(lineno, '"kp" must be an object')
    rows = []
    for name in KEYPOINTS:
        if name not in kp:
            raise StreamSchemaError(lineno, name)
        value = kp[name]
        ok = (
            isinstance(value, list)
            and len(value) == 3
            and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
        )
        if not ok or not all(math.isfinite(v) for v in value):
            raise StreamSchemaError(lineno, name, f"keypoint {name!r} must be 3 finite numbers")
        rows.append(value)
    return SkeletonFrame(float(t), np.array(rows, dtype=float))


def iter_stream(source: IO) -> Iterator[SkeletonFrame]:
    """Lazily parse newline-delimited JSON skeleton records. Blank lines are skipped."""
    previous = None
    for lineno, raw in enumerate(source, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        text = raw.strip()
        if not text:
            continue
        frame = _parse_record(lineno, text)
        if previous is not None and not frame.t > previous:
            raise StreamSequenceError(lineno, previous, frame.t)
        previous = frame.t
        yield frame


def parse_stream(source) -> list[SkeletonFrame]:
    """Parse a skeleton stream from a file object, bytes or str."""
    if isinstance(source, bytes):
        source = io.BytesIO(source)
    elif isinstance(source, str):
        source = io.StringIO(source)
    return list(iter_stream(source))


def serialize_stream(frames: Iterable[SkeletonFrame]) -> str:
    # repr-exact floats keep parse(serialize(x)) == x
    return "".join(json.dumps(f.to_dict(), separators=(",", ":")) + "\n" for f in frames)


def write_stream(path, frames: Iterable[SkeletonFrame]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_stream(frames))


def read_stream(path) -> list[SkeletonFrame]:
    with open(path, "rb") as fh:
        return parse_stream(fh)


@dataclass(frozen=True)
class PointFilterConfig:
    ema_alpha: float = 0.3
    jump_threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.ema_alpha <= 1.0:
            raise ValueError(f"ema_alpha must be in (0, 1], got {self.ema_alpha}")
        if not self.jump_threshold > 0.0:
            raise ValueError(f"jump_threshold must be > 0, got {self.jump_threshold}")


@dataclass(frozen=True)
class FilterState:
    last_accepted: dict = field(default_factory=dict)
    initialized: bool = False


def filter_frame(
    state: FilterState, frame: SkeletonFrame, cfg: PointFilterConfig
) -> tuple[FilterState, SkeletonFrame]:
    """Per-keypoint EMA with jump rejection.

    A keypoint that moved more than ``jump_threshold`` from its last accepted
    value is held at that value; otherwise it is blended toward the new
    measurement by ``ema_alpha``. The first frame initializes the state and
    passes through unchanged.
    """
    if not state.initialized:
        accepted = {name: frame.positions[i].copy() for i, name in enumerate(KEYPOINTS)}
        return FilterState(accepted, True), frame

    accepted = dict(state.last_accepted)
    out = np.empty_like(frame.positions)
    for i, name in enumerate(KEYPOINTS):
        prev = state.last_accepted[name]
        p = frame.positions[i]
        delta = p - prev
        if np.linalg.norm(delta) > cfg.jump_threshold:
            out[i] = prev
            continue
        if cfg.ema_alpha == 1.0:
            value = p.copy()
        else:
            value = prev + cfg.ema_alpha * delta
        out[i] = value
        accepted[name] = value
    return FilterState(accepted, True), SkeletonFrame(frame.t, out)


def generate_scenario(name: str, duration: float, rate: float, **kwargs) -> list[SkeletonFrame]:
    """Synthetic keypoint stream for one of the built-in scenarios.

    See :mod:`safe_imitation.scenarios` for the motion definitions.
    """
    from .scenarios import generate

    return generate(name, duration, rate, **kwargs)
