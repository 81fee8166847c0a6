"""Scenario files: object geometry, initial placements, task phrasing,
and the knobs of the procedural training-data generator."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import torch

from .errors import ConfigError, ParseError
from .objects import ObjectGeometry, ObjectState
from .rotations import DTYPE, as_tensor

ACTIONS = ("open", "close", "use", "lift")
OBJECTS = ("box", "laptop", "microwave", "suitcase")


@dataclass(frozen=True)
class TextCondition:
    """Categorical stand-in for free-form text conditioning."""

    action: str
    object_name: str

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ConfigError(f"unknown action {self.action!r}; known: {ACTIONS}")
        if self.object_name not in OBJECTS:
            raise ConfigError(f"unknown object {self.object_name!r}; known: {OBJECTS}")

    @property
    def action_id(self) -> int:
        return ACTIONS.index(self.action)

    @property
    def object_id(self) -> int:
        return OBJECTS.index(self.object_name)

    def render(self) -> str:
        return f"A person {self.action} the {self.object_name}."

    @staticmethod
    def parse(text: str) -> "TextCondition":
        prefix, suffix = "A person ", "."
        if not (text.startswith(prefix) and text.endswith(suffix) and " the " in text):
            raise ParseError(f"text {text!r} does not match 'A person <action> the <object>.'")
        action, object_name = text[len(prefix) : -len(suffix)].split(" the ", 1)
        return TextCondition(action, object_name)

    def one_hot(self) -> torch.Tensor:
        v = torch.zeros(len(ACTIONS) + len(OBJECTS), dtype=DTYPE)
        v[self.action_id] = 1.0
        v[len(ACTIONS) + self.object_id] = 1.0
        return v


COND_VOCAB_DIM = len(ACTIONS) + len(OBJECTS)


@dataclass(frozen=True)
class DatasetSpec:
    """Per-sample jitter ranges for the synthetic-motion generator."""

    count: int = 24
    translation_jitter: float = 0.02  # m, object placement
    articulation_jitter: float = 0.10  # rad, end angle
    handle_jitter: float = 0.015  # m, grasp point on the moving part
    timing_jitter: float = 0.04  # fraction of the sequence
    sway_amplitude: float = 0.02  # m, idle root sway
    sway_frequency: float = 0.4  # Hz
    root_jitter: float = 0.0  # m, planar stance placement
    facing_jitter: float = 0.0  # rad
    idle_fraction: float = 0.0  # fraction of samples that never reach
    wander_amplitude: float = 0.0  # m, slow planar drift of idle samples


@dataclass(frozen=True)
class Scenario:
    name: str
    text: TextCondition
    frames: int
    fps: float
    geometry: ObjectGeometry
    initial_object_state: ObjectState
    articulation_end: float
    initial_root_xz: torch.Tensor  # (2,)
    initial_facing: float
    handle_point: torch.Tensor  # (3,) local frame of the moving part
    hand: str  # "left" or "right"
    contact_window: tuple  # (start, end) fractions of the sequence
    dataset: DatasetSpec = field(default_factory=DatasetSpec)

    def __post_init__(self):
        object.__setattr__(self, "initial_root_xz", as_tensor(self.initial_root_xz))
        object.__setattr__(self, "handle_point", as_tensor(self.handle_point))
        if self.frames < 2:
            raise ConfigError(f"scenario needs at least 2 frames, got {self.frames}")
        if self.hand not in ("left", "right"):
            raise ConfigError(f"hand must be 'left' or 'right', got {self.hand!r}")
        lo, hi = self.contact_window
        if not (0.0 <= lo < hi <= 1.0):
            raise ConfigError(f"contact window must satisfy 0 <= start < end <= 1, got {self.contact_window}")
        self.geometry._check_limits(self.articulation_end)

    @staticmethod
    def from_json(text: str) -> "Scenario":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"scenario is not valid JSON: {e}") from e
        return Scenario.from_dict(doc)

    @staticmethod
    def from_dict(doc: dict) -> "Scenario":
        def need(key):
            if key not in doc:
                raise ParseError(f"scenario missing required field {key!r}")
            return doc[key]

        try:
            ds = doc.get("dataset", {})
            return Scenario(
                name=str(need("name")),
                text=TextCondition(str(need("action")), str(need("object"))),
                frames=int(need("frames")),
                fps=float(doc.get("fps", 30.0)),
                geometry=ObjectGeometry.from_json(json.dumps(need("geometry"))),
                initial_object_state=ObjectState.from_dict(need("initial_object_state")),
                articulation_end=float(need("articulation_end")),
                initial_root_xz=torch.tensor(doc.get("initial_root_xz", [0.0, 0.0]), dtype=DTYPE),
                initial_facing=float(doc.get("initial_facing", 0.0)),
                handle_point=torch.tensor(need("handle_point"), dtype=DTYPE),
                hand=str(doc.get("hand", "right")),
                contact_window=tuple(doc.get("contact_window", (0.25, 0.8))),
                dataset=DatasetSpec(
                    count=int(ds.get("count", 24)),
                    translation_jitter=float(ds.get("translation_jitter", 0.02)),
                    articulation_jitter=float(ds.get("articulation_jitter", 0.10)),
                    handle_jitter=float(ds.get("handle_jitter", 0.015)),
                    timing_jitter=float(ds.get("timing_jitter", 0.04)),
                    sway_amplitude=float(ds.get("sway_amplitude", 0.02)),
                    sway_frequency=float(ds.get("sway_frequency", 0.4)),
                    root_jitter=float(ds.get("root_jitter", 0.0)),
                    facing_jitter=float(ds.get("facing_jitter", 0.0)),
                    idle_fraction=float(ds.get("idle_fraction", 0.0)),
                    wander_amplitude=float(ds.get("wander_amplitude", 0.0)),
                ),
            )
        except ParseError:
            raise
        except ConfigError:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"invalid scenario document: {e}") from e

    @staticmethod
    def load(path) -> "Scenario":
        try:
            with open(path, "r", encoding="utf-8") as f:
                return Scenario.from_json(f.read())
        except OSError as e:
            raise ConfigError(f"cannot read scenario {path}: {e}") from e
