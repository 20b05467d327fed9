"""Run and synthetic-benchmark configuration, loadable from a JSON file.

The file mirrors :class:`RunConfig`::

    {
      "num_verbs": 6, "num_noobject_verbs": 2,
      "thresholds": {"t_u": 0.25, "t_h": 0.25, "t_o": 0.25},
      "voting": {"sigma": 0.9, "region_nms_iou": null},
      "loss": {"alpha": 0.25, "gamma": 2.0, "variant": "ignorance"},
      "anchors": {"image_width": 256, "image_height": 256,
                  "levels": [[8, 32], [16, 64]], "scales": [1.0], "aspect_ratios": [1.0]},
      "eval": {"iou_threshold": 0.5},
      "synth": {"seed": 0, "scene_count": 50}
    }

Any field can be overridden with a dotted ``section.field=value`` string;
values are parsed as JSON and fall back to plain strings.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from ..assignment import Thresholds
from ..errors import ConfigError
from ..evaluation import EvalConfig
from ..geometry import AnchorConfig
from ..losses import LossConfig
from ..voting import VotingConfig


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic benchmark generator settings.

    Noise parameters: ``box_noise`` is the pixel std of detection box jitter,
    ``region_noise`` the std of regressed-box jitter relative to the anchor
    size, ``score_noise`` the std of the shortfall of positive scores below 1,
    ``negative_score_noise`` the std of scores on negative classes,
    ``confusion_rate`` the probability that a region puts its positive scores
    on a wrong verb, ``drop_rate`` the probability that a flagged anchor emits
    no prediction.
    """

    seed: int = 0
    scene_count: int = 50
    image_width: float = 256.0
    image_height: float = 256.0
    humans_per_scene: tuple[int, int] = (1, 4)
    objects_per_scene: tuple[int, int] = (1, 6)
    num_object_classes: int = 8
    interact_prob: float = 0.8
    second_verb_prob: float = 0.15
    noobject_prob: float = 0.5
    box_noise: float = 0.0
    region_noise: float = 0.0
    score_noise: float = 0.0
    negative_score_noise: float = 0.0
    confusion_rate: float = 0.0
    drop_rate: float = 0.0

    def __post_init__(self) -> None:
        for name in ("humans_per_scene", "objects_per_scene"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (int(lo), int(hi)))
            if lo > hi or lo < 0:
                raise ConfigError(f"{name} range {lo}..{hi} is empty or negative")
        if self.humans_per_scene[1] < 1:
            raise ConfigError("scenes need at least one human")
        if self.scene_count < 0:
            raise ConfigError("scene_count must be >= 0")
        for name in ("box_noise", "region_noise", "score_noise", "negative_score_noise"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("drop_rate", "confusion_rate", "interact_prob", "second_verb_prob", "noobject_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.num_object_classes < 1:
            raise ConfigError("num_object_classes must be >= 1")
        if not (self.image_width > 0 and self.image_height > 0):
            raise ConfigError("image size must be positive")


# Noise settings and seeds of the synthetic benchmark used for the ablation trends.
NOISY_BENCHMARK = dict(box_noise=2.0, region_noise=0.3, score_noise=0.3, negative_score_noise=0.02,
                       confusion_rate=0.4, drop_rate=0.3)
BENCHMARK_SEEDS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class RunConfig:
    num_verbs: int = 6
    num_noobject_verbs: int = 2
    thresholds: Thresholds = field(default_factory=Thresholds)
    voting: VotingConfig = field(default_factory=VotingConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    anchors: AnchorConfig = field(default_factory=AnchorConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def __post_init__(self) -> None:
        if self.num_verbs < 1:
            raise ConfigError("num_verbs must be >= 1")
        if self.num_noobject_verbs < 0:
            raise ConfigError("num_noobject_verbs must be >= 0")
        if (self.anchors.image_width, self.anchors.image_height) != (
                self.synth.image_width, self.synth.image_height):
            raise ConfigError("anchor image size and synthetic image size differ")

    @property
    def num_actions(self) -> int:
        return self.num_verbs + self.num_noobject_verbs

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["loss"]["variant"] = self.loss.variant.value
        return d

    def replace(self, **sections) -> "RunConfig":
        return dataclasses.replace(self, **sections)


_SECTIONS = {
    "thresholds": Thresholds,
    "voting": VotingConfig,
    "loss": LossConfig,
    "anchors": AnchorConfig,
    "eval": EvalConfig,
    "synth": SynthConfig,
}


def _build(cls, data: dict, where: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown field(s) in {where}: {sorted(unknown)}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    top = {}
    for key, value in data.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be an object")
            top[key] = _build(_SECTIONS[key], value, key)
        elif key in ("num_verbs", "num_noobject_verbs"):
            top[key] = value
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    # keep the synthetic image size in step with the anchors unless both are given
    if "anchors" in top and "synth" not in top:
        a = top["anchors"]
        top["synth"] = SynthConfig(image_width=a.image_width, image_height=a.image_height)
    elif "synth" in top and "anchors" not in top:
        s = top["synth"]
        top["anchors"] = AnchorConfig(image_width=s.image_width, image_height=s.image_height)
    return _build(RunConfig, top, "configuration")


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides: Iterable[str]) -> dict:
    data = json.loads(json.dumps(data))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.field=value")
        key, _, raw = item.partition("=")
        parts = key.strip().split(".")
        node = data
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r} does not address a section")
        node[parts[-1]] = _parse_value(raw)
    return data


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> RunConfig:
    """Read a JSON config file (optional) and apply dotted overrides."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_dict(apply_overrides(data, overrides))
