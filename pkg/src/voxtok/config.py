"""Flat ``key = value`` run configuration.

One option per line, ``#`` starts a comment, keys are camelCase.  Unknown
or duplicate keys are rejected so a typo cannot silently fall back to a
default.  ``to_lines`` renders the full configuration in a fixed key order,
which keeps metrics output stable across reruns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from voxtok.errors import ConfigError
from voxtok.pruning import (
    AnchorSettings,
    CompletionWeights,
    SelectionRule,
)
from voxtok.voxel import FRAME_SCALE_MEDIAN, FRAME_SCALE_OFF, ResolutionPolicy

_RULES = ("latest", "priority", "multitoken")
_ANCHOR_MODES = ("centroid", "center")
_SCALE_MODES = (FRAME_SCALE_OFF, FRAME_SCALE_MEDIAN)


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the pruning and streaming pipelines.

    ``patch_size`` 0 infers a square patch tiling; ``max_depth`` 0 disables
    the depth cutoff.
    """

    base_size: float = 0.25
    band_edges: tuple[float, float] = (1.5, 4.0)
    band_scales: tuple[float, float, float] = (0.5, 1.0, 2.0)
    frame_scale_mode: str = FRAME_SCALE_OFF
    reference_depth: float = 2.0
    rule: str = "latest"
    priority_weights: tuple[float, float] = (0.5, 0.5)
    top_k: int = 1
    rho: float = 0.1
    completion_weights: tuple[float, float, float, float] = (0.3, 0.3, 0.2, 0.2)
    smooth_window: int = 3
    window_size: int = 8
    anchor_mode: str = "centroid"
    patch_size: int = 0
    max_depth: float = 0.0
    dedup_against_active: bool = False

    def __post_init__(self):
        if self.rule not in _RULES:
            raise ConfigError(f"rule must be one of {_RULES}, got {self.rule!r}")
        if self.anchor_mode not in _ANCHOR_MODES:
            raise ConfigError(
                f"anchorMode must be one of {_ANCHOR_MODES}, got {self.anchor_mode!r}")
        if self.frame_scale_mode not in _SCALE_MODES:
            raise ConfigError(
                f"frameScaleMode must be one of {_SCALE_MODES}, "
                f"got {self.frame_scale_mode!r}")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must be in [0, 1], got {self.rho!r}")
        if self.smooth_window < 1 or self.smooth_window % 2 == 0:
            raise ConfigError(
                f"smoothWindow must be odd and >= 1, got {self.smooth_window}")
        if self.window_size < 1:
            raise ConfigError(f"windowSize must be >= 1, got {self.window_size}")
        if self.patch_size < 0:
            raise ConfigError(f"patchSize must be >= 0, got {self.patch_size}")
        if self.max_depth < 0.0:
            raise ConfigError(f"maxDepth must be >= 0, got {self.max_depth!r}")
        try:
            self.resolution_policy()
            self.selection_rule()
            self.completion()
            self.anchor_settings()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- derived pipeline objects -----------------------------------------

    def resolution_policy(self) -> ResolutionPolicy:
        return ResolutionPolicy(
            base_size=self.base_size,
            frame_scale_mode=self.frame_scale_mode,
            band_edges=self.band_edges,
            band_scales=self.band_scales,
            reference_depth=self.reference_depth,
        )

    def selection_rule(self) -> SelectionRule:
        wr, wp = self.priority_weights
        return SelectionRule(self.rule, wr, wp, self.top_k)

    def completion(self) -> CompletionWeights:
        wf, wr, ws, wrec = self.completion_weights
        return CompletionWeights(wf, wr, ws, wrec)

    def anchor_settings(self) -> AnchorSettings:
        cutoff = self.max_depth if self.max_depth > 0.0 else math.inf
        return AnchorSettings(self.patch_size, self.anchor_mode, cutoff)

    def memory_store(self):
        from voxtok.memory import MemoryStore

        return MemoryStore(
            window_size=self.window_size,
            policy=self.resolution_policy(),
            rule=self.selection_rule(),
            rho=self.rho,
            anchor_settings=self.anchor_settings(),
            dedup_against_active=self.dedup_against_active,
        )

    # -- text form ---------------------------------------------------------

    def to_lines(self) -> list[str]:
        out = []
        for key, (attr, kind) in _KEYS.items():
            out.append(f"{key} = {_format(getattr(self, attr), kind)}")
        return out

    @classmethod
    def from_text(cls, text: str) -> "PipelineConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _KEYS:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            attr, kind = _KEYS[key]
            if attr in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            try:
                values[attr] = _parse(value, kind)
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}")
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)


# key -> (dataclass attribute, value kind)
_KEYS = {
    "baseSize": ("base_size", "float"),
    "bandEdges": ("band_edges", "floats2"),
    "bandScales": ("band_scales", "floats3"),
    "frameScaleMode": ("frame_scale_mode", "str"),
    "referenceDepth": ("reference_depth", "float"),
    "rule": ("rule", "str"),
    "priorityWeights": ("priority_weights", "floats2"),
    "topK": ("top_k", "int"),
    "rho": ("rho", "float"),
    "completionWeights": ("completion_weights", "floats4"),
    "smoothWindow": ("smooth_window", "int"),
    "windowSize": ("window_size", "int"),
    "anchorMode": ("anchor_mode", "str"),
    "patchSize": ("patch_size", "int"),
    "maxDepth": ("max_depth", "float"),
    "dedupAgainstActive": ("dedup_against_active", "bool"),
}


def _parse(value: str, kind: str):
    if kind == "str":
        return value
    if kind == "int":
        return int(value)
    if kind == "float":
        return float(value)
    if kind == "bool":
        low = value.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    if kind.startswith("floats"):
        n = int(kind[len("floats"):])
        parts = [p.strip() for p in value.split(",")]
        if len(parts) != n:
            raise ValueError(f"expected {n} comma-separated values, got {value!r}")
        return tuple(float(p) for p in parts)
    raise AssertionError(kind)


def _format(value, kind: str) -> str:
    if kind == "bool":
        return "true" if value else "false"
    if kind.startswith("floats"):
        return ",".join(repr(v) for v in value)
    if kind == "float":
        return repr(value)
    return str(value)
