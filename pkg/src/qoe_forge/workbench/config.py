"""Tool configuration: JSON file defaults, overridden by command-line flags."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union


@dataclass
class ToolConfig:
    workers: int = 1
    modes_per_video: int = 3
    crf_set: tuple[int, ...] = (15, 22, 27, 32, 37)
    # Shell template run once per output entry when frames exist; placeholders
    # {frames_dir} {out_dir} {crf}. Output frame count must match the source.
    encoder_command: str | None = None
    port: int = 8000
    playlist_size: int | None = None

    @classmethod
    def load(cls, path: Union[str, Path, None]) -> "ToolConfig":
        cfg = cls()
        if path is None:
            return cfg
        data = json.loads(Path(path).read_text())
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        known = set(cfg.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"{path}: unknown config key(s) {sorted(unknown)}")
        for key, value in data.items():
            if key == "crf_set":
                value = tuple(int(v) for v in value)
            setattr(cfg, key, value)
        return cfg
