"""Pipeline configuration: defaults, JSON config file, and flag overrides.

The JSON file mirrors the CLI flags, either nested (``{"decode": {"beam": 50}}``)
or dotted (``{"decode.beam": 50}``).  ``HYPE_CONFIG`` names a default file.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Any

ENV_VAR = "HYPE_CONFIG"

DEFAULTS: dict[str, dict[str, Any]] = {
    "taxonomy": {"root": "Main topic classifications", "max_depth": 4},
    "embedder": {"dim": 1024},
    "assign": {"k": 30},
    "selector": {
        "url": None,
        "timeout": 30.0,
        "max_concurrency": 4,
        "cache_dir": None,
        "send_prompt": False,
    },
    "dataset": {"scheme": "title", "n_keywords": 3, "firstp_tokens": 64, "max_synthetic": 5},
    "model": {"kind": "mixture", "lambda": [0.4, 0.5, 0.1], "alpha": 0.1},
    "decode": {
        "k_paths": 3,
        "beam": 100,
        "max_len": 64,
        "path_beam": None,
        "constrain_paths": True,
        "full_path_space": False,
        "path_filtered_trie": False,
    },
    "rank": {"include_path_score": False},
    "eval": {"top_k": 100, "metrics": ["r1", "r10", "r100", "mrr100"]},
    "seed": 0,
}


def _merge(base: dict, update: dict) -> None:
    for key, val in update.items():
        if "." in key:
            section, name = key.split(".", 1)
            base.setdefault(section, {})[name] = val
        elif isinstance(val, dict) and isinstance(base.get(key), dict):
            _merge(base[key], val)
        else:
            base[key] = val


def load_config(path: str | Path | None = None) -> dict[str, Any]:
    cfg = copy.deepcopy(DEFAULTS)
    path = path or os.environ.get(ENV_VAR)
    if path:
        _merge(cfg, json.loads(Path(path).read_text(encoding="utf-8")))
    return cfg


def override(cfg: dict[str, Any], **dotted: Any) -> dict[str, Any]:
    """Apply ``section__name=value`` overrides, skipping ``None`` values."""
    for key, val in dotted.items():
        if val is None:
            continue
        section, _, name = key.partition("__")
        if name:
            cfg.setdefault(section, {})[name] = val
        else:
            cfg[section] = val
    return cfg
