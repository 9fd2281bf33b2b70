"""Global configuration: one JSON file, every field overridable by a flag.

The file maps directly onto GlobalConfig fields; unknown keys are rejected
to catch typos. Paths are resolved relative to the config file's directory
so a config can travel with its data.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from typing import Optional

from .sinkhole import SinkholeConfig


@dataclass
class GlobalConfig:
    psl_path: Optional[str] = None
    psl_icann_only: bool = False
    lists: dict[str, list[str]] = field(default_factory=dict)
    match_mode: str = "exact"
    platform_markers: dict[str, list[str]] = field(default_factory=dict)
    stop_tokens: Optional[list[str]] = None
    pii_spec_path: Optional[str] = None
    org_esld_path: Optional[str] = None
    org_parent_path: Optional[str] = None
    ats_labels_path: Optional[str] = None
    platform_processes_path: Optional[str] = None
    keywords: Optional[list[str]] = None
    max_bucket: int = 8
    flow_weighted: bool = False
    output_dir: str = "out"
    sinkhole: SinkholeConfig = field(default_factory=SinkholeConfig)


def load_config(path: str) -> GlobalConfig:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ValueError("config must be a JSON object")
    base = os.path.dirname(os.path.abspath(path))
    known = {f.name for f in fields(GlobalConfig)}
    unknown = set(obj) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")

    sink_obj = obj.pop("sinkhole", {})
    if not isinstance(sink_obj, dict):
        raise ValueError("sinkhole section must be an object")
    sink_known = {f.name for f in fields(SinkholeConfig)}
    sink_unknown = set(sink_obj) - sink_known
    if sink_unknown:
        raise ValueError(f"unknown sinkhole config keys: {sorted(sink_unknown)}")
    if "active_lists" in sink_obj:
        sink_obj["active_lists"] = tuple(sink_obj["active_lists"])
    sinkhole = SinkholeConfig(**sink_obj)

    cfg = GlobalConfig(sinkhole=sinkhole, **obj)
    _resolve_paths(cfg, base)
    return cfg


def _resolve(base: str, path: Optional[str]) -> Optional[str]:
    if path is None:
        return None
    return path if os.path.isabs(path) else os.path.join(base, path)


def _resolve_paths(cfg: GlobalConfig, base: str) -> None:
    cfg.psl_path = _resolve(base, cfg.psl_path)
    cfg.pii_spec_path = _resolve(base, cfg.pii_spec_path)
    cfg.org_esld_path = _resolve(base, cfg.org_esld_path)
    cfg.org_parent_path = _resolve(base, cfg.org_parent_path)
    cfg.ats_labels_path = _resolve(base, cfg.ats_labels_path)
    cfg.platform_processes_path = _resolve(base, cfg.platform_processes_path)
    cfg.lists = {
        name: [_resolve(base, p) for p in paths] for name, paths in cfg.lists.items()
    }
    if cfg.sinkhole.query_log_path:
        cfg.sinkhole.query_log_path = _resolve(base, cfg.sinkhole.query_log_path)


def load_lists_manifest(path: str) -> dict[str, list[str]]:
    """Standalone manifest file for --lists: {"PD": ["path", ...], ...}."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict) or not all(
        isinstance(v, list) for v in obj.values()
    ):
        raise ValueError("lists manifest must map list names to arrays of paths")
    base = os.path.dirname(os.path.abspath(path))
    return {name: [_resolve(base, p) for p in paths] for name, paths in obj.items()}
