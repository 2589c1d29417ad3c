"""
Artifact writers.

Every file a job produces starts with provenance: JSON documents carry a
``_meta`` object, CSV files lead with ``#`` comment lines. The body below the
header depends only on the job and its seed.
"""
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Optional, Union

import pandas as pd
from loguru import logger

TOOL_NAME = "arobust"


def _version() -> str:
    from .. import __version__
    return __version__


def config_hash(config: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a job configuration."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_meta(config: Dict[str, Any], units: Dict[str, str],
               kind: Optional[str] = None) -> Dict[str, Any]:
    meta: Dict[str, Any] = {
        'tool': TOOL_NAME,
        'version': _version(),
        'config_sha256': config_hash(config),
        'units': dict(units)
    }
    if kind:
        meta['kind'] = kind
    return meta


def write_json(payload: Dict[str, Any], path: Union[str, Path], meta: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump({'_meta': meta, **payload}, f, indent=2, default=str)
    logger.info(f"Wrote {path}")
    return path


def write_csv(frame: pd.DataFrame, path: Union[str, Path], meta: Dict[str, Any],
              float_format: str = "%.12e") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    units = ",".join(f"{k}={v}" for k, v in meta.get('units', {}).items())
    header = [
        f"# tool: {meta['tool']}",
        f"# version: {meta['version']}",
        f"# config_sha256: {meta['config_sha256']}",
        f"# units: {units}",
    ]
    if 'kind' in meta:
        header.append(f"# kind: {meta['kind']}")
    with open(path, 'w', newline='') as f:
        f.write("\n".join(header) + "\n")
        frame.to_csv(f, index=False, float_format=float_format)
    logger.info(f"Wrote {path} ({len(frame)} rows)")
    return path


def read_csv(path: Union[str, Path]) -> pd.DataFrame:
    """Read a CSV artifact, skipping its header comments."""
    return pd.read_csv(path, comment='#')


def strip_meta(data: Dict[str, Any]) -> Dict[str, Any]:
    return {k: v for k, v in data.items() if k != '_meta'}
