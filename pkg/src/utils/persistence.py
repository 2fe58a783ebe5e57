"""Persistence utilities for directory handling."""

import functools
import json
import os
from typing import Any, Dict


def get_project_root() -> str:
    """Project root (two levels above src/utils)."""
    return os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


def get_config_dir() -> str:
    """
    Get configuration directory path.

    The TRUNC_ELLIPSE_CONFIG_DIR environment variable overrides the
    project-local configs/ directory.

    Returns:
        Path to config directory
    """
    config_dir = os.environ.get('TRUNC_ELLIPSE_CONFIG_DIR') or os.path.join(get_project_root(), 'configs')
    os.makedirs(config_dir, exist_ok=True)
    return config_dir


def get_schema_dir() -> str:
    """Directory holding the published JSON schemas of CLI outputs."""
    return os.path.join(get_project_root(), 'schemas')


@functools.lru_cache(maxsize=None)
def load_schema(name: str) -> Dict[str, Any]:
    """
    Load a published JSON schema by name.

    Args:
        name: schema name without suffix (e.g. 'model', 'polar')

    Returns:
        Parsed schema document
    """
    path = os.path.join(get_schema_dir(), f'{name}.schema.json')
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)
