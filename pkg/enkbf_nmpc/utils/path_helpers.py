"""
Path helper functions for EnKBF-NMPC.
"""

from pathlib import Path
from typing import Union


def get_package_dir() -> Path:
    """Directory of the installed enkbf_nmpc package."""
    return Path(__file__).resolve().parent.parent


def default_config_path(file_name: str) -> Path:
    """Path of a bundled experiment manifest."""
    return get_package_dir() / "configs" / file_name


def ensure_dir(path: Union[str, Path]) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path
