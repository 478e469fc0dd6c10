"""Atomic writing of run artifacts.

A run's files are written to a hidden staging directory next to the output
directory and published only when every file has been written. A fresh
output directory is renamed into place in one step. An existing one is
updated file by file: files this run produced replace their namesakes,
files the previous run's marker lists and this run did not produce are
removed, and nothing else in the directory is touched.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import tempfile
from pathlib import Path

import pandas as pd
from ruamel.yaml import YAML

from .errors import ConfigError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12g"
MARKER = ".run.json"


def _frame_to_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")


def write_frame_atomic(path: Path, frame: pd.DataFrame) -> None:
    """Single CSV file via temp-then-rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        _frame_to_csv(frame, Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _plain_name(name: str) -> bool:
    return bool(name) and Path(name).name == name and name != MARKER


def previous_run_files(out_dir: Path) -> list[str]:
    """Files recorded by the last run published into ``out_dir``."""
    marker = out_dir / MARKER
    if not marker.is_file():
        return []
    try:
        with marker.open(encoding="utf-8") as fh:
            files = json.load(fh).get("files", [])
    except (OSError, ValueError, AttributeError) as exc:
        logger.warning("ignoring unreadable run marker %s: %s", marker, exc)
        return []
    return [f for f in files if isinstance(f, str) and _plain_name(f)]


class RunArtifacts:
    """Context manager collecting one run directory's files."""

    def __init__(self, out_dir: Path | str) -> None:
        self.out_dir = Path(out_dir)
        self.staging: Path | None = None
        self.files: list[str] = []

    def __enter__(self) -> "RunArtifacts":
        if self.out_dir.exists() and not self.out_dir.is_dir():
            raise ConfigError(f"output path {self.out_dir} exists and is not a directory")
        self.out_dir.parent.mkdir(parents=True, exist_ok=True)
        self.staging = Path(tempfile.mkdtemp(prefix=f".{self.out_dir.name}.", dir=self.out_dir.parent))
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        assert self.staging is not None
        if exc_type is not None:
            shutil.rmtree(self.staging, ignore_errors=True)
            logger.debug("discarded partial artifacts for %s", self.out_dir)
            return False
        with (self.staging / MARKER).open("w", encoding="utf-8") as fh:
            json.dump({"files": self.files}, fh, indent=2)
            fh.write("\n")
        if self.out_dir.exists():
            self._publish_into_existing()
        else:
            os.replace(self.staging, self.out_dir)
        logger.info("wrote %s: %s", self.out_dir, ", ".join(self.files))
        return False

    def _publish_into_existing(self) -> None:
        assert self.staging is not None
        stale = set(previous_run_files(self.out_dir)) - set(self.files)
        try:
            for name in self.files:
                target = self.out_dir / name
                if target.is_dir() and not target.is_symlink():
                    raise ConfigError(f"cannot replace directory {target} with a run file")
                os.replace(self.staging / name, target)
            for name in sorted(stale):
                path = self.out_dir / name
                if path.is_file() or path.is_symlink():
                    path.unlink()
                    logger.debug("removed stale run file %s", path)
            # marker last: an interrupted publish still lists the older files
            os.replace(self.staging / MARKER, self.out_dir / MARKER)
        finally:
            shutil.rmtree(self.staging, ignore_errors=True)

    def _path(self, name: str) -> Path:
        assert self.staging is not None, "RunArtifacts must be used as a context manager"
        if not _plain_name(name):
            raise ValueError(f"invalid artifact name {name!r}")
        if name not in self.files:
            self.files.append(name)
        return self.staging / name

    def csv(self, name: str, frame: pd.DataFrame) -> None:
        _frame_to_csv(frame, self._path(name))

    def json(self, name: str, payload: dict) -> None:
        with self._path(name).open("w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False, default=_jsonable)
            fh.write("\n")

    def yaml(self, name: str, payload: dict) -> None:
        yaml = YAML(typ="safe")
        yaml.default_flow_style = False
        with self._path(name).open("w", encoding="utf-8") as fh:
            yaml.dump(payload, fh)


def _jsonable(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if hasattr(obj, "tolist"):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")
