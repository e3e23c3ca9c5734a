"""
Run Manifest Module

The manifest records everything needed to re-execute a run: the echoed
configuration, the code version, wall-clock time, every artifact written
(with its checksum) and every derived random stream.

RunManifest offers a dictionary interface and persists itself as
``manifest.json`` in the run's output directory. The manifest file is listed
among its own artifacts, without a checksum.
"""

import json
import logging
import os
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from dgff_lab.output import file_checksum, to_jsonable

MANIFEST_NAME = "manifest.json"


class RunManifest(dict):
    """
    Provenance of one run.

    Args:
        out_dir: Output directory of the run; the manifest is stored in it.
        logger: Logger; defaults to the module logger.
    """

    def __init__(self, out_dir: Union[str, Path], logger: Optional[logging.Logger] = None) -> None:
        super().__init__()
        self.logger = logger or logging.getLogger(__name__)
        self.out_dir = Path(out_dir)
        self.full_path = self.out_dir / MANIFEST_NAME
        self._started: Optional[float] = None
        self["artifacts"] = []
        self["seeds"] = {}

    # -- recording

    def start(self) -> "RunManifest":
        """Start the wall-clock timer."""
        self._started = time.perf_counter()
        return self

    def stop(self) -> float:
        """Stop the timer and record the elapsed seconds."""
        if self._started is not None:
            self["wall_clock_seconds"] = time.perf_counter() - self._started
            self._started = None
        return float(self.get("wall_clock_seconds", 0.0))

    def add_artifact(self, path: Union[str, Path], kind: Optional[str] = None) -> None:
        """
        Register a written file.

        Args:
            path: File inside the output directory.
            kind: Optional description, e.g. ``"csv"``.
        """
        path = Path(path)
        relative = os.path.relpath(path, self.out_dir)
        entry: Dict[str, Any] = {"path": relative.replace(os.sep, "/"), "kind": kind or path.suffix.lstrip(".")}
        if path.resolve() != self.full_path.resolve():
            entry["sha256"] = file_checksum(path)
        self["artifacts"] = [a for a in self["artifacts"] if a["path"] != entry["path"]] + [entry]
        self.logger.debug(f"Registered artifact {entry['path']}")

    @property
    def artifact_paths(self) -> List[str]:
        return [a["path"] for a in self["artifacts"]]

    def update(self, *args: Any, **kwargs: Any) -> None:
        """
        Update the manifest.

        Supports:
        - Dictionary update: update({'key': 'value'})
        - Key-value update: update('key', 'value')
        - Keyword update: update(key='value')
        """
        if len(args) == 1 and isinstance(args[0], dict):
            super().update(args[0])
        elif len(args) == 2:
            self[args[0]] = args[1]
        else:
            super().update(kwargs)

    # -- persistence

    def save(self) -> Path:
        """Write ``manifest.json``, listing the manifest itself as an artifact."""
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self.add_artifact(self.full_path, kind="manifest")
            payload = to_jsonable(dict(self))
            self.full_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        except OSError as e:
            self.logger.error(f"Failed to save manifest: {e}")
            raise RuntimeError(f"Failed to save manifest: {e}") from e
        self.logger.info(f"Manifest written to {self.full_path}")
        return self.full_path

    @classmethod
    def load(cls, out_dir: Union[str, Path], logger: Optional[logging.Logger] = None) -> "RunManifest":
        """
        Load the manifest of an earlier run.

        Raises:
            FileNotFoundError: If the directory holds no manifest.
            RuntimeError: If the manifest cannot be decoded.
        """
        manifest = cls(out_dir, logger)
        if not manifest.full_path.exists():
            raise FileNotFoundError(f"No manifest found at {manifest.full_path}")
        try:
            data = json.loads(manifest.full_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            manifest.logger.error(f"Error decoding manifest: {e}")
            raise RuntimeError(f"Failed to load manifest: {e}") from e
        manifest.clear()
        super(RunManifest, manifest).update(data)
        return manifest

    def orphans(self) -> List[str]:
        """Files in the output directory that the manifest does not list."""
        listed = set(self.artifact_paths)
        found = []
        for path in sorted(self.out_dir.rglob("*")):
            if path.is_file():
                relative = os.path.relpath(path, self.out_dir).replace(os.sep, "/")
                if relative not in listed:
                    found.append(relative)
        return found

    def verify(self) -> List[str]:
        """Artifacts whose current checksum differs from the recorded one."""
        changed = []
        for entry in self["artifacts"]:
            checksum = entry.get("sha256")
            if checksum is None:
                continue
            path = self.out_dir / entry["path"]
            if not path.exists() or file_checksum(path) != checksum:
                changed.append(entry["path"])
        return changed
