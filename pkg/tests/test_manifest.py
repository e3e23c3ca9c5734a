"""
Test module for the run manifest.
"""

import json
import logging

import pytest

from dgff_lab.manifest import MANIFEST_NAME, RunManifest
from dgff_lab.output import file_checksum


class TestRunManifest:
    @pytest.fixture
    def manifest(self, tmp_path):
        """Create a manifest for a temporary output directory"""
        return RunManifest(tmp_path / "run")

    @pytest.fixture
    def artifact(self, manifest):
        """Write one file into the output directory"""
        manifest.out_dir.mkdir(parents=True)
        path = manifest.out_dir / "data" / "rows.csv"
        path.parent.mkdir()
        path.write_text("# schema=1\nx\n1\n")
        return path

    def test_init(self, manifest, tmp_path):
        """Test initial state"""
        assert manifest.full_path == tmp_path / "run" / MANIFEST_NAME
        assert manifest["artifacts"] == []
        assert manifest["seeds"] == {}
        assert isinstance(manifest.logger, logging.Logger)

    def test_custom_logger(self, tmp_path):
        """Test that a provided logger is used"""
        logger = logging.getLogger("custom")
        assert RunManifest(tmp_path, logger).logger is logger

    def test_timer(self, manifest):
        """Test wall-clock recording"""
        assert manifest.start() is manifest
        elapsed = manifest.stop()
        assert elapsed >= 0.0
        assert manifest["wall_clock_seconds"] == elapsed
        # a second stop keeps the recorded value
        assert manifest.stop() == elapsed

    def test_add_artifact(self, manifest, artifact):
        """Test artifact registration with a relative path and checksum"""
        manifest.add_artifact(artifact)
        entry = manifest["artifacts"][0]
        assert entry == {"path": "data/rows.csv", "kind": "csv", "sha256": file_checksum(artifact)}
        assert manifest.artifact_paths == ["data/rows.csv"]

    def test_add_artifact_replaces(self, manifest, artifact):
        """Test that registering a path twice keeps one entry"""
        manifest.add_artifact(artifact)
        artifact.write_text("# schema=1\nx\n2\n")
        manifest.add_artifact(artifact, kind="table")
        assert len(manifest["artifacts"]) == 1
        assert manifest["artifacts"][0]["kind"] == "table"
        assert manifest["artifacts"][0]["sha256"] == file_checksum(artifact)

    def test_update_forms(self, manifest):
        """Test dictionary, key-value and keyword updates"""
        manifest.update({"experiment": "green"})
        manifest.update("seed", 7)
        manifest.update(version="1.0.0")
        assert manifest["experiment"] == "green"
        assert manifest["seed"] == 7
        assert manifest["version"] == "1.0.0"

    def test_save_and_load(self, manifest, artifact):
        """Test persistence of the manifest"""
        manifest.update("config", {"N": [8]})
        manifest.add_artifact(artifact)
        path = manifest.save()
        data = json.loads(path.read_text())
        assert data["config"] == {"N": [8]}
        own = [a for a in data["artifacts"] if a["path"] == MANIFEST_NAME][0]
        assert own == {"path": MANIFEST_NAME, "kind": "manifest"}

        loaded = RunManifest.load(manifest.out_dir)
        assert loaded["config"] == {"N": [8]}
        assert loaded.artifact_paths == ["data/rows.csv", MANIFEST_NAME]

    def test_load_missing(self, tmp_path):
        """Test loading from a directory without a manifest"""
        with pytest.raises(FileNotFoundError, match="No manifest"):
            RunManifest.load(tmp_path)

    def test_load_corrupt(self, tmp_path):
        """Test loading an undecodable manifest"""
        (tmp_path / MANIFEST_NAME).write_text("{not json")
        with pytest.raises(RuntimeError, match="Failed to load manifest"):
            RunManifest.load(tmp_path)

    def test_save_failure(self, tmp_path):
        """Test that write errors are reported as RuntimeError"""
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(RuntimeError, match="Failed to save manifest"):
            RunManifest(blocker / "run").save()

    def test_orphans(self, manifest, artifact):
        """Test detection of files the manifest does not list"""
        manifest.save()
        assert manifest.orphans() == ["data/rows.csv"]
        manifest.add_artifact(artifact)
        assert manifest.orphans() == []

    def test_verify(self, manifest, artifact):
        """Test detection of modified artifacts"""
        manifest.add_artifact(artifact)
        manifest.save()
        assert manifest.verify() == []
        artifact.write_text("changed")
        assert manifest.verify() == ["data/rows.csv"]
        artifact.unlink()
        assert manifest.verify() == ["data/rows.csv"]
