"""Tests for CSV artifacts, run reports, config digests and environment settings."""
import pandas as pd
import pytest

from drw_richards.errors import ArtifactError, ConfigurationError
from drw_richards.models import RunConfig, RunReport
from drw_richards.services.artifact_store import (
    SCHEMA_VERSION,
    ArtifactStore,
    DrwSettings,
    config_digest,
    read_csv,
    read_header,
    read_report,
    write_csv,
    write_report,
)


@pytest.fixture
def frame():
    return pd.DataFrame({"cell_id": [0, 1, 2], "psi": [-0.5, -0.25, -0.125]})


class TestCsvArtifacts:
    def test_header_and_rows(self, tmp_path, frame):
        path = write_csv(frame, tmp_path / "ref.csv", "reference", digest="abc123", seed=7,
                         extra={"unit_system": "cm-s"})
        header = read_header(path)
        assert header == {
            "schema_version": str(SCHEMA_VERSION),
            "artifact": "reference",
            "config_digest": "abc123",
            "seed": "7",
            "unit_system": "cm-s",
        }
        loaded, _ = read_csv(path, expected_artifact="reference")
        pd.testing.assert_frame_equal(loaded, frame)

    def test_wrong_artifact_kind(self, tmp_path, frame):
        path = write_csv(frame, tmp_path / "aug.csv", "augmented")
        with pytest.raises(ArtifactError, match="expected reference"):
            read_csv(path, expected_artifact="reference")

    def test_unknown_schema_version(self, tmp_path, frame):
        path = tmp_path / "old.csv"
        path.write_text("# schema_version: 0\n# artifact: reference\ncell_id,psi\n0,-1.0\n")
        with pytest.raises(ArtifactError):
            read_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            read_csv(tmp_path / "nowhere.csv")

    def test_unwritable_target(self, tmp_path, frame):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(ArtifactError):
            write_csv(frame, blocker / "nested.csv", "reference")


class TestReports:
    def test_round_trip(self, tmp_path):
        report = RunReport(problem="celia_1d", solver="drw", mse={"lscheme": 1e-5}, timings={"solve": 1.5})
        path = write_report(report, tmp_path / "report_drw.json")
        assert read_report(path) == report

    def test_malformed_report(self, tmp_path):
        path = tmp_path / "report_bad.json"
        path.write_text('{"problem": "x"}')
        with pytest.raises(ArtifactError):
            read_report(path)


class TestDigestAndStore:
    def test_digest_is_short_and_seed_sensitive(self):
        first = config_digest(RunConfig())
        assert len(first) == 16
        assert int(first, 16) >= 0
        assert config_digest(RunConfig()) == first
        assert config_digest(RunConfig(seed=1)) != first

    def test_include_limits_fields(self):
        """Fields outside ``include`` do not change the digest."""
        base = config_digest(RunConfig(), include={"problem", "grw"})
        assert config_digest(RunConfig(seed=5, solver="grw"), include={"problem", "grw"}) == base

    def test_store_layout(self, tmp_path):
        store = ArtifactStore(root=tmp_path)
        assert store.path("celia_1d", "abcd", "reference.csv") == tmp_path / "celia_1d" / "abcd" / "reference.csv"
        assert not store.exists("celia_1d", "abcd", "reference.csv")
        write_report(RunReport(problem="celia_1d", solver="grw"), store.path("celia_1d", "abcd", "report_grw.json"))
        assert store.reports() == [tmp_path / "celia_1d" / "abcd" / "report_grw.json"]

    def test_settings_from_environment(self, monkeypatch, tmp_path):
        monkeypatch.setenv("DRW_OUTPUT_ROOT", str(tmp_path / "out"))
        monkeypatch.setenv("DRW_LOG_EVERY", "3")
        settings = DrwSettings()
        assert settings.output_root == str(tmp_path / "out")
        assert settings.log_every == 3
        assert ArtifactStore(settings=settings).root == tmp_path / "out"

    def test_settings_read_dotenv_file(self, monkeypatch, tmp_path):
        monkeypatch.delenv("DRW_LOG_EVERY", raising=False)
        monkeypatch.chdir(tmp_path)
        (tmp_path / ".env").write_text("drw_log_every=7\nUNRELATED_KEY=1\n")
        assert DrwSettings().log_every == 7

    def test_settings_accept_field_names(self):
        settings = DrwSettings(output_root="elsewhere", log_every=2)
        assert settings.output_root == "elsewhere"
        assert settings.log_every == 2
        assert DrwSettings.model_config["env_file"] == ".env"
