import threading

import pytest

from src.core.heston_verdicts import (
    STATUS_FAIL,
    STATUS_INCONCLUSIVE,
    STATUS_PASS,
    VERDICT_CSV_HEADER,
    CheckOutcome,
    VerdictReport,
    write_reports,
)
from src.utils.heston_config_manager import ConfigManager
from src.utils.heston_csv import file_checksum, format_cell, read_csv, write_csv
from src.utils.heston_errors import ConfigError
from src.utils.heston_logger import console_level, file_logs_enabled
from src.utils.heston_versions import package_versions, version_ok


class TestConfigManager:
    def test_parses_sections_and_comments(self):
        config = ConfigManager.from_text("[model]\nsigma = 0.2  # vol of vol\n\n[run]\nx0 = -0.1, 0.0 0.1\n")

        assert config.get_float("model.sigma") == 0.2
        assert config.get_float_list("run.x0") == [-0.1, 0.0, 0.1]
        assert config.line_of("run.x0") == 5
        assert config.get("model.kappa") is None

    @pytest.mark.parametrize(
        "text,line",
        [
            ("[model]\nsigma = 0.2\n[extra]\n", 3),
            ("[model]\nvolvol = 0.2\n", 2),
            ("sigma = 0.2\n", 1),
            ("[model]\nsigma 0.2\n", 2),
            ("[model]\nsigma = 0.2\nsigma = 0.3\n", 3),
            ("[run]\nT =\n", 2),
        ],
    )
    def test_errors_carry_the_line(self, text, line):
        with pytest.raises(ConfigError) as info:
            ConfigManager.from_text(text)
        assert info.value.line == line
        assert str(info.value).startswith(f"line {line}: ")

    def test_conversion_error_points_at_the_value(self):
        config = ConfigManager.from_text("[run]\n\nsteps = many\n")
        with pytest.raises(ConfigError) as info:
            config.get_int("run.steps")
        assert info.value.line == 3

    def test_booleans(self):
        config = ConfigManager.from_text("[run]\nantithetic = Yes\n")
        assert config.get_bool("run.antithetic") is True

        config.set("run.antithetic", "maybe")
        with pytest.raises(ConfigError):
            config.get_bool("run.antithetic")

    def test_set_and_delete(self):
        config = ConfigManager.from_text("[run]\nsteps = 10\n")
        config.set("run.steps", 20)

        assert config.get_int("run.steps") == 20
        assert config.line_of("run.steps") is None
        config.delete("run.steps")
        assert not config.has("run.steps")
        with pytest.raises(ConfigError):
            config.set("run.unknown", 1)
        with pytest.raises(ConfigError):
            config.get("steps")

    def test_snapshot_is_sorted(self):
        config = ConfigManager.from_text("[run]\nsteps = 10\nT = 1\n[model]\nrho = 0\n")
        snapshot = config.snapshot()

        assert list(snapshot) == sorted(snapshot)
        assert list(snapshot["run"]) == ["T", "steps"]

    def test_concurrent_writes(self):
        config = ConfigManager.from_text("[run]\nsteps = 0\n")

        def writer(k):
            for n in range(50):
                config.set("run.steps", k * 100 + n)

        threads = [threading.Thread(target=writer, args=(k,)) for k in range(4)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        assert config.get_int("run.steps") % 100 == 49

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            ConfigManager.load(tmp_path / "missing.ini")


class TestCsv:
    def test_cells(self):
        assert format_cell(0.1) == "0.1"
        assert format_cell(True) == "true"
        assert format_cell(3) == "3"

    def test_round_trip_and_checksum(self, tmp_path):
        path = write_csv(tmp_path / "a" / "t.csv", ("x", "y"), [(1.0, 2), (0.5, 3)])
        header, rows = read_csv(path)

        assert header == ["x", "y"]
        assert rows == [["1.0", "2"], ["0.5", "3"]]
        assert path.read_bytes().endswith(b"0.5,3\n")
        assert file_checksum(path) == file_checksum(write_csv(tmp_path / "b.csv", ("x", "y"), [(1.0, 2), (0.5, 3)]))


class TestVerdicts:
    def test_status_is_the_worst_outcome(self):
        report = VerdictReport(suite="s")
        assert report.status == STATUS_PASS

        report.add(CheckOutcome("a", STATUS_PASS, 1.0))
        report.add(CheckOutcome("b", STATUS_INCONCLUSIVE, 0.5))
        assert report.status == STATUS_INCONCLUSIVE
        assert report.ok

        report.add(CheckOutcome("c", STATUS_FAIL, -2.0, location="x=0"))
        assert not report.ok
        assert report.worst().name == "c"
        assert [o.name for o in report.failures()] == ["c"]
        assert "worst c margin=-2.0 at x=0" in report.summary_line()

    def test_write(self, tmp_path):
        first = VerdictReport(suite="one")
        first.add(CheckOutcome("a", STATUS_PASS, 1.0, constant=2.5))
        second = VerdictReport(suite="two")
        second.add(CheckOutcome("b", STATUS_FAIL, -1.0))
        header, rows = read_csv(write_reports(tmp_path / "verdicts.csv", [first, second]))

        assert tuple(header) == VERDICT_CSV_HEADER
        assert [row[0] for row in rows] == ["one", "two"]
        assert rows[0][-1] == "2.5"
        assert rows[1][-1] == ""


class TestVersions:
    def test_comparison(self):
        assert version_ok("1.26.4", "1.22")
        assert not version_ok("1.21.0", "1.22")
        assert not version_ok("unknown", "1.0")

    def test_reports_the_stack(self):
        names = [name for name, _, _ in package_versions()]
        assert names == ["loguru", "numpy", "scipy"]


class TestLogger:
    @pytest.mark.parametrize("raw,level", [("debug", "DEBUG"), (" warning ", "WARNING"), ("loud", "INFO")])
    def test_console_level(self, monkeypatch, raw, level):
        monkeypatch.setenv("HESTON_DEGEN_LOG_LEVEL", raw)
        assert console_level() == level

    def test_file_logs_are_off_under_pytest(self):
        assert not file_logs_enabled()
