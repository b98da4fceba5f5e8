import io
from dataclasses import replace

import pytest

from src.cli.app import build_parser
from src.cli.service import converge, exit_code_for, load_settings, price, verify
from src.utils.heston_csv import read_csv
from src.utils.heston_errors import AdmissibilityError, ConfigError, NumericalError, ParameterError


def _run(argv):
    args = build_parser().parse_args(argv)
    out = io.StringIO()
    code = args.handler(args, out=out)
    return code, out.getvalue()


def _rewrite(path, old, new):
    path.write_text(path.read_text(encoding="utf-8").replace(old, new), encoding="utf-8")
    return path


class TestExitCodes:
    @pytest.mark.parametrize(
        "exc,code",
        [
            (ConfigError("bad"), 2),
            (NumericalError("singular"), 3),
            (AdmissibilityError("gate"), 1),
            (ParameterError(["rho"]), 1),
        ],
    )
    def test_mapping(self, exc, code):
        assert exit_code_for(exc) == code


class TestValidate:
    def test_admissible_config(self, config_file, out_dir):
        code, text = _run(["validate", "--config", str(config_file), "--out", str(out_dir)])

        assert code == 0
        assert "feller" in text
        assert text.rstrip().endswith("True")

    def test_feller_violation_without_beta(self, config_file, out_dir):
        _rewrite(config_file, "sigma = 0.2\nkappa = 2.0\ntheta = 0.04", "sigma = 1.0\nkappa = 0.5\ntheta = 0.2")
        _rewrite(config_file, "beta = 2.0\n", "")
        code, text = _run(["validate", "--config", str(config_file), "--out", str(out_dir)])

        assert code == 1
        assert "feller" in text

    def test_bad_correlation(self, config_file, out_dir):
        _rewrite(config_file, "rho = -0.5", "rho = 1.5")
        code, _ = _run(["validate", "--config", str(config_file), "--out", str(out_dir)])

        assert code == 1

    @pytest.mark.parametrize(
        "old,new",
        [("kappa = 2.0\n", ""), ("[run]\n", "[extra]\n[run]\n"), ("steps = 40", "steps = forty")],
    )
    def test_config_errors_are_usage_errors(self, config_file, out_dir, old, new):
        _rewrite(config_file, old, new)
        code, text = _run(["validate", "--config", str(config_file), "--out", str(out_dir)])

        assert code == 2
        assert text.startswith("error: ")

    def test_missing_file(self, tmp_path):
        code, _ = _run(["validate", "--config", str(tmp_path / "none.ini")])
        assert code == 2


class TestParser:
    def test_unknown_suite(self, config_file):
        with pytest.raises(SystemExit) as info:
            build_parser().parse_args(["verify", "--config", str(config_file), "--suite", "nope"])
        assert info.value.code == 2

    def test_command_is_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_overrides_reach_the_settings(self, config_file, out_dir):
        result = load_settings(config_file, {"run.seed": 11, "run.steps": 8}, out_dir)

        assert result.ok
        assert result.settings.seed == 11
        assert result.settings.steps == 8
        assert result.settings.out_dir == out_dir.resolve()

    def test_boundary_difference_key(self, config_file, out_dir):
        settings = load_settings(config_file, {"run.boundary_difference": "two-point"}, out_dir).settings
        assert settings.solve_config().boundary_difference == "two-point"

        bad = load_settings(config_file, {"run.boundary_difference": "upwind"}, out_dir)
        assert not bad.ok
        assert bad.exit_code == 2


class TestPrice:
    def test_all_methods(self, config_file, out_dir):
        code, text = _run(["price", "--config", str(config_file), "--out", str(out_dir)])

        assert code == 0
        header, rows = read_csv(out_dir / "prices.csv")
        assert header == ["method", "x0", "xi0", "price", "half_width"]
        assert [row[0] for row in rows] == ["pde", "cf", "mc"]
        assert rows[0][4] == "" and rows[2][4] != ""
        prices = [float(row[3]) for row in rows]
        assert prices[0] == pytest.approx(prices[1], rel=0.15)
        assert (out_dir / "manifest.txt").exists()
        assert "wrote" in text

    def test_unknown_method(self, config_file, out_dir):
        code, text = _run(["price", "--config", str(config_file), "--out", str(out_dir), "--method", "cf,fft"])

        assert code == 2
        assert "fft" in text

    def test_manifest_is_reproducible(self, config_file, tmp_path):
        first = tmp_path / "first"
        second = tmp_path / "second"
        for target in (first, second):
            code, _ = _run(["price", "--config", str(config_file), "--out", str(target), "--method", "cf,mc"])
            assert code == 0

        manifest = (first / "manifest.txt").read_text(encoding="utf-8")
        assert manifest == (second / "manifest.txt").read_text(encoding="utf-8")
        assert manifest.startswith("prices.csv ")
        run_manifest = (first / "run_manifest.txt").read_text(encoding="utf-8")
        assert "seed 7" in run_manifest
        assert "[timings]" in run_manifest

    def test_seed_changes_monte_carlo(self, config_file, tmp_path):
        rows = []
        for seed in (1, 2):
            result = price(load_settings(config_file, {"run.seed": seed}, tmp_path / str(seed)).settings, ["mc"])
            rows.append(result.rows[0].price)
        assert rows[0] != rows[1]


class TestVerifyAndConverge:
    def test_unknown_suite_in_service(self, config_file, out_dir):
        result = verify(load_settings(config_file, None, out_dir).settings, "nope")

        assert result.exit_code == 2
        assert result.files == []

    @pytest.mark.slow
    @pytest.mark.parametrize("suite,artifact", [("maxprinciple", "surface_t0.csv"), ("boundary", "boundary_decay.csv"), ("smoothing", "norms.csv")])
    def test_exit_code_follows_the_verdicts(self, config_file, out_dir, suite, artifact):
        code, _ = _run(["verify", "--config", str(config_file), "--out", str(out_dir), "--suite", suite])

        header, rows = read_csv(out_dir / "verdicts.csv")
        statuses = {row[header.index("status")] for row in rows}
        assert code == (1 if "fail" in statuses else 0)
        assert (out_dir / artifact).exists()
        listed = (out_dir / "manifest.txt").read_text(encoding="utf-8")
        assert "verdicts.csv " in listed

    @pytest.mark.slow
    def test_smoothing_writes_norms(self, config_file, out_dir):
        _run(["verify", "--config", str(config_file), "--out", str(out_dir), "--suite", "smoothing"])

        header, rows = read_csv(out_dir / "norms.csv")
        assert header[:2] == ["time", "l2w"]
        assert len(rows) == 2
        assert float(rows[0][0]) < float(rows[1][0])
        assert "norms.csv " in (out_dir / "manifest.txt").read_text(encoding="utf-8")

    @pytest.mark.slow
    def test_max_principle_checks_every_step(self, config_file, out_dir):
        _run(["verify", "--config", str(config_file), "--out", str(out_dir), "--suite", "maxprinciple"])

        _, rows = read_csv(out_dir / "verdicts.csv")
        assert [row[1] for row in rows if row[0] == "max_principle"] == ["|u|<=U", "u>=0"]
        assert "max_principle_levels 41" in (out_dir / "run_manifest.txt").read_text(encoding="utf-8")

    def test_converge_needs_three_levels(self, config_file, out_dir):
        code, text = _run(["converge", "--config", str(config_file), "--out", str(out_dir), "--levels", "2"])

        assert code == 2
        assert "--levels" in text
        assert not (out_dir / "convergence.csv").exists()

    def test_converge_memory_guard(self, config_file, out_dir):
        settings = replace(load_settings(config_file, None, out_dir).settings, max_unknowns=1000)
        outcome = converge(settings, 3)
        assert outcome.exit_code == 2
        assert "HESTON_DEGEN_MAX_UNKNOWNS" in outcome.error

    @pytest.mark.slow
    def test_converge_writes_rows(self, config_file, out_dir):
        code, _ = _run(["converge", "--config", str(config_file), "--out", str(out_dir), "--levels", "3"])

        assert code == 0
        header, rows = read_csv(out_dir / "convergence.csv")
        assert header[0] == "kind"
        assert {row[0] for row in rows} == {"time", "time-self", "space", "space-self"}
        assert len(rows) == 12
