from pathlib import Path

import pytest

from leakage_lab.cli import main, manifest_path
from leakage_lab.config import (
    ConfigError,
    RunConfig,
    load_config,
    parse_config,
    resolved_grid,
    resolved_trials,
    serialize_config,
)
from leakage_lab.experiments import CSV_COLUMNS

DATA = Path(__file__).parent / "data"
EXPERIMENTS = ["gauss-sweep", "nn-mia", "attr-infer", "counterexample"]


class TestConfig:
    def test_minimal_defaults(self, monkeypatch):
        monkeypatch.delenv("LEAKAGE_LAB_SEED", raising=False)
        cfg = parse_config('experiment = "gauss-sweep"\nseed = 4\n')
        assert cfg.seed == 4 and cfg.gauss.d == 20 and cfg.gauss.sigma2 == 1.0
        assert resolved_grid(cfg) == [50, 100, 200, 500, 1000, 2000, 5000, 10_000]
        assert resolved_trials(cfg) == 10_000

    def test_type_mismatch_names_line(self):
        with pytest.raises(ConfigError, match=r":2: trials expects int"):
            parse_config('experiment = "gauss-sweep"\ntrials = "ten"\n')

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match=r":3: unknown key 'depth' in \[gauss\]"):
            parse_config('experiment = "gauss-sweep"\n[gauss]\ndepth = 3\n')
        with pytest.raises(ConfigError, match=r":1: unknown key"):
            parse_config("colour = 1\n")
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config("[plot]\n")

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="missing required key 'experiment'"):
            parse_config("seed = 1\n")

    def test_bad_syntax_and_duplicates(self):
        with pytest.raises(ConfigError, match=r":2: cannot parse"):
            parse_config('experiment = "nn-mia"\nseed = 1 2\n')
        with pytest.raises(ConfigError, match=r":2: expected"):
            parse_config('experiment = "nn-mia"\nseed\n')
        with pytest.raises(ConfigError, match=r":2: duplicate"):
            parse_config('experiment = "nn-mia"\nexperiment = "nn-mia"\n')

    def test_semantic_validation(self):
        with pytest.raises(ConfigError, match="experiment must be"):
            parse_config('experiment = "plots"\n')
        with pytest.raises(ConfigError, match="n_grid"):
            parse_config('experiment = "nn-mia"\nn_grid = []\n')
        with pytest.raises(ConfigError, match="trials"):
            parse_config('experiment = "nn-mia"\ntrials = 0\n')

    def test_comments_and_booleans(self):
        cfg = parse_config('# run\nexperiment = "attr-infer"  # inline\n[attr]\ncsv_path = "a#b.csv"\n')
        assert cfg.attr.csv_path == "a#b.csv"
        assert parse_config("experiment = 'nn-mia'\n").experiment == "nn-mia"

    def test_round_trip(self):
        for name in EXPERIMENTS:
            text = (DATA / "configs" / f"{name}.cfg").read_text()
            cfg = parse_config(text)
            canonical = serialize_config(cfg)
            assert parse_config(canonical) == cfg
            assert serialize_config(parse_config(canonical)) == canonical

    def test_seed_from_environment(self, monkeypatch):
        monkeypatch.setenv("LEAKAGE_LAB_SEED", "77")
        assert parse_config('experiment = "nn-mia"\n').seed == 77
        assert parse_config('experiment = "nn-mia"\nseed = 3\n').seed == 3
        monkeypatch.setenv("LEAKAGE_LAB_SEED", "many")
        with pytest.raises(ConfigError):
            parse_config('experiment = "nn-mia"\n')

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="no such file"):
            load_config(tmp_path / "nope.cfg")

    def test_overrides(self):
        cfg = load_config(DATA / "configs" / "nn-mia.cfg", {"seed": 9, "trials": None})
        assert cfg.seed == 9 and cfg.trials == 200


class TestCli:
    @pytest.mark.parametrize("name", EXPERIMENTS)
    def test_golden_csv(self, name, tmp_path):
        out = tmp_path / f"{name}.csv"
        assert main(["run", "--config", str(DATA / "configs" / f"{name}.cfg"), "--out", str(out)]) == 0
        assert out.read_bytes() == (DATA / "golden" / f"{name}.csv").read_bytes()
        header = out.read_text().splitlines()[0]
        assert tuple(header.split(",")) == CSV_COLUMNS

    def test_subcommand_matches_run(self, tmp_path):
        cfg = str(DATA / "configs" / "gauss-sweep.cfg")
        main(["gauss-sweep", "--config", cfg, "--out", str(tmp_path / "a.csv")])
        main(["run", "--config", cfg, "--out", str(tmp_path / "b.csv")])
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_deterministic_and_manifest_reproduces(self, tmp_path):
        cfg = str(DATA / "configs" / "nn-mia.cfg")
        first, second = tmp_path / "1.csv", tmp_path / "2.csv"
        main(["run", "--config", cfg, "--out", str(first)])
        main(["run", "--config", cfg, "--out", str(second), "--threads", "3"])
        assert first.read_bytes() == second.read_bytes()
        manifest = manifest_path(first)
        text = manifest.read_text()
        assert "git_describe" in text and "seed = 3" in text
        rerun = tmp_path / "3.csv"
        assert main(["run", "--config", str(manifest), "--out", str(rerun)]) == 0
        assert rerun.read_bytes() == first.read_bytes()

    def test_flag_overrides(self, tmp_path):
        out = tmp_path / "c.csv"
        main(["counterexample", "--seed", "1", "--trials", "100", "--out", str(out)])
        assert load_config(manifest_path(out)).seed == 1
        assert load_config(manifest_path(out)).trials == 100

    def test_wrong_experiment_for_subcommand(self, tmp_path, capsys):
        code = main(["nn-mia", "--config", str(DATA / "configs" / "gauss-sweep.cfg"), "--out", str(tmp_path / "x.csv")])
        err = capsys.readouterr().err
        assert code == 2 and len(err.strip().splitlines()) == 1

    def test_pipeline_failure_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text('experiment = "attr-infer"\nn_grid = [50000]\n[attr]\npool_size = 100\n')
        assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x.csv")]) == 1
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and "exceeds the pool size" in err[0]

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text('experiment = "gauss-sweep"\ntrials = "ten"\n')
        assert main(["run", "--config", str(bad)]) == 2
        assert "bad.cfg:2" in capsys.readouterr().err

    def test_bounds_subcommand(self, capsys):
        assert main(["bounds", "--gap", "0.4", "--loss-max", "2", "--sigma2", "1", "--mi", "0.10023"]) == 0
        assert capsys.readouterr().out == (DATA / "golden" / "bounds.txt").read_text()
        assert main(["bounds", "--gap", "0.4", "--sigma2", "1", "--r-max", "0.1"]) == 1
        assert main(["bounds"]) == 1

    def test_help_lists_defaults(self, capsys):
        with pytest.raises(SystemExit):
            main(["--help"])
        out = capsys.readouterr().out
        assert "models_per_n = 10" in out and "LEAKAGE_LAB_SEED" in out

    def test_default_gauss_schema(self, tmp_path):
        out = tmp_path / "g.csv"
        assert main(["gauss-sweep", "--trials", "5", "--out", str(out)]) == 0
        rows = out.read_text().splitlines()
        assert len(rows) == 9 and rows[1].startswith("gauss-sweep,50,bayes,")
