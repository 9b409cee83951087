import os

import pytest

from shefl.cli import run_cli
from shefl.config import (ConfigSyntaxError, ConfigValueError, ExperimentConfig, UnknownKeyError,
                          parse_config)
from shefl.metrics import read_metrics_csv

TINY = """
rounds = 3
algo = ["shefl", "fedavg"]
seeds = [0, 1]
num_clients = 20
hpc_count = 10
clients_per_round = 4
hpc_per_round = 2
[blobs]
n_train = 400
n_test = 100
"""


def test_empty_config_is_default_setup():
    cfg = parse_config("")
    assert cfg == ExperimentConfig()
    assert (cfg.num_clients, cfg.hpc_count, cfg.clients_per_round, cfg.hpc_per_round) == (100, 50, 10, 5)
    assert (cfg.M, cfg.k_frac, cfg.ratio_r, cfg.mu) == (5, 0.1, 5.0, 0.01)
    loc = cfg.local
    assert (loc.lr, loc.batch, loc.weight_decay, loc.iters, loc.decay, loc.decay_every) == \
        (1e-2, 16, 1e-3, 10, 0.99, 10)
    assert cfg.alpha == 0.6 and cfg.normalize and cfg.coefficients == "eq2"


def test_invariant_violation():
    with pytest.raises(ConfigValueError):
        parse_config("hpc_per_round = 11\nclients_per_round = 10\n")


def test_extreme_constraint_column():
    cfg = parse_config("ratio_r = 10\nk_frac = 0.02\n")
    assert cfg.ratio_r == 10.0 and cfg.k_frac == 0.02


def test_unknown_key():
    with pytest.raises(UnknownKeyError):
        parse_config("learning_rate = 0.1\n")
    with pytest.raises(UnknownKeyError):
        parse_config("[local]\nmomentum = 0.9\n")
    with pytest.raises(UnknownKeyError):
        parse_config("[server]\nx = 1\n")


def test_syntax_error_has_line_number():
    with pytest.raises(ConfigSyntaxError, match="line 2"):
        parse_config("rounds = 5\nM = = 3\n")


def test_scalar_algo_and_sections():
    cfg = parse_config('algo = "FedProx"\n[local]\nlr = 0.1\niters = 3\n')
    assert cfg.algo == ("fedprox",)
    assert cfg.local.lr == 0.1 and cfg.local.iters == 3


def test_bad_types_rejected():
    with pytest.raises(ConfigValueError):
        parse_config("normalize = 1\n")
    with pytest.raises(ConfigValueError):
        parse_config('algo = "fedbe"\n')


def test_cli_end_to_end(tmp_path):
    (tmp_path / "exp.toml").write_text(TINY)
    out = tmp_path / "out"
    assert run_cli(["--config", str(tmp_path / "exp.toml"), "--out", str(out), "--plot-data", "--trace"]) == 0
    rows = read_metrics_csv(out / "metrics.csv")
    assert len(rows) == 2 * 2 * 3
    summary = (out / "summary.csv").read_text().splitlines()
    assert summary[0].startswith("algo,runs,final_acc_mean")
    assert len(summary) == 3
    assert (out / "plot_shefl.dat").exists() and (out / "plot_fedavg.dat").exists()
    assert (out / "trace.bin").stat().st_size == sum(r.uplink_bytes for r in rows) + 12 * _uploads(rows)


def _uploads(rows):
    # TINY: shefl sends 2 HPC * 5 submodels + 2 LPC, fedavg 4 clients, per round
    return sum(12 if r.algo == "shefl" else 4 for r in rows)


def test_cli_rerun_is_byte_identical(tmp_path):
    (tmp_path / "exp.toml").write_text(TINY)
    for name in ("a", "b"):
        assert run_cli(["--config", str(tmp_path / "exp.toml"), "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()


def test_cli_refuses_nonempty_out(tmp_path, capsys):
    (tmp_path / "exp.toml").write_text(TINY)
    out = tmp_path / "out"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    assert run_cli(["--config", str(tmp_path / "exp.toml"), "--out", str(out)]) != 0
    assert "--force" in capsys.readouterr().err
    assert run_cli(["--config", str(tmp_path / "exp.toml"), "--out", str(out), "--force"]) == 0


def test_cli_overrides_match_config_edit(tmp_path):
    (tmp_path / "exp.toml").write_text(TINY)
    edited = TINY.replace('algo = ["shefl", "fedavg"]', 'algo = "fedens"').replace("seeds = [0, 1]", "seeds = [3, 4, 5]")
    (tmp_path / "edited.toml").write_text(edited)
    assert run_cli(["--config", str(tmp_path / "exp.toml"), "--out", str(tmp_path / "o1"),
                    "--algo", "fedens", "--seeds", "3,4,5"]) == 0
    assert run_cli(["--config", str(tmp_path / "edited.toml"), "--out", str(tmp_path / "o2")]) == 0
    a = (tmp_path / "o1/metrics.csv").read_bytes()
    assert a == (tmp_path / "o2/metrics.csv").read_bytes()
    assert len({r.seed for r in read_metrics_csv(tmp_path / "o1/metrics.csv")}) == 3


def test_cli_summary_std_over_seeds(tmp_path):
    (tmp_path / "exp.toml").write_text(TINY)
    assert run_cli(["--config", str(tmp_path / "exp.toml"), "--out", str(tmp_path / "o"),
                    "--algo", "fedavg", "--seeds", "1,2,3,4,5"]) == 0
    (line,) = (tmp_path / "o/summary.csv").read_text().splitlines()[1:]
    assert line.split(",")[1] == "5"


def test_cli_missing_data(tmp_path, capsys):
    (tmp_path / "exp.toml").write_text('dataset = "mnist"\nmodel = "mlp"\n')
    code = run_cli(["--config", str(tmp_path / "exp.toml"), "--out", str(tmp_path / "o"),
                    "--data-dir", str(tmp_path / "nowhere")])
    assert code != 0
    assert "missing data file" in capsys.readouterr().err


def test_cli_bad_config(tmp_path, capsys):
    (tmp_path / "exp.toml").write_text("M = 0\n")
    assert run_cli(["--config", str(tmp_path / "exp.toml"), "--out", str(tmp_path / "o")]) != 0
    assert "M must be" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    (tmp_path / "exp.toml").write_text(TINY.replace("rounds = 3", "rounds = 1"))
    proc = subprocess.run([sys.executable, "-m", "shefl", "--config", str(tmp_path / "exp.toml"),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True,
                          env=dict(os.environ, SHEFL_THREADS="2"))
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o/metrics.csv").exists()
