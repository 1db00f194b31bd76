import json

import numpy as np
import pytest

from orgmarl import harness as Hn
from orgmarl import oracle as O
from orgmarl.cli import main
from orgmarl.config import RunConfig, load_config, parse_config_text


def tiny(tmp_path, **kw):
    base = dict(episodes=48, horizon=8, eval_horizon=8, out=str(tmp_path), name="r")
    base.update(kw)
    return RunConfig(**base)


# --- config ------------------------------------------------------------------------


def test_config_roundtrip_text():
    cfg = RunConfig(phi=0.3, algo="iac", seed=9)
    assert RunConfig(**parse_config_text(cfg.to_text())) == cfg


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# comment\nphi = 0.7\nepisodes = 100  # trailing\nprivate-noise = 0.1\n")
    cfg = load_config(path, episodes="200")
    assert cfg.phi == 0.7 and cfg.episodes == 200 and cfg.private_noise == 0.1


@pytest.mark.parametrize("bad", [dict(phi=1.5), dict(gamma=1.0), dict(private_noise=0.9), dict(alpha=4.0),
                                 dict(algo="dqn"), dict(episodes=0), dict(algo="iac,iac,iac")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        RunConfig(**bad)


def test_config_unknown_key():
    with pytest.raises(ValueError, match="unknown config key"):
        parse_config_text("learning_rate = 3\n")


def test_seats():
    assert RunConfig(n_agents=3, algo="IA2C_plus").seats() == ("ia2c+",) * 3
    assert RunConfig(algo="ia2c+,iac").seats() == ("ia2c+", "iac")


# --- runs ----------------------------------------------------------------------------


def test_run_writes_artifacts(tmp_path):
    cfg = tiny(tmp_path, checkpoint_every=16)
    out = Hn.run(cfg)
    d = tmp_path / "r"
    assert (d / "config.txt").read_text() == cfg.to_text()
    header, records = Hn.read_runlog(d / "runlog.jsonl")
    assert header["config"] == cfg.to_dict()
    assert header["version"] == Hn.version_string()
    assert [r["episode"] for r in records] == list(range(48))
    assert set(records[0]) >= {"returns", "critic_loss", "entropy", "prediction_accuracy", "policy"}
    cert = json.loads((d / "certification.json").read_text())
    assert cert["config"] == cfg.to_dict() and cert["certification"]["status"] in ("optimal", "suboptimal")
    assert out.exit_code in (Hn.EXIT_OPTIMAL, Hn.EXIT_SUBOPTIMAL)
    snaps = sorted(p.name for p in (d / "checkpoints").iterdir())
    assert "ep0000016_agent0_actor.txt" in snaps and "ep0000048_agent1_belief.txt" in snaps


def test_checkpoint_reloads(tmp_path):
    from orgmarl import nn

    Hn.run(tiny(tmp_path, checkpoint_every=48))
    net = nn.loads((tmp_path / "r" / "checkpoints" / "ep0000048_agent0_critic.txt").read_text())
    assert net.shape == (7, 32, 9)


def test_run_is_byte_identical(tmp_path):
    names = ("runlog.jsonl", "certification.json", "config.txt")
    Hn.run(tiny(tmp_path))
    first = [(tmp_path / "r" / n).read_bytes() for n in names]
    Hn.run(tiny(tmp_path))
    assert first == [(tmp_path / "r" / n).read_bytes() for n in names]


def test_diverged_run_keeps_partial_log(tmp_path):
    out = Hn.run(tiny(tmp_path, divergence_loss=1e-12))
    assert out.status == "diverged" and out.exit_code == Hn.EXIT_DIVERGED
    assert (tmp_path / "r" / "runlog.jsonl").exists()
    assert json.loads((tmp_path / "r" / "certification.json").read_text())["certification"] is None


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("ORGMARL_WORKERS", "2")
    assert Hn.worker_count(8) == 2
    monkeypatch.setenv("ORGMARL_WORKERS", "16")
    assert Hn.worker_count(3) == 3


# --- sweeps --------------------------------------------------------------------------


def test_sweep_parallelism_does_not_change_results(tmp_path, monkeypatch):
    base = RunConfig(episodes=16, horizon=6, eval_horizon=6)
    one = Hn.sweep_noise(base, [0.0, 0.3], runs=2, workers=1, out_dir=tmp_path / "one")
    monkeypatch.setenv("ORGMARL_WORKERS", "8")
    many = Hn.sweep_noise(base, [0.0, 0.3], runs=2, workers=8, out_dir=tmp_path / "many")
    assert (tmp_path / "one" / "sweep.csv").read_text() == (tmp_path / "many" / "sweep.csv").read_text()
    assert (tmp_path / "one" / "sweep_runs.csv").read_text() == (tmp_path / "many" / "sweep_runs.csv").read_text()
    assert one.counts() == many.counts()
    assert all(0 <= c <= 2 for c in one.counts())
    lines = (tmp_path / "one" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "level,successes,runs,mean_gap" and len(lines) == 3


def test_sweep_rejects_unsorted_levels():
    with pytest.raises(ValueError):
        Hn.sweep_noise(RunConfig(episodes=8), [0.3, 0.1], runs=1)
    with pytest.raises(ValueError):
        Hn.sweep_noise(RunConfig(episodes=8), [0.1, 0.9], runs=1)


# --- exports ------------------------------------------------------------------------


def test_smooth():
    np.testing.assert_allclose(Hn.smooth([1, 2, 3, 4], window=2), [1, 1.5, 2.5, 3.5])
    assert Hn.smooth([]).size == 0


def test_export_empty_input(tmp_path):
    paths = Hn.emit_plot_data([], tmp_path)
    assert paths["reward_vs_episode"].read_text() == "group,episode,mean,std,runs\n"
    assert paths["success_vs_noise"].read_text() == "source,level,successes,runs,mean_gap\n"


def test_export_mean_std_and_idempotent(tmp_path):
    dirs = []
    for s in range(3):
        cfg = tiny(tmp_path / "runs", name=f"s{s}", seed=s)
        Hn.run(cfg)
        dirs.append(tmp_path / "runs" / f"s{s}")
    (tmp_path / "runs" / "junk").mkdir()
    (tmp_path / "runs" / "junk" / "runlog.jsonl").write_text("{not json\n")
    dirs.append(tmp_path / "runs" / "junk")
    paths = Hn.emit_plot_data(dirs, tmp_path / "x")
    first = {k: p.read_bytes() for k, p in paths.items()}
    Hn.emit_plot_data(dirs, tmp_path / "x")
    assert first == {k: p.read_bytes() for k, p in paths.items()}

    rows = paths["reward_vs_episode"].read_text().splitlines()
    assert len(rows) == 1 + 48
    curves = []
    for d in dirs[:3]:
        _, recs = Hn.read_runlog(d / "runlog.jsonl")
        curves.append(Hn.smooth([sum(r["returns"]) for r in recs]))
    group, ep, mean, std, runs = rows[10].split(",")
    assert int(ep) == 9 and int(runs) == 3
    assert float(mean) == pytest.approx(np.mean([c[9] for c in curves]), abs=1e-12)
    assert float(std) == pytest.approx(np.std([c[9] for c in curves]), abs=1e-12)


def test_export_crossover_matches_oracle(tmp_path):
    path = Hn.emit_plot_data([], tmp_path)["crossover"]
    grid = O.policy_crossover(Hn.CROSSOVER_BETAS, Hn.CROSSOVER_PHIS, 4, 9 / 4)
    lines = path.read_text().splitlines()[1:]
    assert [line.split(",")[3] for line in lines] == [w for *_, w in grid.rows()]


# --- CLI -------------------------------------------------------------------------------


def test_cli_gradcheck(capsys):
    assert main(["gradcheck", "--nets", "2", "--hidden", "8"]) == 0
    assert "pass" in capsys.readouterr().out


def test_cli_oracle_crossover(capsys):
    assert main(["oracle", "crossover", "--H", "4", "--betas", "3,5", "--phis", "0.5"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["beta,phi,H,winner", "3.0,0.5,4,pi1", "5.0,0.5,4,pi0"]


def test_cli_oracle_certify(capsys):
    code = main(["oracle", "certify", "--H", "20", "--policy", "group,group,group", "--policy", "group,group,group"])
    assert code == 1
    assert json.loads(capsys.readouterr().out)["status"] == "suboptimal"


def test_cli_oracle_table(capsys):
    assert main(["oracle", "table", "--H", "6"]) == 0
    header, row = capsys.readouterr().out.splitlines()
    assert header == "optimal,balance_only,group_only,optimal_policy"


def test_cli_run_and_export(tmp_path, capsys):
    code = main(["run", "--episodes", "16", "--horizon", "6", "--set", "eval_horizon=6", "--seed", "3",
                 "--private-noise", "0.1", "--out", str(tmp_path), "--name", "cli"])
    assert code in (0, 1)
    cfg_text = (tmp_path / "cli" / "config.txt").read_text()
    assert "private_noise = 0.1\n" in cfg_text and "seed = 3\n" in cfg_text
    assert main(["export", str(tmp_path / "cli"), "--out", str(tmp_path / "exp")]) == 0
    assert (tmp_path / "exp" / "reward_vs_episode.csv").exists()


def test_cli_usage_error(capsys):
    assert main(["run", "--phi", "2.0", "--episodes", "1"]) == Hn.EXIT_USAGE
    assert "phi" in capsys.readouterr().err


def test_cli_config_file(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("episodes = 8\nhorizon = 4\neval_horizon = 4\n")
    assert main(["run", "--config", str(path), "--out", str(tmp_path), "--name", "f", "--algo", "iac"]) in (0, 1)
    assert "algo = iac\n" in (tmp_path / "f" / "config.txt").read_text()
