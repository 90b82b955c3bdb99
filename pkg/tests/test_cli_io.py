import csv

import numpy as np
import pytest

from qnsch import runner
from qnsch.checkpoint import Checkpoint, read_checkpoint, write_checkpoint
from qnsch.cli import main
from qnsch.config import AUTO, RunConfig, defaults, parse_config
from qnsch.errors import CheckpointError, ConfigError

SMALL = ["scheme.n=16", "scheme.steps=20", "output.cadence=5", "output.snapshot_every=5"]


def _overrides(*extra):
    return [a for kv in list(SMALL) + list(extra) for a in ("--override", kv)]


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))


def test_parse_config_with_comments_and_types():
    cfg = parse_config("# comment\nscheme.n = 32\nphysics.level = target  # inline\ninit.mollify = no\n")
    assert cfg["scheme.n"] == 32 and cfg["physics.level"] == "target" and cfg["init.mollify"] is False
    assert cfg["scheme.dt"] == AUTO


@pytest.mark.parametrize("text,where", [
    ("scheme.n = 16\n  bogus.key = 1\n", "line 2, column 3"),
    ("scheme.n = 16\nscheme.n 32\n", "line 2, column 1"),
    ("physics.level = fluid\n", "line 1, column 17"),
    ("scheme.n = many\n", "line 1"),
])
def test_config_errors_report_location(text, where):
    with pytest.raises(ConfigError, match=where):
        parse_config(text)


def test_overrides_and_json_round_trip():
    cfg = RunConfig(defaults()).with_overrides(["scheme.steps = 7", "physics.delta=0.01"])
    assert cfg["scheme.steps"] == 7 and cfg["physics.delta"] == 0.01
    assert RunConfig.from_json(cfg.to_json()).values == cfg.values
    with pytest.raises(ConfigError):
        cfg.with_overrides(["nope=1"])
    with pytest.raises(ConfigError):
        RunConfig.from_json('{"nope": 1}')
    assert parse_config(cfg.dump()).values == cfg.values


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    rho = rng.standard_normal((8, 8))
    ck = Checkpoint(2, 8, 12, 0.125, '{"a": 1}', {"rho": rho, "prev_time": np.array([0.1])})
    path = tmp_path / "c.qck"
    write_checkpoint(path, ck)
    back = read_checkpoint(path)
    assert (back.dim, back.n, back.step, back.time, back.params) == (2, 8, 12, 0.125, '{"a": 1}')
    assert np.array_equal(back.array("rho"), rho)
    assert back.array("prev_time")[0] == 0.1
    with pytest.raises(CheckpointError):
        back.array("u0")


@pytest.mark.parametrize("where", [0, 10, -20, "truncate"])
def test_corrupt_checkpoints_are_rejected(tmp_path, where):
    path = tmp_path / "c.qck"
    write_checkpoint(path, Checkpoint(2, 4, 1, 0.0, "{}", {"rho": np.ones((4, 4))}))
    data = bytearray(path.read_bytes())
    if where == "truncate":
        data = data[: len(data) // 2]
    else:
        data[where] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError):
        read_checkpoint(path)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "absent.qck")


def test_simulate_resume_plot_cycle(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["simulate", "--quiet", "--out", str(out)] + _overrides("output.checkpoint_every=10")) == 0
    rows = _rows(out / "diagnostics.csv")
    assert rows[-1]["step"] == "20"
    assert (out / "summary.json").exists() and (out / "final.qck").exists()

    res = tmp_path / "res"
    rc = main(["resume", "--quiet", str(out / "checkpoint_00000010.qck"), "--out", str(res)])
    assert rc == 0
    assert _rows(res / "diagnostics.csv")[-1] == rows[-1]

    assert main(["plot", "--quiet", str(out / "diagnostics.csv")]) == 0
    assert sorted(p.name for p in out.glob("*.gp")) == sorted(runner.PLOT_COLUMNS)


def test_grid_mismatch_on_resume(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--quiet", "--out", str(out)] + _overrides()) == 0
    assert main(["resume", "--quiet", str(out / "final.qck"), "--override", "scheme.n=32"]) == runner.EXIT_CHECKPOINT


def test_identical_configs_give_identical_csv(tmp_path):
    for name in ("a", "b"):
        assert main(["simulate", "--quiet", "--out", str(tmp_path / name)] + _overrides("init.velocity=0.1")) == 0
    assert (tmp_path / "a" / "diagnostics.csv").read_bytes() == (tmp_path / "b" / "diagnostics.csv").read_bytes()


def test_uniform_state_keeps_energy_constant(tmp_path):
    out = tmp_path / "flat"
    rc = main(["simulate", "--quiet", "--out", str(out)] + _overrides("init.amplitude=0", "physics.level=target"))
    assert rc == 0
    energies = [float(r["E_total"]) for r in _rows(out / "diagnostics.csv")]
    assert max(energies) - min(energies) <= 1e-14


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("scheme.n = 16\nwhat = 1\n")
    assert main(["simulate", "--quiet", "--config", str(bad)]) == runner.EXIT_USAGE
    assert main(["verify", "--quiet", "nonsense"]) == runner.EXIT_USAGE
    assert main(["verify", "--quiet", "operators", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "verify_report.json").exists()

    junk = tmp_path / "junk.qck"
    junk.write_bytes(b"not a checkpoint")
    assert main(["resume", "--quiet", str(junk)]) == runner.EXIT_CHECKPOINT

    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["plot", "--quiet", str(empty)]) == runner.EXIT_USAGE
    partial = tmp_path / "partial.csv"
    partial.write_text("step,time\n0,0.0\n")
    assert main(["plot", "--quiet", str(partial)]) == runner.EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == runner.EXIT_USAGE


def test_three_dimensional_smoke_run(tmp_path):
    out = tmp_path / "d3"
    rc = main(["simulate", "--quiet", "--out", str(out), "--override", "scheme.dim=3", "--override", "scheme.n=8",
               "--override", "scheme.steps=4", "--override", "output.cadence=2", "--override", "physics.beta=2"])
    assert rc == 0
    row = _rows(out / "diagnostics.csv")[-1]
    assert "momentum_z" in row and row["step"] == "4"
