import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spdelab import cli
from spdelab.io import (OutputError, format_number, read_csv, read_snapshots, write_csv,
                        write_snapshots)

CONTRACT = """
[grid]
n_interior = 32
[diffusion]
b = porous_floor(1.0, 1.0, 3.0)
[noise]
mode = multiplicative
seed = 3
[solver]
dt = 1e-3
T = 0.05
record_every = 10
[experiment]
paths = 8
"""

SHORT_ERGODIC = """
[grid]
n_interior = 32
[diffusion]
b = bounded(1.0, 2.0)
[noise]
mode = additive
[solver]
dt = 1e-3
T = 0.02
record_every = 10
[experiment]
paths = 8
"""


@given(arrays(np.float64, (7, 3), elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_csv_round_trip_is_exact(tmp_path_factory, data):
    path = tmp_path_factory.mktemp("csv") / "c.csv"
    cols = {"a": data[:, 0], "b": data[:, 1], "c": data[:, 2]}
    back = read_csv(write_csv(path, cols))
    for k in cols:
        np.testing.assert_array_equal(back[k], cols[k])
    assert float(format_number(0.1)) == 0.1


def test_snapshot_round_trip_and_validation(tmp_path, rng):
    snaps = rng.standard_normal((2, 3, 5))
    times = np.array([0.0, 0.1, 0.2])
    path = write_snapshots(tmp_path / "s.snap", snaps, times, 0.01, 10, 1.0)
    back = read_snapshots(path)
    np.testing.assert_array_equal(back["snapshots"], snaps)
    np.testing.assert_array_equal(back["times"], times)
    assert back["dt"] == 0.01 and back["record_every"] == 10
    raw = bytearray(path.read_bytes())
    bad = tmp_path / "bad.snap"
    bad.write_bytes(b"XXXX" + bytes(raw[4:]))
    with pytest.raises(OutputError, match="magic"):
        read_snapshots(bad)
    bad.write_bytes(bytes(raw[:-8]))
    with pytest.raises(OutputError, match="bytes"):
        read_snapshots(bad)
    bad.write_bytes(b"SP")
    with pytest.raises(OutputError, match="truncated"):
        read_snapshots(bad)
    with pytest.raises(OutputError):
        write_snapshots(tmp_path / "x.snap", snaps[0], times, 0.01, 10, 1.0)


def run_cli(tmp_path, text, command, out, *extra):
    cfg = tmp_path / f"{command}.ini"
    cfg.write_text(text)
    return cli.main([command, "--config", str(cfg), "--out", str(tmp_path / out), *extra])


def test_cli_pass_writes_outputs(tmp_path, capsys):
    assert run_cli(tmp_path, CONTRACT, "contract", "a") == 0
    out = tmp_path / "a"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["passed"] is True
    assert set(manifest["figures"]) == {"gap_l1.png", "gap_hminus.png"}
    for name in ("config.ini", "report.json", "gap_l1.csv", "u1.snap", "run.log"):
        assert (out / name).exists()
    assert (out / "gap_l1.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    assert "PASS contract" in capsys.readouterr().out
    report = json.loads((out / "report.json").read_text())
    assert report["provenance"]["config_hash"] == manifest["config_hash"]


def test_cli_failure_and_error_codes(tmp_path, capsys):
    assert run_cli(tmp_path, SHORT_ERGODIC, "ergodic", "f", "--no-figures") == 1
    assert "FAIL ergodic" in capsys.readouterr().out
    assert not list((tmp_path / "f").glob("*.png"))
    bad = CONTRACT.replace("paths = 8", "paths = 8\nbogus = 1")
    assert run_cli(tmp_path, bad, "contract", "e") == 2
    assert "unknown key" in capsys.readouterr().err
    assert cli.main(["contract", "--config", str(tmp_path / "none.ini"), "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        cli.main(["nonsense"])


def test_repeat_runs_are_byte_identical(tmp_path):
    assert run_cli(tmp_path, CONTRACT, "contract", "r1", "--no-figures") == 0
    assert run_cli(tmp_path, CONTRACT, "contract", "r2", "--no-figures", "--threads", "2") == 0
    m1 = json.loads((tmp_path / "r1" / "manifest.json").read_text())
    m2 = json.loads((tmp_path / "r2" / "manifest.json").read_text())
    assert m1["outputs"] == m2["outputs"]
    for name in m1["outputs"]:
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_seed_override_changes_hash(tmp_path):
    assert run_cli(tmp_path, CONTRACT, "contract", "s1", "--no-figures") == 0
    assert run_cli(tmp_path, CONTRACT, "contract", "s2", "--no-figures", "--seed", "4",
                   "--paths", "4") == 0
    m1 = json.loads((tmp_path / "s1" / "manifest.json").read_text())
    m2 = json.loads((tmp_path / "s2" / "manifest.json").read_text())
    assert m1["config_hash"] != m2["config_hash"] and m2["seed"] == 4


def test_negative_control_subcommand(tmp_path):
    assert run_cli(tmp_path, CONTRACT, "negative-control", "n", "--no-figures") == 0
