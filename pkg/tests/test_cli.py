import math
import subprocess
import sys

import pytest

from fimnet.cli import main, read_config

CONFIG = """\
# small end-to-end run
kron_power = 4
target_edges = 40
rate_low = 0.2
rate_high = 0.5
n_cascades = 200
eps = 0.5
passes = 30
batch_size = 32
"""


def snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


def pipeline(root, capsys):
    """Run every command into ``root/out`` and return files plus stdout."""
    cfg = root / "cfg.txt"
    cfg.write_text(CONFIG)
    (root / "queries.txt").write_text("S=0 T=10\nS=0,1 T=5 eta=0.2\n")
    out = root / "out"
    base = ["--config", str(cfg), "--out", str(out)]
    printed = []
    commands = [
        ["generate"],
        ["train"],
        ["infer", "--sweep", "--set", f"truth={out / 'graph.txt'}"],
        ["estimate", "--set", f"queries={root / 'queries.txt'}",
         "--set", f"gt_cascades={out / 'cascades.txt'}", "--set", "gt_resamples=200"],
        ["estimate", "--set", f"queries={root / 'queries.txt'}", "--set", "estimate_on=model"],
        ["errorbound", "--eps", "1", "--gamma", "0,1"],
        ["errorbound", "--eps-err", "0.1", "--c", "2", "--t-star", "10"],
        ["eval", "--set", f"truth={out / 'graph.txt'}"],
    ]
    for cmd in commands:
        assert main(cmd[:1] + base + cmd[1:]) == 0, cmd
        printed.append(capsys.readouterr().out)
    return snapshot(out), printed


class TestPipeline:
    def test_outputs_and_rerun_determinism(self, tmp_path, capsys):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        files_a, out_a = pipeline(tmp_path / "a", capsys)
        files_b, out_b = pipeline(tmp_path / "b", capsys)
        assert set(files_a) == {
            "graph.txt", "cascades.txt", "model.txt", "loss.csv", "report.txt",
            "edges.txt", "metrics.txt", "sweep.csv", "spread.csv", "eval.txt",
        }
        assert files_a == files_b
        # paths differ between runs, so compare printed numbers only
        assert [o.replace(str(tmp_path / "a"), "") for o in out_a] == [
            o.replace(str(tmp_path / "b"), "") for o in out_b
        ]
        assert "local_error=0.36787944117144233" in out_a[5]
        assert "lower=6.321205588285577 upper=20.0" in out_a[6]
        assert files_a["spread.csv"].decode().count("\n") == 3

    def test_seed_changes_outputs(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(CONFIG)
        for seed in (1, 2):
            assert main(["generate", "--config", str(cfg), "--seed", str(seed),
                         "--out", str(tmp_path / str(seed))]) == 0
        assert (tmp_path / "1" / "graph.txt").read_bytes() != (tmp_path / "2" / "graph.txt").read_bytes()

    def test_workers_do_not_change_outputs(self, tmp_path):
        cfg = tmp_path / "cfg.txt"
        cfg.write_text(CONFIG)
        for w in (1, 2):
            assert main(["generate", "--config", str(cfg), "--workers", str(w),
                         "--out", str(tmp_path / str(w))]) == 0
        assert snapshot(tmp_path / "1") == snapshot(tmp_path / "2")


class TestExitCodes:
    def test_missing_input_is_io_error(self, tmp_path):
        assert main(["train", "--out", str(tmp_path), "--set", "cascades=absent.txt"]) == 2

    def test_malformed_input_is_validation_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.txt"
        bad.write_text("meta n=3 T=1\n0:0,1:5\n")
        assert main(["train", "--out", str(tmp_path), "--set", f"cascades={bad}"]) == 1
        assert "bad.txt:2" in capsys.readouterr().err

    def test_bad_config_value(self, tmp_path):
        assert main(["generate", "--out", str(tmp_path), "--set", "kron_power=many"]) == 1

    def test_errorbound_ranges(self):
        assert main(["errorbound", "--eps-err", "0.1", "--c", "0.5", "--t-star", "1"]) == 1
        assert main(["errorbound", "--eps", "1", "--gamma", "-1"]) == 1
        assert main(["errorbound"]) == 1

    def test_usage_error(self):
        assert main(["nonsense"]) == 1

    def test_console_script(self, tmp_path):
        r = subprocess.run(
            [sys.executable, "-m", "fimnet.cli", "errorbound", "--eps", "0.5", "--gamma", "0.4"],
            capture_output=True, text=True,
        )
        assert r.returncode == 0
        value = float(r.stdout.strip().rsplit("=", 1)[1])
        assert value == pytest.approx(0.2 + math.exp(-0.2) - 1, rel=1e-12)


class TestConfigFile:
    def test_comments_and_errors(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("# header\na = 1  # trailing\n\nb=x=y\n")
        assert read_config(p) == {"a": "1", "b": "x=y"}
        p.write_text("a = 1\njunk\n")
        with pytest.raises(ValueError, match=":2"):
            read_config(p)
