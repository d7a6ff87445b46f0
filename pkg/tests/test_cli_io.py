import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hebbclique import io
from hebbclique.cli import main
from hebbclique.clique import CliqueNetwork, retrieve_batch
from hebbclique.dynamics import ERASED, NetworkConfig, WeightMatrix
from hebbclique.experiments import random_messages

ROOT = Path(__file__).resolve().parents[1]
SPECS = ROOT / "specs"

SMALL_EXPERIMENT = {
    "network": {"n": 96, "c": 4, "ell": 24, "epsilon": 0.18},
    "channel": {"p_ins": 0.02, "p_del": 0.1},
    "M": 15,
    "n_it": 12,
    "seed": 11,
}


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj, indent=2) if not isinstance(obj, str) else obj)
    return p


def digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class TestParseSpec:
    def test_shipped_row1(self):
        spec = io.parse_spec(SPECS / "table1_row1.json")
        assert (spec.config.n, spec.config.c, spec.config.ell) == (2048, 8, 256)
        assert spec.config.epsilon == 0.18
        assert (spec.channel.p_ins, spec.channel.p_del) == (0.05, 0.2)
        assert (spec.M, spec.n_it) == (1000, 50)

    def test_shipped_files_parse(self):
        assert len(io.parse_spec(SPECS / "table1_desk.json")) == 2
        assert len(io.parse_spec(SPECS / "table1_full.json")) == 6
        assert io.parse_spec(SPECS / "curve_full.json").known_positions == 4
        noise = io.parse_spec(SPECS / "noise_example.json")
        assert noise.firing.sigma == 12

    def test_zero_epsilon_rejected(self, tmp_path):
        bad = json.loads(json.dumps(SMALL_EXPERIMENT))
        bad["network"]["epsilon"] = 0
        with pytest.raises(io.RangeError, match="epsilon"):
            io.parse_spec(write(tmp_path, "s.json", bad))

    def test_dimension_mismatch(self, tmp_path):
        text = (SPECS / "table1_row1.json").read_text().replace('"ell": 256', '"ell": 255')
        path = write(tmp_path, "s.json", text)
        with pytest.raises(io.DimensionError) as exc:
            io.parse_spec(path)
        assert exc.value.line == text.splitlines().index('    "ell": 255,') + 1
        assert f"{path}:{exc.value.line}:" in str(exc.value)

    def test_missing_field(self, tmp_path):
        bad = dict(SMALL_EXPERIMENT)
        del bad["n_it"]
        with pytest.raises(io.MissingFieldError, match="n_it"):
            io.parse_experiment(write(tmp_path, "s.json", bad))

    def test_out_of_range_probability(self, tmp_path):
        bad = json.loads(json.dumps(SMALL_EXPERIMENT))
        bad["channel"]["p_del"] = 1.5
        with pytest.raises(io.RangeError, match="p_del"):
            io.parse_spec(write(tmp_path, "s.json", bad))

    def test_wrong_type(self, tmp_path):
        bad = dict(SMALL_EXPERIMENT, M="many")
        with pytest.raises(io.SpecError, match="'M'"):
            io.parse_spec(write(tmp_path, "s.json", bad))

    def test_broken_json_has_line(self, tmp_path):
        with pytest.raises(io.SpecError) as exc:
            io.parse_spec(write(tmp_path, "s.json", '{\n  "n": 3,\n  oops\n}'))
        assert exc.value.line == 3

    def test_rows_inherit_shared_fields(self, tmp_path):
        doc = {k: v for k, v in SMALL_EXPERIMENT.items() if k not in ("M", "n_it")}
        doc["rows"] = [{"M": 5, "n_it": 3}, {"M": 6, "n_it": 4, "seed": 2}]
        specs = io.parse_table1(write(tmp_path, "s.json", doc))
        assert [(s.M, s.n_it, s.seed) for s in specs] == [(5, 3, 11), (6, 4, 2)]

    def test_spec_hash_is_canonical(self, tmp_path):
        a = write(tmp_path, "a.json", SMALL_EXPERIMENT)
        b = write(tmp_path, "b.json", json.dumps(dict(reversed(list(SMALL_EXPERIMENT.items())))))
        assert io.spec_hash(a) == io.spec_hash(b)


class TestSerialization:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.booleans())
    def test_weights_round_trip(self, seed, loops):
        rng = np.random.default_rng(seed)
        W = WeightMatrix(20, self_loops=loops)
        for _ in range(rng.integers(1, 30)):
            W.hebbian_update(rng.random(20) < 0.3, float(rng.uniform(0.05, 0.6)))
        cfg = NetworkConfig(20, 4, 5, 0.18, self_loops=loops)
        text = json.dumps(io.weights_to_dict(W, cfg))
        W2, cfg2 = io.weights_from_dict(json.loads(text))
        assert W2 == W and cfg2 == cfg
        assert W2.transient().keys() == W.transient().keys()
        for k, v in W.transient().items():
            assert abs(W2.transient()[k] - v) <= 1e-12
        assert np.array_equal(W2.consolidated_edges(), W.consolidated_edges())

    def test_clique_round_trip(self):
        net = CliqueNetwork(4, 16).store_many(random_messages(30, 4, 16, np.random.default_rng(0)))
        assert io.clique_from_dict(json.loads(json.dumps(io.clique_to_dict(net)))) == net

    def test_rejects_foreign_files(self):
        with pytest.raises(io.SpecError):
            io.weights_from_dict({"format": "other"})
        with pytest.raises(io.SpecError):
            io.clique_from_dict({"format": io.CLIQUE_FORMAT, "version": 99})

    def test_message_csv(self, tmp_path):
        msgs = np.array([[1, ERASED, 3], [0, 2, ERASED]])
        io.write_messages(tmp_path / "m.csv", msgs)
        assert (tmp_path / "m.csv").read_text() == "1,ERASED,3\n0,2,ERASED\n"
        assert np.array_equal(io.read_messages(tmp_path / "m.csv", 3), msgs)
        with pytest.raises(io.DimensionError):
            io.read_messages(tmp_path / "m.csv", 4)


class TestEmit:
    def test_empty_results(self, tmp_path):
        m = io.emit_results({"t.csv": (["a", "b"], [])}, tmp_path,
                            io.RunManifest("table1", 1, "abc"))
        assert (tmp_path / "t.csv").read_text() == "a,b\n"
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["outputs"] == ["t.csv"] == m.outputs
        assert manifest["seed"] == 1 and manifest["spec_hash"] == "abc"

    def test_io_failure_has_path(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OSError, match=str(blocker)):
            io.emit_results({"t.csv": (["a"], [])}, blocker / "sub", io.RunManifest("x", 0, None))


class TestCli:
    def test_help_documents_flags(self, capsys):
        for cmd in (["noise"], ["learn"], ["recall"], ["clique", "store"], ["clique", "recall"],
                    ["trace"], ["table1"], ["curve"]):
            with pytest.raises(SystemExit) as exc:
                main(cmd + ["--help"])
            assert exc.value.code == 0
            out = capsys.readouterr().out
            for flag in ("--seed", "--out", "--spec", "--threads"):
                assert flag in out

    def test_unknown_flag_fails(self):
        with pytest.raises(SystemExit) as exc:
            main(["table1", "--no-such-flag"])
        assert exc.value.code == 2

    def test_spec_error_exit_code(self, tmp_path, capsys):
        bad = json.loads(json.dumps(SMALL_EXPERIMENT))
        bad["network"]["ell"] = 23
        code = main(["table1", "--spec", str(write(tmp_path, "s.json", bad)),
                     "--out", str(tmp_path / "o")])
        assert code == 2
        assert "n = c*ell" in capsys.readouterr().err

    def test_runtime_error_exit_code(self, tmp_path):
        spec = write(tmp_path, "s.json", SMALL_EXPERIMENT)
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert main(["table1", "--spec", str(spec), "--out", str(blocker / "o")]) == 3

    def test_noise(self, tmp_path, capsys):
        assert main(["noise", "--spec", str(SPECS / "noise_example.json"), "--pmf",
                     "--out", str(tmp_path)]) == 0
        result = json.loads(capsys.readouterr().out)
        assert set(result) == {"p_ins", "p_del"}
        for name in ("pmf_signal.csv", "pmf_no_signal.csv"):
            lines = (tmp_path / name).read_text().splitlines()
            assert lines[0] == "value,probability"
            assert abs(sum(float(l.split(",")[1]) for l in lines[1:]) - 1) < 1e-9

    def test_trace(self, tmp_path, capsys):
        assert main(["trace", "--schedule", "0111", "--epsilon", "0.18"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "iteration,coactive,pre,post"
        assert lines[2] == "2,1,0.18,0.04103238310578061"
        assert main(["trace", "--seed", "3", "--out", str(tmp_path)]) == 0
        assert len((tmp_path / "trace.csv").read_text().splitlines()) == 51

    def test_learn_and_recall(self, tmp_path):
        spec = write(tmp_path, "s.json", dict(SMALL_EXPERIMENT, channel={"p_ins": 0, "p_del": 0}))
        assert main(["generate", "--c", "4", "--ell", "24", "--count", "10", "--erase", "2",
                     "--seed", "4", "--out", str(tmp_path / "data")]) == 0
        assert main(["learn", "--spec", str(spec), "--data", str(tmp_path / "data/messages.csv"),
                     "--out", str(tmp_path / "net")]) == 0
        assert main(["recall", "--network", str(tmp_path / "net/network.json"),
                     "--probes", str(tmp_path / "data/probes.csv"),
                     "--out", str(tmp_path / "rec")]) == 0
        msgs = io.read_messages(tmp_path / "data/messages.csv")
        probes = io.read_messages(tmp_path / "data/probes.csv")
        lines = (tmp_path / "rec/completions.csv").read_text().splitlines()
        assert lines[0] == "cluster_0,cluster_1,cluster_2,cluster_3"
        found = np.array([[int(v) for v in l.split(",")] for l in lines[1:]])
        # noise-free learning past consolidation stores exactly the clique network
        net = CliqueNetwork(4, 24).store_many(msgs)
        assert np.array_equal(found, retrieve_batch(net, probes))
        assert np.mean(np.all(found == msgs, axis=1)) >= 0.8

    def test_clique_store_and_recall(self, tmp_path):
        assert main(["generate", "--c", "4", "--ell", "24", "--count", "10", "--erase", "2",
                     "--seed", "4", "--out", str(tmp_path)]) == 0
        assert main(["clique", "store", "--data", str(tmp_path / "messages.csv"),
                     "--c", "4", "--ell", "24", "--out", str(tmp_path / "net")]) == 0
        for tie in ("lowest_index", "keep_all"):
            assert main(["clique", "recall", "--network", str(tmp_path / "net/clique.json"),
                         "--probes", str(tmp_path / "probes.csv"), "--tie-policy", tie,
                         "--out", str(tmp_path / tie)]) == 0
        msgs = io.read_messages(tmp_path / "messages.csv")
        probes = io.read_messages(tmp_path / "probes.csv")
        expected = retrieve_batch(CliqueNetwork(4, 24).store_many(msgs), probes)
        found = io.read_messages(tmp_path / "lowest_index/completions.csv", header=True)
        assert np.array_equal(found, expected)
        # the one ambiguous probe (two stored messages share its known symbols) stays erased
        kept = io.read_messages(tmp_path / "keep_all/completions.csv", header=True)
        assert (kept == ERASED).any(axis=1).sum() == 1

    def test_erased_sentinel_in_output(self, tmp_path):
        net = CliqueNetwork(3, 4)
        io.save_json(tmp_path / "c.json", io.clique_to_dict(net))
        (tmp_path / "p.csv").write_text("1,ERASED,2\n")
        assert main(["clique", "recall", "--network", str(tmp_path / "c.json"),
                     "--probes", str(tmp_path / "p.csv"), "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o/completions.csv").read_text().splitlines()[1] == "1,ERASED,2"

    def test_table1_and_curve_are_byte_identical(self, tmp_path):
        spec = write(tmp_path, "s.json", dict(SMALL_EXPERIMENT, trials=2))
        curve = write(tmp_path, "c.json", {"network": SMALL_EXPERIMENT["network"],
                                           "M_grid": [20, 60], "known_positions": 2,
                                           "trials": 2, "seed": 3})
        for cmd, s, files in (("table1", spec, ["table1.csv", "table1_trials.csv"]),
                              ("curve", curve, ["curve.csv", "curve_trials.csv"])):
            assert main([cmd, "--spec", str(s), "--out", str(tmp_path / "a"), "--threads", "1"]) == 0
            assert main([cmd, "--spec", str(s), "--out", str(tmp_path / "b"), "--threads", "2"]) == 0
            for f in files:
                assert digest(tmp_path / "a" / f) == digest(tmp_path / "b" / f)
        head = (tmp_path / "a/table1.csv").read_text().splitlines()[0]
        assert head == "n_it,M,connections,added,erased"
        manifest = json.loads((tmp_path / "a/manifest.json").read_text())
        assert manifest["outputs"] == ["curve.csv", "curve_trials.csv"]
        assert manifest["spec_hash"] == io.spec_hash(curve)

    def test_console_script(self):
        out = subprocess.run([sys.executable, "-m", "hebbclique.cli", "trace", "--schedule", "1"],
                             capture_output=True, text=True, check=True).stdout
        assert out.splitlines()[1] == "1,1,0.18,0.04103238310578061"
