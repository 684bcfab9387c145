"""Experiment harness: reports, artifacts, determinism, CLI behavior."""
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from crqpuf import (
    AttackModel,
    ConfigError,
    ImperfectionConfig,
    PolynomialModel,
    StageError,
    attack,
    blochsim,
    harness,
    parse_crpdb,
    parse_fingerprint,
    parse_message,
    parse_model,
)
from crqpuf.cli import main as cli_main

SMALL = dict(root_seed=3, n=6, L=12, grid=8, shots=300, holdout=5, reps=3, degree=6)


def small_cfg(**over):
    return harness.ExperimentConfig(**{**SMALL, **over})


class TestConfig:
    def test_defaults_match_protocol_scale(self):
        cfg = harness.ExperimentConfig()
        assert (cfg.n, cfg.L, cfg.shots, cfg.holdout, cfg.reps) == (27, 30, 2000, 15, 5)
        assert cfg.degree == 10 and cfg.k == 1.0 and not cfg.two_sided

    def test_json_round_trip(self):
        cfg = small_cfg(chain="grouped", k=1.5, two_sided=True,
                        imperfections=ImperfectionConfig(eps=0.01))
        back = harness.config_from_json(harness.config_to_json(cfg))
        assert back == cfg

    def test_partial_config(self):
        cfg = harness.config_from_json('{"n": 5, "k": 2}')
        assert cfg.n == 5 and cfg.k == 2.0 and cfg.L == 30

    def test_partial_imperfections_merge(self):
        cfg = harness.config_from_json('{"imperfections": {"eps": 0.03}}')
        assert cfg.imperfections.eps == 0.03
        assert cfg.imperfections.depol_hi == blochsim.DEFAULT_IMPERFECTIONS.depol_hi

    def test_rejects_unknown_fields(self):
        with pytest.raises(ConfigError):
            harness.config_from_json('{"shotz": 100}')
        with pytest.raises(ConfigError):
            harness.config_from_json('{"imperfections": {"sigma": 1}}')

    def test_rejects_bad_values(self):
        with pytest.raises(ConfigError):
            harness.ExperimentConfig(reps=1)
        with pytest.raises(ConfigError):
            harness.ExperimentConfig(k=-1.0)
        with pytest.raises(ConfigError):
            harness.ExperimentConfig(shots=0)
        with pytest.raises(ConfigError):
            harness.config_from_json('{"n": true}')
        with pytest.raises(ConfigError):
            harness.config_from_json('{"n": 2.5}')
        with pytest.raises(ConfigError):
            harness.config_from_json('not json')

    def test_chain_selectors(self):
        assert harness.resolve_chain(None) is None
        assert harness.resolve_chain("grouped").axes == ("X", "X", "Y", "Y")
        assert harness.resolve_chain(("Y", "X")).axes == ("Y", "X")
        with pytest.raises(ConfigError):
            harness.resolve_chain("zigzag")
        with pytest.raises(ConfigError):
            harness.resolve_chain(("Q",))
        with pytest.raises(ConfigError):
            harness.ExperimentConfig(chain="zigzag")


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    out = tmp_path_factory.mktemp("a1d")
    cfg = small_cfg()
    return cfg, harness.run_attack_1d(cfg, str(out)), out


class TestAttack1D:
    def test_report_shape_and_consistency(self, run):
        cfg, rep, _ = run
        assert rep.experiment == "attack-1d" and rep.chain == ("Y",)
        assert len(rep.challenges) == cfg.holdout
        for kind in ("forged", "honest", "impostor"):
            accepted = [row[kind]["accepted"] for row in rep.challenges]
            assert rep.rates[kind] == sum(accepted) / cfg.holdout
        for row in rep.challenges:
            assert row["sigma"] >= 0.0 and row["mu"] >= 0.0
        assert rep.fit["rmse"] > 0.0

    def test_artifacts_parse_back(self, run):
        cfg, rep, out = run
        for name in rep.artifacts:
            assert (out / name).exists()
        fp = parse_fingerprint((out / "fingerprint.json").read_text())
        db = parse_crpdb((out / "crpdb.json").read_text())
        model = parse_model((out / "model_1d.json").read_text())
        assert fp.n == db.n == model.n == cfg.n
        assert db.m == cfg.reps and db.shots == cfg.shots
        assert model.metadata == {"L": cfg.L, "shots": cfg.shots, "seed": cfg.root_seed}

    def test_report_json_matches_memory(self, run):
        _, rep, out = run
        on_disk = json.loads((out / "report_1d.json").read_text())
        assert on_disk == rep.to_obj()

    def test_csv_shape(self, run):
        cfg, _, out = run
        lines = (out / "report_1d.csv").read_text().strip().split("\n")
        assert lines[0].startswith("index,mu,sigma,forged_avg_hd")
        assert len(lines) == cfg.holdout + 1
        for line in lines[1:]:
            cells = line.split(",")
            assert len(cells) == 9
            int(cells[0])
            for cell in cells[1:]:
                float(cell)

    def test_byte_determinism_across_dirs(self, run, tmp_path):
        cfg, _, out = run
        harness.run_attack_1d(cfg, str(tmp_path))
        for name in os.listdir(out):
            assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


class TestAttack2D:
    def test_training_chain_forgery_succeeds(self, tmp_path):
        # (X, Y) chain: reduction is the identity, forgery should sail through
        cfg = small_cfg(chain="training", grid=15, shots=1000, degree=8, holdout=6)
        rep = harness.run_attack_2d(cfg, str(tmp_path))
        assert rep.experiment == "attack-2d" and rep.chain == ("X", "Y")
        assert rep.rates["forged"] >= 0.6
        assert (tmp_path / "model_2d.json").exists()
        model = parse_model((tmp_path / "model_2d.json").read_text())
        assert model.kind == "poly2d"
        assert model.metadata["G"] == cfg.grid

    def test_explicit_chain_argument_wins(self, tmp_path):
        cfg = small_cfg()
        rep = harness.run_attack_2d(cfg, str(tmp_path),
                                    chain=blochsim.GateChain(("Y", "X"), True))
        assert rep.chain == ("Y", "X")

    def test_default_chain_is_grouped(self, tmp_path):
        rep = harness.run_attack_2d(small_cfg(), str(tmp_path))
        assert rep.chain == ("X", "X", "Y", "Y")

    def test_backend_has_no_effect_on_bytes(self, tmp_path):
        from crqpuf import _kernels
        if not _kernels.HAS_NUMBA:
            pytest.skip("numba not installed")
        cfg = small_cfg(chain="grouped")
        before = _kernels.get_backend()
        try:
            _kernels.set_backend("numba")
            harness.run_attack_2d(cfg, str(tmp_path / "nb"))
            _kernels.set_backend("numpy")
            harness.run_attack_2d(cfg, str(tmp_path / "np"))
        finally:
            _kernels.set_backend(before)
        for name in os.listdir(tmp_path / "nb"):
            assert (tmp_path / "np" / name).read_bytes() == \
                (tmp_path / "nb" / name).read_bytes()


class TestFig4:
    def test_row_counts_and_format(self, tmp_path):
        cfg = small_cfg(n=3)
        rep = harness.run_fig4(cfg, str(tmp_path))
        lines = (tmp_path / "fig4.csv").read_text().strip().split("\n")
        assert lines[0] == "qubit,theta,measured_mean,fitted_value"
        assert len(lines) - 1 == cfg.n * (cfg.L + 500)
        dense = [l for l in lines[1:] if ",," in l]
        assert len(dense) == cfg.n * 500
        assert rep.artifacts == ("fig4.csv", "fig4_report.json")

    def test_ideal_device_matches_law(self, tmp_path):
        cfg = small_cfg(n=2, shots=4000, imperfections=ImperfectionConfig.ideal())
        harness.run_fig4(cfg, str(tmp_path))
        bound = 3.0 * 0.5 / math.sqrt(cfg.shots)
        for line in (tmp_path / "fig4.csv").read_text().strip().split("\n")[1:]:
            cells = line.split(",")
            if cells[2] == "":
                continue
            theta, measured = float(cells[1]), float(cells[2])
            assert abs(measured - (1.0 - math.sin(theta)) / 2.0) <= bound

    def test_default_qubits_are_distinct(self, tmp_path):
        cfg = small_cfg(n=2, shots=2000)
        harness.run_fig4(cfg, str(tmp_path))
        curves = {0: [], 1: []}
        for line in (tmp_path / "fig4.csv").read_text().strip().split("\n")[1:]:
            cells = line.split(",")
            if cells[2] != "":
                curves[int(cells[0])].append(float(cells[2]))
        gap = np.max(np.abs(np.array(curves[0]) - np.array(curves[1])))
        assert gap > 1.0 / 31.0


class TestBaselines:
    def test_rates_and_determinism(self, tmp_path):
        cfg = small_cfg(n=10, shots=500)
        rep = harness.run_baselines(cfg, str(tmp_path / "x"))
        assert set(rep.rates) == {"honest", "impostor"}
        assert rep.chain == ("Y",)
        rep2 = harness.run_baselines(cfg, str(tmp_path / "y"))
        assert rep2.rates == rep.rates
        assert (tmp_path / "x" / "baselines_report.json").read_bytes() == \
            (tmp_path / "y" / "baselines_report.json").read_bytes()

    def test_honest_beats_impostor_at_scale(self, tmp_path):
        cfg = harness.ExperimentConfig(root_seed=1, n=27, holdout=8)
        rep = harness.run_baselines(cfg, str(tmp_path))
        assert rep.rates["honest"] > rep.rates["impostor"]


class TestMitm:
    @pytest.fixture()
    def staged(self, tmp_path):
        cfg = small_cfg()
        out = str(tmp_path)
        harness.run_qgen(cfg, out)
        harness.run_enroll(cfg, out)
        harness.run_learn_1d(cfg, out)
        return cfg, out, tmp_path

    def test_transcript_shape_and_rate(self, staged):
        cfg, out, path = staged
        rep = harness.run_mitm_demo(cfg, out)
        lines = (path / "transcript.jsonl").read_text().strip().split("\n")
        assert len(lines) == 3 * cfg.holdout
        kinds = [parse_message(l)["type"] for l in lines]
        assert kinds == ["challenge", "response", "decision"] * cfg.holdout
        # composed stages replicate the one-shot pipeline's forged rate
        ref = harness.run_attack_1d(cfg, str(path / "ref"))
        assert abs(rep.rates["forged"] - ref.rates["forged"]) <= 0.1

    def test_untrained_model_collapses(self, staged):
        cfg, out, path = staged
        trained = harness.run_mitm_demo(cfg, out).rates["forged"]
        coef = np.zeros(cfg.degree + 1)
        coef[0] = 0.5
        flat = AttackModel(
            "poly1d", cfg.degree, (PolynomialModel("poly1d", cfg.degree, coef),) * cfg.n,
            {"L": cfg.L, "shots": 0, "seed": 0},
        )
        (path / "model_1d.json").write_text(attack.serialize_model(flat))
        collapsed = harness.run_mitm_demo(cfg, out).rates["forged"]
        assert collapsed < trained

    def test_missing_artifacts_fail_at_startup(self, tmp_path):
        with pytest.raises(StageError) as ei:
            harness.run_mitm_demo(small_cfg(), str(tmp_path))
        assert ei.value.stage == "startup"
        assert "crpdb.json" in str(ei.value)

    def test_stage_tags_on_run_learn(self, tmp_path):
        with pytest.raises(StageError) as ei:
            harness.run_learn_1d(small_cfg(), str(tmp_path))
        assert ei.value.stage == "startup"


class TestCLI:
    def _ok(self, capsys, args):
        rc = cli_main(args)
        captured = capsys.readouterr()
        assert rc == 0, captured.err
        return json.loads(captured.out)

    def test_qgen_enroll_learn_mitm(self, capsys, tmp_path):
        out = str(tmp_path)
        base = ["--seed", "3", "--out", out]
        got = self._ok(capsys, ["qgen", "--n", "6"] + base)
        assert got["written"] == ["fingerprint.json"]
        got = self._ok(capsys, ["enroll", "--holdout", "4", "--reps", "3",
                                "--shots", "200"] + base)
        assert got["records"] == 4
        got = self._ok(capsys, ["learn-1d", "--grid", "12", "--shots", "200",
                                "--degree", "6"] + base)
        assert "rmse" in got["fit"]
        got = self._ok(capsys, ["mitm"] + base)
        assert set(got["rates"]) == {"forged"}

    def test_attack_1d_reports_rates(self, capsys, tmp_path):
        got = self._ok(capsys, ["attack-1d", "--seed", "3", "--n", "5",
                                "--grid", "10", "--holdout", "4", "--reps", "3",
                                "--shots", "200", "--degree", "5",
                                "--out", str(tmp_path)])
        assert set(got["rates"]) == {"forged", "honest", "impostor"}

    def test_grid_flag_maps_per_command(self, capsys, tmp_path):
        self._ok(capsys, ["attack-2d", "--seed", "1", "--n", "4", "--grid", "7",
                          "--holdout", "3", "--reps", "3", "--shots", "150",
                          "--degree", "4", "--out", str(tmp_path)])
        report = json.loads((tmp_path / "report_2d.json").read_text())
        assert report["config"]["grid"] == 7
        assert report["config"]["L"] == 30  # untouched default

    def test_config_file_with_flag_override(self, capsys, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({**SMALL, "chain": "training"}))
        self._ok(capsys, ["attack-2d", "--config", str(cfg_file),
                          "--shots", "200", "--out", str(tmp_path / "w")])
        report = json.loads((tmp_path / "w" / "report_2d.json").read_text())
        assert report["config"]["shots"] == 200
        assert report["chain"] == ["X", "Y"]

    def test_error_object_on_failure(self, capsys, tmp_path):
        rc = cli_main(["mitm", "--out", str(tmp_path)])
        captured = capsys.readouterr()
        assert rc == 1 and captured.out == ""
        err = json.loads(captured.err)["error"]
        assert err["type"] == "StageError" and err["stage"] == "startup"

    def test_bad_config_value(self, capsys, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text('{"reps": 1}')
        rc = cli_main(["enroll", "--config", str(cfg_file), "--out", str(tmp_path)])
        captured = capsys.readouterr()
        assert rc == 1
        assert json.loads(captured.err)["error"]["type"] == "ConfigError"

    def test_usage_error_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as ei:
            cli_main(["attack-1d", "--bogus"])
        assert ei.value.code == 2

    def test_console_script_entry(self, tmp_path):
        out = subprocess.run(
            [sys.executable, "-m", "crqpuf", "qgen", "--seed", "1", "--n", "2",
             "--out", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert out.returncode == 0, out.stderr
        assert json.loads(out.stdout)["device_id"] == "device-1"
