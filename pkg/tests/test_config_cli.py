import json
import math
from pathlib import Path

import numpy as np
import pytest

from sllb.cli import main
from sllb.config import ConfigError, load_config
from sllb.noise import Control, LevyMeasure, path_seed
from sllb.persist import (
    read_control_csv, read_field_binary, read_jump_path_csv,
    write_control_csv, write_field_binary, write_field_csv,
    write_jump_path_csv,
)
from sllb.noise import JumpPath
from sllb.spectral import build_grid, random_field

REPO = Path(__file__).resolve().parents[1]
STANDARD = REPO / "configs" / "standard1d.toml"
DECAY = REPO / "configs" / "decay1d.toml"


class TestConfig:
    def test_loads_standard(self):
        setup = load_config(STANDARD)
        assert setup.grid.modes_per_dim == 8
        assert setup.nu.n_atoms == 2
        assert setup.solver.T == 0.5
        assert setup.control is not None
        assert setup.control.values.shape == (4, 2)

    def test_seed_override(self):
        setup = load_config(STANDARD, seed_override=99)
        assert setup.solver.seed == 99

    def test_unknown_key_rejected(self, tmp_path):
        text = STANDARD.read_text().replace("eps = 1.0", "epsilon = 1.0")
        bad = tmp_path / "bad.toml"
        bad.write_text(text)
        with pytest.raises(ConfigError, match="epsilon"):
            load_config(bad)

    def test_unknown_section_rejected(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text(STANDARD.read_text() + "\n[plotting]\nstyle = 1\n")
        with pytest.raises(ConfigError, match="plotting"):
            load_config(bad)

    def test_malformed_toml_reports_line(self, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("[grid\ndim = 1\n")
        with pytest.raises(ConfigError, match="line 1"):
            load_config(bad)

    def test_density_expression_measure(self, tmp_path):
        cfg = tmp_path / "density.toml"
        cfg.write_text("""
[grid]
dim = 1
modes_per_dim = 4
colloc_per_dim = 8

[physics]
m0_constant = [0.5, 0.0, 0.0]

[noise]
density_expr = "abs(l)"
quadrature_nodes = 8

[solver]
T = 0.1
dt = 1e-3
""")
        setup = load_config(cfg)
        assert setup.nu.n_atoms == 8
        assert setup.nu.mass == pytest.approx(
            sum(abs(-1 + (j + 0.5) / 4) * 0.25 for j in range(8)))

    def test_constants_flow_into_solver(self, tmp_path):
        cfg = tmp_path / "const.toml"
        cfg.write_text("""
[grid]
dim = 1
modes_per_dim = 4
colloc_per_dim = 8

[physics]
m0_constant = [0.5, 0.0, 0.0]
kappa1 = 2.0
gamma = 0.5

[solver]
T = 0.1
dt = 1e-3
""")
        setup = load_config(cfg)
        assert setup.solver.constants.kappa1 == 2.0
        assert setup.solver.constants.gamma == 0.5
        assert setup.nu.n_atoms == 0


class TestPersistRoundTrips:
    def test_field_binary(self, tmp_path):
        grid = build_grid(2, 4, 8)
        f = random_field(grid, np.random.default_rng(0))
        write_field_binary(f, tmp_path / "f.fld")
        back = read_field_binary(tmp_path / "f.fld", grid)
        assert np.array_equal(back.coeffs, f.coeffs)
        other = build_grid(1, 4, 8)
        with pytest.raises(ValueError):
            read_field_binary(tmp_path / "f.fld", other)

    def test_field_csv_header(self, tmp_path):
        grid = build_grid(2, 2, 4)
        f = random_field(grid, np.random.default_rng(1))
        write_field_csv(f, tmp_path / "f.csv")
        head = (tmp_path / "f.csv").read_text().split("\n")[0]
        assert head == "mode_index,k1,k2,c1,c2,c3"

    def test_jump_path_csv(self, tmp_path):
        p = JumpPath(1.0, np.array([0.25, 0.5]), np.array([0.5, -0.4]))
        write_jump_path_csv(p, tmp_path / "p.csv")
        back = read_jump_path_csv(tmp_path / "p.csv", 1.0)
        assert np.array_equal(back.times, p.times)
        assert np.array_equal(back.marks, p.marks)

    def test_control_csv(self, tmp_path):
        nu = LevyMeasure.from_atoms([(0.5, 1.0), (-0.4, 0.5)])
        theta = Control(np.array([0.0, 0.3, 1.0]),
                        np.array([[1.5, 0.5], [2.0, 1.0]]))
        write_control_csv(theta, nu, tmp_path / "c.csv")
        back = read_control_csv(tmp_path / "c.csv", nu, 1.0)
        assert np.array_equal(back.t_edges, theta.t_edges)
        assert np.array_equal(back.values, theta.values)


class TestCli:
    def test_simulate_decay_matches_closed_form(self, tmp_path):
        out = tmp_path / "run"
        assert main(["simulate", "--config", str(DECAY),
                     "--out", str(out)]) == 0
        rows = (out / "trajectory.csv").read_text().strip().split("\n")
        terminal_l2 = float(rows[-1].split(",")[1])
        expect = math.sqrt(math.pi * math.exp(-0.2) / (2 - math.exp(-0.2)))
        assert abs(terminal_l2 - expect) < 1e-6
        for name in ("jumps.csv", "energy.csv", "terminal.fld",
                     "run_manifest.json"):
            assert (out / name).exists()

    def test_simulate_reruns_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", "--config", str(STANDARD), "--out", str(a)]) == 0
        assert main(["simulate", "--config", str(STANDARD), "--out", str(b)]) == 0
        for name in ("trajectory.csv", "jumps.csv", "energy.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
        ma = json.loads((a / "run_manifest.json").read_text())
        mb = json.loads((b / "run_manifest.json").read_text())
        assert ma["outputs"] == mb["outputs"]

    def test_malformed_config_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[grid\n")
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(bad), "--out", str(out)]) == 2
        assert "line 1" in capsys.readouterr().err

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text(STANDARD.read_text().replace(
            "n_samples = 50", "typo_key = 1"))
        assert main(["simulate", "--config", str(bad),
                     "--out", str(tmp_path / "o")]) == 2
        assert "typo_key" in capsys.readouterr().err

    def test_blowup_exits_3(self, tmp_path, capsys):
        text = STANDARD.read_text().replace(
            'scheme = "imex_euler"',
            'scheme = "imex_euler"\nblowup_guard = 1e-3')
        cfg = tmp_path / "guard.toml"
        cfg.write_text(text)
        assert main(["simulate", "--config", str(cfg),
                     "--out", str(tmp_path / "o")]) == 3
        assert "blow-up guard" in capsys.readouterr().err

    def test_skeleton_and_control_commands(self, tmp_path):
        for cmd in ("skeleton", "control"):
            out = tmp_path / cmd
            assert main([cmd, "--config", str(STANDARD),
                         "--out", str(out)]) == 0
            assert (out / "trajectory.csv").exists()
            assert (out / "control.csv").exists()
            assert (out / "run_manifest.json").exists()

    def test_rate_zero_cost_target(self, tmp_path):
        out = tmp_path / "rate"
        assert main(["rate", "--config", str(STANDARD),
                     "--out", str(out)]) == 0
        text = (out / "rate_report.txt").read_text()
        cost = float([ln for ln in text.splitlines()
                      if ln.startswith("cost:")][0].split(":")[1])
        assert cost <= 1e-9

    def test_verify_passes_on_standard_config(self, tmp_path):
        out = tmp_path / "verify"
        assert main(["verify", "--config", str(STANDARD),
                     "--out", str(out)]) == 0
        lines = (out / "verify.jsonl").read_text().strip().split("\n")
        recs = [json.loads(line) for line in lines]
        assert all(r["pass"] for r in recs)
        suites = {r["suite"] for r in recs}
        assert {"identity", "lipschitz", "energy"} <= suites

    def test_ensemble_matches_single_runs(self, tmp_path):
        out = tmp_path / "ens"
        assert main(["ensemble", "--config", str(STANDARD),
                     "--out", str(out), "--paths", "8"]) == 0
        setup_seed = load_config(STANDARD).solver.seed
        for i in range(8):
            single = tmp_path / f"single{i}"
            derived = path_seed(setup_seed, i)
            assert main(["simulate", "--config", str(STANDARD),
                         "--out", str(single), "--seed", str(derived)]) == 0
            assert ((out / f"path_{i:04d}.csv").read_bytes()
                    == (single / "trajectory.csv").read_bytes())

    def test_ensemble_worker_pool_same_output(self, tmp_path, monkeypatch):
        serial = tmp_path / "serial"
        parallel = tmp_path / "par"
        assert main(["ensemble", "--config", str(STANDARD),
                     "--out", str(serial), "--paths", "3"]) == 0
        monkeypatch.setenv("SLLB_WORKERS", "2")
        assert main(["ensemble", "--config", str(STANDARD),
                     "--out", str(parallel), "--paths", "3"]) == 0
        assert ((serial / "summary.csv").read_bytes()
                == (parallel / "summary.csv").read_bytes())

    def test_ldp_command(self, tmp_path):
        out = tmp_path / "ldp"
        cfg = REPO / "configs" / "ldp1d.toml"
        assert main(["ldp", "--config", str(cfg), "--out", str(out),
                     "--paths", "40"]) == 0
        recs = [json.loads(line) for line in
                (out / "ldp.jsonl").read_text().strip().split("\n")]
        assert all(r["suite"] == "ldp-slope" for r in recs)
        assert (out / "rate_report.txt").exists()

    def test_verify_failure_exits_4(self, tmp_path, monkeypatch, capsys):
        import sllb.cli as cli_mod
        from sllb.report import ExperimentReport

        def failing_suite(grid, h, n_samples, seed):
            rep = ExperimentReport(suite="identity", scenario="forced",
                                   seed=seed)
            rep.add(1.0, tolerance=0.0, passed=False)
            return rep

        monkeypatch.setattr(cli_mod, "identity_suite", failing_suite)
        out = tmp_path / "v"
        assert main(["verify", "--config", str(STANDARD),
                     "--out", str(out)]) == 4
        assert "verification failed" in capsys.readouterr().err
        assert (out / "verify.jsonl").exists()
        assert (out / "run_manifest.json").exists()

    def test_simulate_snapshot_files(self, tmp_path):
        text = STANDARD.read_text().replace(
            "n_samples = 50", "n_samples = 50\nwrite_snapshots = true")
        text = text.replace("snapshot_stride = 1", "snapshot_stride = 50")
        cfg = tmp_path / "snap.toml"
        cfg.write_text(text)
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        snaps = sorted(out.glob("snapshot_*.fld"))
        assert snaps
        setup = load_config(cfg)
        first = read_field_binary(snaps[0], setup.grid)
        assert first.coeffs.shape == (setup.grid.n_modes, 3)

    def test_manifest_contents(self, tmp_path):
        out = tmp_path / "m"
        assert main(["skeleton", "--config", str(STANDARD),
                     "--out", str(out)]) == 0
        man = json.loads((out / "run_manifest.json").read_text())
        assert man["command"] == "skeleton"
        assert man["kernel_backend"] in ("numba", "numpy")
        assert {e["path"] for e in man["outputs"]} == {
            "trajectory.csv", "control.csv", "terminal.fld"}
        for entry in man["outputs"]:
            assert len(entry["sha256"]) == 64
