import json
import re
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
import yaml
from hypothesis import given, strategies as st

import levycl
from levycl.cli import main
from levycl.config import (RunConfig, SolverSpec, StudySpec, build_scenario, dump_config,
                           load_config, parse_config)
from levycl.errors import ConfigError
from levycl.grid import read_csv
from levycl.noise import read_path

SHOCK = {
    "scenario": {"flux": {"label": "burgers", "u_bound": 1.0},
                 "u0": {"kind": "riemann", "left": 1.0, "right": 0.0, "x0": 0.0},
                 "domain": [-1.0, 2.0], "boundary": "extrapolate",
                 "sigma": None, "eta": None, "levy": {"atoms": []}},
    "study": {"resolutions": [64, 128, 256, 512], "n_paths": 1},
}
FROZEN = {
    "scenario": {"flux": {"label": "zero"}, "sigma": None, "eta": None},
    "solver": {"record_times": None},
    "diagnostics": {"n_cells": 32, "n_paths": 2, "xis": [0.1], "n_levels": 2},
}
SMALL_DIAG = {"diagnostics": {"n_cells": 32, "n_paths": 6, "n_levels": 2}}
SMALL_STUDY = {"study": {"resolutions": [16, 32], "n_paths": 4, "n_boot": 50},
               "solver": {"n_cells": 32, "record_times": [0.25, 0.5]}}


def write_cfg(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return str(p)


class TestConfig:
    def test_defaults_round_trip(self):
        rc = RunConfig()
        assert parse_config(yaml.safe_load(dump_config(rc))) == rc

    @given(cfl=st.floats(0.05, 1.0), T=st.sampled_from([0.25, 0.5, 1.0]),
           n_paths=st.integers(2, 1000), k=st.integers(0, 4), seed=st.integers(0, 2**31),
           adapted=st.booleans(), rt=st.one_of(st.none(), st.just((0.25,))))
    def test_round_trip_property(self, cfl, T, n_paths, k, seed, adapted, rt):
        rc = RunConfig(solver=SolverSpec(T=T, cfl=cfl, record_times=rt, jump_adapted=adapted),
                       study=StudySpec(resolutions=tuple(2 ** (5 + i) for i in range(k + 2)),
                                       n_paths=n_paths, seed_base=seed))
        assert parse_config(yaml.safe_load(dump_config(rc))) == rc

    @pytest.mark.parametrize("patch, field", [
        ({"scenario": {"eta": {"kind": "linear", "b": 1.0, "M": 4.0}}}, "scenario.eta.b"),
        ({"scenario": {"eta": {"kind": "linear", "b": -1.2, "M": 4.0}}}, "scenario.eta.b"),
        ({"scenario": {"flux": {"label": "kdv"}}}, "scenario.flux.label"),
        ({"scenario": {"sigma": {"kind": "linear", "a": 0.2, "M": 0.0}}}, "scenario.sigma.M"),
        ({"study": {"resolutions": [100, 200]}}, "study.resolutions"),
        ({"study": {"reference_factor": 2}}, "study.reference_factor"),
        ({"solver": {"flux": "eo"}}, "solver.flux"),
        ({"plots": {}}, "plots"),
        ({"scenario": {"boundary": "reflecting"}}, "scenario.boundary"),
    ])
    def test_validation_names_field(self, patch, field):
        with pytest.raises(ConfigError) as info:
            parse_config(patch)
        assert info.value.field == field

    def test_build_default_scenario(self):
        scen = build_scenario(RunConfig())
        assert scen.config.eta.lambda_star == 0.3 and scen.config.levy.total_mass == 1.0
        assert scen.config.record_times == (0.5,)
        assert build_scenario(RunConfig(), record_times=None).config.record_times is None

    def test_density_spec(self):
        rc = parse_config({"scenario": {"levy": {"atoms": [], "truncation_eps": 0.1,
                                                 "density": {"kind": "stable", "c": 0.1, "alpha": 0.5}}}})
        assert build_scenario(rc).config.levy.total_mass == pytest.approx(2 * 0.1 * 0.1 ** -0.5 / 0.5)

    def test_bad_yaml(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("scenario: [unclosed")
        with pytest.raises(ConfigError):
            load_config(p)

    @pytest.mark.parametrize("path", sorted((Path(__file__).parents[1] / "configs").glob("*.yaml")),
                             ids=lambda p: p.name)
    def test_shipped_configs_load(self, path):
        rc = load_config(path)
        assert build_scenario(rc).config.T > 0


class TestCli:
    def test_solve(self, tmp_path, capsys):
        out = tmp_path / "new" / "dir"
        cfg = write_cfg(tmp_path, {"solver": {"n_cells": 64, "record_times": [0.25, 0.5]}})
        assert main(["solve", "--config", cfg, "--out", str(out), "--seed", "3"]) == 0
        for name in ("snapshot_0000.csv", "snapshot_0001.csv"):
            x, u = read_csv(out / name)
            assert len(x) == len(u) == 64
        diag = (out / "diagnostics.csv").read_text().splitlines()
        assert diag[1] == "step,t,mass,bv,linf,l2"
        assert read_path(out / "noise_path.bin").seed == 3
        summary = json.loads((out / "solve.json").read_text())
        assert summary["seed"] == 3 and summary["version"] == levycl.__version__
        assert summary["max_linf"] <= 1.05 * summary["linf_bound"]

    def test_outputs_embed_hash_and_version(self, tmp_path):
        cfg = write_cfg(tmp_path, {"solver": {"n_cells": 32}})
        assert main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        digest = json.loads((tmp_path / "o" / "solve.json").read_text())["config_hash"]
        for f in (tmp_path / "o").iterdir():
            if f.suffix in (".csv", ".json", ".yaml"):
                text = f.read_text()
                assert digest in text and levycl.__version__ in text, f.name
        meta = json.loads((tmp_path / "o" / "solve.meta.json").read_text())
        assert "started" in meta and "started" not in (tmp_path / "o" / "solve.json").read_text()

    @pytest.mark.parametrize("patch, field", [
        ({"scenario": {"eta": {"kind": "linear", "b": 1.5, "M": 4.0}}}, "scenario.eta.b"),
        ({"scenario": {"flux": {"label": "kdv"}}}, "scenario.flux.label"),
    ])
    def test_solve_config_errors(self, tmp_path, capsys, patch, field):
        assert main(["solve", "--config", write_cfg(tmp_path, patch), "--out", str(tmp_path)]) == 2
        assert field in capsys.readouterr().err

    @pytest.mark.parametrize("argv", [["converge", "--selftest"], ["selftest"]])
    def test_selftest(self, capsys, argv):
        assert main(argv) == 0
        assert capsys.readouterr().out.strip() == "rate 0.5000"

    def test_converge_deterministic_shock(self, tmp_path, capsys):
        out = tmp_path / "missing"
        assert main(["converge", "--config", write_cfg(tmp_path, SHOCK), "--out", str(out)]) == 0
        rate = float(re.search(r"rate (\S+)", capsys.readouterr().out).group(1))
        assert rate >= 0.8
        lines = (out / "rate_study.csv").read_text().splitlines()
        assert lines[0].startswith("# levycl") and lines[1] == "dx,mean_error,std_error"
        payload = json.loads((out / "rate_study.json").read_text())
        assert payload["study"]["fitted_rate"] == pytest.approx(rate, abs=5e-5)
        assert "thresholds" in payload and payload["config"]["study"]["n_paths"] == 1

    def test_converge_noisy_small(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, SMALL_STUDY)
        assert main(["converge", "--config", cfg, "--out", str(tmp_path / "c")]) == 0
        payload = json.loads((tmp_path / "c" / "rate_study.json").read_text())
        assert payload["study"]["seeds"] == [0, 1, 2, 3]
        assert len(payload["study"]["per_path_errors"]) == 4

    def test_diagnose_frozen(self, tmp_path):
        assert main(["diagnose", "--config", write_cfg(tmp_path, FROZEN), "--out", str(tmp_path)]) == 0
        rep = json.loads((tmp_path / "diagnose.json").read_text())
        for name in ("mass", "l1", "bv", "linf"):
            mean = np.array(rep["ensemble"]["stats"][name]["mean"])
            assert np.all(mean == mean[0])
            assert np.all(np.array(rep["ensemble"]["stats"][name]["std_error"]) == 0)
        assert all(e["violation_rate"] == 0 for e in rep["entropy"])
        assert rep["time_continuity"]["C1"] == 0 and rep["time_continuity"]["C2"] == 0

    def test_diagnose_default_small(self, tmp_path, capsys):
        assert main(["diagnose", "--config", write_cfg(tmp_path, SMALL_DIAG), "--out", str(tmp_path)]) == 0
        rep = json.loads((tmp_path / "diagnose.json").read_text())
        assert max(e["violation_rate"] for e in rep["entropy"]) <= rep["thresholds"]["max_violation_rate"]
        assert rep["linf"]["ok"] and rep["seeds"] == list(range(6))
        assert len(rep["entropy"]) == 2 * 2

    def test_diagnose_single_path(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, {"diagnostics": {"n_paths": 1}})
        assert main(["diagnose", "--config", cfg, "--out", str(tmp_path)]) == 2
        assert "diagnostics.n_paths" in capsys.readouterr().err

    def test_blowup_exit_code(self, tmp_path, capsys, monkeypatch):
        from levycl import cli
        from levycl.errors import BlowUpError

        def boom(*a, **k):
            raise BlowUpError("non-finite state", step=7, seed=123)

        monkeypatch.setattr(cli, "solve_path", boom)
        assert main(["solve", "--out", str(tmp_path)]) == 3
        assert "seed=123" in capsys.readouterr().err

    def test_blowup_from_real_run(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, {"scenario": {"sigma": {"kind": "linear", "a": 60.0, "M": 4.0}},
                                   "solver": {"n_cells": 32}})
        assert main(["solve", "--config", cfg, "--out", str(tmp_path), "--seed", "5"]) == 3
        assert "seed=5" in capsys.readouterr().err

    def test_io_errors(self, tmp_path, capsys):
        assert main(["solve", "--config", str(tmp_path / "nope.yaml")]) == 4
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert main(["solve", "--out", str(blocker / "sub")]) == 4

    def test_byte_identical_reruns_and_threads(self, tmp_path):
        cfg = write_cfg(tmp_path, {**SMALL_STUDY, **SMALL_DIAG})
        dirs = []
        for i, threads in enumerate(("1", "1", "2")):
            d = tmp_path / f"run{i}"
            for cmd in ("solve", "converge", "diagnose"):
                assert main([cmd, "--config", cfg, "--out", str(d), "--threads", threads]) == 0
            dirs.append(d)
        names = sorted(p.name for p in dirs[0].iterdir() if ".meta." not in p.name)
        assert "diagnose.json" in names and "rate_study.json" in names
        for d in dirs[1:]:
            for n in names:
                assert (d / n).read_bytes() == (dirs[0] / n).read_bytes(), n
