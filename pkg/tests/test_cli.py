import numpy as np
import pytest
import yaml

from altham import cli
from altham.experiments import PRESETS, ExperimentConfig, build_model, preset, run_repetition
from altham.models import Graph, write_edge_list


def write_config(path, data):
    path.write_text(yaml.safe_dump(data))
    return str(path)


def small_altmin(out):
    return {"kind": "altmin", "seed": 3, "model": {"type": "well", "n": 6, "n_anchors": 3},
            "family": {"type": "sparse_hamming"}, "run": {"L": 8, "K": 3}, "output_dir": str(out)}


class TestPresets:
    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_round_trip(self, name):
        cfg = preset(name)
        again = ExperimentConfig.model_validate(yaml.safe_load(yaml.safe_dump(cfg.model_dump(mode="json"))))
        assert again == cfg

    def test_fig5a(self):
        cfg = preset("fig5a")
        assert cfg.model.type == "well" and cfg.model.n == 12 and cfg.model.n_anchors == 10
        assert cfg.families[0].type == "sparse_hamming"
        assert cfg.run["K"] == 3 and cfg.run["L"] == 8

    def test_fig6a(self):
        cfg = preset("fig6a")
        assert cfg.model.type == "aklt" and cfg.model.n == 8
        assert cfg.run["initial"] == "uniform_product"
        assert cfg.run["schedules"] == ["standard", "hybrid", "altered"]

    def test_fig1a(self):
        cfg = preset("fig1a")
        assert (cfg.model.type, cfg.model.n) == ("qmc", 12)
        assert cfg.run["stride"] == 50
        assert (cfg.run["source"], cfg.run["target"]) == ("base", "altered")

    def test_fig8a_three_families(self):
        assert [f.type for f in preset("fig8a").families] == ["local", "sparse_hamming", "sparse_band"]

    def test_fig9a_full(self):
        assert preset("fig9a").run["L"] == 6
        assert preset("fig9a", full=True).run["L"] == 10

    def test_unknown(self):
        with pytest.raises(KeyError):
            preset("fig7z")

    def test_emit_config_loadable(self, capsys):
        assert cli.main(["preset", "fig5a", "--emit-config"]) == 0
        data = yaml.safe_load(capsys.readouterr().out)
        assert ExperimentConfig.model_validate(data) == preset("fig5a")


class TestSchema:
    def test_unknown_top_level_key(self):
        with pytest.raises(ValueError):
            ExperimentConfig.model_validate({"kind": "altmin", "model": {"type": "grover", "n": 3},
                                             "run": {"L": 1, "K": 1}, "colour": "red"})

    def test_unknown_run_key(self, tmp_path, capsys):
        data = small_altmin(tmp_path / "out")
        data["run"]["bogus"] = 1
        assert cli.main(["run", write_config(tmp_path / "c.yaml", data)]) == 1
        err = capsys.readouterr().err.strip()
        assert "run.bogus" in err and len(err.splitlines()) == 1

    def test_missing_model_n(self, tmp_path, capsys):
        data = small_altmin(tmp_path / "out")
        del data["model"]["n"]
        assert cli.main(["run", write_config(tmp_path / "c.yaml", data)]) == 1
        assert "model" in capsys.readouterr().err

    def test_malformed_leaves_no_artifacts(self, tmp_path):
        out = tmp_path / "out"
        path = tmp_path / "c.yaml"
        path.write_text("kind: altmin\nmodel: [unclosed\n")
        assert cli.main(["run", str(path), "--out-dir", str(out)]) == 1
        assert not out.exists()

    def test_model_run_mismatch(self, tmp_path):
        data = {"kind": "anneal", "model": {"type": "maxcut", "n": 4, "degree": 3},
                "output_dir": str(tmp_path / "out")}
        assert cli.main(["run", write_config(tmp_path / "c.yaml", data)]) == 1
        assert not (tmp_path / "out").exists()


class TestExitCodes:
    def test_dimension_cap(self, tmp_path, capsys):
        data = {"kind": "model-dump", "model": {"type": "aklt", "n": 6}, "max_dim": 100,
                "output_dir": str(tmp_path / "out")}
        assert cli.main(["run", write_config(tmp_path / "c.yaml", data)]) == 3
        assert "dimension cap" in capsys.readouterr().err

    def test_numerical_failure(self, tmp_path, monkeypatch, capsys):
        def boom(*a, **k):
            raise np.linalg.LinAlgError("eigh did not converge")

        monkeypatch.setattr(cli, "run_repetition", boom)
        data = {"kind": "model-dump", "model": {"type": "aklt", "n": 3}, "output_dir": str(tmp_path / "out")}
        assert cli.main(["run", write_config(tmp_path / "c.yaml", data)]) == 2
        assert "numerical failure" in capsys.readouterr().err
        assert not (tmp_path / "out").exists()


class TestRuns:
    def test_altmin_manifest_copy_count(self, tmp_path, capsys):
        out = tmp_path / "out"
        assert cli.main(["run", write_config(tmp_path / "c.yaml", small_altmin(out))]) == 0
        man = yaml.safe_load((out / "manifest.yaml").read_text())
        assert man["results"]["physical_copy_count"] == 9841
        assert man["master_seed"] == 3
        assert man["config"]["run"]["L"] == 8
        assert "trace_sparse_hamming_rep0.csv" in man["artifacts"]
        assert "physical_copy_count=9841" in capsys.readouterr().out

    def test_determinism(self, tmp_path):
        data = small_altmin(tmp_path / "a")
        data["repetitions"] = 2
        data["run"]["mode"] = "trajectory"
        path = write_config(tmp_path / "c.yaml", data)
        assert cli.main(["run", path]) == 0
        assert cli.main(["run", path, "--out-dir", str(tmp_path / "b"), "--workers", "2"]) == 0
        for name in ("trace_sparse_hamming_rep0.csv", "trace_sparse_hamming_rep1.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert cli.main(["run", path, "--out-dir", str(tmp_path / "c"), "--seed", "4"]) == 0
        assert (tmp_path / "a" / "trace_sparse_hamming_rep0.csv").read_bytes() != \
            (tmp_path / "c" / "trace_sparse_hamming_rep0.csv").read_bytes()

    def test_profile_row_count(self, tmp_path):
        data = {"kind": "profile", "model": {"type": "qmc", "n": 8, "degree": 3},
                "run": {"stride": 50}, "output_dir": str(tmp_path / "out")}
        assert cli.main(["run", write_config(tmp_path / "c.yaml", data)]) == 0
        lines = (tmp_path / "out" / "profile_local_rep0.csv").read_text().splitlines()
        assert len(lines) - 1 == -(-256 // 50)

    @pytest.mark.slow
    def test_profile_qmc12(self, tmp_path):
        cfg = preset("fig1a")
        res = run_repetition(cfg, 0)
        res.files["profile_local_rep0.csv"](tmp_path / "p.csv")
        assert len((tmp_path / "p.csv").read_text().splitlines()) - 1 == 82

    def test_variational_and_anneal(self, tmp_path, capsys):
        data = {"kind": "variational", "model": {"type": "aklt", "n": 3},
                "run": {"L": 3, "initial": "uniform_product"}, "output_dir": str(tmp_path / "v")}
        assert cli.main(["run", write_config(tmp_path / "v.yaml", data)]) == 0
        data = {"kind": "anneal", "model": {"type": "well", "n": 6, "n_anchors": 2},
                "run": {"steps": 500, "record_every": 100}, "output_dir": str(tmp_path / "a")}
        assert cli.main(["run", write_config(tmp_path / "a.yaml", data)]) == 0
        out = capsys.readouterr().out.splitlines()
        assert sum(line.startswith("variational schedule=") for line in out) == 3
        assert any(line.startswith("anneal mode=chain") for line in out)
        assert len((tmp_path / "a" / "anneal_chain_rep0.csv").read_text().splitlines()) == 6

    def test_theory_check(self, tmp_path, capsys):
        data = {"kind": "theory-check", "model": {"type": "maxcut", "n": 4, "degree": 3},
                "family": [{"type": "local"}, {"type": "sparse_band", "t": 2}],
                "run": {"n_samples": 500, "n_states": 2}, "output_dir": str(tmp_path / "t")}
        assert cli.main(["run", write_config(tmp_path / "t.yaml", data)]) == 0
        assert (tmp_path / "t" / "theory_local_rep0.csv").exists()
        assert (tmp_path / "t" / "theory_sparse_band_t2_rep0.csv").exists()

    def test_model_dump_from_edges(self, tmp_path, capsys):
        write_edge_list(Graph.cycle(4), tmp_path / "g.txt")
        data = {"kind": "model-dump", "model": {"type": "edges", "path": str(tmp_path / "g.txt")},
                "output_dir": str(tmp_path / "m")}
        assert cli.main(["run", write_config(tmp_path / "m.yaml", data)]) == 0
        assert "ground_energy=0" in capsys.readouterr().out
        assert (tmp_path / "m" / "edges.txt").exists()

    def test_instance_seed(self):
        spec = ExperimentConfig.model_validate({"kind": "model-dump",
                                                "model": {"type": "maxcut", "n": 8, "degree": 3, "seed": 5}})
        a = build_model(spec.model, 0).graph.edges
        b = build_model(spec.model, 1).graph.edges
        assert a == b
