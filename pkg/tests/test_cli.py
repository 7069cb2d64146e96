import json

import pytest

from swdrso.cli import affine_fit_r2, run


def run_cli(argv, capsys=None):
    code = run(argv)
    if capsys is not None:
        return code, capsys.readouterr()
    return code


def gen_args(path, n_sets=40, seed=0):
    return ["--seed", str(seed), "gen-data", "--output", str(path),
            "--n-sets", str(n_sets), "--classes", "3", "--dim", "4",
            "--n-min", "3", "--n-max", "6"]


def train_config(tmp_path, **kw):
    cfg = dict(alpha=0.5, lr=1e-2, epochs=2, batch_size=16,
               adversary=dict(K=3, rho=50.0, T=2, eta=0.1),
               d=6, H=6, R=4, d_in=4, n_classes=3)
    cfg.update(kw)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


class TestArgHandling:
    def test_unknown_subcommand_exits_nonzero(self):
        assert run_cli(["frobnicate"]) == 1

    def test_missing_required_flag_exits_nonzero(self):
        assert run_cli(["gen-data"]) == 1

    def test_missing_input_file_is_validation_error(self, tmp_path):
        cfg = train_config(tmp_path)
        code = run_cli(["--config", cfg, "train",
                        "--input", str(tmp_path / "nope.jsonl"),
                        "--checkpoint", str(tmp_path / "m.ckpt")])
        assert code == 1

    def test_bad_config_json_is_validation_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        data = tmp_path / "d.jsonl"
        run_cli(gen_args(data))
        code, out = run_cli(["--config", str(bad), "train", "--input", str(data),
                             "--checkpoint", str(tmp_path / "m.ckpt")], capsys)
        assert code == 1
        assert "not valid JSON" in out.err

    def test_unknown_config_key_is_validation_error(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"learning_rate": 0.1}))
        data = tmp_path / "d.jsonl"
        run_cli(gen_args(data))
        code, out = run_cli(["--config", str(cfg), "train", "--input", str(data),
                             "--checkpoint", str(tmp_path / "m.ckpt")], capsys)
        assert code == 1
        assert "bad training config" in out.err


class TestConfigPrecedence:
    def test_flag_beats_env(self, tmp_path, capsys, monkeypatch):
        data = tmp_path / "d.jsonl"
        run_cli(gen_args(data))
        flag_cfg = train_config(tmp_path, epochs=1)
        env_cfg = tmp_path / "env.json"
        env_cfg.write_text(json.dumps({"epochs": 3}))
        monkeypatch.setenv("SWDRSO_CONFIG", str(env_cfg))
        code, out = run_cli(["--config", flag_cfg, "train", "--input", str(data),
                             "--checkpoint", str(tmp_path / "m.ckpt"),
                             "--metrics-out", str(tmp_path / "m.jsonl")], capsys)
        assert code == 0
        line = next(l for l in out.out.splitlines() if l.startswith("resolved config: "))
        resolved = json.loads(line[len("resolved config: "):])
        assert resolved["epochs"] == 1

    def test_env_beats_cwd_default(self, tmp_path, capsys, monkeypatch):
        monkeypatch.chdir(tmp_path)
        data = tmp_path / "d.jsonl"
        run_cli(gen_args(data))
        (tmp_path / "swdrso.config").write_text(json.dumps({"epochs": 5}))
        env_cfg = tmp_path / "env.json"
        env_cfg.write_text(json.dumps(
            {"epochs": 1, "d": 6, "H": 6, "R": 4, "d_in": 4, "n_classes": 3,
             "batch_size": 16}))
        monkeypatch.setenv("SWDRSO_CONFIG", str(env_cfg))
        code, out = run_cli(["train", "--input", str(data),
                             "--checkpoint", str(tmp_path / "m.ckpt"),
                             "--metrics-out", str(tmp_path / "m.jsonl")], capsys)
        assert code == 0
        line = next(l for l in out.out.splitlines() if l.startswith("resolved config: "))
        resolved = json.loads(line[len("resolved config: "):])
        assert resolved["epochs"] == 1

    def test_seed_flag_overrides_config(self, tmp_path, capsys):
        data = tmp_path / "d.jsonl"
        run_cli(gen_args(data))
        cfg = train_config(tmp_path, seed=7, epochs=1)
        code, out = run_cli(["--config", cfg, "--seed", "42", "train",
                             "--input", str(data),
                             "--checkpoint", str(tmp_path / "m.ckpt"),
                             "--metrics-out", str(tmp_path / "m.jsonl")], capsys)
        assert code == 0
        line = next(l for l in out.out.splitlines() if l.startswith("resolved config: "))
        resolved = json.loads(line[len("resolved config: "):])
        assert resolved["seed"] == 42


class TestPipeline:
    def pipeline(self, tmp_path, capsys, alpha=0.5, tag=""):
        data = tmp_path / f"data{tag}.jsonl"
        corrupted = tmp_path / f"eval{tag}.jsonl"
        splits = tmp_path / f"splits{tag}.json"
        ckpt = tmp_path / f"model{tag}.ckpt"
        report = tmp_path / f"report{tag}.json"
        cfg = train_config(tmp_path, alpha=alpha)
        assert run_cli(gen_args(data)) == 0
        assert run_cli(["--seed", "0", "corrupt", "--input", str(data),
                        "--output", str(corrupted), "--splits-out", str(splits)]) == 0
        assert run_cli(["--config", cfg, "train", "--input", str(data),
                        "--checkpoint", str(ckpt),
                        "--metrics-out", str(tmp_path / f"metrics{tag}.jsonl")]) == 0
        assert run_cli(["eval", "--input", str(corrupted),
                        "--checkpoint", str(ckpt), "--output", str(report)]) == 0
        capsys.readouterr()
        return data, corrupted, splits, ckpt, report

    def test_end_to_end_pipeline(self, tmp_path, capsys):
        data, corrupted, splits, ckpt, report = self.pipeline(tmp_path, capsys)
        split_map = json.loads(splits.read_text())
        assert sorted(set(split_map.values())) == ["clean", "mild", "severe"]
        payload = json.loads(report.read_text())
        assert any(r["metric"] == "accuracy" for r in payload)
        for r in payload:
            assert set(r["values"]) >= {"clean", "mild", "severe", "overall"}
            for v in r["values"].values():
                assert 0.0 <= v <= 1.0

    def test_pipeline_is_deterministic(self, tmp_path, capsys):
        _, _, _, ckpt1, report1 = self.pipeline(tmp_path, capsys, tag="a")
        _, _, _, ckpt2, report2 = self.pipeline(tmp_path, capsys, tag="b")
        assert ckpt1.read_bytes() == ckpt2.read_bytes()
        assert report1.read_bytes() == report2.read_bytes()

    def test_alpha_changes_checkpoint(self, tmp_path, capsys):
        _, _, _, ckpt1, _ = self.pipeline(tmp_path, capsys, alpha=0.0, tag="erm")
        _, _, _, ckpt2, _ = self.pipeline(tmp_path, capsys, alpha=0.5, tag="dro")
        assert ckpt1.read_bytes() != ckpt2.read_bytes()

    def test_gen_data_is_deterministic(self, tmp_path, capsys):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        run_cli(gen_args(p1))
        run_cli(gen_args(p2))
        capsys.readouterr()
        assert p1.read_bytes() == p2.read_bytes()


class TestAffineFit:
    def test_perfect_line_gives_one(self):
        assert affine_fit_r2([1, 2, 4, 8], [2, 4, 8, 16]) == pytest.approx(1.0)

    def test_constant_ys_gives_one(self):
        assert affine_fit_r2([1, 2, 4, 8], [3, 3, 3, 3]) == 1.0

    def test_nonlinear_is_below_one(self):
        assert affine_fit_r2([1, 2, 4, 8], [1, 4, 16, 64]) < 1.0
