import json

import numpy as np
import pytest
from PIL import Image

from sg2vid.cli import main
from sg2vid.data_synth import SynthConfig, load_index, make_dataset
from sg2vid.evaluation import validate_report

from helpers import save_tiny_checkpoint

CLASS_NAMES = SynthConfig().class_names


def run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSynthData:
    def test_same_seed_identical_hashes(self, tmp_path, capsys):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"synth": {
            "n_videos": 10, "frames_per_video": 16, "resolution": 16,
        }}))
        hashes = []
        for name in ("a", "b"):
            code, out, _ = run(capsys, [
                "synth-data", "--config", str(config), "--seed", "7",
                "--out", str(tmp_path / name),
            ])
            assert code == 0
            hashes.append(json.loads(out)["hash"])
        assert hashes[0] == hashes[1]
        assert (tmp_path / "a" / "run_provenance.json").exists()
        prov = json.loads((tmp_path / "a" / "run_provenance.json").read_text())
        assert prov["seed"] == 7
        assert "config_hash" in prov and "versions" in prov

    def test_env_override(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("SG2VID_SYNTH_N_VIDEOS", "10")
        monkeypatch.setenv("SG2VID_SYNTH_FRAMES_PER_VIDEO", "16")
        monkeypatch.setenv("SG2VID_SYNTH_RESOLUTION", "16")
        code, out, _ = run(capsys, [
            "synth-data", "--seed", "1", "--out", str(tmp_path / "d"),
        ])
        assert code == 0
        index = load_index(tmp_path / "d")
        assert len(index["videos"]) == 10

    def test_unknown_config_key(self, tmp_path, capsys):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"synth": {"n_videoz": 4}}))
        code, _, err = run(capsys, [
            "synth-data", "--config", str(config), "--out", str(tmp_path / "x"),
        ])
        assert code == 1
        assert err.startswith("sg2vid-error: ")
        parsed = json.loads(err.split("sg2vid-error: ", 1)[1])
        assert "n_videoz" in parsed["error"]


class TestErrors:
    def test_sample_missing_checkpoint_names_path(self, tmp_path, capsys):
        code, _, err = run(capsys, [
            "sample", "--checkpoint", str(tmp_path / "missing.pt"),
            "--graph", str(tmp_path / "g.json"), "--out", str(tmp_path / "o"),
        ])
        assert code == 1
        assert err.startswith("sg2vid-error: ")
        parsed = json.loads(err.splitlines()[0].split("sg2vid-error: ", 1)[1])
        assert str(tmp_path / "missing.pt") in parsed["error"]


@pytest.fixture(scope="module")
def cli_stack(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    ds = base / "ds"
    make_dataset(SynthConfig(n_videos=10, frames_per_video=8, resolution=16,
                             clip_len=4, seed=13), ds)
    ckpt = base / "desk.pt"
    save_tiny_checkpoint(ckpt, CLASS_NAMES, resolution=16, n=4)
    return base, ds, ckpt


class TestSampleVerb:
    def test_sample_writes_frames_and_provenance(self, cli_stack, tmp_path, capsys):
        base, ds, ckpt = cli_stack
        index = load_index(ds)
        clip_dir = ds / index["clips"][0]["dir"]
        first = tmp_path / "first.png"
        Image.open(clip_dir / "frame_00.png").save(first)
        code, out, err = run(capsys, [
            "sample", "--checkpoint", str(ckpt), "--graph",
            str(clip_dir / "graph.json"), "--first-frame", str(first),
            "--out", str(tmp_path / "gen"), "--seed", "3", "--steps", "3",
        ])
        assert code == 0, err
        assert json.loads(out)["frames"] == 4
        prov = json.loads((tmp_path / "gen" / "provenance.json").read_text())
        assert {"graph_hash", "seed", "steps", "checkpoint_hash"} <= prov.keys()
        assert (tmp_path / "gen" / "frame_03.png").exists()

    def test_autoregress(self, cli_stack, tmp_path, capsys):
        base, ds, ckpt = cli_stack
        index = load_index(ds)
        clip_dir = ds / index["clips"][0]["dir"]
        first = tmp_path / "first.png"
        Image.open(clip_dir / "frame_00.png").save(first)
        graph = str(clip_dir / "graph.json")
        code, out, err = run(capsys, [
            "autoregress", "--checkpoint", str(ckpt), "--graphs", graph, graph,
            "--first-frame", str(first), "--out", str(tmp_path / "long"),
            "--steps", "3",
        ])
        assert code == 0, err
        assert json.loads(out)["frames"] == 7  # 2 * (4 - 1) + 1


class TestEvalVerb:
    def test_eval_report_validates(self, cli_stack, tmp_path, capsys):
        base, ds, ckpt = cli_stack
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({"eval": {"max_sequences": 4,
                                               "sample_steps": 3}}))
        code, out, err = run(capsys, [
            "eval", "--config", str(config), "--checkpoint", str(ckpt),
            "--dataset", str(ds), "--out", str(tmp_path / "report"),
        ])
        assert code == 0, err
        report = json.loads((tmp_path / "report" / "report.json").read_text())
        validate_report(report)
        assert (tmp_path / "report" / "report.csv").exists()


class TestExtractGraphs:
    def test_rewrite_is_stable(self, cli_stack, capsys):
        base, ds, ckpt = cli_stack
        index = load_index(ds)
        clip_dir = ds / index["clips"][0]["dir"]
        before = (clip_dir / "graph.json").read_bytes()
        code, out, _ = run(capsys, ["extract-graphs", "--dataset", str(ds)])
        assert code == 0
        assert json.loads(out)["graphs_written"] == len(index["clips"])
        assert (clip_dir / "graph.json").read_bytes() == before

    def test_file_backed_provider_matches(self, cli_stack, capsys):
        base, ds, ckpt = cli_stack
        index = load_index(ds)
        clip_dir = ds / index["clips"][0]["dir"]
        before = (clip_dir / "graph.json").read_bytes()
        code, _, _ = run(capsys, ["extract-graphs", "--dataset", str(ds),
                                  "--provider", "file_backed"])
        assert code == 0
        assert (clip_dir / "graph.json").read_bytes() == before
