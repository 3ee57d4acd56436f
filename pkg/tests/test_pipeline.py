import json

import pytest

from core.pipeline import (PipelineStageError, compare_methods, load_input, run_pipeline, stage,
                           summarize_comparison)
from core.waterfall import save_waterfall
from data.scenarios import separated_scene
from tools.artifacts import scene_json
from utils.pipeline_config import preset_config

# simulated gauge responses carry sidelobes above the entry threshold
SYNTHETIC_CFG = preset_config("deduplicated")


@pytest.fixture
def scene_file(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(scene_json(separated_scene(count=1, seed=0, snr=20.0)))
    return path


def test_single_vehicle_run(scene_file, tmp_path):
    out = tmp_path / "run"
    result = run_pipeline(scene_file, SYNTHETIC_CFG, out)
    assert len(result.processed.trajectories) == 1
    assert result.score.true_positive == 1
    names = sorted(p.name for p in result.written)
    for expected in ("events.csv", "trajectories.csv", "trajectories.summary.json", "stats.json", "waterfall.ppm",
                     "waterfall.ppm.legend.json", "metrics.json", "score.json", "ground_truth.csv", "manifest.json"):
        assert expected in names
    manifest = json.loads((out / "manifest.json").read_text())
    assert "stats.json" in manifest["files"]
    assert manifest["config"]["denoise"]["mix_a"] == 0.5


def test_denoising_improves_quality(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(scene_json(separated_scene(count=2, seed=1, snr=10.0)))
    result = run_pipeline(path, SYNTHETIC_CFG, tmp_path / "run")
    assert result.metrics["denoised"]["mse"] < result.metrics["normalized_input"]["mse"]


def test_runs_are_deterministic(scene_file, tmp_path):
    first = run_pipeline(scene_file, SYNTHETIC_CFG, tmp_path / "a")
    run_pipeline(scene_file, SYNTHETIC_CFG, tmp_path / "b")
    for path in first.written:
        assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes()


def test_seed_override_changes_noise(scene_file):
    a = load_input(scene_file, seed=1).matrix.values
    b = load_input(scene_file, seed=2).matrix.values
    assert (a != b).any()


def test_corrupt_input_fails_in_load_stage(tmp_path):
    bad = tmp_path / "bad.dasw"
    bad.write_bytes(b"garbage")
    out = tmp_path / "run"
    with pytest.raises(PipelineStageError) as info:
        run_pipeline(bad, SYNTHETIC_CFG, out)
    assert info.value.stage == "load"
    assert info.value.exit_code == 3
    assert not out.exists()


def test_waterfall_input_has_no_truth_outputs(scene_file, tmp_path):
    matrix = load_input(scene_file).matrix
    path = tmp_path / "input.dasw"
    save_waterfall(matrix, path)
    result = run_pipeline(path, SYNTHETIC_CFG, tmp_path / "run")
    names = {p.name for p in result.written}
    assert "score.json" not in names and "metrics.json" not in names
    assert result.score is None


def test_stage_tags_failures():
    with pytest.raises(PipelineStageError) as info:
        with stage("track"):
            raise ValueError("boom")
    assert info.value.exit_code == 6
    assert isinstance(info.value.cause, ValueError)


def test_compare_methods_scores_every_scene():
    scenes = [separated_scene(count=2, seed=k, snr=20.0) for k in range(2)]
    results = compare_methods(scenes, SYNTHETIC_CFG, progress=False)
    assert set(results) == {"tracker", "hough", "radon"}
    assert all(len(scores) == 2 for scores in results.values())
    summary = summarize_comparison(results)
    assert summary["tracker"]["true_positive"] == 4
    assert summary["tracker"]["scenes"] == 2
