"""
das-traffic command-line interface

Usage:
  das-traffic [--config cfg.json] [--seed N] [--out-dir DIR] <command> [options]

Commands:
  sim, preprocess, detect, track, stats, render, baseline, metrics, pipeline, init-config, bench
"""

import functools
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import click

from core.baselines import hough_lines, radon_lines, score_method
from core.detect import detect_entries
from core.forward_sim import synthesize_waterfall
from core.pipeline import PipelineStageError, STAGE_EXIT_CODES, compare_methods, run_pipeline, summarize_comparison
from core.preprocess import preprocess_matrix, quality_metrics
from core.render import render
from core.track import extract_trajectories
from core.traffic_stats import ProfileQuery, SegmentQuery, profile_stats, segment_stats, traffic_report
from core.waterfall import load_waterfall, save_waterfall
from data.scenarios import PRESETS, build_preset
from tools.artifacts import (candidates_csv, events_csv, ground_truth_csv, load_scene, read_events,
                             read_ground_truth, read_trajectories, scene_json, summary_path, to_json,
                             trajectories_csv, trajectory_summary)
from utils.config import CONFIG_PATH, DEFAULT_SEED, LOG_LEVEL, OUT_DIR, setup_logging
from utils.pipeline_config import CONFIG_PRESETS, PipelineConfig, dump_config, load_config, preset_config

logger = logging.getLogger("CLI")


def handled(command):
    """Report expected failures on stderr with exit code 1"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (ValueError, OSError) as e:
            logger.error(f"{command.__name__} failed: {e}")
            click.echo(f"Error: {e}", err=True)
            sys.exit(1)
    return wrapper


def _pair(value: Optional[str], name: str):
    if value is None:
        return None
    try:
        a, b = (float(part) for part in value.split(","))
    except ValueError:
        raise click.BadParameter(f"expected two comma-separated numbers, got {value!r}", param_hint=name)
    return a, b


def _output(ctx, explicit: Optional[str], default_name: str) -> Path:
    if explicit:
        path = Path(explicit)
    else:
        path = ctx.obj["out_dir"] / default_name
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _override(model, **updates):
    """Copy of a config section with non-None CLI values applied (re-validated)"""
    values = {k: v for k, v in updates.items() if v is not None}
    return type(model).model_validate({**model.model_dump(), **values}) if values else model


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=CONFIG_PATH,
              help="PipelineConfig JSON document")
@click.option("--config-preset", type=click.Choice(sorted(CONFIG_PRESETS)), default=None,
              help="Named configuration used when no --config is given")
@click.option("--seed", type=int, default=DEFAULT_SEED, help="Override the scene noise seed")
@click.option("--out-dir", type=click.Path(file_okay=False), default=OUT_DIR, help="Directory for outputs")
@click.option("--log-level", default=LOG_LEVEL, help="DEBUG, INFO, WARNING or ERROR")
@click.pass_context
def cli(ctx, config_path, config_preset, seed, out_dir, log_level):
    """DAS waterfall traffic analysis"""
    setup_logging(log_level)
    if config_path and config_preset:
        click.echo("Error: give at most one of --config or --config-preset", err=True)
        sys.exit(STAGE_EXIT_CODES["config"])
    try:
        cfg = load_config(config_path) if config_path else preset_config(config_preset or "default")
    except (ValueError, OSError) as e:
        click.echo(f"Error: invalid config: {e}", err=True)
        sys.exit(STAGE_EXIT_CODES["config"])
    ctx.obj = {"cfg": cfg, "seed": seed, "out_dir": Path(out_dir)}


@cli.command("init-config")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@handled
def init_config(ctx, out_path):
    """Write the active configuration document"""
    path = _output(ctx, out_path, "config.json")
    path.write_text(dump_config(ctx.obj["cfg"]))
    click.echo(str(path))


@cli.command()
@click.option("--scene", "scene_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None)
@click.option("--snr", type=float, default=None, help="Noise level for presets (peak / sigma)")
@click.option("--out", "out_path", default=None, help="Waterfall output (.dasw or .csv)")
@click.option("--truth", "truth_path", default=None, help="Ground-truth CSV output")
@click.pass_context
@handled
def sim(ctx, scene_path, preset, snr, out_path, truth_path):
    """Synthesize a waterfall from a scene file or preset"""
    if (scene_path is None) == (preset is None):
        raise click.UsageError("give exactly one of --scene or --preset")
    if scene_path and snr is not None:
        raise click.UsageError("--snr applies to --preset only; set noise_sigma in the scene file")
    seed = ctx.obj["seed"]
    if scene_path:
        scene = load_scene(scene_path)
        if seed is not None:
            scene = scene.model_copy(update={"rng_seed": seed})
    else:
        scene = build_preset(preset, seed if seed is not None else ctx.obj["cfg"].rng_seed, snr)

    matrix, truth = synthesize_waterfall(scene)
    out = _output(ctx, out_path, "input.dasw")
    save_waterfall(matrix, out)
    _output(ctx, truth_path, "ground_truth.csv").write_text(ground_truth_csv(truth))
    if preset:
        _output(ctx, None, "scene.json").write_text(scene_json(scene))
    click.echo(f"{out} ({matrix.m}x{matrix.n}, {len(scene.vehicles)} vehicles)")


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", default=None)
@click.option("--lambda", "threshold_lambda", type=float, default=None)
@click.option("--mix", "mix_a", type=float, default=None)
@click.option("--wavelet", "wavelet_family", default=None)
@click.option("--levels", type=int, default=None)
@click.option("--mode", type=click.Choice(["mixed", "soft", "hard"]), default=None)
@click.pass_context
@handled
def preprocess(ctx, in_path, out_path, threshold_lambda, mix_a, wavelet_family, levels, mode):
    """Normalize and wavelet-denoise a waterfall"""
    cfg = _override(ctx.obj["cfg"].denoise, threshold_lambda=threshold_lambda, mix_a=mix_a,
                    wavelet_family=wavelet_family, levels=levels, mode=mode)
    denoised = preprocess_matrix(load_waterfall(in_path), cfg)
    out = _output(ctx, out_path, "denoised.dasw")
    save_waterfall(denoised, out)
    click.echo(str(out))


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", default=None)
@click.option("--order", "order_N", type=int, default=None)
@click.option("--cutoff", "cutoff_Wn", type=float, default=None)
@click.option("--min-height", type=float, default=None)
@click.option("--entry-col", type=int, default=None)
@click.option("--min-separation", "min_separation_s", type=float, default=None)
@click.option("--baseline", type=click.Choice(["median", "none"]), default=None)
@click.pass_context
@handled
def detect(ctx, in_path, out_path, order_N, cutoff_Wn, min_height, entry_col, min_separation_s, baseline):
    """Detect vehicle entries on the entry channel"""
    cfg = ctx.obj["cfg"]
    bw = _override(cfg.butterworth, order_N=order_N, cutoff_Wn=cutoff_Wn)
    dc = _override(cfg.detect, min_height=min_height, entry_col=entry_col,
                   min_separation_s=min_separation_s, baseline=baseline)
    events = detect_entries(load_waterfall(in_path), bw, dc.min_height, dc.entry_col, dc.min_separation_s, dc.baseline)
    out = _output(ctx, out_path, "events.csv")
    out.write_text(events_csv(events))
    click.echo(f"{out} ({len(events)} events)")


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--events", "events_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", default=None)
@click.option("--vmin", "v_min_init", type=float, default=None)
@click.option("--vmax", "v_max_init", type=float, default=None)
@click.option("--cof", "confidence_cof", type=float, default=None)
@click.option("--order", "fit_order_M", type=int, default=None)
@click.option("--direction", type=click.Choice(["1", "-1"]), default=None)
@click.pass_context
@handled
def track(ctx, in_path, events_path, out_path, v_min_init, v_max_init, confidence_cof, fit_order_M, direction):
    """Extract trajectories from detected entries"""
    cfg = ctx.obj["cfg"]
    tc = _override(cfg.track, v_min_init=v_min_init, v_max_init=v_max_init, confidence_cof=confidence_cof,
                   fit_order_M=fit_order_M, direction=int(direction) if direction else None)
    trajs = extract_trajectories(load_waterfall(in_path), read_events(events_path), tc, cfg.classify)
    out = _output(ctx, out_path, "trajectories.csv")
    out.write_text(trajectories_csv(trajs))
    summary_path(out).write_text(to_json(trajectory_summary(trajs)))
    click.echo(f"{out} ({len(trajs)} trajectories)")


@cli.command()
@click.option("--trajectories", "traj_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", type=float, multiple=True, help="Profile position in meters (repeatable)")
@click.option("--window", default=None, help="Observation window 'start,end' in seconds")
@click.option("--segment", multiple=True, help="Segment 'start,end' in meters (repeatable)")
@click.option("--at", "instant", type=float, default=None, help="Segment instant in seconds")
@click.option("--out", "out_path", default=None)
@click.pass_context
@handled
def stats(ctx, traj_path, profile, window, segment, instant, out_path):
    """Traffic flow, density and mean speeds"""
    trajs = read_trajectories(traj_path)
    window = _pair(window, "--window")
    if profile and window is None:
        raise click.UsageError("--profile needs --window")
    if segment and instant is None and window is None:
        raise click.UsageError("--segment needs --at or --window")
    if not profile and not segment:
        raise click.UsageError("give at least one --profile or --segment")

    profiles = [profile_stats(trajs, ProfileQuery(position=p, window_start=window[0], window_end=window[1]))
                for p in profile]
    segments = []
    for seg in segment:
        a, b = _pair(seg, "--segment")
        query = SegmentQuery(seg_start=a, seg_end=b, instant=instant) if instant is not None \
            else SegmentQuery(seg_start=a, seg_end=b, window=window)
        segments.append(segment_stats(trajs, query))

    report = traffic_report(profiles, segments)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    _output(ctx, out_path, "stats.json").write_text(text)
    click.echo(text, nl=False)


@cli.command("render")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--trajectories", "traj_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_path", default=None)
@click.option("--colormap", type=click.Choice(["grayscale", "heat"]), default=None)
@click.option("--width", type=int, default=None)
@click.option("--height", type=int, default=None)
@click.option("--overlay/--no-overlay", default=None)
@click.pass_context
@handled
def render_command(ctx, in_path, traj_path, out_path, colormap, width, height, overlay):
    """Render a waterfall (and trajectories) to PPM"""
    spec = _override(ctx.obj["cfg"].render, colormap=colormap, width=width, height=height, overlay=overlay)
    trajs = read_trajectories(traj_path) if traj_path else None
    out = _output(ctx, out_path, "waterfall.ppm")
    legend = render(load_waterfall(in_path), trajs, spec, out)
    click.echo(f"{out} ({legend['width']}x{legend['height']})")


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["hough", "radon"]), required=True)
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_path", default=None)
@click.pass_context
@handled
def baseline(ctx, in_path, method, truth_path, out_path):
    """Hough or Radon line extraction, optionally scored against ground truth"""
    b = ctx.obj["cfg"].baseline
    m = load_waterfall(in_path)
    if method == "hough":
        candidates = hough_lines(m, b.binarize_thresh, b.vote_thresh, b.theta_bins, b.rho_bins)
    else:
        candidates = radon_lines(m, b)
    out = _output(ctx, out_path, f"{method}_candidates.csv")
    out.write_text(candidates_csv(candidates))
    click.echo(f"{out} ({len(candidates)} candidates)")
    if truth_path:
        score = score_method(candidates, read_ground_truth(truth_path), b.tolerance_rows, b.tolerance_kmh)
        text = to_json(score.to_dict())
        _output(ctx, None, f"{method}_score.json").write_text(text)
        click.echo(text, nl=False)


@cli.command()
@click.option("--ref", "ref_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--test", "test_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--peak", "peak_v", type=float, default=1.0)
@click.option("--out", "out_path", default=None)
@click.pass_context
@handled
def metrics(ctx, ref_path, test_path, peak_v, out_path):
    """MSE / PSNR / SSIM of a test waterfall against a reference"""
    report = quality_metrics(load_waterfall(ref_path), load_waterfall(test_path), peak_v)
    text = to_json(report.to_dict())
    _output(ctx, out_path, "metrics.json").write_text(text)
    click.echo(text, nl=False)


@cli.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.pass_context
def pipeline(ctx, in_path):
    """Full preprocess -> detect -> track -> stats -> render run"""
    try:
        result = run_pipeline(in_path, ctx.obj["cfg"], ctx.obj["out_dir"], ctx.obj["seed"])
    except PipelineStageError as e:
        click.echo(f"Error: {e}", err=True)
        sys.exit(e.exit_code)
    click.echo(f"{ctx.obj['out_dir']} ({len(result.processed.trajectories)} trajectories, "
               f"{len(result.written)} files)")


@cli.command()
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default="congestion")
@click.option("--scenes", "count", type=int, default=5)
@click.option("--snr", type=float, default=10.0)
@click.option("--out", "out_path", default=None)
@click.pass_context
@handled
def bench(ctx, preset, count, snr, out_path):
    """Compare the tracker with the Hough and Radon baselines over seeded scenes"""
    cfg: PipelineConfig = ctx.obj["cfg"]
    base = ctx.obj["seed"] if ctx.obj["seed"] is not None else cfg.rng_seed
    scenes = [build_preset(preset, base + k, snr) for k in range(count)]
    summary = summarize_comparison(compare_methods(scenes, cfg))
    text = to_json({"preset": preset, "snr": snr, "methods": summary})
    _output(ctx, out_path, "bench.json").write_text(text)
    for name, row in summary.items():
        click.echo(f"{name:8s} TP={row['true_positive']} FP={row['false_positive']} FN={row['false_negative']}")


def main():
    cli(prog_name="das-traffic")


if __name__ == "__main__":
    main()
