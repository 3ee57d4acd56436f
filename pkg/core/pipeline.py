"""
End-to-end processing pipeline
load -> preprocess -> detect -> track -> stats -> render, with every artifact held in memory
and written only after all stages succeed

Usage:
  das-traffic pipeline --in scene.json --out-dir results/
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from tqdm import tqdm

from core.baselines import MatchScore, hough_lines, radon_lines, score_method
from core.detect import EntryEvent, detect_with_config
from core.forward_sim import GroundTruth, Scene, synthesize_waterfall
from core.preprocess import QualityReport, minmax_normalize, preprocess_matrix, quality_metrics
from core.render import encode_ppm, render_image
from core.track import Trajectory, extract_trajectories
from core.traffic_stats import (ProfileQuery, SegmentQuery, TrafficRecord, format_record, interval_counts,
                                profile_stats, segment_stats)
from core.waterfall import WaterfallMatrix, encode_dasw, load_waterfall
from tools.artifacts import (ArtifactBundle, events_csv, ground_truth_csv, load_scene, scene_json,
                             trajectories_csv, trajectory_summary)
from utils.pipeline_config import PipelineConfig, StatsConfig

logger = logging.getLogger("Pipeline")

STAGE_EXIT_CODES = {
    "config": 2,
    "load": 3,
    "preprocess": 4,
    "detect": 5,
    "track": 6,
    "stats": 7,
    "render": 8,
    "write": 9,
}


class PipelineStageError(Exception):
    """Failure of one pipeline stage"""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage} stage failed: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def exit_code(self) -> int:
        return STAGE_EXIT_CODES.get(self.stage, 1)


@contextmanager
def stage(name: str):
    """Tag any failure inside the block with the stage name"""
    started = time.perf_counter()
    try:
        yield
    except PipelineStageError:
        raise
    except Exception as e:
        logger.error(f"Stage {name} failed: {e}")
        raise PipelineStageError(name, e) from e
    logger.info(f"Stage {name} done in {time.perf_counter() - started:.2f}s")


@dataclass
class LoadedInput:
    matrix: WaterfallMatrix
    scene: Optional[Scene] = None
    truth: Optional[GroundTruth] = None


@dataclass
class ProcessedMatrix:
    denoised: WaterfallMatrix
    events: List[EntryEvent]
    trajectories: List[Trajectory]


@dataclass
class PipelineResult:
    """Everything a run produced"""
    loaded: LoadedInput
    processed: ProcessedMatrix
    report: Dict
    metrics: Optional[Dict] = None
    score: Optional[MatchScore] = None
    written: List[Path] = field(default_factory=list)


def load_input(path, seed: Optional[int] = None) -> LoadedInput:
    """A waterfall file, or a scene JSON that is synthesized on the fly"""
    path = Path(path)
    if path.suffix.lower() == ".json":
        scene = load_scene(path)
        if seed is not None:
            scene = scene.model_copy(update={"rng_seed": seed})
        matrix, truth = synthesize_waterfall(scene)
        return LoadedInput(matrix, scene, truth)
    return LoadedInput(load_waterfall(path))


def process_matrix(m: WaterfallMatrix, cfg: PipelineConfig) -> ProcessedMatrix:
    """Preprocess, detect and track without stage tagging (batch use)"""
    denoised = preprocess_matrix(m, cfg.denoise)
    events = detect_with_config(denoised, cfg.butterworth, cfg.detect)
    trajectories = extract_trajectories(denoised, events, cfg.track, cfg.classify)
    return ProcessedMatrix(denoised, events, trajectories)


def stats_queries(m: WaterfallMatrix, cfg: StatsConfig) -> Tuple[List[ProfileQuery], List[SegmentQuery]]:
    """Configured queries, with whole-recording / whole-fiber defaults"""
    start, end = cfg.window if cfg.window is not None else (m.t0, m.time_of_row(m.m))
    positions = cfg.profile_positions or [m.position_of_col((m.n - 1) / 2)]
    segments = cfg.segments or [(m.x0, m.position_of_col(m.n - 1))]

    profiles = [ProfileQuery(position=p, window_start=start, window_end=end) for p in positions]
    if cfg.instants:
        seg_queries = [SegmentQuery(seg_start=a, seg_end=b, instant=t) for a, b in segments for t in cfg.instants]
    else:
        seg_queries = [SegmentQuery(seg_start=a, seg_end=b, window=(start, end)) for a, b in segments]
    return profiles, seg_queries


def compute_stats(trajs: List[Trajectory], m: WaterfallMatrix, cfg: StatsConfig) -> Dict:
    """Traffic report with per-profile interval counts"""
    profile_queries, segment_queries = stats_queries(m, cfg)
    profiles: List[TrafficRecord] = [profile_stats(trajs, q) for q in profile_queries]
    segments: List[TrafficRecord] = [segment_stats(trajs, q) for q in segment_queries]
    intervals = [
        {"position": q.position,
         "counts": interval_counts(trajs, q.position, q.window_start, q.window_end, cfg.interval_s)}
        for q in profile_queries
    ]
    return {
        "profiles": [format_record(r) for r in profiles],
        "segments": [format_record(r) for r in segments],
        "intervals": intervals,
        "classes": {
            "car": sum(1 for t in trajs if t.vehicle_class == "car"),
            "truck": sum(1 for t in trajs if t.vehicle_class == "truck"),
        },
    }


def denoise_metrics(loaded: LoadedInput, denoised: WaterfallMatrix, cfg: PipelineConfig) -> Dict:
    """Quality of the normalized input and of the denoised matrix against the noiseless scene"""
    clean, _ = synthesize_waterfall(loaded.scene.model_copy(update={"noise_sigma": 0.0}))
    lo, hi = float(loaded.matrix.values.min()), float(loaded.matrix.values.max())
    reference = clean.with_values(((clean.values - lo) / (hi - lo)).clip(0.0, 1.0))
    before: QualityReport = quality_metrics(reference, minmax_normalize(loaded.matrix))
    after: QualityReport = quality_metrics(reference, denoised)
    return {"normalized_input": before.to_dict(), "denoised": after.to_dict(), "denoise": cfg.denoise.model_dump()}


def run_pipeline(input_path, cfg: PipelineConfig, out_dir, seed: Optional[int] = None) -> PipelineResult:
    """Run every stage; raises PipelineStageError tagged with the failing stage"""
    bundle = ArtifactBundle()

    with stage("load"):
        loaded = load_input(input_path, seed)
        m = loaded.matrix
        logger.info(f"Loaded {m.m}x{m.n} waterfall (dt={m.dt}s, dx={m.dx}m)")
        if loaded.scene is not None:
            bundle.add_bytes("input.dasw", encode_dasw(m))
            bundle.add_text("scene.json", scene_json(loaded.scene))
            bundle.add_text("ground_truth.csv", ground_truth_csv(loaded.truth))

    with stage("preprocess"):
        denoised = preprocess_matrix(m, cfg.denoise)
        bundle.add_bytes("denoised.dasw", encode_dasw(denoised))
        metrics = None
        if loaded.scene is not None:
            metrics = denoise_metrics(loaded, denoised, cfg)
            bundle.add_json("metrics.json", metrics)

    with stage("detect"):
        events = detect_with_config(denoised, cfg.butterworth, cfg.detect)
        bundle.add_text("events.csv", events_csv(events))

    with stage("track"):
        trajectories = extract_trajectories(denoised, events, cfg.track, cfg.classify)
        bundle.add_text("trajectories.csv", trajectories_csv(trajectories))
        bundle.add_json("trajectories.summary.json", trajectory_summary(trajectories))
        score = None
        if loaded.truth is not None:
            score = score_method(trajectories, loaded.truth, cfg.baseline.tolerance_rows, cfg.baseline.tolerance_kmh)
            bundle.add_json("score.json", score.to_dict())

    with stage("stats"):
        report = compute_stats(trajectories, denoised, cfg.stats)
        bundle.add_json("stats.json", report)

    with stage("render"):
        image, legend = render_image(denoised, trajectories, cfg.render)
        bundle.add_bytes("waterfall.ppm", encode_ppm(image))
        bundle.add_json("waterfall.ppm.legend.json", legend)

    with stage("write"):
        bundle.add_json("manifest.json", {**bundle.manifest(), "config": cfg.model_dump(mode="json")})
        written = bundle.write(out_dir)

    return PipelineResult(
        loaded=loaded,
        processed=ProcessedMatrix(denoised, events, trajectories),
        report=report,
        metrics=metrics,
        score=score,
        written=written,
    )


def compare_methods(scenes: Iterable[Scene], cfg: PipelineConfig, progress: bool = True) -> Dict[str, List[MatchScore]]:
    """Score the tracker and both line baselines on each synthetic scene"""
    results: Dict[str, List[MatchScore]] = {"tracker": [], "hough": [], "radon": []}
    b = cfg.baseline
    for scene in tqdm(list(scenes), desc="Scenes", disable=not progress):
        matrix, truth = synthesize_waterfall(scene)
        processed = process_matrix(matrix, cfg)
        hough = hough_lines(processed.denoised, b.binarize_thresh, b.vote_thresh, b.theta_bins, b.rho_bins)
        radon = radon_lines(processed.denoised, b)
        for name, items in (("tracker", processed.trajectories), ("hough", hough), ("radon", radon)):
            results[name].append(score_method(items, truth, b.tolerance_rows, b.tolerance_kmh))
    return results


def summarize_comparison(results: Dict[str, List[MatchScore]]) -> Dict:
    summary = {}
    for name, scores in results.items():
        summary[name] = {
            "scenes": len(scores),
            "true_positive": sum(s.true_positive for s in scores),
            "false_positive": sum(s.false_positive for s in scores),
            "false_negative": sum(s.false_negative for s in scores),
            "per_scene": [s.to_dict() for s in scores],
        }
    return summary
