"""
Waterfall rendering to binary PPM with trajectory overlays
"""

import json
import logging
from io import BytesIO
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field
from skimage.draw import line as draw_line

from core.track import Trajectory
from core.waterfall import WaterfallMatrix

logger = logging.getLogger("Render")

OVERLAY_COLORS = [
    (255, 0, 0),
    (0, 200, 0),
    (0, 128, 255),
    (255, 0, 255),
    (0, 255, 255),
    (255, 160, 0),
    (160, 80, 255),
    (255, 255, 255),
]


class RenderSpec(BaseModel):
    """Image options; dimensions default to the matrix extents (width = columns, height = rows)"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    colormap: Literal["grayscale", "heat"] = "grayscale"
    overlay: bool = True
    width: Optional[int] = Field(None, ge=1)
    height: Optional[int] = Field(None, ge=1)


def _axis_scale(extent: int, size: int, axis: str) -> Tuple[int, int]:
    """(up, down) integer factors mapping extent to size"""
    if size <= 0:
        raise ValueError(f"render {axis} must be positive, got {size}")
    if size >= extent and size % extent == 0:
        return size // extent, 1
    if size < extent and extent % size == 0:
        return 1, extent // size
    raise ValueError(f"render {axis} {size} is neither an integer multiple nor divisor of {extent}")


def _resample(values: np.ndarray, up: Tuple[int, int], down: Tuple[int, int]) -> np.ndarray:
    if down != (1, 1):
        rows, cols = values.shape[0] // down[0], values.shape[1] // down[1]
        values = values.reshape(rows, down[0], cols, down[1]).mean(axis=(1, 3))
    return np.repeat(np.repeat(values, up[0], axis=0), up[1], axis=1)


def apply_colormap(values: np.ndarray, colormap: str) -> np.ndarray:
    """Amplitudes in [0, 1] to uint8 RGB"""
    v = np.clip(values, 0.0, 1.0)
    if colormap == "grayscale":
        channels = [v, v, v]
    elif colormap == "heat":
        channels = [np.clip(3 * v, 0, 1), np.clip(3 * v - 1, 0, 1), np.clip(3 * v - 2, 0, 1)]
    else:
        raise ValueError(f"unknown colormap {colormap!r}")
    return np.rint(np.stack(channels, axis=-1) * 255).astype(np.uint8)


def _to_pixel(index: int, up: int, down: int) -> int:
    return index * up + up // 2 if down == 1 else index // down


def overlay_pixels(traj: Trajectory, shape: Tuple[int, int], up: Tuple[int, int] = (1, 1),
                   down: Tuple[int, int] = (1, 1)) -> Tuple[np.ndarray, np.ndarray]:
    """Pixels of the polyline through the fitted column at each observed row"""
    rows = np.arange(int(traj.rows[0]), int(traj.rows[-1]) + 1)
    cols = np.rint(traj.fitted_col(rows)).astype(int)
    ys = [_to_pixel(int(r), up[0], down[0]) for r in rows]
    xs = [_to_pixel(int(c), up[1], down[1]) for c in cols]

    pixels_r, pixels_c = [], []
    if len(ys) == 1:
        pixels_r, pixels_c = [np.array(ys)], [np.array(xs)]
    for k in range(len(ys) - 1):
        rr, cc = draw_line(ys[k], xs[k], ys[k + 1], xs[k + 1])
        pixels_r.append(rr)
        pixels_c.append(cc)
    rr = np.concatenate(pixels_r)
    cc = np.concatenate(pixels_c)
    inside = (rr >= 0) & (rr < shape[0]) & (cc >= 0) & (cc < shape[1])
    return rr[inside], cc[inside]


def render_image(m: WaterfallMatrix, trajs: Optional[List[Trajectory]] = None,
                 spec: RenderSpec = RenderSpec()) -> Tuple[np.ndarray, Dict]:
    """RGB image array and its legend"""
    height = spec.height if spec.height is not None else m.m
    width = spec.width if spec.width is not None else m.n
    up_r, down_r = _axis_scale(m.m, height, "height")
    up_c, down_c = _axis_scale(m.n, width, "width")

    image = apply_colormap(_resample(m.values, (up_r, up_c), (down_r, down_c)), spec.colormap)

    legend_rows = []
    if spec.overlay and trajs:
        for index, traj in enumerate(trajs):
            color = OVERLAY_COLORS[index % len(OVERLAY_COLORS)]
            rr, cc = overlay_pixels(traj, image.shape[:2], (up_r, up_c), (down_r, down_c))
            image[rr, cc] = color
            legend_rows.append({"vehicle_id": traj.vehicle_id, "color": list(color), "class": traj.vehicle_class})

    legend = {
        "schema_version": 1,
        "width": int(image.shape[1]),
        "height": int(image.shape[0]),
        "colormap": spec.colormap,
        "trajectories": legend_rows,
    }
    return image, legend


def legend_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".legend.json")


def encode_ppm(image: np.ndarray) -> bytes:
    """Binary P6 bytes via Pillow"""
    buffer = BytesIO()
    Image.fromarray(image).save(buffer, format="PPM")
    return buffer.getvalue()


def render(m: WaterfallMatrix, trajs: Optional[List[Trajectory]], spec: RenderSpec, path) -> Dict:
    """Write <path> (PPM) and <path>.legend.json; returns the legend"""
    image, legend = render_image(m, trajs, spec)
    Path(path).write_bytes(encode_ppm(image))
    legend_path(path).write_text(json.dumps(legend, indent=2, sort_keys=True) + "\n")
    logger.info(f"Rendered {legend['width']}x{legend['height']} {spec.colormap} image to {path}")
    return legend
