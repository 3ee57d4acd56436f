"""
Waterfall preprocessing
Min-max normalization, wavelet threshold denoising and MSE/PSNR/SSIM quality metrics
"""

import logging
import math
from dataclasses import dataclass
from typing import Literal, Union

import numpy as np
import pywt
from pydantic import BaseModel, ConfigDict, Field, field_validator

from core.waterfall import WaterfallMatrix

logger = logging.getLogger("Preprocess")


class DenoiseConfig(BaseModel):
    """Wavelet threshold denoising parameters"""
    model_config = ConfigDict(extra="forbid", frozen=True)

    wavelet_family: str = "db4"
    levels: int = Field(4, ge=1)
    threshold_lambda: float = Field(0.15, ge=0)
    mix_a: float = Field(0.5, ge=0, le=1)
    axis: Literal["time"] = "time"
    mode: Literal["mixed", "soft", "hard"] = "mixed"

    @field_validator("wavelet_family")
    @classmethod
    def _known_wavelet(cls, name: str) -> str:
        if name not in pywt.wavelist(kind="discrete"):
            raise ValueError(f"unknown discrete wavelet {name!r}")
        return name

    @property
    def effective_mix(self) -> float:
        """Mix factor actually applied: soft forces 1, hard forces 0"""
        return {"mixed": self.mix_a, "soft": 1.0, "hard": 0.0}[self.mode]


@dataclass
class QualityReport:
    """Reconstruction quality of a test matrix against a reference"""
    mse: float
    psnr_db: float  # +inf when mse == 0
    ssim: float

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "mse": self.mse,
            "psnr_db": "inf" if math.isinf(self.psnr_db) else self.psnr_db,
            "ssim": self.ssim,
        }


def minmax_normalize(m: WaterfallMatrix) -> WaterfallMatrix:
    """Global (x - min) / (max - min)"""
    lo = float(m.values.min())
    hi = float(m.values.max())
    if not hi > lo:
        raise ValueError(f"degenerate range: min = max = {lo}")
    scaled = np.clip((m.values - lo) / (hi - lo), 0.0, 1.0)
    return m.with_values(scaled)


def shrink(w: Union[float, np.ndarray], lam: float, a: float) -> Union[float, np.ndarray]:
    """Combined hard/soft threshold: dead zone |w| < lam, survivors pulled toward 0 by a*lam"""
    if lam < 0:
        raise ValueError(f"threshold must be non-negative, got {lam}")
    w_arr = np.asarray(w, dtype=np.float64)
    out = np.where(w_arr >= lam, w_arr - a * lam, np.where(w_arr <= -lam, w_arr + a * lam, 0.0))
    return float(out) if out.ndim == 0 else out


def wavelet_denoise(m: WaterfallMatrix, cfg: DenoiseConfig = DenoiseConfig()) -> WaterfallMatrix:
    """Per-column DWT along time, shrink detail bands, inverse DWT, clamp to [0, 1]"""
    wavelet = pywt.Wavelet(cfg.wavelet_family)
    max_level = pywt.dwt_max_level(m.m, wavelet.dec_len)
    if max_level < cfg.levels:
        raise ValueError(
            f"column length {m.m} too short for {cfg.levels} levels of {cfg.wavelet_family} (max {max_level})"
        )
    if m.values.min() < 0 or m.values.max() > 1:
        logger.warning("wavelet_denoise input is not normalized to [0, 1]")

    a = cfg.effective_mix
    coeffs = pywt.wavedec(m.values, wavelet, mode="symmetric", level=cfg.levels, axis=0)
    shrunk = [coeffs[0]] + [shrink(c, cfg.threshold_lambda, a) for c in coeffs[1:]]
    restored = pywt.waverec(shrunk, wavelet, mode="symmetric", axis=0)[: m.m]

    logger.debug(f"Denoised {m.m}x{m.n} ({cfg.wavelet_family} x{cfg.levels}, lambda={cfg.threshold_lambda}, a={a})")
    return m.with_values(np.clip(restored, 0.0, 1.0))


def preprocess_matrix(m: WaterfallMatrix, cfg: DenoiseConfig = DenoiseConfig()) -> WaterfallMatrix:
    """Normalization followed by denoising"""
    return wavelet_denoise(minmax_normalize(m), cfg)


def quality_metrics(reference: WaterfallMatrix, test: WaterfallMatrix, peak_v: float = 1.0) -> QualityReport:
    """MSE, PSNR and single-window SSIM (alpha = beta = gamma = 1)"""
    if reference.shape != test.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {test.shape}")
    if not peak_v > 0:
        raise ValueError(f"peak value must be positive, got {peak_v}")

    y = reference.values
    y_hat = test.values
    mse = float(np.mean((y - y_hat) ** 2))
    psnr = math.inf if mse == 0 else 10.0 * math.log10(peak_v ** 2 / mse)

    c1 = (0.01 * peak_v) ** 2
    c2 = (0.03 * peak_v) ** 2
    c3 = c2 / 2
    mu_x, mu_y = float(y.mean()), float(y_hat.mean())
    sigma_x, sigma_y = float(y.std()), float(y_hat.std())
    sigma_xy = float(np.mean((y - mu_x) * (y_hat - mu_y)))

    luminance = (2 * mu_x * mu_y + c1) / (mu_x ** 2 + mu_y ** 2 + c1)
    contrast = (2 * sigma_x * sigma_y + c2) / (sigma_x ** 2 + sigma_y ** 2 + c2)
    structure = (sigma_xy + c3) / (sigma_x * sigma_y + c3)
    ssim = float(np.clip(luminance * contrast * structure, -1.0, 1.0))

    return QualityReport(mse=mse, psnr_db=psnr, ssim=ssim)
