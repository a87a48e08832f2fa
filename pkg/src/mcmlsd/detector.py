"""Image-level entry points tying the edge detector, the Hough stage and
the segment labeller to a :class:`~mcmlsd.config.Config`."""

from __future__ import annotations

import os

import numpy as np

from .config import Config
from .core import GrayImage
from .edges import EdgeMap, detect_edges
from .markov.model import ModelBundle, load_model
from .markov.pipeline import DetectionStats, DetectorConfig, run_mcmlsd


def load_confidence(path, width: int, height: int) -> np.ndarray:
    """A per-pixel confidence grid from ``.npy`` or an 8-bit image (scaled to [0, 1])."""
    path = os.fspath(path)
    if path.endswith(".npy"):
        conf = np.load(path).astype(np.float64)
    else:
        conf = GrayImage.load(path).values / 255.0
    if conf.shape != (height, width):
        raise ValueError(f"{path}: confidence grid is {conf.shape[1]}x{conf.shape[0]}, image is {width}x{height}")
    return conf


def model_for(cfg: Config, width: int, height: int) -> ModelBundle:
    bundle = load_model(cfg.model or None)
    return bundle.for_image(width, height, cfg.resolution_scale or None)


def detector_config(cfg: Config, width: int, height: int, confidence=None, model=None) -> DetectorConfig:
    model = model if model is not None else model_for(cfg, width, height)
    if confidence is None and cfg.confidence:
        confidence = load_confidence(cfg.confidence, width, height)
    if cfg.method != "mcmlsd2":
        # appearance is only used when MCMLSD2 ranking is requested
        confidence = None
    return DetectorConfig(
        hough=cfg.hough_params(),
        model=model,
        halfwidth=cfg.halfwidth,
        removal_radius=cfg.removal_radius,
        min_extent=cfg.min_extent,
        method=cfg.method,
        ranker=model.ranker,
        confidence=confidence,
    )


def detect_edge_map(em: EdgeMap, cfg: Config | None = None, confidence=None, model=None, stats=None):
    cfg = cfg or Config()
    dc = detector_config(cfg, em.width, em.height, confidence, model)
    return run_mcmlsd(em, em.width, em.height, dc, stats)


def detect_image(img: GrayImage, cfg: Config | None = None, confidence=None, model=None, stats=None):
    """Ranked segments for a grayscale image, best first."""
    cfg = cfg or Config()
    em = detect_edges(img, cfg.edge_params())
    return detect_edge_map(em, cfg, confidence, model, stats)


__all__ = ["DetectionStats", "detect_edge_map", "detect_image", "detector_config", "load_confidence", "model_for"]
