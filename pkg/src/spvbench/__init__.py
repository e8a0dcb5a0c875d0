"""Simulated prosthetic vision engine and visual-acuity experiment bench."""

from .frames import CropResult, Frame, HeadPose, crop_viewport, read_pgm, write_pgm
from .phosphenes import (
    Condition,
    Phosphene,
    PhospheneActivation,
    PhospheneMap,
    build_phosphene_map,
    paper_conditions,
    phosphenize,
    pixels_per_phosphene,
    quantize,
    render,
    resolve_condition,
    sample,
)

__all__ = [
    "Condition",
    "CropResult",
    "Frame",
    "HeadPose",
    "Phosphene",
    "PhospheneActivation",
    "PhospheneMap",
    "build_phosphene_map",
    "crop_viewport",
    "paper_conditions",
    "phosphenize",
    "pixels_per_phosphene",
    "quantize",
    "read_pgm",
    "render",
    "resolve_condition",
    "sample",
    "write_pgm",
]

__version__ = "0.1.0"
