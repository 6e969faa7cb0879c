"""Video-to-feature adapter emitting AVF1 feature files at 25 fps."""

from .encoder import FrameEncoder, SetupError, make_weights
from .extract import ExtractionReport, extract, write_feature_file

__all__ = [
    "ExtractionReport",
    "FrameEncoder",
    "SetupError",
    "extract",
    "make_weights",
    "write_feature_file",
]

__version__ = "0.1.0"
