"""UAV L-band radiometry: calibration, gridding, retrieval and evaluation of soil moisture."""

from .calibration import AcsCharacterization, DailyOffsets, RadiometerRecord, calibrate_records
from .forward import ModelParams, brightness_hv
from .gridding import GridSpec, PixelGrid
from .retrieval import (RetrievalConfig, retrieve_dca, retrieve_mtdca, retrieve_sca)

__version__ = "0.1.0"

__all__ = ["AcsCharacterization", "DailyOffsets", "RadiometerRecord", "calibrate_records",
           "ModelParams", "brightness_hv", "GridSpec", "PixelGrid", "RetrievalConfig",
           "retrieve_dca", "retrieve_mtdca", "retrieve_sca"]
